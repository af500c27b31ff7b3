#pragma once

#include <stdexcept>
#include <string>

namespace chorus {

// Every failure surfaced by the library carries one of these codes so the
// CLI and service can map it to an exit code / wire error without parsing
// message text.
enum class ErrorCode {
    unknown_table,
    unknown_column,
    duplicate_attribute,
    type_mismatch,
    not_statistical,
    parse_error,
    unsupported_feature,
    unsupported_construct,
    aggregation_mismatch,
    no_domain_source,
    many_to_many_join,
    unsupported_query,
    non_numeric_output,
    no_mechanism,
    budget_exhausted,
    corrupt_ledger,
    version_conflict,
    catalog_error,
    eval_error,
    csv_error,
    internal,
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, std::string message)
        : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
          code_(code),
          detail_(std::move(message)) {}

    ErrorCode code() const { return code_; }
    const std::string& detail() const { return detail_; }

private:
    ErrorCode code_;
    std::string detail_;
};

// Budget rejections carry the arithmetic so callers can report it.
class BudgetExhausted : public Error {
public:
    BudgetExhausted(double requested, double remaining)
        : Error(ErrorCode::budget_exhausted,
                "requested " + std::to_string(requested) + ", remaining " +
                    std::to_string(remaining)),
          requested_(requested),
          remaining_(remaining) {}

    double requested() const { return requested_; }
    double remaining() const { return remaining_; }

private:
    double requested_;
    double remaining_;
};

} // namespace chorus
