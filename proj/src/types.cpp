#include "chorus/types.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>

#include "chorus/errors.hpp"

namespace chorus {

const char* error_code_name(ErrorCode code) {
    switch (code) {
        case ErrorCode::unknown_table: return "UnknownTable";
        case ErrorCode::unknown_column: return "UnknownColumn";
        case ErrorCode::duplicate_attribute: return "DuplicateAttribute";
        case ErrorCode::type_mismatch: return "TypeMismatch";
        case ErrorCode::not_statistical: return "NotStatistical";
        case ErrorCode::parse_error: return "ParseError";
        case ErrorCode::unsupported_feature: return "UnsupportedFeature";
        case ErrorCode::unsupported_construct: return "UnsupportedConstruct";
        case ErrorCode::aggregation_mismatch: return "AggregationMismatch";
        case ErrorCode::no_domain_source: return "NoDomainSource";
        case ErrorCode::many_to_many_join: return "ManyToManyJoin";
        case ErrorCode::unsupported_query: return "Unsupported";
        case ErrorCode::non_numeric_output: return "NonNumericOutput";
        case ErrorCode::no_mechanism: return "NoMechanismSupports";
        case ErrorCode::budget_exhausted: return "BudgetExhausted";
        case ErrorCode::corrupt_ledger: return "CorruptLedger";
        case ErrorCode::version_conflict: return "VersionConflict";
        case ErrorCode::catalog_error: return "CatalogError";
        case ErrorCode::eval_error: return "EvalError";
        case ErrorCode::csv_error: return "CsvTypeError";
        case ErrorCode::internal: return "InternalError";
    }
    return "Error";
}

const char* scalar_type_name(ScalarType t) {
    switch (t) {
        case ScalarType::int_type: return "int";
        case ScalarType::real_type: return "real";
        case ScalarType::string_type: return "string";
        case ScalarType::bool_type: return "boolean";
    }
    return "?";
}

std::optional<ScalarType> scalar_type_from_name(const std::string& name) {
    if (name == "int") return ScalarType::int_type;
    if (name == "real") return ScalarType::real_type;
    if (name == "string") return ScalarType::string_type;
    if (name == "boolean" || name == "bool") return ScalarType::bool_type;
    return std::nullopt;
}

bool value_is_null(const Value& v) {
    return std::holds_alternative<std::monostate>(v);
}

bool value_is_numeric(const Value& v) {
    return std::holds_alternative<int64_t>(v) || std::holds_alternative<double>(v);
}

double value_as_real(const Value& v) {
    if (const auto* i = std::get_if<int64_t>(&v)) return static_cast<double>(*i);
    if (const auto* d = std::get_if<double>(&v)) return *d;
    throw Error(ErrorCode::eval_error, "numeric value expected, got " + value_to_string(v));
}

std::string value_to_string(const Value& v) {
    if (value_is_null(v)) return "NULL";
    if (const auto* i = std::get_if<int64_t>(&v)) return std::to_string(*i);
    if (const auto* d = std::get_if<double>(&v)) {
        char buf[64];
        auto res = std::to_chars(buf, buf + sizeof(buf), *d);
        return std::string(buf, res.ptr);
    }
    if (const auto* s = std::get_if<std::string>(&v)) return *s;
    return std::get<bool>(v) ? "true" : "false";
}

bool values_equal(const Value& a, const Value& b) {
    if (value_is_null(a) || value_is_null(b)) return value_is_null(a) && value_is_null(b);
    if (value_is_numeric(a) && value_is_numeric(b)) return value_as_real(a) == value_as_real(b);
    return a == b;
}

bool value_less(const Value& a, const Value& b) {
    if (value_is_null(a)) return !value_is_null(b);
    if (value_is_null(b)) return false;
    if (value_is_numeric(a) && value_is_numeric(b)) return value_as_real(a) < value_as_real(b);
    return a < b;  // variant ordering for same-type strings/bools
}

bool Schema::has(const std::string& name) const { return find(name) != nullptr; }

const Attribute* Schema::find(const std::string& name) const {
    for (const auto& a : attributes)
        if (a.name == name) return &a;
    return nullptr;
}

int Schema::index_of(const std::string& name) const {
    for (size_t i = 0; i < attributes.size(); ++i)
        if (attributes[i].name == name) return static_cast<int>(i);
    return -1;
}

bool Schema::equals_up_to_numeric(const Schema& o) const {
    if (attributes.size() != o.attributes.size()) return false;
    for (size_t i = 0; i < attributes.size(); ++i) {
        const auto& a = attributes[i];
        const auto& b = o.attributes[i];
        if (a.name != b.name) return false;
        if (a.type == b.type) continue;
        if (!(is_numeric(a.type) && is_numeric(b.type))) return false;
    }
    return true;
}

std::string Schema::to_string() const {
    std::string out = "(";
    for (size_t i = 0; i < attributes.size(); ++i) {
        if (i) out += ", ";
        out += attributes[i].name;
        out += ":";
        out += scalar_type_name(attributes[i].type);
    }
    out += ")";
    return out;
}

} // namespace chorus
