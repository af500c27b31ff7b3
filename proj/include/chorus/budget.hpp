#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace chorus {

enum class CompositionMode { standard, advanced };

struct BudgetEntry {
    std::string fingerprint;  // sha-256 of the canonical emitted SQL
    double epsilon = 0.0;
    double delta = 0.0;
    std::string timestamp;  // ISO-8601 UTC
};

// Append-only expenditure record. Version increases by one per charge; the
// store layer uses it to detect concurrent writers.
struct BudgetLedger {
    double total_epsilon = 0.0;
    double total_delta = 0.0;
    CompositionMode mode = CompositionMode::standard;
    double delta_prime = 0.0;  // advanced composition slack
    std::vector<BudgetEntry> entries;
    int64_t version = 0;

    // (epsilon, delta) spent under the configured composition mode
    std::pair<double, double> spent() const;
    double remaining_epsilon() const;
};

BudgetLedger make_ledger(double total_epsilon, double total_delta,
                         CompositionMode mode = CompositionMode::standard,
                         double delta_prime = 0.0);

// k homogeneous (epsilon, delta) entries compose to
//   eps' = eps*sqrt(2k*ln(1/delta')) + k*eps*(e^eps - 1),  delta = k*delta + delta'.
// Heterogeneous epsilons fall back to the standard sums.
std::pair<double, double> advanced_total(const std::vector<BudgetEntry>& entries,
                                         double delta_prime);

// Returns the ledger with the entry appended if the post-charge totals stay
// within budget under the configured mode; otherwise throws BudgetExhausted
// and the input ledger is untouched. Totals are compared with a 1e-9
// absolute slack so twenty 0.1-charges exactly fill a 2.0 budget.
BudgetLedger charge(const BudgetLedger& ledger, double epsilon, double delta,
                    const std::string& fingerprint);

BudgetLedger load_ledger(const std::string& path);

// Atomic write-temp-then-rename. Fails with version_conflict when the file
// on disk is already at (or past) this ledger's version: another writer won.
void store_ledger(const BudgetLedger& ledger, const std::string& path);

std::string sql_fingerprint(const std::string& canonical_sql);

} // namespace chorus
