#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "chorus/ast.hpp"
#include "chorus/catalog.hpp"

namespace chorus {

struct SensitivityResult {
    double s = 0.0;
    std::string kind;  // "elastic-smooth" or "restricted"
    std::vector<std::string> trace;  // per-node lines, indented
    double beta = 0.0;   // smoothing parameter (elastic only)
    int64_t k_max = 0;   // scan horizon (elastic only)
    int64_t argmax_k = 0;
};

// Stability of a counting query at distance k: base protected table 1,
// other base tables 0, selections and projections pass through, and for an
// equijoin the larger of each side's stability times the opposite key's max
// frequency (boosted by +k on the factor paired with protected-derived
// stability). Monotone nondecreasing in k. Throws unsupported_query when the
// query is not a supported counting shape or metadata is missing.
double elastic_sensitivity_at_k(const QueryExpr& q, const Catalog& catalog, int64_t k);

// s = max over k in [0, db_size] of e^(-beta*k) * E(q,k), with
// beta = epsilon / (2*ln(2/delta)). The scan exits early once the decaying
// polynomial bound on E falls below the best value seen.
SensitivityResult smooth_elastic_sensitivity(const QueryExpr& q, const Catalog& catalog,
                                             double epsilon, double delta, int64_t db_size);

// Global sensitivity under declared join multiplicity caps: the product over
// joins on the protected path of the opposite side's cap. Throws
// many_to_many_join when a needed cap is "many" or undeclared.
SensitivityResult restricted_sensitivity(const QueryExpr& q, const Catalog& catalog);

} // namespace chorus
