#pragma once

#include <optional>
#include <string>
#include <vector>

#include "chorus/algebra.hpp"
#include "chorus/ast.hpp"
#include "chorus/catalog.hpp"
#include "chorus/rewrite.hpp"
#include "chorus/sensitivity.hpp"

namespace chorus {

enum class MechanismId { elastic, restricted, wpinq, saa };

const char* mechanism_name(MechanismId m);
std::optional<MechanismId> mechanism_from_name(const std::string& name);

struct MechanismPlan {
    MechanismId mechanism = MechanismId::elastic;
    std::optional<double> gamma;  // absent for saa (range-based scale inside the plan)
    double epsilon = 0.0;
    double delta = 0.0;
    int64_t subsamples = 0;  // saa only
    std::vector<std::string> rationale;  // rule firings and exclusion reasons
    std::optional<SensitivityResult> sensitivity;
    bool bin_list_mode = false;
    std::vector<std::string> bins;
};

// Scoring rules are data-independent: they see the query's structural
// features and catalog schema metadata, never rows.
struct SelectionRule {
    MechanismId mechanism = MechanismId::elastic;
    std::vector<std::string> requires_features;
    std::vector<std::string> forbids_features;
    double score = 0.0;
    std::string reason;
};

// The shipped rule set: capped-join counting favors restricted; elastic
// covers general equijoins including many-to-many; wpinq trails for counting
// (synthetic-data workflows); join-free estimators go to sample & aggregate.
std::vector<SelectionRule> default_rules();
std::vector<SelectionRule> load_rules(const std::string& path);

struct SupportVerdict {
    bool supported = false;
    std::string reason;  // exclusion reason when unsupported
};

SupportVerdict mechanism_supports(MechanismId m, const QueryExpr& q, const Catalog& catalog);

// Structural features plus catalog-derived ones (all-joins-capped,
// many-to-many-join) consumed by the selection rules.
std::set<std::string> selection_features(const QueryExpr& q, const Catalog& catalog);

struct RewriteOptions {
    double epsilon = 0.1;
    std::optional<double> delta;
    std::optional<MechanismId> mechanism;  // auto-select when absent
    int64_t db_size = 10000;
    std::vector<std::string> bins;  // explicit histogram bins (fallback mode)
    SubsampleStrategy strategy = SubsampleStrategy::row_number_mod;
};

struct RewriteResult {
    QueryExpr query;
    MechanismPlan plan;
    std::vector<std::string> warnings;
};

// Among supported mechanisms, the highest-scoring rule wins; ties break in
// the fixed order elastic > restricted > wpinq > saa. Throws no_mechanism
// with every mechanism's exclusion reason when nothing applies.
MechanismPlan select_mechanism(const QueryExpr& q, const Catalog& catalog,
                               const std::vector<SelectionRule>& rules, double epsilon,
                               std::optional<double> delta);

// Mechanism pipelines per their definitions. Histogram queries are
// bin-completed (or flagged for bin-list mode) before noise.
RewriteResult apply_mechanism(MechanismId m, const QueryExpr& q, const Catalog& catalog,
                              const RewriteOptions& opt);

// The weighted-counting parameters: unit initial weights and the per-key
// norm rescale (w_l*w_r)/(norm_l+norm_r) around every join.
MetadataFns wpinq_metadata_fns(const Catalog& catalog);

QueryExpr apply_elastic(const QueryExpr& q, const Catalog& catalog, double epsilon,
                        std::optional<double> delta, int64_t db_size);
QueryExpr apply_restricted(const QueryExpr& q, const Catalog& catalog, double epsilon);
QueryExpr apply_wpinq(const QueryExpr& q, const Catalog& catalog, double epsilon);
QueryExpr apply_saa(const QueryExpr& q, const Catalog& catalog, double epsilon, int64_t db_size);

// Full pipeline: validate, select (or honor the forced mechanism), apply.
RewriteResult rewrite_query(const QueryExpr& q, const Catalog& catalog,
                            const std::vector<SelectionRule>& rules, const RewriteOptions& opt);

// delta = n^(-epsilon * ln n) when the caller does not specify one.
double default_delta(double epsilon, int64_t db_size);

} // namespace chorus
