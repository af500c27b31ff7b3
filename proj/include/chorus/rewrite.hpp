#pragma once

#include <functional>
#include <string>
#include <utility>

#include "chorus/algebra.hpp"
#include "chorus/ast.hpp"
#include "chorus/catalog.hpp"

namespace chorus {

// Laplace scale in units of the query's output.
struct NoiseScale {
    double gamma = 0.0;
    static NoiseScale of(double g);
};

// Parameters of the metadata propagation rewrite. A null update function is
// the undefined case: reaching a construct that needs it is an error, never
// silent misbehavior.
struct MetadataFns {
    std::string metadata_name;     // m: attribute added to every base table
    std::string init_alias_hint;   // WITH-alias for the init projections
    std::function<ValueExprPtr()> init;  // i: initial per-row value
    // j: localized rewrite around a join. Receives the join whose sides
    // already carry their metadata columns (left_m / right_m) and must
    // return a relation whose schema replaces both with a single out_m.
    std::function<RelExprPtr(RelExprPtr joined, const std::string& left_m,
                             const std::string& right_m, const std::string& out_m)>
        join_update;
    // c: metadata value attached to the result of a counting subquery.
    std::function<ValueExprPtr(RelExprPtr aggregated)> count_update;
};

// The relation-level rules: wraps every base table in a projection adding
// m := i(), propagates m through projections and selections, rewrites joins
// via join_update and counting subqueries via count_update. Returns the
// rewritten relation and the name of its metadata column.
std::pair<RelExprPtr, std::string> propagate_metadata(const RelExprPtr& r,
                                                      const MetadataFns& fns,
                                                      const Catalog& catalog);

// The query-level rules: the top aggregation consumes m, so the top-level
// schema is unchanged.
QueryExpr metadata_rewrite(const QueryExpr& q, const MetadataFns& fns, const Catalog& catalog);

// Wraps the query in two projections: one sampling u_x := rand()-0.5 for
// each aggregate output attribute, one replacing x with
// x + (-gamma)*sign(u_x)*ln(1-2*abs(u_x)). Group columns pass through
// untouched. Output schema equals the input's up to int->real widening of
// the noised attributes.
QueryExpr laplace_rewrite(const QueryExpr& q, NoiseScale gamma, const Catalog& catalog);

// Swaps the outermost aggregation function; grouping columns preserved.
QueryExpr replace_aggregation(const QueryExpr& q, AggKind from, AggKind to,
                              const std::string& to_column, const Catalog& catalog);

enum class SubsampleStrategy { row_number_mod, rand_int };

// How the per-subsample results are folded back into one result with the
// original shape. passthrough_mean exists for identity tests.
struct AggregatorPlan {
    AggregatorKind kind = AggregatorKind::winsorized_mean;
    double epsilon = 1.0;
};

// Assigns every base row a subsample id in [0,n), adds it to the outermost
// aggregation's grouping, and attaches the aggregator plan that restores the
// original output schema. Joins and subquery aggregations are unsupported
// here: splitting rows changes their semantics.
QueryExpr subsample_rewrite(const QueryExpr& q, int64_t n, const AggregatorPlan& plan,
                            SubsampleStrategy strategy, const Catalog& catalog);

// Wraps a grouped aggregation in a right-outer join against the group
// column's declared domain table so every domain value appears exactly once,
// with coalesce(agg, 0) filling absent bins. Single grouping column only;
// anything else raises no_domain_source and the caller falls back to an
// explicit bin list.
QueryExpr complete_histogram_bins(const QueryExpr& q, const Catalog& catalog);

} // namespace chorus
