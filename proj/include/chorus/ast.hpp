#pragma once

#include <memory>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "chorus/types.hpp"

namespace chorus {

struct ValueExpr;
using ValueExprPtr = std::shared_ptr<const ValueExpr>;

enum class ValueKind {
    column,      // column reference by name
    int_lit,
    real_lit,
    string_lit,
    add,         // lhs + rhs (subtraction is addition of a negated term)
    mul,
    div,
    rand_uniform, // rand(): uniform real in (0,1)
    rand_int,     // randInt(n): integer in [0,n)
    row_mod,      // (1-based row number) mod n; rewriter-internal subsample ids
    ln,
    abs,
    sign,
    coalesce,     // lhs if non-null, else the default literal in rhs
};

struct ValueExpr {
    ValueKind kind;
    std::string column;        // column
    int64_t int_value = 0;     // int_lit; modulus for rand_int / row_mod
    double real_value = 0.0;   // real_lit
    std::string string_value;  // string_lit
    ValueExprPtr lhs, rhs;     // binary ops; unary functions use lhs only
};

ValueExprPtr vcolumn(std::string name);
ValueExprPtr vint(int64_t v);
ValueExprPtr vreal(double v);
ValueExprPtr vstring(std::string v);
ValueExprPtr vadd(ValueExprPtr a, ValueExprPtr b);
ValueExprPtr vmul(ValueExprPtr a, ValueExprPtr b);
ValueExprPtr vdiv(ValueExprPtr a, ValueExprPtr b);
ValueExprPtr vrand();
ValueExprPtr vrand_int(int64_t n);
ValueExprPtr vrow_mod(int64_t n);
ValueExprPtr vln(ValueExprPtr v);
ValueExprPtr vabs(ValueExprPtr v);
ValueExprPtr vsign(ValueExprPtr v);
ValueExprPtr vcoalesce(ValueExprPtr v, ValueExprPtr default_lit);

bool value_expr_equal(const ValueExprPtr& a, const ValueExprPtr& b);

enum class CmpOp { lt, le, eq, ne, ge, gt };
const char* cmp_op_symbol(CmpOp op);

struct Predicate {
    ValueExprPtr lhs;
    CmpOp op = CmpOp::eq;
    ValueExprPtr rhs;
};

bool predicate_equal(const Predicate& a, const Predicate& b);

// Projection item: plain column pass-through when value is null, otherwise
// a named binding name := value.
struct AttrExpr {
    std::string name;
    ValueExprPtr value;

    static AttrExpr col(std::string name) { return {std::move(name), nullptr}; }
    static AttrExpr bind(std::string name, ValueExprPtr v) { return {std::move(name), std::move(v)}; }
    bool is_binding() const { return value != nullptr; }
};

struct RelExpr;
using RelExprPtr = std::shared_ptr<const RelExpr>;

enum class JoinKind { inner, right_outer };
enum class AggKind { count, sum, avg, median };

const char* agg_kind_name(AggKind k);

struct TableRef {
    std::string name;
};

struct Join {
    RelExprPtr left, right;
    std::string left_key, right_key;
    JoinKind kind = JoinKind::inner;
    // Right-outer joins are only ever built by histogram bin completion;
    // the flag lets validation assert that provenance.
    bool bin_completion = false;
};

struct Projection {
    std::vector<AttrExpr> attrs;
    RelExprPtr input;
};

struct Selection {
    Predicate pred;
    RelExprPtr input;
};

struct Aggregate {
    AggKind kind = AggKind::count;
    std::string column;  // empty for count
    RelExprPtr input;
    std::vector<std::string> group_by;
    bool distinct = false;  // parsed COUNT(DISTINCT ...); rejected by every mechanism
    // Output attribute name when it must differ from the canonical
    // count/sum_<col> spelling: aggregation replacement keeps the original
    // query's column name so the output schema is preserved.
    std::string output_alias;
};

// count, sum_<col>, avg_<col>, median_<col>, or the alias when set.
std::string aggregate_output_name(const Aggregate& agg);

struct RelExpr {
    std::variant<TableRef, Join, Projection, Selection, Aggregate> node;
    // Emission hint for the WITH-alias of this block; ignored by equality.
    std::string alias_hint;

    template <typename T> const T* as() const { return std::get_if<T>(&node); }
    template <typename T> bool is() const { return std::holds_alternative<T>(node); }
};

RelExprPtr rel_table(std::string name);
RelExprPtr rel_join(RelExprPtr left, RelExprPtr right, std::string left_key,
                    std::string right_key, JoinKind kind = JoinKind::inner,
                    bool bin_completion = false);
RelExprPtr rel_project(std::vector<AttrExpr> attrs, RelExprPtr input);
RelExprPtr rel_select(Predicate pred, RelExprPtr input);
RelExprPtr rel_aggregate(AggKind kind, std::string column, RelExprPtr input,
                         std::vector<std::string> group_by = {}, bool distinct = false,
                         std::string output_alias = {});
RelExprPtr with_alias_hint(RelExprPtr rel, std::string hint);

// Structural equality; alias hints are ignored.
bool rel_equal(const RelExprPtr& a, const RelExprPtr& b);

// Sample & Aggregate carries its differentially private aggregation step as
// a structured plan executed over the subsampled query's result. The core
// algebra has no order statistics, so the winsorized mean cannot be a plain
// rewrite; the evaluator (or any runner) applies it to the inner rows.
enum class AggregatorKind { passthrough_mean, winsorized_mean };

struct SaaFinalizer {
    AggregatorKind kind = AggregatorKind::winsorized_mean;
    int64_t subsamples = 0;     // planned subsample count
    double epsilon = 0.0;       // noise budget for the final mean
    double output_scale = 1.0;  // subsample count for count/sum, 1 for avg/median
    std::string samp_column;
    std::string value_column;
    std::vector<std::string> group_columns;
};

// A statistical query: the outermost node is an aggregation (or, after
// histogram completion, the completion projection above one). Raw-row
// queries are unrepresentable through make().
struct QueryExpr {
    RelExprPtr root;
    std::string rewritten_by;  // mechanism id; empty for original queries
    std::optional<SaaFinalizer> finalizer;

    // Throws not_statistical unless the root is an aggregation or a
    // completion-flagged wrapper over one.
    static QueryExpr make(RelExprPtr root);
    static QueryExpr rewritten(RelExprPtr root, std::string mechanism,
                               std::optional<SaaFinalizer> fin = std::nullopt);
};

bool query_equal(const QueryExpr& a, const QueryExpr& b);

// Exact set of base table names mentioned anywhere in the expression.
std::set<std::string> referenced_tables(const RelExprPtr& expr);

// Innermost aggregation reached by unwrapping completion projections and
// selections above it; null when none exists.
const Aggregate* outermost_aggregate(const RelExprPtr& expr);

// Group-key attribute names of the query output (empty for scalar queries).
std::vector<std::string> output_group_columns(const RelExprPtr& root);

} // namespace chorus
