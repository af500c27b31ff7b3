#include "chorus/sensitivity.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

#include "chorus/algebra.hpp"
#include "chorus/errors.hpp"

namespace chorus {

namespace {

[[noreturn]] void unsupported(const std::string& why) {
    throw Error(ErrorCode::unsupported_query, why);
}

bool touches_protected(const RelExprPtr& r, const Catalog& catalog) {
    for (const auto& name : referenced_tables(r)) {
        const TableMeta* t = catalog.table(name);
        if (t && t->is_protected) return true;
    }
    return false;
}

bool relation_has_column(const std::string& column, const RelExprPtr& rel, const Catalog& catalog) {
    try {
        return schema_of(rel, catalog).has(column);
    } catch (const Error&) {
        return false;
    }
}

// Resolves a column of a derived relation to a max-frequency bound. Through
// a join the frequency multiplies by the other side's per-key match bound.
int64_t max_frequency_bound(const std::string& column, const RelExprPtr& rel,
                            const Catalog& catalog) {
    if (const auto* t = rel->as<TableRef>()) {
        const ColumnMeta* c = catalog.column(t->name, column);
        if (!c) unsupported("column " + column + " not found in " + t->name);
        if (!c->max_frequency)
            unsupported("maxFrequency not declared for " + t->name + "." + column);
        return *c->max_frequency;
    }
    if (const auto* s = rel->as<Selection>())
        return max_frequency_bound(column, s->input, catalog);
    if (const auto* p = rel->as<Projection>()) {
        for (const auto& attr : p->attrs) {
            if (attr.name != column) continue;
            if (!attr.is_binding()) return max_frequency_bound(column, p->input, catalog);
            if (attr.value->kind == ValueKind::column)
                return max_frequency_bound(attr.value->column, p->input, catalog);
            unsupported("join key " + column + " is a computed expression");
        }
        unsupported("column " + column + " dropped by projection");
    }
    if (const auto* j = rel->as<Join>()) {
        // the side holding the column, amplified by the other side's matches
        if (relation_has_column(column, j->left, catalog))
            return max_frequency_bound(column, j->left, catalog) *
                   max_frequency_bound(j->right_key, j->right, catalog);
        return max_frequency_bound(column, j->right, catalog) *
               max_frequency_bound(j->left_key, j->left, catalog);
    }
    unsupported("max frequency through a subquery aggregation");
}

struct ElasticAnalysis {
    const Catalog& catalog;
    int64_t k;
    std::vector<std::string>* trace;  // only written on the k=0 pass
    int depth = 0;

    void note(const std::string& line) const {
        if (trace) trace->push_back(std::string(static_cast<size_t>(depth) * 2, ' ') + line);
    }

    double stability(const RelExprPtr& r) {
        if (const auto* t = r->as<TableRef>()) {
            const TableMeta* meta = catalog.table(t->name);
            if (!meta) throw Error(ErrorCode::unknown_table, t->name);
            double s = meta->is_protected ? 1.0 : 0.0;
            note("table " + t->name + (meta->is_protected ? " (protected): stability 1"
                                                          : ": stability 0"));
            return s;
        }
        if (const auto* sel = r->as<Selection>()) {
            note("selection: pass-through");
            ++depth;
            double s = stability(sel->input);
            --depth;
            return s;
        }
        if (const auto* p = r->as<Projection>()) {
            note("projection: pass-through");
            ++depth;
            double s = stability(p->input);
            --depth;
            return s;
        }
        if (const auto* j = r->as<Join>()) {
            if (j->kind != JoinKind::inner)
                unsupported("outer joins have no elastic stability rule");
            bool tp_left = touches_protected(j->left, catalog);
            bool tp_right = touches_protected(j->right, catalog);
            if (tp_left && tp_right)
                unsupported("join with protected data on both sides (self-join over the "
                            "protected table)");
            note("join " + j->left_key + " = " + j->right_key + ":");
            ++depth;
            double term_left = 0.0, term_right = 0.0;
            if (tp_left) {
                double e_left = stability(j->left);
                int64_t mf = max_frequency_bound(j->right_key, j->right, catalog);
                term_left = e_left * static_cast<double>(mf + k);
                note("left stability " + std::to_string(e_left) + " x (mf(" + j->right_key +
                     ")=" + std::to_string(mf) + " + k)");
            } else if (tp_right) {
                double e_right = stability(j->right);
                int64_t mf = max_frequency_bound(j->left_key, j->left, catalog);
                term_right = e_right * static_cast<double>(mf + k);
                note("right stability " + std::to_string(e_right) + " x (mf(" + j->left_key +
                     ")=" + std::to_string(mf) + " + k)");
            } else {
                note("no protected data on either side: stability 0");
            }
            --depth;
            return std::max(term_left, term_right);
        }
        unsupported("subquery aggregations have no elastic stability rule");
    }
};

const Aggregate* counting_top(const QueryExpr& q) {
    const Aggregate* a = outermost_aggregate(q.root);
    if (!a) unsupported("not a statistical query");
    if (a->kind != AggKind::count)
        unsupported(std::string("sensitivity analysis supports counting queries only, got ") +
                    agg_kind_name(a->kind));
    if (a->distinct) unsupported("COUNT(DISTINCT ...) has no supported sensitivity analysis");
    return a;
}

size_t join_count(const RelExprPtr& r) {
    if (!r) return 0;
    if (const auto* j = r->as<Join>()) return 1 + join_count(j->left) + join_count(j->right);
    if (const auto* p = r->as<Projection>()) return join_count(p->input);
    if (const auto* s = r->as<Selection>()) return join_count(s->input);
    if (const auto* a = r->as<Aggregate>()) return join_count(a->input);
    return 0;
}

} // namespace

double elastic_sensitivity_at_k(const QueryExpr& q, const Catalog& catalog, int64_t k) {
    if (k < 0) throw Error(ErrorCode::internal, "distance k must be nonnegative");
    const Aggregate* a = counting_top(q);
    ElasticAnalysis analysis{catalog, k, nullptr};
    return analysis.stability(a->input);
}

SensitivityResult smooth_elastic_sensitivity(const QueryExpr& q, const Catalog& catalog,
                                             double epsilon, double delta, int64_t db_size) {
    if (!(epsilon > 0.0)) throw Error(ErrorCode::unsupported_query, "epsilon must be positive");
    if (!(delta > 0.0 && delta < 1.0))
        throw Error(ErrorCode::unsupported_query, "delta must lie in (0,1)");
    if (db_size < 0) db_size = 0;

    SensitivityResult result;
    result.kind = "elastic-smooth";
    result.beta = epsilon / (2.0 * std::log(2.0 / delta));
    result.k_max = db_size;

    const Aggregate* a = counting_top(q);
    ElasticAnalysis traced{catalog, 0, &result.trace};
    double e0 = traced.stability(a->input);

    // grouped counts share the ungrouped recurrence: one row lands in one group
    double best = e0;
    int64_t best_k = 0;
    double degree = static_cast<double>(join_count(q.root));
    for (int64_t k = 1; k <= result.k_max; ++k) {
        ElasticAnalysis analysis{catalog, k, nullptr};
        double value = std::exp(-result.beta * k) * analysis.stability(a->input);
        if (value > best) {
            best = value;
            best_k = k;
        }
        // E(q,k) <= E(q,0) * (1+k)^d, and the decayed bound shrinks once
        // k exceeds d/beta; past that point nothing can beat the current max
        double bound = std::exp(-result.beta * k) * e0 * std::pow(1.0 + k, degree);
        if (static_cast<double>(k) > degree / result.beta && bound < best) break;
    }
    result.s = best;
    result.argmax_k = best_k;
    result.trace.push_back("smooth: beta=" + std::to_string(result.beta) + ", argmax k=" +
                           std::to_string(best_k) + ", s=" + std::to_string(best));
    return result;
}

namespace {

// nullopt = unbounded ("many")
std::optional<int64_t> cap_bound(const std::string& column, const RelExprPtr& rel,
                                 const Catalog& catalog) {
    if (const auto* t = rel->as<TableRef>()) {
        const ColumnMeta* c = catalog.column(t->name, column);
        if (!c) unsupported("column " + column + " not found in " + t->name);
        if (c->cap == JoinCap::one) return 1;
        if (c->cap == JoinCap::capped) return c->cap_value;
        return std::nullopt;
    }
    if (const auto* s = rel->as<Selection>()) return cap_bound(column, s->input, catalog);
    if (const auto* p = rel->as<Projection>()) {
        for (const auto& attr : p->attrs) {
            if (attr.name != column) continue;
            if (!attr.is_binding()) return cap_bound(column, p->input, catalog);
            if (attr.value->kind == ValueKind::column)
                return cap_bound(attr.value->column, p->input, catalog);
            return std::nullopt;
        }
        return std::nullopt;
    }
    if (const auto* j = rel->as<Join>()) {
        bool in_left = relation_has_column(column, j->left, catalog);
        std::optional<int64_t> own =
            in_left ? cap_bound(column, j->left, catalog) : cap_bound(column, j->right, catalog);
        std::optional<int64_t> other = in_left ? cap_bound(j->right_key, j->right, catalog)
                                               : cap_bound(j->left_key, j->left, catalog);
        if (!own || !other) return std::nullopt;
        return *own * *other;
    }
    return std::nullopt;
}

} // namespace

SensitivityResult restricted_sensitivity(const QueryExpr& q, const Catalog& catalog) {
    SensitivityResult result;
    result.kind = "restricted";
    const Aggregate* a = counting_top(q);

    struct Walker {
        const Catalog& catalog;
        std::vector<std::string>& trace;
        int depth = 0;

        void note(const std::string& line) const {
            trace.push_back(std::string(static_cast<size_t>(depth) * 2, ' ') + line);
        }

        // multiplier along the protected path
        double walk(const RelExprPtr& r) {
            if (const auto* t = r->as<TableRef>()) {
                const TableMeta* meta = catalog.table(t->name);
                if (!meta) throw Error(ErrorCode::unknown_table, t->name);
                note("table " + t->name + (meta->is_protected ? " (protected)" : ""));
                return meta->is_protected ? 1.0 : 0.0;
            }
            if (const auto* s = r->as<Selection>()) {
                ++depth;
                double v = walk(s->input);
                --depth;
                return v;
            }
            if (const auto* p = r->as<Projection>()) {
                ++depth;
                double v = walk(p->input);
                --depth;
                return v;
            }
            if (const auto* j = r->as<Join>()) {
                if (j->kind != JoinKind::inner)
                    unsupported("outer joins have no restricted sensitivity rule");
                bool tp_left = touches_protected(j->left, catalog);
                bool tp_right = touches_protected(j->right, catalog);
                if (tp_left && tp_right)
                    unsupported("join with protected data on both sides");
                if (!tp_left && !tp_right) {
                    note("join " + j->left_key + " = " + j->right_key + ": no protected data");
                    return 0.0;
                }
                note("join " + j->left_key + " = " + j->right_key + ":");
                ++depth;
                double inner = walk(tp_left ? j->left : j->right);
                std::optional<int64_t> cap = tp_left ? cap_bound(j->right_key, j->right, catalog)
                                                     : cap_bound(j->left_key, j->left, catalog);
                if (!cap)
                    throw Error(ErrorCode::many_to_many_join,
                                "join key " + (tp_left ? j->right_key : j->left_key) +
                                    " has no declared multiplicity cap");
                note("cap on " + (tp_left ? j->right_key : j->left_key) + " = " +
                     std::to_string(*cap));
                --depth;
                return inner * static_cast<double>(*cap);
            }
            unsupported("subquery aggregations have no restricted sensitivity rule");
        }
    };

    Walker walker{catalog, result.trace};
    result.s = walker.walk(a->input);
    result.trace.push_back("restricted s = " + std::to_string(result.s));
    return result;
}

} // namespace chorus
