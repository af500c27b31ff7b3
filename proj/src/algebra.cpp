#include "chorus/algebra.hpp"

#include <set>

#include "chorus/errors.hpp"

namespace chorus {

ScalarType type_of_value(const ValueExprPtr& v, const Schema& input) {
    switch (v->kind) {
        case ValueKind::column: {
            const Attribute* a = input.find(v->column);
            if (!a)
                throw Error(ErrorCode::unknown_column,
                            "column " + v->column + " not in schema " + input.to_string());
            return a->type;
        }
        case ValueKind::int_lit: return ScalarType::int_type;
        case ValueKind::real_lit: return ScalarType::real_type;
        case ValueKind::string_lit: return ScalarType::string_type;
        case ValueKind::rand_uniform: return ScalarType::real_type;
        case ValueKind::rand_int:
        case ValueKind::row_mod: return ScalarType::int_type;
        case ValueKind::add:
        case ValueKind::mul:
        case ValueKind::div: {
            ScalarType l = type_of_value(v->lhs, input);
            ScalarType r = type_of_value(v->rhs, input);
            if (!is_numeric(l) || !is_numeric(r))
                throw Error(ErrorCode::type_mismatch, "arithmetic over non-numeric operands");
            if (v->kind == ValueKind::div) return ScalarType::real_type;
            return (l == ScalarType::real_type || r == ScalarType::real_type)
                       ? ScalarType::real_type
                       : ScalarType::int_type;
        }
        case ValueKind::ln: {
            if (!is_numeric(type_of_value(v->lhs, input)))
                throw Error(ErrorCode::type_mismatch, "ln over non-numeric operand");
            return ScalarType::real_type;
        }
        case ValueKind::abs:
        case ValueKind::sign: {
            ScalarType t = type_of_value(v->lhs, input);
            if (!is_numeric(t))
                throw Error(ErrorCode::type_mismatch, "abs/sign over non-numeric operand");
            return v->kind == ValueKind::sign ? ScalarType::int_type : t;
        }
        case ValueKind::coalesce: {
            ScalarType l = type_of_value(v->lhs, input);
            ScalarType r = type_of_value(v->rhs, input);
            if (l == r) return l;
            if (is_numeric(l) && is_numeric(r)) return ScalarType::real_type;
            throw Error(ErrorCode::type_mismatch, "coalesce branches have incompatible types");
        }
    }
    throw Error(ErrorCode::internal, "unhandled value kind");
}

void check_predicate(const Predicate& p, const Schema& input) {
    ScalarType l = type_of_value(p.lhs, input);
    ScalarType r = type_of_value(p.rhs, input);
    bool comparable = (l == r) || (is_numeric(l) && is_numeric(r));
    if (!comparable)
        throw Error(ErrorCode::type_mismatch,
                    std::string("cannot compare ") + scalar_type_name(l) + " with " +
                        scalar_type_name(r));
}

namespace {

Schema aggregate_schema(const Aggregate& agg, const Schema& in) {
    Schema out;
    for (const auto& g : agg.group_by) {
        const Attribute* a = in.find(g);
        if (!a)
            throw Error(ErrorCode::unknown_column,
                        "grouping column " + g + " not in schema " + in.to_string());
        out.attributes.push_back(*a);
    }
    if (agg.kind == AggKind::count) {
        out.attributes.push_back({aggregate_output_name(agg), ScalarType::int_type});
        return out;
    }
    const Attribute* a = in.find(agg.column);
    if (!a)
        throw Error(ErrorCode::unknown_column,
                    std::string(agg_kind_name(agg.kind)) + " column " + agg.column +
                        " not in schema " + in.to_string());
    if (!is_numeric(a->type))
        throw Error(ErrorCode::type_mismatch,
                    std::string(agg_kind_name(agg.kind)) + " over non-numeric column " + agg.column);
    ScalarType t = a->type;
    if (agg.kind == AggKind::avg || agg.kind == AggKind::median) t = ScalarType::real_type;
    out.attributes.push_back({aggregate_output_name(agg), t});
    return out;
}

} // namespace

Schema schema_of(const RelExprPtr& expr, const Catalog& catalog) {
    if (!expr) throw Error(ErrorCode::internal, "null relational expression");
    if (const auto* t = expr->as<TableRef>()) {
        const TableMeta* meta = catalog.table(t->name);
        if (!meta) throw Error(ErrorCode::unknown_table, t->name);
        return meta->schema();
    }
    if (const auto* j = expr->as<Join>()) {
        Schema l = schema_of(j->left, catalog);
        Schema r = schema_of(j->right, catalog);
        const Attribute* lk = l.find(j->left_key);
        if (!lk)
            throw Error(ErrorCode::unknown_column,
                        "join key " + j->left_key + " not in left schema " + l.to_string());
        const Attribute* rk = r.find(j->right_key);
        if (!rk)
            throw Error(ErrorCode::unknown_column,
                        "join key " + j->right_key + " not in right schema " + r.to_string());
        bool comparable = lk->type == rk->type || (is_numeric(lk->type) && is_numeric(rk->type));
        if (!comparable)
            throw Error(ErrorCode::type_mismatch,
                        "join keys " + j->left_key + " and " + j->right_key + " are incomparable");
        Schema out = l;
        for (const auto& a : r.attributes) {
            if (out.has(a.name))
                throw Error(ErrorCode::duplicate_attribute,
                            "join output would contain two attributes named " + a.name);
            out.attributes.push_back(a);
        }
        return out;
    }
    if (const auto* p = expr->as<Projection>()) {
        Schema in = schema_of(p->input, catalog);
        Schema out;
        for (const auto& attr : p->attrs) {
            if (out.has(attr.name))
                throw Error(ErrorCode::duplicate_attribute,
                            "projection binds " + attr.name + " twice");
            if (attr.is_binding()) {
                out.attributes.push_back({attr.name, type_of_value(attr.value, in)});
            } else {
                const Attribute* a = in.find(attr.name);
                if (!a)
                    throw Error(ErrorCode::unknown_column,
                                "column " + attr.name + " not in schema " + in.to_string());
                out.attributes.push_back(*a);
            }
        }
        return out;
    }
    if (const auto* s = expr->as<Selection>()) {
        Schema in = schema_of(s->input, catalog);
        check_predicate(s->pred, in);
        return in;
    }
    const auto* g = expr->as<Aggregate>();
    return aggregate_schema(*g, schema_of(g->input, catalog));
}

namespace {

struct FeatureWalk {
    std::set<std::string>& features;
    // depth counts enclosing aggregations: an aggregate seen at depth > 0
    // is a subquery aggregation.
    void walk(const RelExprPtr& e, int agg_depth) {
        if (!e) return;
        if (const auto* j = e->as<Join>()) {
            features.insert("join");
            if (j->kind == JoinKind::right_outer) features.insert("right-outer-join");
            else features.insert("inner-join");
            walk(j->left, agg_depth);
            walk(j->right, agg_depth);
        } else if (const auto* p = e->as<Projection>()) {
            walk(p->input, agg_depth);
        } else if (const auto* s = e->as<Selection>()) {
            features.insert("selection");
            walk(s->input, agg_depth);
        } else if (const auto* a = e->as<Aggregate>()) {
            if (agg_depth > 0) features.insert("subquery-aggregation");
            else {
                features.insert(agg_kind_name(a->kind));
                if (a->distinct) features.insert("count-distinct");
                if (!a->group_by.empty()) features.insert("grouped");
            }
            walk(a->input, agg_depth + 1);
        }
    }
};

} // namespace

ValidationReport validate_query(const QueryExpr& q, const Catalog& catalog) {
    ValidationReport report;
    if (!q.root) {
        report.problems.push_back({"NotStatistical", "empty query"});
        return report;
    }
    const Aggregate* top = outermost_aggregate(q.root);
    if (!top) {
        report.problems.push_back(
            {"NotStatistical", "outermost node is not an aggregation; raw rows are not released"});
        return report;
    }
    try {
        (void)schema_of(q.root, catalog);
    } catch (const Error& e) {
        report.problems.push_back({error_code_name(e.code()), e.detail()});
        return report;
    }
    FeatureWalk{report.features}.walk(q.root, 0);
    if (!report.has("join")) report.features.insert("no-join");
    report.ok = true;
    return report;
}

} // namespace chorus
