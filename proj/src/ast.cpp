#include "chorus/ast.hpp"

#include "chorus/errors.hpp"

namespace chorus {

namespace {
ValueExprPtr make_value(ValueExpr v) { return std::make_shared<ValueExpr>(std::move(v)); }
}

ValueExprPtr vcolumn(std::string name) {
    ValueExpr v{ValueKind::column, {}, 0, 0.0, {}, nullptr, nullptr};
    v.column = std::move(name);
    return make_value(std::move(v));
}

ValueExprPtr vint(int64_t n) {
    ValueExpr v{ValueKind::int_lit, {}, n, 0.0, {}, nullptr, nullptr};
    return make_value(std::move(v));
}

ValueExprPtr vreal(double d) {
    ValueExpr v{ValueKind::real_lit, {}, 0, d, {}, nullptr, nullptr};
    return make_value(std::move(v));
}

ValueExprPtr vstring(std::string s) {
    ValueExpr v{ValueKind::string_lit, {}, 0, 0.0, std::move(s), nullptr, nullptr};
    return make_value(std::move(v));
}

static ValueExprPtr binary(ValueKind kind, ValueExprPtr a, ValueExprPtr b) {
    ValueExpr v{kind, {}, 0, 0.0, {}, std::move(a), std::move(b)};
    return make_value(std::move(v));
}

ValueExprPtr vadd(ValueExprPtr a, ValueExprPtr b) { return binary(ValueKind::add, std::move(a), std::move(b)); }
ValueExprPtr vmul(ValueExprPtr a, ValueExprPtr b) { return binary(ValueKind::mul, std::move(a), std::move(b)); }
ValueExprPtr vdiv(ValueExprPtr a, ValueExprPtr b) { return binary(ValueKind::div, std::move(a), std::move(b)); }

ValueExprPtr vrand() {
    ValueExpr v{ValueKind::rand_uniform, {}, 0, 0.0, {}, nullptr, nullptr};
    return make_value(std::move(v));
}

ValueExprPtr vrand_int(int64_t n) {
    if (n <= 0) throw Error(ErrorCode::internal, "randInt modulus must be positive");
    ValueExpr v{ValueKind::rand_int, {}, n, 0.0, {}, nullptr, nullptr};
    return make_value(std::move(v));
}

ValueExprPtr vrow_mod(int64_t n) {
    if (n <= 0) throw Error(ErrorCode::internal, "row modulus must be positive");
    ValueExpr v{ValueKind::row_mod, {}, n, 0.0, {}, nullptr, nullptr};
    return make_value(std::move(v));
}

ValueExprPtr vln(ValueExprPtr x) { return binary(ValueKind::ln, std::move(x), nullptr); }
ValueExprPtr vabs(ValueExprPtr x) { return binary(ValueKind::abs, std::move(x), nullptr); }
ValueExprPtr vsign(ValueExprPtr x) { return binary(ValueKind::sign, std::move(x), nullptr); }

ValueExprPtr vcoalesce(ValueExprPtr x, ValueExprPtr default_lit) {
    return binary(ValueKind::coalesce, std::move(x), std::move(default_lit));
}

bool value_expr_equal(const ValueExprPtr& a, const ValueExprPtr& b) {
    if (a == b) return true;
    if (!a || !b) return false;
    if (a->kind != b->kind) return false;
    switch (a->kind) {
        case ValueKind::column: return a->column == b->column;
        case ValueKind::int_lit: return a->int_value == b->int_value;
        case ValueKind::real_lit: return a->real_value == b->real_value;
        case ValueKind::string_lit: return a->string_value == b->string_value;
        case ValueKind::rand_uniform: return true;
        case ValueKind::rand_int:
        case ValueKind::row_mod: return a->int_value == b->int_value;
        default:
            return value_expr_equal(a->lhs, b->lhs) && value_expr_equal(a->rhs, b->rhs);
    }
}

const char* cmp_op_symbol(CmpOp op) {
    switch (op) {
        case CmpOp::lt: return "<";
        case CmpOp::le: return "<=";
        case CmpOp::eq: return "=";
        case CmpOp::ne: return "<>";
        case CmpOp::ge: return ">=";
        case CmpOp::gt: return ">";
    }
    return "?";
}

bool predicate_equal(const Predicate& a, const Predicate& b) {
    return a.op == b.op && value_expr_equal(a.lhs, b.lhs) && value_expr_equal(a.rhs, b.rhs);
}

const char* agg_kind_name(AggKind k) {
    switch (k) {
        case AggKind::count: return "count";
        case AggKind::sum: return "sum";
        case AggKind::avg: return "avg";
        case AggKind::median: return "median";
    }
    return "?";
}

static RelExprPtr make_rel(RelExpr r) { return std::make_shared<RelExpr>(std::move(r)); }

RelExprPtr rel_table(std::string name) {
    return make_rel(RelExpr{TableRef{std::move(name)}, {}});
}

RelExprPtr rel_join(RelExprPtr left, RelExprPtr right, std::string left_key,
                    std::string right_key, JoinKind kind, bool bin_completion) {
    if (kind == JoinKind::right_outer && !bin_completion)
        throw Error(ErrorCode::unsupported_construct,
                    "right-outer joins exist only as histogram completion output");
    return make_rel(RelExpr{Join{std::move(left), std::move(right), std::move(left_key),
                                 std::move(right_key), kind, bin_completion},
                            {}});
}

RelExprPtr rel_project(std::vector<AttrExpr> attrs, RelExprPtr input) {
    return make_rel(RelExpr{Projection{std::move(attrs), std::move(input)}, {}});
}

RelExprPtr rel_select(Predicate pred, RelExprPtr input) {
    return make_rel(RelExpr{Selection{std::move(pred), std::move(input)}, {}});
}

RelExprPtr rel_aggregate(AggKind kind, std::string column, RelExprPtr input,
                         std::vector<std::string> group_by, bool distinct,
                         std::string output_alias) {
    for (size_t i = 0; i < group_by.size(); ++i)
        for (size_t j = i + 1; j < group_by.size(); ++j)
            if (group_by[i] == group_by[j])
                throw Error(ErrorCode::duplicate_attribute,
                            "grouping column repeated: " + group_by[i]);
    return make_rel(RelExpr{Aggregate{kind, std::move(column), std::move(input),
                                      std::move(group_by), distinct, std::move(output_alias)},
                            {}});
}

std::string aggregate_output_name(const Aggregate& agg) {
    if (!agg.output_alias.empty()) return agg.output_alias;
    if (agg.kind == AggKind::count) return "count";
    return std::string(agg_kind_name(agg.kind)) + "_" + agg.column;
}

RelExprPtr with_alias_hint(RelExprPtr rel, std::string hint) {
    RelExpr copy = *rel;
    copy.alias_hint = std::move(hint);
    return make_rel(std::move(copy));
}

bool rel_equal(const RelExprPtr& a, const RelExprPtr& b) {
    if (a == b) return true;
    if (!a || !b) return false;
    if (a->node.index() != b->node.index()) return false;
    if (const auto* t = a->as<TableRef>()) return t->name == b->as<TableRef>()->name;
    if (const auto* j = a->as<Join>()) {
        const auto* o = b->as<Join>();
        return j->kind == o->kind && j->bin_completion == o->bin_completion &&
               j->left_key == o->left_key && j->right_key == o->right_key &&
               rel_equal(j->left, o->left) && rel_equal(j->right, o->right);
    }
    if (const auto* p = a->as<Projection>()) {
        const auto* o = b->as<Projection>();
        if (p->attrs.size() != o->attrs.size()) return false;
        for (size_t i = 0; i < p->attrs.size(); ++i) {
            if (p->attrs[i].name != o->attrs[i].name) return false;
            if (!value_expr_equal(p->attrs[i].value, o->attrs[i].value)) return false;
        }
        return rel_equal(p->input, o->input);
    }
    if (const auto* s = a->as<Selection>()) {
        const auto* o = b->as<Selection>();
        return predicate_equal(s->pred, o->pred) && rel_equal(s->input, o->input);
    }
    const auto* g = a->as<Aggregate>();
    const auto* o = b->as<Aggregate>();
    return g->kind == o->kind && g->column == o->column && g->distinct == o->distinct &&
           g->group_by == o->group_by && g->output_alias == o->output_alias &&
           rel_equal(g->input, o->input);
}

const Aggregate* outermost_aggregate(const RelExprPtr& expr) {
    if (!expr) return nullptr;
    if (const auto* a = expr->as<Aggregate>()) return a;
    // Histogram completion wraps the aggregation in a fixed shape: a
    // projection above a completion-flagged right-outer join whose left side
    // renames the group key. Unwrap exactly that; arbitrary projections stay
    // opaque so raw-row queries cannot masquerade as statistical ones.
    if (const auto* p = expr->as<Projection>()) {
        if (const auto* j = p->input->as<Join>(); j && j->bin_completion) {
            RelExprPtr inner = j->left;
            if (const auto* rename = inner->as<Projection>()) inner = rename->input;
            return inner->as<Aggregate>();
        }
    }
    return nullptr;
}

QueryExpr QueryExpr::make(RelExprPtr root) {
    if (!outermost_aggregate(root))
        throw Error(ErrorCode::not_statistical,
                    "query must aggregate; raw-row results are not representable");
    return QueryExpr{std::move(root), {}, std::nullopt};
}

QueryExpr QueryExpr::rewritten(RelExprPtr root, std::string mechanism,
                               std::optional<SaaFinalizer> fin) {
    return QueryExpr{std::move(root), std::move(mechanism), std::move(fin)};
}

bool query_equal(const QueryExpr& a, const QueryExpr& b) {
    return rel_equal(a.root, b.root);
}

static void collect_tables(const RelExprPtr& expr, std::set<std::string>& out) {
    if (!expr) return;
    if (const auto* t = expr->as<TableRef>()) {
        out.insert(t->name);
    } else if (const auto* j = expr->as<Join>()) {
        collect_tables(j->left, out);
        collect_tables(j->right, out);
    } else if (const auto* p = expr->as<Projection>()) {
        collect_tables(p->input, out);
    } else if (const auto* s = expr->as<Selection>()) {
        collect_tables(s->input, out);
    } else if (const auto* g = expr->as<Aggregate>()) {
        collect_tables(g->input, out);
    }
}

std::set<std::string> referenced_tables(const RelExprPtr& expr) {
    std::set<std::string> out;
    collect_tables(expr, out);
    return out;
}

std::vector<std::string> output_group_columns(const RelExprPtr& root) {
    if (const auto* a = outermost_aggregate(root)) return a->group_by;
    return {};
}

} // namespace chorus
