#include "chorus/rewrite.hpp"

#include <cmath>

#include "chorus/errors.hpp"

namespace chorus {

NoiseScale NoiseScale::of(double g) {
    if (!(g > 0.0) || !std::isfinite(g))
        throw Error(ErrorCode::internal, "noise scale must be positive and finite");
    return NoiseScale{g};
}

namespace {

// u is pulled fractionally inside (-0.5, 0.5) so ln(1-2*abs(u)) stays finite
// even when the DBMS returns an endpoint from RANDOM().
constexpr double kUniformShrink = 1.0 - 2e-12;

ValueExprPtr uniform_sample_expr() {
    return vmul(vadd(vrand(), vreal(-0.5)), vreal(kUniformShrink));
}

// gamma folds into the expression as a literal; integral scales print
// without a decimal point.
ValueExprPtr scale_literal(double gamma) {
    if (gamma == std::floor(gamma) && std::abs(gamma) < 9e15)
        return vint(static_cast<int64_t>(-gamma));
    return vreal(-gamma);
}

ValueExprPtr laplace_noise_expr(const std::string& u_column, double gamma) {
    ValueExprPtr u = vcolumn(u_column);
    ValueExprPtr one_minus = vadd(vint(1), vmul(vint(-2), vabs(u)));
    return vmul(vmul(scale_literal(gamma), vsign(u)), vln(one_minus));
}

struct MetadataRewriter {
    const MetadataFns& fns;
    const Catalog& catalog;
    int next_suffix = 2;
    bool first_assigned = false;

    std::string fresh_name() {
        if (!first_assigned) {
            first_assigned = true;
            return fns.metadata_name;
        }
        return fns.metadata_name + "_" + std::to_string(next_suffix++);
    }

    std::pair<RelExprPtr, std::string> rewrite(const RelExprPtr& r) {
        if (const auto* t = r->as<TableRef>()) {
            const TableMeta* meta = catalog.table(t->name);
            if (!meta) throw Error(ErrorCode::unknown_table, t->name);
            std::string m = fresh_name();
            std::vector<AttrExpr> attrs;
            for (const auto& c : meta->columns) attrs.push_back(AttrExpr::col(c.name));
            attrs.push_back(AttrExpr::bind(m, fns.init()));
            RelExprPtr proj = rel_project(std::move(attrs), r);
            if (!fns.init_alias_hint.empty()) proj = with_alias_hint(proj, fns.init_alias_hint);
            return {proj, m};
        }
        if (const auto* j = r->as<Join>()) {
            if (!fns.join_update)
                throw Error(ErrorCode::unsupported_construct,
                            "join: this rewrite does not propagate metadata through joins");
            auto [left, lm] = rewrite(j->left);
            auto [right, rm] = rewrite(j->right);
            RelExprPtr joined =
                rel_join(left, right, j->left_key, j->right_key, j->kind, j->bin_completion);
            std::string out = lm;
            RelExprPtr updated = fns.join_update(joined, lm, rm, out);
            return {updated, out};
        }
        if (const auto* p = r->as<Projection>()) {
            auto [input, m] = rewrite(p->input);
            std::vector<AttrExpr> attrs = p->attrs;
            attrs.push_back(AttrExpr::col(m));
            return {rel_project(std::move(attrs), input), m};
        }
        if (const auto* s = r->as<Selection>()) {
            auto [input, m] = rewrite(s->input);
            return {rel_select(s->pred, input), m};
        }
        const auto* a = r->as<Aggregate>();
        if (a->kind != AggKind::count || !fns.count_update)
            throw Error(ErrorCode::unsupported_construct,
                        "subquery aggregation: this rewrite does not propagate metadata through it");
        auto [input, m] = rewrite(a->input);
        RelExprPtr counted = rel_aggregate(a->kind, a->column, input, a->group_by, a->distinct);
        Schema counted_schema = schema_of(counted, catalog);
        std::vector<AttrExpr> attrs;
        for (const auto& attr : counted_schema.attributes) attrs.push_back(AttrExpr::col(attr.name));
        attrs.push_back(AttrExpr::bind(m, fns.count_update(counted)));
        return {rel_project(std::move(attrs), counted), m};
    }
};

} // namespace

std::pair<RelExprPtr, std::string> propagate_metadata(const RelExprPtr& r, const MetadataFns& fns,
                                                      const Catalog& catalog) {
    MetadataRewriter rewriter{fns, catalog};
    return rewriter.rewrite(r);
}

QueryExpr metadata_rewrite(const QueryExpr& q, const MetadataFns& fns, const Catalog& catalog) {
    const auto* a = q.root->as<Aggregate>();
    if (!a)
        throw Error(ErrorCode::unsupported_construct,
                    "metadata rewrite expects an aggregation at the top");
    auto [input, m] = propagate_metadata(a->input, fns, catalog);
    (void)m;  // the aggregation consumes rows, so m vanishes from the schema
    QueryExpr out = q;
    out.root = rel_aggregate(a->kind, a->column, input, a->group_by, a->distinct,
                             a->output_alias);
    return out;
}

QueryExpr laplace_rewrite(const QueryExpr& q, NoiseScale gamma, const Catalog& catalog) {
    Schema u = schema_of(q.root, catalog);
    std::vector<std::string> keys = output_group_columns(q.root);
    auto is_key = [&](const std::string& name) {
        for (const auto& k : keys)
            if (k == name) return true;
        return false;
    };

    std::vector<std::string> noised;
    for (const auto& attr : u.attributes) {
        if (is_key(attr.name)) continue;
        if (!is_numeric(attr.type))
            throw Error(ErrorCode::non_numeric_output,
                        "cannot add noise to non-numeric attribute " + attr.name);
        noised.push_back(attr.name);
    }

    auto u_name = [&](const std::string& x) {
        std::string candidate = "u_" + x;
        while (u.has(candidate)) candidate = "u_" + candidate;
        return candidate;
    };

    std::vector<AttrExpr> unif_attrs;
    for (const auto& attr : u.attributes) unif_attrs.push_back(AttrExpr::col(attr.name));
    for (const auto& x : noised) unif_attrs.push_back(AttrExpr::bind(u_name(x), uniform_sample_expr()));
    RelExprPtr unif = with_alias_hint(rel_project(std::move(unif_attrs), q.root), "chorus_uniform");

    std::vector<AttrExpr> lap_attrs;
    for (const auto& attr : u.attributes) {
        if (is_key(attr.name)) {
            lap_attrs.push_back(AttrExpr::col(attr.name));
        } else {
            lap_attrs.push_back(AttrExpr::bind(
                attr.name, vadd(vcolumn(attr.name), laplace_noise_expr(u_name(attr.name), gamma.gamma))));
        }
    }
    RelExprPtr lap = with_alias_hint(rel_project(std::move(lap_attrs), unif), "chorus_laplace");

    QueryExpr out = q;
    out.root = lap;
    return out;
}

QueryExpr replace_aggregation(const QueryExpr& q, AggKind from, AggKind to,
                              const std::string& to_column, const Catalog& catalog) {
    const auto* a = q.root->as<Aggregate>();
    if (!a || a->kind != from)
        throw Error(ErrorCode::aggregation_mismatch,
                    std::string("outermost aggregation is not ") + agg_kind_name(from));
    if (to != AggKind::count && to != AggKind::sum)
        throw Error(ErrorCode::aggregation_mismatch, "replacement must be count or sum");
    if (to == AggKind::sum) {
        Schema in = schema_of(a->input, catalog);
        if (!in.has(to_column))
            throw Error(ErrorCode::aggregation_mismatch,
                        "sum column " + to_column + " not present in the input");
    }
    std::string original_name = aggregate_output_name(*a);
    Aggregate replacement{to, to == AggKind::count ? "" : to_column, a->input, a->group_by, false,
                          {}};
    std::string canonical = aggregate_output_name(replacement);
    QueryExpr out = q;
    out.root = rel_aggregate(to, replacement.column, a->input, a->group_by, false,
                             canonical == original_name ? std::string() : original_name);
    return out;
}

QueryExpr subsample_rewrite(const QueryExpr& q, int64_t n, const AggregatorPlan& plan,
                            SubsampleStrategy strategy, const Catalog& catalog) {
    if (n <= 0) throw Error(ErrorCode::internal, "subsample count must be positive");
    const auto* a = q.root->as<Aggregate>();
    if (!a)
        throw Error(ErrorCode::unsupported_construct,
                    "subsampling expects an aggregation at the top");

    MetadataFns fns;
    fns.metadata_name = "samp";
    fns.init_alias_hint = "chorus_samp";
    fns.init = [n, strategy]() {
        return strategy == SubsampleStrategy::row_number_mod ? vrow_mod(n) : vrand_int(n);
    };
    // j and c stay undefined: subsampling changes the semantics of joins and
    // of aggregations computed within one subsample.
    auto [input, samp] = propagate_metadata(a->input, fns, catalog);

    std::vector<std::string> group_by = a->group_by;
    group_by.push_back(samp);
    RelExprPtr inner =
        rel_aggregate(a->kind, a->column, input, group_by, a->distinct, a->output_alias);

    Schema inner_schema = schema_of(inner, catalog);
    std::string value_column = inner_schema.attributes.back().name;

    SaaFinalizer fin;
    fin.kind = plan.kind;
    fin.subsamples = n;
    fin.epsilon = plan.epsilon;
    fin.output_scale =
        (a->kind == AggKind::count || a->kind == AggKind::sum) ? static_cast<double>(n) : 1.0;
    fin.samp_column = samp;
    fin.value_column = value_column;
    fin.group_columns = a->group_by;

    QueryExpr out = q;
    out.root = inner;
    out.finalizer = fin;
    return out;
}

QueryExpr complete_histogram_bins(const QueryExpr& q, const Catalog& catalog) {
    const auto* a = q.root->as<Aggregate>();
    if (!a || a->group_by.empty())
        throw Error(ErrorCode::unsupported_construct,
                    "histogram completion expects a grouped aggregation at the top");
    if (a->group_by.size() != 1)
        throw Error(ErrorCode::no_domain_source,
                    "multi-column grouping has no domain enumeration; provide explicit bins");
    const std::string& group_col = a->group_by[0];

    // The domain mapping is declared on the base-table column feeding the
    // group key; renamed group keys have no declared domain.
    const DomainSource* source = nullptr;
    for (const auto& table_name : referenced_tables(q.root)) {
        const ColumnMeta* c = catalog.column(table_name, group_col);
        if (c && c->domain_source) {
            source = &*c->domain_source;
            break;
        }
    }
    if (!source)
        throw Error(ErrorCode::no_domain_source,
                    "no domain mapping declared for grouping column " + group_col);
    const TableMeta* domain_table = catalog.table(source->table);

    Schema agg_schema = schema_of(q.root, catalog);
    const std::string agg_name = agg_schema.attributes.back().name;
    ScalarType agg_type = agg_schema.attributes.back().type;

    const std::string renamed_key = "chorus_grp";
    for (const auto& c : domain_table->columns)
        if (c.name == renamed_key || c.name == agg_name)
            throw Error(ErrorCode::no_domain_source,
                        "domain table " + domain_table->name + " column " + c.name +
                            " collides with the completed query");

    RelExprPtr renamed = rel_project(
        {AttrExpr::bind(renamed_key, vcolumn(group_col)), AttrExpr::col(agg_name)}, q.root);
    RelExprPtr joined = rel_join(renamed, rel_table(source->table), renamed_key, source->column,
                                 JoinKind::right_outer, /*bin_completion=*/true);

    ValueExprPtr zero =
        agg_type == ScalarType::int_type ? vint(0) : ValueExprPtr(vreal(0.0));
    std::vector<AttrExpr> top;
    if (group_col == source->column) top.push_back(AttrExpr::col(source->column));
    else top.push_back(AttrExpr::bind(group_col, vcolumn(source->column)));
    top.push_back(AttrExpr::bind(agg_name, vcoalesce(vcolumn(agg_name), zero)));

    QueryExpr out = q;
    out.root = rel_project(std::move(top), joined);
    return out;
}

} // namespace chorus
