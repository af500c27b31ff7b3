#include "chorus/mechanisms.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "chorus/errors.hpp"

namespace chorus {

using nlohmann::json;

const char* mechanism_name(MechanismId m) {
    switch (m) {
        case MechanismId::elastic: return "elastic";
        case MechanismId::restricted: return "restricted";
        case MechanismId::wpinq: return "wpinq";
        case MechanismId::saa: return "saa";
    }
    return "?";
}

std::optional<MechanismId> mechanism_from_name(const std::string& name) {
    if (name == "elastic") return MechanismId::elastic;
    if (name == "restricted") return MechanismId::restricted;
    if (name == "wpinq") return MechanismId::wpinq;
    if (name == "saa") return MechanismId::saa;
    return std::nullopt;
}

double default_delta(double epsilon, int64_t db_size) {
    double n = std::max<double>(2.0, static_cast<double>(db_size));
    return std::pow(n, -epsilon * std::log(n));
}

namespace {

// Weight rescaling for a join of two weighted relations: per-key
// norm subqueries on each side, joined back, with the output weight
// (w_left*w_right)/(norm_left+norm_right).
RelExprPtr wpinq_join_update(const RelExprPtr& joined, const std::string& left_m,
                             const std::string& right_m, const std::string& out_m,
                             const Catalog& catalog) {
    const auto* j = joined->as<Join>();
    auto norm_side = [&](const RelExprPtr& side, const std::string& key, const std::string& w) {
        RelExprPtr agg = rel_aggregate(AggKind::sum, w, side, {key});
        RelExprPtr renamed = rel_project({AttrExpr::bind(w + "_key", vcolumn(key)),
                                          AttrExpr::bind(w + "_norm", vcolumn("sum_" + w))},
                                         agg);
        auto tables = referenced_tables(side);
        std::string hint =
            tables.size() == 1 ? "chorus_norm_" + *tables.begin() : "chorus_norm_" + w;
        return with_alias_hint(renamed, hint);
    };
    RelExprPtr left_norms = norm_side(j->left, j->left_key, left_m);
    RelExprPtr right_norms = norm_side(j->right, j->right_key, right_m);
    RelExprPtr with_left = rel_join(joined, left_norms, j->left_key, left_m + "_key");
    RelExprPtr with_both = rel_join(with_left, right_norms, j->right_key, right_m + "_key");

    Schema joined_schema = schema_of(joined, catalog);
    std::vector<AttrExpr> attrs;
    for (const auto& a : joined_schema.attributes) {
        if (a.name == left_m || a.name == right_m) continue;
        attrs.push_back(AttrExpr::col(a.name));
    }
    attrs.push_back(AttrExpr::bind(
        out_m, vdiv(vmul(vcolumn(left_m), vcolumn(right_m)),
                    vadd(vcolumn(left_m + "_norm"), vcolumn(right_m + "_norm")))));
    return rel_project(std::move(attrs), with_both);
}


struct StructureFacts {
    bool has_join = false;
    bool has_subquery_agg = false;
    bool has_right_outer = false;
    bool many_to_many = false;
    const Aggregate* top = nullptr;
};

void walk_structure(const RelExprPtr& r, int agg_depth, const Catalog& catalog,
                    StructureFacts& facts) {
    if (!r) return;
    if (const auto* j = r->as<Join>()) {
        facts.has_join = true;
        if (j->kind == JoinKind::right_outer) facts.has_right_outer = true;
        const ColumnMeta* lc = nullptr;
        const ColumnMeta* rc = nullptr;
        if (const auto* lt = j->left->as<TableRef>()) lc = catalog.column(lt->name, j->left_key);
        if (const auto* rt = j->right->as<TableRef>()) rc = catalog.column(rt->name, j->right_key);
        bool left_many = !lc || lc->cap == JoinCap::many;
        bool right_many = !rc || rc->cap == JoinCap::many;
        if (left_many && right_many) facts.many_to_many = true;
        walk_structure(j->left, agg_depth, catalog, facts);
        walk_structure(j->right, agg_depth, catalog, facts);
    } else if (const auto* p = r->as<Projection>()) {
        walk_structure(p->input, agg_depth, catalog, facts);
    } else if (const auto* s = r->as<Selection>()) {
        walk_structure(s->input, agg_depth, catalog, facts);
    } else if (const auto* a = r->as<Aggregate>()) {
        if (agg_depth > 0) facts.has_subquery_agg = true;
        else facts.top = a;
        walk_structure(a->input, agg_depth + 1, catalog, facts);
    }
}

StructureFacts structure_of(const QueryExpr& q, const Catalog& catalog) {
    StructureFacts facts;
    const Aggregate* top = outermost_aggregate(q.root);
    // analyze the pre-completion query when given a completed one
    walk_structure(top ? top->input : q.root, 1, catalog, facts);
    facts.top = top;
    return facts;
}

} // namespace

MetadataFns wpinq_metadata_fns(const Catalog& catalog) {
    MetadataFns fns;
    fns.metadata_name = "weight";
    // real-typed unit weight: an integer literal would make the rescale
    // expression integer-divide to zero on a real DBMS
    fns.init = []() { return vreal(1.0); };
    fns.join_update = [&catalog](RelExprPtr joined, const std::string& lm, const std::string& rm,
                                 const std::string& out) {
        return wpinq_join_update(joined, lm, rm, out, catalog);
    };
    // subquery counts stay unsupported: a count's weight is not a row weight
    return fns;
}

SupportVerdict mechanism_supports(MechanismId m, const QueryExpr& q, const Catalog& catalog) {
    StructureFacts facts = structure_of(q, catalog);
    if (!facts.top) return {false, "not a statistical query"};
    const Aggregate& top = *facts.top;

    switch (m) {
        case MechanismId::elastic: {
            try {
                (void)smooth_elastic_sensitivity(q, catalog, 0.1, 1e-6, 1);
                return {true, ""};
            } catch (const Error& e) {
                return {false, e.detail()};
            }
        }
        case MechanismId::restricted: {
            try {
                (void)restricted_sensitivity(q, catalog);
                return {true, ""};
            } catch (const Error& e) {
                return {false, e.detail()};
            }
        }
        case MechanismId::wpinq: {
            if (top.kind != AggKind::count)
                return {false, "weighted counting supports COUNT only"};
            if (top.distinct) return {false, "COUNT(DISTINCT ...) is not supported"};
            if (facts.has_subquery_agg) return {false, "subquery aggregations are not supported"};
            if (facts.has_right_outer) return {false, "outer joins are not supported"};
            return {true, ""};
        }
        case MechanismId::saa: {
            if (facts.has_join) return {false, "subsampling changes join semantics"};
            if (facts.has_subquery_agg)
                return {false, "subsampling changes subquery aggregation semantics"};
            if (top.distinct) return {false, "COUNT(DISTINCT ...) is not supported"};
            if (!top.group_by.empty())
                return {false, "grouped estimators are not supported (bin completion requires a "
                               "join, which subsampling forbids)"};
            return {true, ""};
        }
    }
    return {false, "unknown mechanism"};
}

std::set<std::string> selection_features(const QueryExpr& q, const Catalog& catalog) {
    ValidationReport report = validate_query(q, catalog);
    std::set<std::string> features = report.features;
    StructureFacts facts = structure_of(q, catalog);
    if (facts.many_to_many) features.insert("many-to-many-join");
    if (facts.top && facts.top->kind == AggKind::count && !facts.top->distinct) {
        try {
            (void)restricted_sensitivity(q, catalog);
            features.insert("all-joins-capped");
        } catch (const Error&) {
        }
    }
    return features;
}

std::vector<SelectionRule> default_rules() {
    auto estimator_rule = [](const char* agg) {
        return SelectionRule{MechanismId::saa,
                             {"no-join", agg},
                             {"grouped", "subquery-aggregation", "count-distinct"},
                             3.0,
                             std::string("sample & aggregate handles the ") + agg + " estimator"};
    };
    return {
        {MechanismId::restricted,
         {"count", "all-joins-capped"},
         {"count-distinct", "subquery-aggregation", "many-to-many-join"},
         3.0,
         "capped equijoins give a tight global sensitivity without smoothing loss"},
        {MechanismId::elastic,
         {"count"},
         {"count-distinct", "subquery-aggregation"},
         2.0,
         "local sensitivity with smoothing supports general equijoins"},
        {MechanismId::wpinq,
         {"count"},
         {"count-distinct", "subquery-aggregation"},
         1.0,
         "weighted counting; mainly useful for synthetic-data workflows"},
        estimator_rule("sum"),
        estimator_rule("avg"),
        estimator_rule("median"),
        {MechanismId::saa,
         {"no-join", "count"},
         {"grouped", "subquery-aggregation", "count-distinct"},
         1.0,
         "subsampled counting works but wastes budget against direct noise"},
    };
}

std::vector<SelectionRule> load_rules(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::catalog_error, "cannot open rules file " + path);
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::catalog_error, std::string("invalid rules JSON: ") + e.what());
    }
    if (!doc.is_array()) throw Error(ErrorCode::catalog_error, "rules file must be a JSON array");
    std::vector<SelectionRule> rules;
    for (const json& jr : doc) {
        SelectionRule rule;
        auto mech = mechanism_from_name(jr.at("mechanism").get<std::string>());
        if (!mech)
            throw Error(ErrorCode::catalog_error,
                        "unknown mechanism " + jr.at("mechanism").get<std::string>());
        rule.mechanism = *mech;
        if (jr.contains("requiresFeatures"))
            rule.requires_features = jr.at("requiresFeatures").get<std::vector<std::string>>();
        if (jr.contains("forbidsFeatures"))
            rule.forbids_features = jr.at("forbidsFeatures").get<std::vector<std::string>>();
        rule.score = jr.at("score").get<double>();
        if (jr.contains("reason")) rule.reason = jr.at("reason").get<std::string>();
        rules.push_back(std::move(rule));
    }
    return rules;
}

MechanismPlan select_mechanism(const QueryExpr& q, const Catalog& catalog,
                               const std::vector<SelectionRule>& rules, double epsilon,
                               std::optional<double> delta) {
    if (!(epsilon > 0.0)) throw Error(ErrorCode::unsupported_query, "epsilon must be positive");
    std::set<std::string> features = selection_features(q, catalog);

    MechanismPlan plan;
    plan.epsilon = epsilon;
    plan.delta = delta.value_or(0.0);

    std::string feature_line = "features:";
    for (const auto& f : features) feature_line += " " + f;
    plan.rationale.push_back(feature_line);

    // fixed tie-break order
    const MechanismId order[] = {MechanismId::elastic, MechanismId::restricted, MechanismId::wpinq,
                                 MechanismId::saa};
    bool found = false;
    double best_score = 0.0;
    MechanismId best = MechanismId::elastic;
    std::vector<std::string> exclusions;

    for (MechanismId m : order) {
        SupportVerdict verdict = mechanism_supports(m, q, catalog);
        if (!verdict.supported) {
            plan.rationale.push_back(std::string("excluded ") + mechanism_name(m) + ": " +
                                     verdict.reason);
            exclusions.push_back(std::string(mechanism_name(m)) + ": " + verdict.reason);
            continue;
        }
        bool any_rule = false;
        double score = 0.0;
        for (const auto& rule : rules) {
            if (rule.mechanism != m) continue;
            bool fires = true;
            for (const auto& f : rule.requires_features)
                if (!features.count(f)) fires = false;
            for (const auto& f : rule.forbids_features)
                if (features.count(f)) fires = false;
            if (!fires) continue;
            plan.rationale.push_back(std::string("rule fired: ") + mechanism_name(m) + " score " +
                                     std::to_string(rule.score) + " (" + rule.reason + ")");
            if (!any_rule || rule.score > score) score = rule.score;
            any_rule = true;
        }
        if (!any_rule) {
            plan.rationale.push_back(std::string("excluded ") + mechanism_name(m) +
                                     ": no selection rule matched");
            exclusions.push_back(std::string(mechanism_name(m)) + ": no selection rule matched");
            continue;
        }
        if (!found || score > best_score) {
            found = true;
            best_score = score;
            best = m;
        }
    }

    if (!found) {
        std::string detail = "no mechanism supports this query;";
        for (const auto& e : exclusions) detail += " " + e + ";";
        throw Error(ErrorCode::no_mechanism, detail);
    }
    plan.mechanism = best;
    plan.rationale.push_back(std::string("selected ") + mechanism_name(best) + " with score " +
                             std::to_string(best_score));
    return plan;
}

namespace {

// Grouped queries must not leak which bins exist: enumerate the domain when
// declared, fall back to an explicit bin list, otherwise reject.
QueryExpr prepare_histogram(const QueryExpr& q, const Catalog& catalog, const RewriteOptions& opt,
                            MechanismPlan& plan, std::vector<std::string>& warnings) {
    const Aggregate* top = q.root->as<Aggregate>();
    if (!top || top->group_by.empty()) return q;
    try {
        return complete_histogram_bins(q, catalog);
    } catch (const Error& e) {
        if (e.code() != ErrorCode::no_domain_source) throw;
        if (opt.bins.empty())
            throw Error(ErrorCode::no_domain_source,
                        e.detail() + " — provide an explicit bin list (--bins) or declare a "
                                     "domainSource in the catalog");
        plan.bin_list_mode = true;
        plan.bins = opt.bins;
        warnings.push_back("bin-list mode: results must be completed against the supplied bins; "
                           "absent bins carry fresh noisy zeros");
        return q;
    }
}

RewriteResult apply_sensitivity_mechanism(MechanismId m, const QueryExpr& q,
                                          const Catalog& catalog, const RewriteOptions& opt,
                                          MechanismPlan plan) {
    plan.mechanism = m;
    plan.epsilon = opt.epsilon;
    SensitivityResult sens;
    if (m == MechanismId::elastic) {
        double delta = opt.delta.value_or(default_delta(opt.epsilon, opt.db_size));
        plan.delta = delta;
        sens = smooth_elastic_sensitivity(q, catalog, opt.epsilon, delta, opt.db_size);
    } else {
        plan.delta = 0.0;  // pure epsilon-DP
        sens = restricted_sensitivity(q, catalog);
    }
    plan.sensitivity = sens;

    RewriteResult result{q, plan, {}};
    QueryExpr prepared = prepare_histogram(q, catalog, opt, result.plan, result.warnings);

    if (sens.s == 0.0) {
        result.warnings.push_back(
            "query does not reference the protected table; no noise added");
        result.query = QueryExpr::rewritten(prepared.root, mechanism_name(m));
        return result;
    }
    double gamma = sens.s / opt.epsilon;
    result.plan.gamma = gamma;
    QueryExpr noised = laplace_rewrite(prepared, NoiseScale::of(gamma), catalog);
    result.query = QueryExpr::rewritten(noised.root, mechanism_name(m));
    return result;
}

RewriteResult apply_wpinq_impl(const QueryExpr& q, const Catalog& catalog,
                               const RewriteOptions& opt, MechanismPlan plan) {
    plan.mechanism = MechanismId::wpinq;
    plan.epsilon = opt.epsilon;
    plan.delta = 0.0;
    const Aggregate* top = q.root->as<Aggregate>();
    if (!top) throw Error(ErrorCode::unsupported_construct, "expected an aggregation at the top");
    if (top->kind != AggKind::count || top->distinct)
        throw Error(ErrorCode::unsupported_query,
                    top->distinct ? "COUNT(DISTINCT ...) is not supported"
                                  : "weighted counting supports COUNT only");

    QueryExpr weighted = metadata_rewrite(q, wpinq_metadata_fns(catalog), catalog);
    // the weighted relation's count becomes the sum of its weights
    const Aggregate* wtop = weighted.root->as<Aggregate>();
    Schema in = schema_of(wtop->input, catalog);
    std::string weight_col = "weight";
    if (!in.has(weight_col))
        throw Error(ErrorCode::internal, "weight column missing after metadata rewrite");
    QueryExpr summed = replace_aggregation(weighted, AggKind::count, AggKind::sum, weight_col, catalog);

    RewriteResult result{q, plan, {}};
    QueryExpr prepared = prepare_histogram(summed, catalog, opt, result.plan, result.warnings);

    double gamma = 1.0 / opt.epsilon;
    result.plan.gamma = gamma;
    QueryExpr noised = laplace_rewrite(prepared, NoiseScale::of(gamma), catalog);
    result.query = QueryExpr::rewritten(noised.root, "wpinq", noised.finalizer);
    return result;
}

RewriteResult apply_saa_impl(const QueryExpr& q, const Catalog& catalog, const RewriteOptions& opt,
                             MechanismPlan plan) {
    plan.mechanism = MechanismId::saa;
    plan.epsilon = opt.epsilon;
    plan.delta = 0.0;
    plan.gamma.reset();
    SupportVerdict verdict = mechanism_supports(MechanismId::saa, q, catalog);
    if (!verdict.supported) throw Error(ErrorCode::unsupported_construct, verdict.reason);

    int64_t subsamples =
        std::max<int64_t>(2, std::llround(std::pow(static_cast<double>(opt.db_size), 0.4)));
    plan.subsamples = subsamples;
    AggregatorPlan aggregator{AggregatorKind::winsorized_mean, opt.epsilon};
    QueryExpr rewritten = subsample_rewrite(q, subsamples, aggregator, opt.strategy, catalog);
    return {QueryExpr::rewritten(rewritten.root, "saa", rewritten.finalizer), plan, {}};
}

} // namespace

RewriteResult apply_mechanism(MechanismId m, const QueryExpr& q, const Catalog& catalog,
                              const RewriteOptions& opt) {
    if (!(opt.epsilon > 0.0))
        throw Error(ErrorCode::unsupported_query, "epsilon must be positive");
    MechanismPlan plan;
    switch (m) {
        case MechanismId::elastic:
        case MechanismId::restricted:
            return apply_sensitivity_mechanism(m, q, catalog, opt, plan);
        case MechanismId::wpinq: return apply_wpinq_impl(q, catalog, opt, plan);
        case MechanismId::saa: return apply_saa_impl(q, catalog, opt, plan);
    }
    throw Error(ErrorCode::internal, "unknown mechanism");
}

QueryExpr apply_elastic(const QueryExpr& q, const Catalog& catalog, double epsilon,
                        std::optional<double> delta, int64_t db_size) {
    RewriteOptions opt;
    opt.epsilon = epsilon;
    opt.delta = delta;
    opt.db_size = db_size;
    return apply_mechanism(MechanismId::elastic, q, catalog, opt).query;
}

QueryExpr apply_restricted(const QueryExpr& q, const Catalog& catalog, double epsilon) {
    RewriteOptions opt;
    opt.epsilon = epsilon;
    return apply_mechanism(MechanismId::restricted, q, catalog, opt).query;
}

QueryExpr apply_wpinq(const QueryExpr& q, const Catalog& catalog, double epsilon) {
    RewriteOptions opt;
    opt.epsilon = epsilon;
    return apply_mechanism(MechanismId::wpinq, q, catalog, opt).query;
}

QueryExpr apply_saa(const QueryExpr& q, const Catalog& catalog, double epsilon, int64_t db_size) {
    RewriteOptions opt;
    opt.epsilon = epsilon;
    opt.db_size = db_size;
    return apply_mechanism(MechanismId::saa, q, catalog, opt).query;
}

RewriteResult rewrite_query(const QueryExpr& q, const Catalog& catalog,
                            const std::vector<SelectionRule>& rules, const RewriteOptions& opt) {
    ValidationReport report = validate_query(q, catalog);
    if (!report.ok) {
        std::string detail = "query failed validation:";
        for (const auto& p : report.problems) detail += " " + p.code + ": " + p.message + ";";
        throw Error(ErrorCode::unsupported_query, detail);
    }
    MechanismId chosen;
    MechanismPlan selection;
    if (opt.mechanism) {
        chosen = *opt.mechanism;
        SupportVerdict verdict = mechanism_supports(chosen, q, catalog);
        if (!verdict.supported)
            throw Error(ErrorCode::unsupported_construct,
                        std::string(mechanism_name(chosen)) + ": " + verdict.reason);
        selection.rationale.push_back(std::string("mechanism forced: ") + mechanism_name(chosen));
    } else {
        selection = select_mechanism(q, catalog, rules, opt.epsilon, opt.delta);
        chosen = selection.mechanism;
    }
    RewriteResult result = apply_mechanism(chosen, q, catalog, opt);
    // keep the selection rationale in front of any mechanism notes
    std::vector<std::string> rationale = selection.rationale;
    for (const auto& line : result.plan.rationale) rationale.push_back(line);
    result.plan.rationale = std::move(rationale);
    return result;
}

} // namespace chorus
