#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "chorus/budget.hpp"
#include "chorus/catalog.hpp"
#include "chorus/errors.hpp"
#include "chorus/evaluator.hpp"
#include "chorus/mechanisms.hpp"
#include "chorus/service.hpp"
#include "chorus/sql.hpp"

using nlohmann::json;
using namespace chorus;

Table complete_with_bins(const Table& result, const RewriteResult& rewrite, const Catalog& catalog,
                         RandomSource& rng);

namespace {

std::string read_query(const std::string& query_path) {
    if (!query_path.empty()) {
        std::ifstream in(query_path);
        if (!in) throw Error(ErrorCode::parse_error, "cannot open query file " + query_path);
        return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    }
    return std::string((std::istreambuf_iterator<char>(std::cin)),
                       std::istreambuf_iterator<char>());
}

struct CommonArgs {
    std::string catalog_path;
    std::string query_path;
    std::string ledger_path;
    std::string rules_path;
    std::string mechanism = "auto";
    std::string dialect = "ansi";
    double epsilon = 0.0;
    double delta = -1.0;
    int64_t db_size = 10000;
    std::vector<std::string> bins;

    RewriteOptions options() const {
        RewriteOptions opt;
        opt.epsilon = epsilon;
        if (delta >= 0.0) opt.delta = delta;
        opt.db_size = db_size;
        opt.bins = bins;
        if (mechanism != "auto") {
            auto m = mechanism_from_name(mechanism);
            if (!m) throw Error(ErrorCode::unsupported_query, "unknown mechanism " + mechanism);
            opt.mechanism = m;
        }
        return opt;
    }

    std::vector<SelectionRule> rules() const {
        return rules_path.empty() ? default_rules() : load_rules(rules_path);
    }
};

void add_common(CLI::App* cmd, CommonArgs& args, bool needs_epsilon) {
    cmd->add_option("--catalog", args.catalog_path, "catalog JSON file")->required();
    cmd->add_option("--query", args.query_path, "file with the SQL query (default: stdin)");
    cmd->add_option("--mechanism", args.mechanism,
                    "auto|elastic|restricted|wpinq|saa (default auto)");
    cmd->add_option("--dialect", args.dialect, "ansi|postgres (default ansi)");
    cmd->add_option("--rules", args.rules_path, "selection rules JSON file");
    auto* eps = cmd->add_option("--epsilon", args.epsilon, "privacy budget for this query");
    if (needs_epsilon) eps->required();
    cmd->add_option("--delta", args.delta, "privacy parameter delta");
    cmd->add_option("--db-size", args.db_size,
                    "database size n for smoothing and subsample counts (default 10000)");
    cmd->add_option("--bins", args.bins, "explicit histogram bins (fallback when no domain)")
        ->delimiter(',');
}

int cmd_rewrite(const CommonArgs& args) {
    Catalog catalog = load_catalog(args.catalog_path);
    Dialect dialect = dialect_from_name(args.dialect);
    QueryExpr query = parse_sql(read_query(args.query_path), dialect, catalog);
    RewriteResult result = rewrite_query(query, catalog, args.rules(), args.options());
    SqlText sql = emit_sql(result.query, dialect, catalog);
    std::string fingerprint = sql_fingerprint(canonical_sql(result.query, catalog));

    json meta;
    meta["mechanism"] = mechanism_name(result.plan.mechanism);
    meta["epsilon"] = result.plan.epsilon;
    meta["delta"] = result.plan.delta;
    if (result.plan.gamma) meta["gamma"] = *result.plan.gamma;
    if (result.plan.mechanism == MechanismId::saa)
        meta["saa"] = {{"subsamples", result.plan.subsamples}};
    if (result.plan.sensitivity)
        meta["sensitivity"] = {{"s", result.plan.sensitivity->s},
                               {"kind", result.plan.sensitivity->kind}};
    if (result.plan.bin_list_mode) {
        meta["binListMode"] = true;
        meta["bins"] = result.plan.bins;
    }
    meta["warnings"] = result.warnings;
    meta["fingerprint"] = fingerprint;

    // the ledger charge must succeed before any SQL reaches stdout
    if (!args.ledger_path.empty()) {
        LedgerStore store(args.ledger_path);
        BudgetLedger after =
            store.charge_and_store(result.plan.epsilon, result.plan.delta, fingerprint);
        meta["budget"] = {{"epsilon", result.plan.epsilon},
                          {"delta", result.plan.delta},
                          {"remaining", after.remaining_epsilon()},
                          {"version", after.version}};
    } else {
        meta["budget"] = nullptr;
    }

    std::cerr << meta.dump() << "\n";
    std::cout << sql.text << "\n";
    return 0;
}

int cmd_analyze(const CommonArgs& args) {
    Catalog catalog = load_catalog(args.catalog_path);
    Dialect dialect = dialect_from_name(args.dialect);
    QueryExpr query = parse_sql(read_query(args.query_path), dialect, catalog);

    std::set<std::string> features = selection_features(query, catalog);
    std::cout << "features:";
    for (const auto& f : features) std::cout << " " << f;
    std::cout << "\n\nmechanism support:\n";
    for (MechanismId m : {MechanismId::elastic, MechanismId::restricted, MechanismId::wpinq,
                          MechanismId::saa}) {
        SupportVerdict verdict = mechanism_supports(m, query, catalog);
        std::cout << "  " << mechanism_name(m) << ": "
                  << (verdict.supported ? "supported" : ("excluded - " + verdict.reason)) << "\n";
    }
    double epsilon = args.epsilon > 0.0 ? args.epsilon : 0.1;
    MechanismPlan plan = select_mechanism(query, catalog, args.rules(), epsilon,
                                          args.delta >= 0.0 ? std::optional<double>(args.delta)
                                                            : std::nullopt);
    std::cout << "\nselection:\n";
    for (const auto& line : plan.rationale) std::cout << "  " << line << "\n";
    std::cout << "\nchosen mechanism: " << mechanism_name(plan.mechanism) << "\n";

    if (plan.mechanism == MechanismId::elastic || plan.mechanism == MechanismId::restricted) {
        SensitivityResult sens =
            plan.mechanism == MechanismId::elastic
                ? smooth_elastic_sensitivity(query, catalog, epsilon,
                                             args.delta >= 0.0 ? args.delta
                                                               : default_delta(epsilon, args.db_size),
                                             args.db_size)
                : restricted_sensitivity(query, catalog);
        std::cout << "\nsensitivity trace (" << sens.kind << "):\n";
        for (const auto& line : sens.trace) std::cout << "  " << line << "\n";
        std::cout << "  => s = " << sens.s << ", gamma = " << sens.s / epsilon << "\n";
    }
    return 0;
}

int cmd_run(const CommonArgs& args, const std::string& data_dir, uint64_t seed, int64_t trials) {
    Catalog catalog = load_catalog(args.catalog_path);
    Dialect dialect = dialect_from_name(args.dialect);
    QueryExpr query = parse_sql(read_query(args.query_path), dialect, catalog);
    Database db = load_database(data_dir, catalog);

    CommonArgs effective = args;
    const std::string protected_name = catalog.protected_table().name;
    if (db.count(protected_name) && effective.db_size == 10000)
        effective.db_size = static_cast<int64_t>(db.at(protected_name).rows.size());

    RewriteResult result = rewrite_query(query, catalog, args.rules(), effective.options());
    RandomSource rng = RandomSource::seeded(seed);

    if (trials <= 1) {
        Table out = complete_with_bins(eval(result.query, db, catalog, rng), result, catalog, rng);
        for (size_t i = 0; i < out.schema.size(); ++i)
            std::cout << (i ? "\t" : "") << out.schema.attributes[i].name;
        std::cout << "\n";
        for (const auto& row : out.rows) {
            for (size_t i = 0; i < row.size(); ++i)
                std::cout << (i ? "\t" : "") << value_to_string(row[i]);
            std::cout << "\n";
        }
        return 0;
    }

    // per-cell mean and stddev across noise draws; group keys must agree
    std::vector<Table> runs;
    for (int64_t t = 0; t < trials; ++t)
        runs.push_back(complete_with_bins(eval(result.query, db, catalog, rng), result, catalog, rng));
    const Table& first = runs.front();
    std::vector<std::string> keys = output_group_columns(query.root);
    auto is_key = [&](const std::string& name) {
        for (const auto& k : keys)
            if (k == name) return true;
        return false;
    };
    for (size_t i = 0; i < first.schema.size(); ++i) {
        const std::string& name = first.schema.attributes[i].name;
        if (i) std::cout << "\t";
        if (is_key(name)) std::cout << name;
        else std::cout << name << "_mean\t" << name << "_stddev";
    }
    std::cout << "\n";
    for (size_t r = 0; r < first.rows.size(); ++r) {
        for (size_t c = 0; c < first.schema.size(); ++c) {
            if (c) std::cout << "\t";
            if (is_key(first.schema.attributes[c].name)) {
                std::cout << value_to_string(first.rows[r][c]);
                continue;
            }
            double sum = 0.0, sum_sq = 0.0;
            for (const auto& run : runs) {
                double v = value_as_real(run.rows[r][c]);
                sum += v;
                sum_sq += v * v;
            }
            double n = static_cast<double>(trials);
            double mean = sum / n;
            double variance = std::max(0.0, sum_sq / n - mean * mean);
            std::cout << mean << "\t" << std::sqrt(variance);
        }
        std::cout << "\n";
    }
    return 0;
}

int cmd_budget(const std::string& ledger_path, bool init, double total_epsilon, double total_delta,
               const std::string& mode, double delta_prime) {
    if (init) {
        CompositionMode m = mode == "advanced" ? CompositionMode::advanced
                                               : CompositionMode::standard;
        BudgetLedger ledger = make_ledger(total_epsilon, total_delta, m, delta_prime);
        std::ifstream probe(ledger_path);
        if (probe)
            throw Error(ErrorCode::version_conflict,
                        "ledger file already exists: " + ledger_path);
        store_ledger(ledger, ledger_path);
        std::cout << "initialized ledger " << ledger_path << "\n";
        return 0;
    }
    BudgetLedger ledger = load_ledger(ledger_path);
    auto [eps, delta] = ledger.spent();
    json status{{"totalEpsilon", ledger.total_epsilon},
                {"totalDelta", ledger.total_delta},
                {"mode", ledger.mode == CompositionMode::standard ? "standard" : "advanced"},
                {"spentEpsilon", eps},
                {"spentDelta", delta},
                {"remainingEpsilon", ledger.remaining_epsilon()},
                {"charges", ledger.entries.size()},
                {"version", ledger.version}};
    std::cout << status.dump(2) << "\n";
    return 0;
}

int cmd_serve(const CommonArgs& args, const std::string& listen) {
    ServiceConfig config;
    config.catalog = load_catalog(args.catalog_path);
    config.rules = args.rules();
    config.dialect = dialect_from_name(args.dialect);
    config.db_size = args.db_size;
    if (args.ledger_path.empty())
        throw Error(ErrorCode::corrupt_ledger, "serve requires --ledger");
    config.ledger = std::make_shared<LedgerStore>(args.ledger_path);

    if (listen == "-") {
        serve_ndjson(config, std::cin, std::cout);
        return 0;
    }
    std::string host = listen;
    int port = 8787;
    auto colon = listen.rfind(':');
    if (colon != std::string::npos) {
        host = listen.substr(0, colon);
        port = std::stoi(listen.substr(colon + 1));
    }
    serve_http(config, host, port);
    return 0;
}

} // namespace

// Bin-list fallback: interpose on the evaluated result so absent bins carry
// fresh noisy zeros and results are never released uncompleted.
Table complete_with_bins(const Table& result, const RewriteResult& rewrite, const Catalog&,
                         RandomSource& rng) {
    if (!rewrite.plan.bin_list_mode || !rewrite.plan.gamma) return result;
    Table out = result;
    const ScalarType key_type = result.schema.attributes[0].type;
    auto parse_bin = [&](const std::string& text) -> Value {
        if (key_type == ScalarType::int_type) return static_cast<int64_t>(std::stoll(text));
        if (key_type == ScalarType::real_type) return std::stod(text);
        if (key_type == ScalarType::bool_type) return text == "true";
        return text;
    };
    for (const auto& bin : rewrite.plan.bins) {
        Value key = parse_bin(bin);
        bool present = false;
        for (const auto& row : out.rows)
            if (values_equal(row[0], key)) present = true;
        if (present) continue;
        double u = (rng.draw() - 0.5) * (1.0 - 2e-12);
        double s = u > 0 ? 1.0 : (u < 0 ? -1.0 : 0.0);
        double noise = -(*rewrite.plan.gamma) * s * std::log(1.0 - 2.0 * std::abs(u));
        out.rows.push_back({key, noise});
    }
    return out;
}

int main(int argc, char** argv) {
    CLI::App app{"differential-privacy SQL query rewriter"};
    app.require_subcommand(1);

    CommonArgs rewrite_args, analyze_args, run_args, serve_args;
    std::string data_dir, listen = "-", ledger_path, budget_mode = "standard";
    uint64_t seed = 0;
    int64_t trials = 1;
    bool budget_init = false;
    double total_epsilon = 1.0, total_delta = 1e-6, delta_prime = 1e-9;

    CLI::App* rewrite = app.add_subcommand("rewrite", "rewrite a query to be intrinsically private");
    add_common(rewrite, rewrite_args, true);
    rewrite->add_option("--ledger", rewrite_args.ledger_path, "budget ledger JSON file");

    CLI::App* analyze = app.add_subcommand("analyze", "report mechanism support and sensitivity");
    add_common(analyze, analyze_args, false);

    CLI::App* run = app.add_subcommand("run", "rewrite and evaluate on CSV fixtures");
    add_common(run, run_args, true);
    run->add_option("--data", data_dir, "directory of <table>.csv fixtures")->required();
    run->add_option("--seed", seed, "random seed (default 0)");
    run->add_option("--trials", trials, "noise draws per cell (default 1)");

    CLI::App* budget = app.add_subcommand("budget", "inspect or initialize a ledger");
    budget->add_option("--ledger", ledger_path, "budget ledger JSON file")->required();
    budget->add_flag("--init", budget_init, "create a fresh ledger");
    budget->add_option("--total-epsilon", total_epsilon, "ledger epsilon budget (init)");
    budget->add_option("--total-delta", total_delta, "ledger delta budget (init)");
    budget->add_option("--mode", budget_mode, "standard|advanced (init)");
    budget->add_option("--delta-prime", delta_prime, "advanced composition slack (init)");

    CLI::App* serve = app.add_subcommand("serve", "serve rewrite requests over NDJSON or HTTP");
    add_common(serve, serve_args, false);
    serve->add_option("--ledger", serve_args.ledger_path, "budget ledger JSON file");
    serve->add_option("--listen", listen, "host:port for HTTP, or - for stdin NDJSON");

    CLI11_PARSE(app, argc, argv);

    try {
        if (rewrite->parsed()) return cmd_rewrite(rewrite_args);
        if (analyze->parsed()) return cmd_analyze(analyze_args);
        if (run->parsed()) return cmd_run(run_args, data_dir, seed, trials);
        if (budget->parsed())
            return cmd_budget(ledger_path, budget_init, total_epsilon, total_delta, budget_mode,
                              delta_prime);
        if (serve->parsed()) return cmd_serve(serve_args, listen);
    } catch (const Error& e) {
        std::cerr << json{{"error", {{"code", wire_code_for(e.code())}, {"message", e.what()}}}}
                         .dump()
                  << "\n";
        return exit_code_for(e.code());
    } catch (const std::exception& e) {
        std::cerr << json{{"error", {{"code", "internal"}, {"message", e.what()}}}}.dump() << "\n";
        return 1;
    }
    return 0;
}
