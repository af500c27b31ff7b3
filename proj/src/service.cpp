#include "chorus/service.hpp"

#include <fstream>
#include <iostream>

#include <httplib.h>

#include "chorus/errors.hpp"

namespace chorus {

using nlohmann::json;

LedgerStore::LedgerStore(std::string path) : path_(std::move(path)) {}

BudgetLedger LedgerStore::charge_and_store(double epsilon, double delta,
                                           const std::string& fingerprint) {
    std::lock_guard<std::mutex> lock(mutex_);
    BudgetLedger current = load_ledger(path_);
    BudgetLedger next = charge(current, epsilon, delta, fingerprint);
    store_ledger(next, path_);
    return next;
}

BudgetLedger LedgerStore::snapshot() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return load_ledger(path_);
}

int exit_code_for(ErrorCode code) {
    switch (code) {
        case ErrorCode::parse_error:
        case ErrorCode::unsupported_feature:
        case ErrorCode::not_statistical:
        case ErrorCode::duplicate_attribute:
        case ErrorCode::type_mismatch:
        case ErrorCode::no_domain_source:
            return 2;
        case ErrorCode::no_mechanism:
        case ErrorCode::unsupported_construct:
        case ErrorCode::unsupported_query:
        case ErrorCode::many_to_many_join:
        case ErrorCode::aggregation_mismatch:
        case ErrorCode::non_numeric_output:
            return 3;
        case ErrorCode::budget_exhausted:
        case ErrorCode::version_conflict:
            return 4;
        case ErrorCode::catalog_error:
        case ErrorCode::unknown_table:
        case ErrorCode::unknown_column:
        case ErrorCode::corrupt_ledger:
        case ErrorCode::csv_error:
            return 5;
        default:
            return 1;
    }
}

const char* wire_code_for(ErrorCode code) {
    switch (exit_code_for(code)) {
        case 2: return "invalid_query";
        case 3: return "no_mechanism";
        case 4: return "budget_exhausted";
        case 5: return "catalog_error";
        default: return "internal";
    }
}

namespace {

json error_object(const std::string& code, const std::string& message) {
    return json{{"error", {{"code", code}, {"message", message}}}};
}

json plan_metadata(const RewriteResult& result) {
    json meta;
    meta["mechanism"] = mechanism_name(result.plan.mechanism);
    meta["epsilon"] = result.plan.epsilon;
    meta["delta"] = result.plan.delta;
    if (result.plan.gamma) meta["gamma"] = *result.plan.gamma;
    if (result.plan.mechanism == MechanismId::saa) {
        meta["saa"] = {{"subsamples", result.plan.subsamples},
                       {"epsilon", result.plan.epsilon}};
    }
    if (result.plan.sensitivity) {
        meta["sensitivity"] = {{"s", result.plan.sensitivity->s},
                               {"kind", result.plan.sensitivity->kind},
                               {"trace", result.plan.sensitivity->trace}};
        if (result.plan.sensitivity->kind == "elastic-smooth") {
            meta["sensitivity"]["beta"] = result.plan.sensitivity->beta;
            meta["sensitivity"]["kMax"] = result.plan.sensitivity->k_max;
        }
    }
    if (result.plan.bin_list_mode) {
        meta["binListMode"] = true;
        meta["bins"] = result.plan.bins;
    }
    meta["rationale"] = result.plan.rationale;
    meta["warnings"] = result.warnings;
    return meta;
}

} // namespace

json handle_rewrite_request(const ServiceConfig& config, const json& request) {
    try {
        if (!request.is_object()) return error_object("bad_request", "request must be a JSON object");
        if (!request.contains("sql") || !request.at("sql").is_string())
            return error_object("bad_request", "missing \"sql\" string");
        if (!request.contains("epsilon") || !request.at("epsilon").is_number())
            return error_object("bad_request", "missing \"epsilon\" number");

        RewriteOptions opt;
        opt.epsilon = request.at("epsilon").get<double>();
        if (opt.epsilon <= 0.0) return error_object("bad_request", "epsilon must be positive");
        if (request.contains("delta")) opt.delta = request.at("delta").get<double>();
        if (request.contains("dbSize")) opt.db_size = request.at("dbSize").get<int64_t>();
        else opt.db_size = config.db_size;
        if (request.contains("bins")) {
            for (const json& b : request.at("bins")) opt.bins.push_back(b.is_string() ? b.get<std::string>() : b.dump());
        }
        Dialect dialect = config.dialect;
        if (request.contains("dialect")) dialect = dialect_from_name(request.at("dialect").get<std::string>());
        if (request.contains("mechanism")) {
            std::string name = request.at("mechanism").get<std::string>();
            if (name != "auto") {
                auto m = mechanism_from_name(name);
                if (!m) return error_object("bad_request", "unknown mechanism " + name);
                opt.mechanism = m;
            }
        }

        QueryExpr query = parse_sql(request.at("sql").get<std::string>(), dialect, config.catalog);
        RewriteResult result = rewrite_query(query, config.catalog, config.rules, opt);
        SqlText sql = emit_sql(result.query, dialect, config.catalog);
        std::string fingerprint = sql_fingerprint(canonical_sql(result.query, config.catalog));

        json response = plan_metadata(result);
        if (config.ledger) {
            BudgetLedger after =
                config.ledger->charge_and_store(result.plan.epsilon, result.plan.delta, fingerprint);
            response["budget"] = {{"epsilon", result.plan.epsilon},
                                  {"delta", result.plan.delta},
                                  {"remaining", after.remaining_epsilon()},
                                  {"version", after.version}};
        } else {
            response["budget"] = nullptr;
        }
        // SQL enters the response only after the charge succeeded
        response["rewrittenSql"] = sql.text;
        response["dialect"] = dialect_name(sql.dialect);
        response["fingerprint"] = fingerprint;
        return response;
    } catch (const Error& e) {
        return error_object(wire_code_for(e.code()), e.what());
    } catch (const json::exception& e) {
        return error_object("bad_request", e.what());
    } catch (const std::exception& e) {
        return error_object("internal", e.what());
    }
}

void serve_ndjson(const ServiceConfig& config, std::istream& in, std::ostream& out) {
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json request;
        try {
            request = json::parse(line);
        } catch (const json::exception& e) {
            out << error_object("bad_request", e.what()).dump() << "\n" << std::flush;
            continue;
        }
        out << handle_rewrite_request(config, request).dump() << "\n" << std::flush;
    }
}

int serve_http(const ServiceConfig& config, const std::string& host, int port) {
    httplib::Server server;
    auto handler = [&config](const httplib::Request& req, httplib::Response& res) {
        json request;
        try {
            request = json::parse(req.body);
        } catch (const json::exception& e) {
            res.status = 400;
            res.set_content(error_object("bad_request", e.what()).dump(), "application/json");
            return;
        }
        json response = handle_rewrite_request(config, request);
        if (response.contains("error")) {
            std::string code = response["error"]["code"].get<std::string>();
            res.status = code == "budget_exhausted" ? 403 : (code == "bad_request" ? 400 : 422);
        }
        res.set_content(response.dump(), "application/json");
    };
    server.Post("/rewrite", handler);
    server.Post("/", handler);
    if (port == 0) {
        int bound = server.bind_to_any_port(host);
        std::cerr << "listening on " << host << ":" << bound << "\n";
        server.listen_after_bind();
        return bound;
    }
    std::cerr << "listening on " << host << ":" << port << "\n";
    server.listen(host, port);
    return port;
}

} // namespace chorus
