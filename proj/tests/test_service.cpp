#include <doctest.h>

#include <atomic>
#include <cstdio>
#include <sstream>
#include <thread>

#include <httplib.h>

#include "chorus/errors.hpp"
#include "chorus/service.hpp"
#include "testutil.hpp"

using namespace chorus;
using nlohmann::json;

namespace {

struct TempLedger {
    std::string path;
    explicit TempLedger(double total_epsilon, const std::string& name) {
        path = "/tmp/chorus_service_" + name + ".json";
        std::remove(path.c_str());
        store_ledger(make_ledger(total_epsilon, 1e-2), path);
    }
    ~TempLedger() { std::remove(path.c_str()); }
};

ServiceConfig make_config(const std::string& ledger_path) {
    ServiceConfig config;
    config.catalog = testutil::fixture_catalog();
    config.ledger = ledger_path.empty() ? nullptr : std::make_shared<LedgerStore>(ledger_path);
    return config;
}

json basic_request(double epsilon = 0.1) {
    return json{{"sql", "SELECT COUNT(*) FROM trips"}, {"epsilon", epsilon}};
}

} // namespace

TEST_CASE("a valid request charges the ledger before returning SQL") {
    TempLedger ledger(2.0, "valid");
    ServiceConfig config = make_config(ledger.path);
    json response = handle_rewrite_request(config, basic_request());
    REQUIRE(!response.contains("error"));
    CHECK(response.at("rewrittenSql").get<std::string>().find("LN(1-2*ABS(") !=
          std::string::npos);
    CHECK(response.at("budget").at("remaining").get<double>() == doctest::Approx(1.9));
    CHECK(response.at("mechanism") == "restricted");
    CHECK(response.at("fingerprint").get<std::string>().size() == 64);

    json again = handle_rewrite_request(config, basic_request());
    CHECK(again.at("budget").at("remaining").get<double>() == doctest::Approx(1.8));
}

TEST_CASE("exhaustion returns an error object without SQL") {
    TempLedger ledger(0.15, "exhaust");
    ServiceConfig config = make_config(ledger.path);
    json ok = handle_rewrite_request(config, basic_request());
    CHECK(!ok.contains("error"));
    json denied = handle_rewrite_request(config, basic_request());
    REQUIRE(denied.contains("error"));
    CHECK(denied.at("error").at("code") == "budget_exhausted");
    CHECK(!denied.contains("rewrittenSql"));
    // version advanced exactly once
    CHECK(config.ledger->snapshot().version == 1);
}

TEST_CASE("bad requests are structured errors and the loop stays healthy") {
    TempLedger ledger(1.0, "bad");
    ServiceConfig config = make_config(ledger.path);

    CHECK(handle_rewrite_request(config, json::array()).at("error").at("code") == "bad_request");
    CHECK(handle_rewrite_request(config, json{{"epsilon", 0.1}}).at("error").at("code") ==
          "bad_request");
    CHECK(handle_rewrite_request(config, json{{"sql", "SELECT COUNT(*) FROM trips"}})
              .at("error")
              .at("code") == "bad_request");
    CHECK(handle_rewrite_request(config, json{{"sql", "SELECT * FROM trips"}, {"epsilon", 0.1}})
              .at("error")
              .at("code") == "invalid_query");
    CHECK(handle_rewrite_request(
              config, json{{"sql", "SELECT COUNT(DISTINCT driver_id) FROM trips"}, {"epsilon", 0.1}})
              .at("error")
              .at("code") == "no_mechanism");

    std::istringstream in("not json\n{\"sql\": \"SELECT COUNT(*) FROM trips\", \"epsilon\": 0.1}\n");
    std::ostringstream out;
    serve_ndjson(config, in, out);
    std::istringstream lines(out.str());
    std::string first, second;
    std::getline(lines, first);
    std::getline(lines, second);
    CHECK(json::parse(first).at("error").at("code") == "bad_request");
    CHECK(json::parse(second).contains("rewrittenSql"));

    // failures never touched the ledger; the one success did
    CHECK(config.ledger->snapshot().version == 1);
}

TEST_CASE("concurrent charges at the boundary admit exactly one winner") {
    TempLedger ledger(0.15, "race");
    ServiceConfig config = make_config(ledger.path);
    constexpr int kThreads = 8;
    std::atomic<int> successes{0}, failures{0};
    std::vector<std::thread> threads;
    for (int i = 0; i < kThreads; ++i) {
        threads.emplace_back([&config, &successes, &failures] {
            json response = handle_rewrite_request(config, basic_request());
            if (response.contains("error")) ++failures;
            else ++successes;
        });
    }
    for (auto& t : threads) t.join();
    CHECK(successes.load() == 1);
    CHECK(failures.load() == kThreads - 1);
    CHECK(config.ledger->snapshot().version == 1);
}

TEST_CASE("forced mechanism and dialect ride the request") {
    TempLedger ledger(2.0, "force");
    ServiceConfig config = make_config(ledger.path);
    json request = basic_request();
    request["mechanism"] = "wpinq";
    request["dialect"] = "postgres";
    json response = handle_rewrite_request(config, request);
    REQUIRE(!response.contains("error"));
    CHECK(response.at("mechanism") == "wpinq");
    CHECK(response.at("dialect") == "postgres");
    CHECK(response.at("gamma").get<double>() == doctest::Approx(10.0));

    request["mechanism"] = "nonsense";
    CHECK(handle_rewrite_request(config, request).at("error").at("code") == "bad_request");
}

TEST_CASE("rewrite without a ledger reports a null budget") {
    ServiceConfig config = make_config("");
    json response = handle_rewrite_request(config, basic_request());
    REQUIRE(!response.contains("error"));
    CHECK(response.at("budget").is_null());
}

TEST_CASE("service selection agrees with direct selection") {
    TempLedger ledger(5.0, "agree");
    ServiceConfig config = make_config(ledger.path);
    struct Case {
        const char* sql;
        const char* mechanism;
    } cases[] = {
        {"SELECT COUNT(*) FROM trips JOIN drivers ON driver_id = id", "restricted"},
        {"SELECT AVG(trip_distance) FROM trips", "saa"},
        {"SELECT COUNT(*) FROM trips JOIN promos ON promo_code = code", "elastic"},
    };
    for (const auto& c : cases) {
        json response =
            handle_rewrite_request(config, json{{"sql", c.sql}, {"epsilon", 0.1}});
        REQUIRE(!response.contains("error"));
        CHECK(response.at("mechanism") == c.mechanism);
        MechanismPlan plan = select_mechanism(
            parse_sql(c.sql, Dialect::ansi, config.catalog), config.catalog, default_rules(), 0.1,
            {});
        CHECK(mechanism_name(plan.mechanism) == response.at("mechanism").get<std::string>());
    }
}

TEST_CASE("exit codes map error families") {
    CHECK(exit_code_for(ErrorCode::parse_error) == 2);
    CHECK(exit_code_for(ErrorCode::unsupported_feature) == 2);
    CHECK(exit_code_for(ErrorCode::no_mechanism) == 3);
    CHECK(exit_code_for(ErrorCode::unsupported_construct) == 3);
    CHECK(exit_code_for(ErrorCode::budget_exhausted) == 4);
    CHECK(exit_code_for(ErrorCode::catalog_error) == 5);
    CHECK(exit_code_for(ErrorCode::unknown_table) == 5);
}

TEST_CASE("http transport answers POST /rewrite") {
    TempLedger ledger(2.0, "http");
    ServiceConfig config = make_config(ledger.path);

    httplib::Server server;
    auto handler = [&config](const httplib::Request& req, httplib::Response& res) {
        json response = handle_rewrite_request(config, json::parse(req.body, nullptr, false));
        res.set_content(response.dump(), "application/json");
    };
    server.Post("/rewrite", handler);
    int port = server.bind_to_any_port("127.0.0.1");
    std::thread server_thread([&server] { server.listen_after_bind(); });
    server.wait_until_ready();

    httplib::Client client("127.0.0.1", port);
    auto result = client.Post("/rewrite", basic_request().dump(), "application/json");
    REQUIRE(result);
    json body = json::parse(result->body);
    CHECK(body.contains("rewrittenSql"));

    server.stop();
    server_thread.join();
}
