#include <doctest.h>

#include <cmath>

#include "chorus/errors.hpp"
#include "chorus/sensitivity.hpp"
#include "chorus/sql.hpp"
#include "oracle.hpp"
#include "testutil.hpp"

using namespace chorus;

namespace {
Catalog cat() { return testutil::fixture_catalog(); }

QueryExpr parse(const std::string& sql) { return parse_sql(sql, Dialect::ansi, cat()); }

// variant catalog: drivers protected instead of trips
Catalog drivers_protected() {
    Catalog c = cat();
    for (auto& t : c.tables) t.is_protected = t.name == "drivers";
    return c;
}

double full_scan_smooth(const QueryExpr& q, const Catalog& catalog, double beta, int64_t k_max) {
    double best = 0;
    for (int64_t k = 0; k <= k_max; ++k)
        best = std::max(best, std::exp(-beta * k) * elastic_sensitivity_at_k(q, catalog, k));
    return best;
}
} // namespace

TEST_CASE("join-free counting has stability one at every distance") {
    QueryExpr q = parse("SELECT COUNT(*) FROM trips");
    for (int64_t k : {0, 1, 5, 100}) CHECK(elastic_sensitivity_at_k(q, cat(), k) == 1.0);
}

TEST_CASE("primary-key join at distance zero has stability one") {
    QueryExpr q = parse("SELECT COUNT(*) FROM trips JOIN drivers ON driver_id = id");
    CHECK(elastic_sensitivity_at_k(q, cat(), 0) == 1.0);

    // brute-force oracle over a 20-row fixture
    Database db = testutil::fixture_database(51, 20);
    double worst = oracle::max_neighbor_count_change(q.root, db, "trips",
                                                     testutil::trips_addition_pool(51, 5));
    CHECK(worst <= 1.0);
}

TEST_CASE("protected-side frequency boost grows with k") {
    // drivers protected: each driver matches up to mf(driver_id, trips)=3 trips
    Catalog c = drivers_protected();
    QueryExpr q = parse("SELECT COUNT(*) FROM trips JOIN drivers ON driver_id = id");
    CHECK(elastic_sensitivity_at_k(q, c, 0) == 3.0);
    CHECK(elastic_sensitivity_at_k(q, c, 2) == 5.0);  // mf + k on the protected-derived side

    Database db = testutil::fixture_database(53, 30);
    std::vector<Row> driver_pool = {{int64_t{2000}, int64_t{1}, 4.0},
                                    {int64_t{2001}, int64_t{2}, 4.5}};
    double worst = oracle::max_neighbor_count_change(q.root, db, "drivers", driver_pool);
    CHECK(worst <= elastic_sensitivity_at_k(q, c, 0));
}

TEST_CASE("elastic stability is monotone in k") {
    std::mt19937_64 gen(77);
    for (int i = 0; i < 30; ++i) {
        QueryExpr q{testutil::random_counting_query(gen), {}, {}};
        double prev = -1;
        for (int64_t k = 0; k <= 12; ++k) {
            double e = elastic_sensitivity_at_k(q, cat(), k);
            CHECK(e >= prev);
            prev = e;
        }
    }
}

TEST_CASE("elastic soundness against brute force on random fixtures") {
    std::mt19937_64 gen(101);
    for (int trial = 0; trial < 10; ++trial) {
        Database db = testutil::fixture_database(200 + trial, 40 + trial * 7);
        QueryExpr q{testutil::random_counting_query(gen), {}, {}};
        double bound = elastic_sensitivity_at_k(q, cat(), 0);
        double worst = oracle::max_neighbor_count_change(
            q.root, db, "trips", testutil::trips_addition_pool(trial, 4));
        CHECK(worst <= bound + 1e-12);
    }
}

TEST_CASE("unsupported shapes are rejected") {
    CHECK_THROWS_AS(elastic_sensitivity_at_k(parse("SELECT AVG(fare) FROM trips"), cat(), 0),
                    Error);
    CHECK_THROWS_AS(elastic_sensitivity_at_k(parse("SELECT SUM(fare) FROM trips"), cat(), 0),
                    Error);
    CHECK_THROWS_AS(
        elastic_sensitivity_at_k(parse("SELECT COUNT(DISTINCT driver_id) FROM trips"), cat(), 0),
        Error);
    CHECK_THROWS_AS(
        elastic_sensitivity_at_k(
            parse("WITH g AS (SELECT city_id, COUNT(*) AS count FROM trips GROUP BY city_id) "
                  "SELECT COUNT(*) FROM g"),
            cat(), 0),
        Error);
}

TEST_CASE("missing max frequency metadata is an error, never a default") {
    Catalog c = parse_catalog(R"({"tables":[
        {"name":"a","protected":true,"columns":[{"name":"k","type":"int"}]},
        {"name":"b","columns":[{"name":"k2","type":"int"}]}]})");
    QueryExpr q{rel_aggregate(AggKind::count, "",
                              rel_join(rel_table("a"), rel_table("b"), "k", "k2")),
                {},
                {}};
    try {
        elastic_sensitivity_at_k(q, c, 0);
        FAIL("expected unsupported");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::unsupported_query);
        CHECK(e.detail().find("maxFrequency") != std::string::npos);
    }
}

TEST_CASE("protected data on both join sides is rejected") {
    Catalog c = cat();
    QueryExpr q = parse(
        "WITH a AS (SELECT city_id, COUNT(*) AS count FROM trips GROUP BY city_id) "
        "SELECT COUNT(*) FROM trips");
    // direct self-join of the protected table via two scans
    auto self = rel_aggregate(
        AggKind::count, "",
        rel_join(rel_project({AttrExpr::bind("d1", vcolumn("driver_id"))}, rel_table("trips")),
                 rel_table("trips"), "d1", "driver_id"));
    CHECK_THROWS_AS(elastic_sensitivity_at_k(QueryExpr{self, {}, {}}, c, 0), Error);
    (void)q;
}

TEST_CASE("smooth sensitivity of a constant stability is the stability") {
    QueryExpr q = parse("SELECT COUNT(*) FROM trips");
    SensitivityResult r = smooth_elastic_sensitivity(q, cat(), 0.1, 1e-8, 10000);
    CHECK(r.s == 1.0);
    CHECK(r.argmax_k == 0);
    CHECK(r.kind == "elastic-smooth");
    CHECK(!r.trace.empty());
    CHECK(r.beta == doctest::Approx(0.1 / (2.0 * std::log(2.0 / 1e-8))).epsilon(1e-12));

    // large delta decays faster; still the k=0 value here
    SensitivityResult loose = smooth_elastic_sensitivity(q, cat(), 0.1, 0.5, 10000);
    CHECK(loose.s == 1.0);
}

TEST_CASE("smooth equals the naive full scan") {
    Catalog c = drivers_protected();
    for (const char* sql : {"SELECT COUNT(*) FROM trips JOIN drivers ON driver_id = id",
                            "SELECT COUNT(*) FROM trips"}) {
        QueryExpr q = parse(sql);
        for (double eps : {0.1, 1.0}) {
            for (double delta : {1e-8, 1e-3}) {
                SensitivityResult r = smooth_elastic_sensitivity(q, c, eps, delta, 2000);
                double naive = full_scan_smooth(q, c, r.beta, 2000);
                CHECK(r.s == doctest::Approx(naive).epsilon(1e-12));
                CHECK(r.s >= elastic_sensitivity_at_k(q, c, 0));
            }
        }
    }
}

TEST_CASE("smooth maximum sits where the decayed growth peaks") {
    // E(q,k) = 3 + k with drivers protected; the scan must find the interior max
    Catalog c = drivers_protected();
    QueryExpr q = parse("SELECT COUNT(*) FROM trips JOIN drivers ON driver_id = id");
    SensitivityResult r = smooth_elastic_sensitivity(q, c, 0.1, 1e-8, 5000);
    double beta = r.beta;
    // compare against the analytic continuous argmax of e^{-bk}(3+k)
    double k_star = 1.0 / beta - 3.0;
    double expect = std::max(std::exp(-beta * std::floor(k_star)) * (3.0 + std::floor(k_star)),
                             std::exp(-beta * std::ceil(k_star)) * (3.0 + std::ceil(k_star)));
    CHECK(r.s == doctest::Approx(expect).epsilon(1e-9));
    CHECK(r.argmax_k > 0);
    CHECK(r.s > 3.0);
}

TEST_CASE("invalid smoothing parameters") {
    QueryExpr q = parse("SELECT COUNT(*) FROM trips");
    CHECK_THROWS_AS(smooth_elastic_sensitivity(q, cat(), 0.0, 1e-6, 100), Error);
    CHECK_THROWS_AS(smooth_elastic_sensitivity(q, cat(), 0.1, 0.0, 100), Error);
    CHECK_THROWS_AS(smooth_elastic_sensitivity(q, cat(), 0.1, 1.0, 100), Error);
}

TEST_CASE("restricted sensitivity products over capped joins") {
    CHECK(restricted_sensitivity(parse("SELECT COUNT(*) FROM trips"), cat()).s == 1.0);
    CHECK(restricted_sensitivity(
              parse("SELECT COUNT(*) FROM trips JOIN drivers ON driver_id = id"), cat())
              .s == 1.0);

    Catalog c = drivers_protected();
    // drivers protected: one driver row matches up to cap(driver_id)=3 trips
    CHECK(restricted_sensitivity(
              parse("SELECT COUNT(*) FROM trips JOIN drivers ON driver_id = id"), c)
              .s == 3.0);

    SensitivityResult r = restricted_sensitivity(
        parse("SELECT COUNT(*) FROM trips JOIN drivers ON driver_id = id"), cat());
    CHECK(r.kind == "restricted");
    bool cap_noted = false;
    for (const auto& line : r.trace)
        if (line.find("cap") != std::string::npos) cap_noted = true;
    CHECK(cap_noted);
}

TEST_CASE("many-to-many joins have no restricted sensitivity") {
    QueryExpr q = parse("SELECT COUNT(*) FROM trips JOIN promos ON promo_code = code");
    try {
        restricted_sensitivity(q, cat());
        FAIL("expected many_to_many_join");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::many_to_many_join);
    }
    // elastic still supports it thanks to declared max frequencies
    CHECK(elastic_sensitivity_at_k(q, cat(), 0) == 30.0);
}

TEST_CASE("restricted matches elastic at distance zero when caps equal frequencies") {
    for (const char* sql : {"SELECT COUNT(*) FROM trips",
                            "SELECT COUNT(*) FROM trips JOIN drivers ON driver_id = id",
                            "SELECT COUNT(*) FROM trips JOIN riders ON rider_id = rid"}) {
        QueryExpr q = parse(sql);
        CHECK(restricted_sensitivity(q, cat()).s == elastic_sensitivity_at_k(q, cat(), 0));
    }
}

TEST_CASE("queries that never touch the protected table have zero sensitivity") {
    QueryExpr q = parse("SELECT COUNT(*) FROM cities");
    CHECK(elastic_sensitivity_at_k(q, cat(), 0) == 0.0);
    CHECK(restricted_sensitivity(q, cat()).s == 0.0);
    CHECK(smooth_elastic_sensitivity(q, cat(), 0.1, 1e-6, 100).s == 0.0);
}

TEST_CASE("grouped counting uses the ungrouped recurrence") {
    QueryExpr grouped = parse("SELECT city_id, COUNT(*) FROM trips GROUP BY city_id");
    QueryExpr scalar = parse("SELECT COUNT(*) FROM trips");
    for (int64_t k : {0, 3})
        CHECK(elastic_sensitivity_at_k(grouped, cat(), k) ==
              elastic_sensitivity_at_k(scalar, cat(), k));

    // and per-group changes really are bounded by it
    Database db = testutil::fixture_database(61, 50);
    double worst = oracle::max_neighbor_count_change(grouped.root, db, "trips",
                                                     testutil::trips_addition_pool(61, 4));
    CHECK(worst <= elastic_sensitivity_at_k(grouped, cat(), 0));
}
