#include "testutil.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include <json.hpp>

#include "chorus/errors.hpp"

namespace chorus::testutil {

Catalog fixture_catalog() {
    static const char* kCatalogJson = R"JSON({
  "tables": [
    {
      "name": "trips",
      "protected": true,
      "primaryKey": ["trip_id"],
      "columns": [
        {"name": "trip_id", "type": "int"},
        {"name": "driver_id", "type": "int", "maxFrequency": 3, "joinMultiplicityCap": 3},
        {"name": "rider_id", "type": "int", "maxFrequency": 5, "joinMultiplicityCap": 5},
        {"name": "city_id", "type": "int", "maxFrequency": 400, "joinMultiplicityCap": "many",
         "domainSource": {"table": "cities", "column": "city_id"}},
        {"name": "trip_distance", "type": "real"},
        {"name": "fare", "type": "real"},
        {"name": "promo_code", "type": "int", "maxFrequency": 300, "joinMultiplicityCap": "many"}
      ]
    },
    {
      "name": "drivers",
      "primaryKey": ["id"],
      "columns": [
        {"name": "id", "type": "int"},
        {"name": "driver_city", "type": "int", "maxFrequency": 200, "joinMultiplicityCap": "many",
         "domainSource": {"table": "cities", "column": "city_id"}},
        {"name": "rating", "type": "real"}
      ]
    },
    {
      "name": "riders",
      "primaryKey": ["rid"],
      "columns": [
        {"name": "rid", "type": "int"},
        {"name": "rider_city", "type": "int", "maxFrequency": 200, "joinMultiplicityCap": "many"}
      ]
    },
    {
      "name": "cities",
      "primaryKey": ["city_id"],
      "columns": [
        {"name": "city_id", "type": "int"},
        {"name": "city_name", "type": "string"}
      ]
    },
    {
      "name": "promos",
      "columns": [
        {"name": "code", "type": "int", "maxFrequency": 30, "joinMultiplicityCap": "many"},
        {"name": "discount", "type": "real"}
      ]
    }
  ]
})JSON";
    return parse_catalog(kCatalogJson);
}

Database fixture_database(uint64_t seed, size_t trips_rows) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist01(0.0, 1.0);

    Catalog catalog = fixture_catalog();
    Database db;

    size_t num_drivers = trips_rows / 3 + 3;
    size_t num_riders = trips_rows / 5 + 3;
    size_t num_codes = std::max<size_t>(5, trips_rows / 25);

    Table trips;
    trips.schema = catalog.table("trips")->schema();
    for (size_t i = 0; i < trips_rows; ++i) {
        int64_t driver = static_cast<int64_t>(i % num_drivers) + 1;
        int64_t rider = static_cast<int64_t>(i % num_riders) + 1;
        // cities 6..8 never receive trips, so histograms have absent bins
        int64_t city = static_cast<int64_t>(rng() % 5) + 1;
        double distance = 1.0 + 150.0 * dist01(rng);
        double fare = 2.5 + 1.75 * distance + 3.0 * dist01(rng);
        int64_t code = static_cast<int64_t>(i % num_codes) + 1;
        trips.rows.push_back({static_cast<int64_t>(i) + 1, driver, rider, city, distance, fare,
                              code});
    }
    db["trips"] = std::move(trips);

    Table drivers;
    drivers.schema = catalog.table("drivers")->schema();
    for (size_t i = 0; i < num_drivers; ++i)
        drivers.rows.push_back({static_cast<int64_t>(i) + 1,
                                static_cast<int64_t>(rng() % 8) + 1, 3.0 + 2.0 * dist01(rng)});
    db["drivers"] = std::move(drivers);

    Table riders;
    riders.schema = catalog.table("riders")->schema();
    for (size_t i = 0; i < num_riders; ++i)
        riders.rows.push_back({static_cast<int64_t>(i) + 1, static_cast<int64_t>(rng() % 8) + 1});
    db["riders"] = std::move(riders);

    Table cities;
    cities.schema = catalog.table("cities")->schema();
    static const char* kNames[] = {"aurora", "brindle", "corvus", "delta",
                                   "emberly", "fairpoint", "galeton", "harbor"};
    for (int64_t c = 1; c <= 8; ++c)
        cities.rows.push_back({c, std::string(kNames[c - 1])});
    db["cities"] = std::move(cities);

    Table promos;
    promos.schema = catalog.table("promos")->schema();
    for (size_t c = 1; c <= num_codes; ++c)
        for (int tier = 0; tier < 3; ++tier)
            promos.rows.push_back({static_cast<int64_t>(c), 0.05 * (tier + 1)});
    db["promos"] = std::move(promos);

    return db;
}

std::vector<Row> trips_addition_pool(uint64_t seed, size_t count) {
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
    std::uniform_real_distribution<double> dist01(0.0, 1.0);
    std::vector<Row> pool;
    for (size_t i = 0; i < count; ++i) {
        double distance = 1.0 + 150.0 * dist01(rng);
        pool.push_back({static_cast<int64_t>(100000 + i),
                        static_cast<int64_t>(rng() % 40) + 1,
                        static_cast<int64_t>(rng() % 60) + 1,
                        static_cast<int64_t>(rng() % 8) + 1, distance,
                        2.5 + 1.75 * distance, static_cast<int64_t>(rng() % 5) + 1});
    }
    return pool;
}

namespace {

RelExprPtr random_source(std::mt19937_64& rng) {
    switch (rng() % 4) {
        case 0: return rel_table("trips");
        case 1: return rel_join(rel_table("trips"), rel_table("drivers"), "driver_id", "id");
        case 2: return rel_join(rel_table("trips"), rel_table("riders"), "rider_id", "rid");
        default:
            return rel_join(rel_join(rel_table("trips"), rel_table("drivers"), "driver_id", "id"),
                            rel_table("riders"), "rider_id", "rid");
    }
}

RelExprPtr random_filters(RelExprPtr rel, std::mt19937_64& rng) {
    size_t filters = rng() % 3;
    for (size_t i = 0; i < filters; ++i) {
        CmpOp ops[] = {CmpOp::lt, CmpOp::le, CmpOp::eq, CmpOp::ne, CmpOp::ge, CmpOp::gt};
        CmpOp op = ops[rng() % 6];
        if (rng() % 2) {
            double threshold = static_cast<double>(rng() % 150);
            rel = rel_select(Predicate{vcolumn("trip_distance"), op, vreal(threshold)}, rel);
        } else {
            int64_t city = static_cast<int64_t>(rng() % 9);
            rel = rel_select(Predicate{vcolumn("city_id"), op, vint(city)}, rel);
        }
    }
    return rel;
}

} // namespace

RelExprPtr random_query(std::mt19937_64& rng) {
    RelExprPtr rel = random_filters(random_source(rng), rng);
    std::vector<std::string> group_by;
    if (rng() % 2) group_by = {rng() % 2 ? "city_id" : "driver_id"};
    switch (rng() % 3) {
        case 0: return rel_aggregate(AggKind::count, "", rel, group_by);
        case 1: return rel_aggregate(AggKind::sum, "fare", rel, group_by);
        default: return rel_aggregate(AggKind::avg, "trip_distance", rel, group_by);
    }
}

RelExprPtr random_counting_query(std::mt19937_64& rng) {
    RelExprPtr rel = random_filters(random_source(rng), rng);
    std::vector<std::string> group_by;
    if (rng() % 2) group_by = {"city_id"};
    return rel_aggregate(AggKind::count, "", rel, group_by);
}

bool aggregates_match(const Table& a, const Table& b, double rel_tol) {
    if (a.rows.size() != b.rows.size()) return false;
    auto key_of = [](const Row& row) {
        std::string key;
        for (size_t i = 0; i + 1 < row.size(); ++i) key += value_to_string(row[i]) + "\x1f";
        return key;
    };
    std::map<std::string, double> theirs;
    for (const auto& row : b.rows) theirs[key_of(row)] = value_as_real(row.back());
    for (const auto& row : a.rows) {
        auto it = theirs.find(key_of(row));
        if (it == theirs.end()) return false;
        double x = value_as_real(row.back());
        double y = it->second;
        double scale = std::max({std::abs(x), std::abs(y), 1.0});
        if (std::abs(x - y) > rel_tol * scale) return false;
    }
    return true;
}

std::string data_path(const std::string& relative) {
    return std::string(CHORUS_TEST_DATA_DIR) + "/" + relative;
}

bool CorpusEntry::label(const std::string& mechanism) const {
    if (mechanism == "elastic") return elastic;
    if (mechanism == "restricted") return restricted;
    if (mechanism == "wpinq") return wpinq;
    return saa;
}

std::vector<CorpusEntry> load_corpus() {
    std::ifstream in(data_path("corpus.json"));
    if (!in) throw Error(ErrorCode::internal, "corpus.json missing");
    nlohmann::json doc = nlohmann::json::parse(in);
    std::vector<CorpusEntry> corpus;
    for (const auto& je : doc) {
        CorpusEntry e;
        e.id = je.at("id").get<int>();
        e.sql = je.at("sql").get<std::string>();
        e.elastic = je.at("elastic").get<bool>();
        e.restricted = je.at("restricted").get<bool>();
        e.wpinq = je.at("wpinq").get<bool>();
        e.saa = je.at("saa").get<bool>();
        if (je.contains("bins")) e.bins = je.at("bins").get<std::vector<std::string>>();
        corpus.push_back(std::move(e));
    }
    return corpus;
}

} // namespace chorus::testutil
