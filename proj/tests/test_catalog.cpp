#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "chorus/catalog.hpp"
#include "chorus/errors.hpp"
#include "testutil.hpp"

using namespace chorus;

TEST_CASE("fixture catalog loads and validates") {
    Catalog c = testutil::fixture_catalog();
    CHECK(c.tables.size() == 5);
    CHECK(c.protected_table().name == "trips");
    const ColumnMeta* driver = c.column("trips", "driver_id");
    REQUIRE(driver);
    CHECK(*driver->max_frequency == 3);
    CHECK(driver->cap == JoinCap::capped);
    CHECK(driver->cap_value == 3);
    const ColumnMeta* city = c.column("trips", "city_id");
    REQUIRE(city);
    REQUIRE(city->domain_source);
    CHECK(city->domain_source->table == "cities");
}

TEST_CASE("primary key columns get frequency one filled in") {
    Catalog c = testutil::fixture_catalog();
    const ColumnMeta* pk = c.column("drivers", "id");
    REQUIRE(pk);
    CHECK(*pk->max_frequency == 1);
    CHECK(pk->cap == JoinCap::one);
}

TEST_CASE("unknown keys are rejected with the key named") {
    try {
        parse_catalog(R"({"tables": [], "extra": 1})");
        FAIL("expected catalog_error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::catalog_error);
        CHECK(e.detail().find("extra") != std::string::npos);
    }
    CHECK_THROWS_AS(
        parse_catalog(
            R"({"tables": [{"name": "t", "columns": [{"name": "a", "type": "int", "frequency": 2}], "protected": true}]})"),
        Error);
}

TEST_CASE("exactly one protected table") {
    CHECK_THROWS_AS(
        parse_catalog(R"({"tables": [{"name": "t", "columns": [{"name": "a", "type": "int"}]}]})"),
        Error);
    CHECK_THROWS_AS(parse_catalog(R"({"tables": [
        {"name": "t", "columns": [{"name": "a", "type": "int"}], "protected": true},
        {"name": "u", "columns": [{"name": "b", "type": "int"}], "protected": true}]})"),
                    Error);
}

TEST_CASE("metadata bounds are validated") {
    CHECK_THROWS_AS(parse_catalog(R"({"tables": [{"name": "t", "protected": true,
        "columns": [{"name": "a", "type": "int", "maxFrequency": 0}]}]})"),
                    Error);
    CHECK_THROWS_AS(parse_catalog(R"({"tables": [{"name": "t", "protected": true,
        "columns": [{"name": "a", "type": "why"}]}]})"),
                    Error);
    // domainSource must resolve
    CHECK_THROWS_AS(parse_catalog(R"({"tables": [{"name": "t", "protected": true,
        "columns": [{"name": "a", "type": "int",
                     "domainSource": {"table": "d", "column": "a"}}]}]})"),
                    Error);
}

TEST_CASE("catalog file round trip") {
    std::string path = "/tmp/chorus_test_catalog.json";
    {
        std::ofstream out(path);
        out << R"({"tables": [{"name": "t", "protected": true, "primaryKey": ["a"],
                   "columns": [{"name": "a", "type": "int"}, {"name": "b", "type": "real"}]}]})";
    }
    Catalog c = load_catalog(path);
    CHECK(c.tables.size() == 1);
    CHECK(c.table("t")->schema().size() == 2);
    std::remove(path.c_str());
    CHECK_THROWS_AS(load_catalog(path), Error);
}
