#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "chorus/algebra.hpp"
#include "chorus/ast.hpp"
#include "chorus/catalog.hpp"
#include "chorus/types.hpp"

namespace chorus {

using Row = std::vector<Value>;

struct Table {
    Schema schema;
    std::vector<Row> rows;
};

// Named tables backing an evaluation.
using Database = std::map<std::string, Table>;

// Randomness feeding rand()/randInt() during evaluation. stubbed(0.5) makes
// rand()-0.5 exactly zero, which turns every Laplace term into exact zero.
class RandomSource {
public:
    static RandomSource seeded(uint64_t seed);
    static RandomSource stubbed(double constant);

    double draw();                 // real in (0,1)
    int64_t draw_int(int64_t n);   // integer in [0,n)
    bool is_stubbed() const { return stubbed_; }

private:
    RandomSource() = default;
    bool stubbed_ = false;
    double constant_ = 0.5;
    std::mt19937_64 engine_;
};

// Reference evaluation with multiset semantics. Inner equijoin keeps all
// key-equal pairs; right-outer join keeps unmatched right rows with nulls on
// the left. Expressions run left-to-right, rows in order, so a seeded rng
// gives reproducible noise. Throws eval_error with row context.
Table eval(const RelExprPtr& expr, const Database& db, const Catalog& catalog, RandomSource& rng);
Table eval(const QueryExpr& q, const Database& db, const Catalog& catalog, RandomSource& rng);

// RFC-4180 subset: comma separated, double-quoted strings, header row that
// must match the schema names in order.
Table load_csv(const std::string& path, const Schema& schema);
Database load_database(const std::string& dir, const Catalog& catalog);

// Every database at distance 1: one protected row removed, plus one database
// per row of the addition pool appended to the protected table.
std::vector<Database> neighbors(const Database& db, const std::string& protected_table,
                                const std::vector<Row>& addition_pool = {});

bool tables_equal(const Table& a, const Table& b);       // order-sensitive
bool tables_equal_as_multiset(const Table& a, const Table& b);

} // namespace chorus
