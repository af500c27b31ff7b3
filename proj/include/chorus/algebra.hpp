#pragma once

#include <set>
#include <string>
#include <vector>

#include "chorus/ast.hpp"
#include "chorus/catalog.hpp"

namespace chorus {

// Output schema of a relational expression. Projections with named bindings
// extend the schema; count appends "count"; sum/avg/median append
// "<kind>_<col>"; grouped aggregations output the group columns then the
// aggregate. Throws unknown_table / unknown_column / type_mismatch /
// duplicate_attribute naming the offending node.
Schema schema_of(const RelExprPtr& expr, const Catalog& catalog);

// Type of a value expression under the given input schema.
ScalarType type_of_value(const ValueExprPtr& v, const Schema& input);

void check_predicate(const Predicate& p, const Schema& input);

struct ValidationProblem {
    std::string code;
    std::string message;
};

// Structural facts about a query, used by mechanism selection. Pure function
// of the AST; no catalog row data is consulted.
struct ValidationReport {
    bool ok = false;
    std::vector<ValidationProblem> problems;
    std::set<std::string> features;

    bool has(const std::string& feature) const { return features.count(feature) > 0; }
};

// Feature names reported: one of count/sum/avg/median, count-distinct,
// join/no-join, right-outer-join, grouped, subquery-aggregation, selection.
ValidationReport validate_query(const QueryExpr& q, const Catalog& catalog);

} // namespace chorus
