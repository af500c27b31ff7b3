#pragma once

#include <string>

#include "chorus/algebra.hpp"
#include "chorus/ast.hpp"
#include "chorus/catalog.hpp"

namespace chorus {

// Controls the spelling of RANDOM(), LN, ABS, SIGN, ROW_NUMBER and modulo in
// emitted SQL. ansi is the canonical test dialect.
enum class Dialect { ansi, postgres };

Dialect dialect_from_name(const std::string& name);
const char* dialect_name(Dialect d);

struct SqlText {
    std::string text;
    Dialect dialect = Dialect::ansi;
};

// Parses the supported SQL subset into a validated query: SELECT with a
// single COUNT(*)/COUNT(DISTINCT c)/SUM/AVG/MEDIAN aggregate, WHERE
// conjunctions of comparisons, inner equijoins (JOIN..ON or WHERE equality),
// GROUP BY on columns, WITH subqueries and inline FROM subqueries that fit
// the algebra. Anything else raises parse_error or unsupported_feature.
QueryExpr parse_sql(const std::string& text, Dialect dialect, const Catalog& catalog);

// Deterministic emission: nested expressions become WITH blocks in
// topological order with stable aliases (rewriter hints, then chorus_q<n>).
// Identical ASTs yield byte-identical text per dialect.
SqlText emit_sql(const QueryExpr& q, Dialect dialect, const Catalog& catalog);

// Canonical SQL used for budget fingerprints: ansi emission of the query.
std::string canonical_sql(const QueryExpr& q, const Catalog& catalog);

} // namespace chorus
