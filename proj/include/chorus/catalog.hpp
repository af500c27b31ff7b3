#pragma once

#include <optional>
#include <string>
#include <vector>

#include "chorus/types.hpp"

namespace chorus {

// Join multiplicity declarations: how many rows of this table can share one
// value of the column.
enum class JoinCap { one, capped, many };

struct DomainSource {
    std::string table;
    std::string column;
};

struct ColumnMeta {
    std::string name;
    ScalarType type = ScalarType::int_type;
    std::optional<int64_t> max_frequency;  // absent = undeclared
    JoinCap cap = JoinCap::many;
    int64_t cap_value = 0;  // bound for JoinCap::capped
    std::optional<DomainSource> domain_source;
};

struct TableMeta {
    std::string name;
    std::vector<ColumnMeta> columns;
    std::vector<std::string> primary_key;
    bool is_protected = false;

    const ColumnMeta* column(const std::string& name) const;
    Schema schema() const;
};

// Table schemas plus the privacy metadata consumed by sensitivity analysis
// and histogram completion. Read-only after load.
struct Catalog {
    std::vector<TableMeta> tables;

    const TableMeta* table(const std::string& name) const;
    const ColumnMeta* column(const std::string& table, const std::string& column) const;
    const TableMeta& protected_table() const;

    // Enforces: exactly one protected table, max frequencies >= 1, primary
    // key columns pinned to frequency one, domain sources resolvable.
    // Throws catalog_error.
    void validate() const;
};

// Parses the catalog JSON document. Unknown keys are rejected with the
// offending key named. Primary-key columns get maxFrequency=1 and cap one
// filled in when undeclared.
Catalog load_catalog(const std::string& path);
Catalog parse_catalog(const std::string& json_text);

} // namespace chorus
