#include "chorus/catalog.hpp"

#include <fstream>
#include <set>

#include <json.hpp>

#include "chorus/errors.hpp"

namespace chorus {

using nlohmann::json;

const ColumnMeta* TableMeta::column(const std::string& name) const {
    for (const auto& c : columns)
        if (c.name == name) return &c;
    return nullptr;
}

Schema TableMeta::schema() const {
    Schema s;
    for (const auto& c : columns) s.attributes.push_back({c.name, c.type});
    return s;
}

const TableMeta* Catalog::table(const std::string& name) const {
    for (const auto& t : tables)
        if (t.name == name) return &t;
    return nullptr;
}

const ColumnMeta* Catalog::column(const std::string& table_name, const std::string& column_name) const {
    const TableMeta* t = table(table_name);
    return t ? t->column(column_name) : nullptr;
}

const TableMeta& Catalog::protected_table() const {
    for (const auto& t : tables)
        if (t.is_protected) return t;
    throw Error(ErrorCode::catalog_error, "no protected table declared");
}

void Catalog::validate() const {
    int protected_count = 0;
    std::set<std::string> names;
    for (const auto& t : tables) {
        if (!names.insert(t.name).second)
            throw Error(ErrorCode::catalog_error, "duplicate table " + t.name);
        if (t.is_protected) ++protected_count;
        std::set<std::string> cols;
        for (const auto& c : t.columns) {
            if (!cols.insert(c.name).second)
                throw Error(ErrorCode::catalog_error,
                            "duplicate column " + t.name + "." + c.name);
            if (c.max_frequency && *c.max_frequency < 1)
                throw Error(ErrorCode::catalog_error,
                            "maxFrequency must be >= 1 on " + t.name + "." + c.name);
            if (c.cap == JoinCap::capped && c.cap_value < 1)
                throw Error(ErrorCode::catalog_error,
                            "capped multiplicity must be >= 1 on " + t.name + "." + c.name);
            if (c.domain_source) {
                const ColumnMeta* d = column(c.domain_source->table, c.domain_source->column);
                if (!d)
                    throw Error(ErrorCode::catalog_error,
                                "domainSource of " + t.name + "." + c.name + " references unknown " +
                                    c.domain_source->table + "." + c.domain_source->column);
                if (d->type != c.type)
                    throw Error(ErrorCode::catalog_error,
                                "domainSource type mismatch for " + t.name + "." + c.name);
            }
        }
        for (const auto& pk : t.primary_key) {
            const ColumnMeta* c = t.column(pk);
            if (!c)
                throw Error(ErrorCode::catalog_error,
                            "primary key column " + pk + " missing from " + t.name);
            if (c->max_frequency && *c->max_frequency != 1)
                throw Error(ErrorCode::catalog_error,
                            "primary key column " + t.name + "." + pk + " must have maxFrequency 1");
        }
    }
    if (protected_count != 1)
        throw Error(ErrorCode::catalog_error,
                    "catalog must declare exactly one protected table, found " +
                        std::to_string(protected_count));
}

namespace {

void reject_unknown_keys(const json& obj, const std::set<std::string>& allowed,
                         const std::string& where) {
    for (auto it = obj.begin(); it != obj.end(); ++it)
        if (!allowed.count(it.key()))
            throw Error(ErrorCode::catalog_error, "unknown key \"" + it.key() + "\" in " + where);
}

ColumnMeta parse_column(const json& jc, const std::string& table_name) {
    if (!jc.is_object())
        throw Error(ErrorCode::catalog_error, "column entry in " + table_name + " must be an object");
    reject_unknown_keys(jc, {"name", "type", "maxFrequency", "joinMultiplicityCap", "domainSource"},
                        "column of table " + table_name);
    ColumnMeta c;
    if (!jc.contains("name") || !jc.contains("type"))
        throw Error(ErrorCode::catalog_error, "column in " + table_name + " needs name and type");
    c.name = jc.at("name").get<std::string>();
    auto type = scalar_type_from_name(jc.at("type").get<std::string>());
    if (!type)
        throw Error(ErrorCode::catalog_error,
                    "unknown type \"" + jc.at("type").get<std::string>() + "\" for " + table_name +
                        "." + c.name);
    c.type = *type;
    if (jc.contains("maxFrequency")) c.max_frequency = jc.at("maxFrequency").get<int64_t>();
    if (jc.contains("joinMultiplicityCap")) {
        const json& jm = jc.at("joinMultiplicityCap");
        if (jm.is_string()) {
            std::string s = jm.get<std::string>();
            if (s == "one") c.cap = JoinCap::one;
            else if (s == "many") c.cap = JoinCap::many;
            else
                throw Error(ErrorCode::catalog_error,
                            "joinMultiplicityCap must be \"one\", \"many\", or an integer cap");
        } else if (jm.is_number_integer()) {
            c.cap = JoinCap::capped;
            c.cap_value = jm.get<int64_t>();
        } else {
            throw Error(ErrorCode::catalog_error,
                        "joinMultiplicityCap must be \"one\", \"many\", or an integer cap");
        }
    }
    if (jc.contains("domainSource")) {
        const json& jd = jc.at("domainSource");
        reject_unknown_keys(jd, {"table", "column"}, "domainSource of " + table_name + "." + c.name);
        c.domain_source = DomainSource{jd.at("table").get<std::string>(),
                                       jd.at("column").get<std::string>()};
    }
    return c;
}

} // namespace

Catalog parse_catalog(const std::string& json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::catalog_error, std::string("invalid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw Error(ErrorCode::catalog_error, "catalog root must be an object");
    reject_unknown_keys(doc, {"tables"}, "catalog root");
    if (!doc.contains("tables") || !doc.at("tables").is_array())
        throw Error(ErrorCode::catalog_error, "catalog needs a \"tables\" array");

    Catalog cat;
    for (const json& jt : doc.at("tables")) {
        reject_unknown_keys(jt, {"name", "columns", "primaryKey", "protected"}, "table entry");
        TableMeta t;
        if (!jt.contains("name")) throw Error(ErrorCode::catalog_error, "table entry needs a name");
        t.name = jt.at("name").get<std::string>();
        if (!jt.contains("columns") || !jt.at("columns").is_array())
            throw Error(ErrorCode::catalog_error, "table " + t.name + " needs a columns array");
        for (const json& jc : jt.at("columns")) t.columns.push_back(parse_column(jc, t.name));
        if (jt.contains("primaryKey"))
            t.primary_key = jt.at("primaryKey").get<std::vector<std::string>>();
        if (jt.contains("protected")) t.is_protected = jt.at("protected").get<bool>();
        // Primary keys are unique by definition.
        for (const auto& pk : t.primary_key) {
            for (auto& c : t.columns) {
                if (c.name != pk) continue;
                if (!c.max_frequency) c.max_frequency = 1;
                if (c.cap == JoinCap::many && c.cap_value == 0) c.cap = JoinCap::one;
            }
        }
        cat.tables.push_back(std::move(t));
    }
    cat.validate();
    return cat;
}

Catalog load_catalog(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::catalog_error, "cannot open catalog file " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_catalog(text);
}

} // namespace chorus
