#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace chorus {

enum class ScalarType { int_type, real_type, string_type, bool_type };

const char* scalar_type_name(ScalarType t);
std::optional<ScalarType> scalar_type_from_name(const std::string& name);

inline bool is_numeric(ScalarType t) {
    return t == ScalarType::int_type || t == ScalarType::real_type;
}

// Runtime scalar. Nulls exist only as right-outer-join artifacts and are
// consumed only by coalesce; anything else touching a null is an eval error.
using Value = std::variant<std::monostate, int64_t, double, std::string, bool>;

bool value_is_null(const Value& v);
bool value_is_numeric(const Value& v);
double value_as_real(const Value& v);
std::string value_to_string(const Value& v);

// Equality with numeric coercion: 5 == 5.0. Strings/bools compare exactly;
// null equals only null.
bool values_equal(const Value& a, const Value& b);
// Total order used for grouping keys and medians (null sorts first).
bool value_less(const Value& a, const Value& b);

struct Attribute {
    std::string name;
    ScalarType type;

    bool operator==(const Attribute& o) const = default;
};

// Ordered attribute list; names are unique within a schema.
struct Schema {
    std::vector<Attribute> attributes;

    bool has(const std::string& name) const;
    const Attribute* find(const std::string& name) const;
    int index_of(const std::string& name) const; // -1 when absent
    size_t size() const { return attributes.size(); }

    bool operator==(const Schema& o) const = default;

    // int and real are interchangeable here; noise widens int aggregates
    // to real without changing anything the query logic depends on.
    bool equals_up_to_numeric(const Schema& o) const;

    std::string to_string() const;
};

} // namespace chorus
