#include "chorus/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "chorus/errors.hpp"

namespace chorus {

RandomSource RandomSource::seeded(uint64_t seed) {
    RandomSource r;
    r.engine_.seed(seed);
    return r;
}

RandomSource RandomSource::stubbed(double constant) {
    RandomSource r;
    r.stubbed_ = true;
    r.constant_ = constant;
    return r;
}

double RandomSource::draw() {
    if (stubbed_) return constant_;
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    double u;
    do {
        u = dist(engine_);
    } while (u <= 0.0 || u >= 1.0);
    return u;
}

int64_t RandomSource::draw_int(int64_t n) {
    if (n <= 0) throw Error(ErrorCode::eval_error, "randInt modulus must be positive");
    if (stubbed_) return std::min<int64_t>(n - 1, static_cast<int64_t>(constant_ * n));
    std::uniform_int_distribution<int64_t> dist(0, n - 1);
    return dist(engine_);
}

namespace {

struct EvalContext {
    const Schema& schema;
    const Row& row;
    int64_t row_number;  // 1-based, matching ROW_NUMBER() OVER ()
    RandomSource& rng;
};

Value eval_value(const ValueExprPtr& v, const EvalContext& ctx) {
    switch (v->kind) {
        case ValueKind::column: {
            int idx = ctx.schema.index_of(v->column);
            if (idx < 0)
                throw Error(ErrorCode::eval_error, "column " + v->column + " missing at runtime");
            const Value& val = ctx.row[idx];
            if (value_is_null(val))
                throw Error(ErrorCode::eval_error,
                            "null " + v->column + " outside coalesce (row " +
                                std::to_string(ctx.row_number) + ")");
            return val;
        }
        case ValueKind::int_lit: return v->int_value;
        case ValueKind::real_lit: return v->real_value;
        case ValueKind::string_lit: return v->string_value;
        case ValueKind::rand_uniform: return ctx.rng.draw();
        case ValueKind::rand_int: return ctx.rng.draw_int(v->int_value);
        case ValueKind::row_mod: return ctx.row_number % v->int_value;
        case ValueKind::add:
        case ValueKind::mul:
        case ValueKind::div: {
            Value a = eval_value(v->lhs, ctx);
            Value b = eval_value(v->rhs, ctx);
            bool both_int = std::holds_alternative<int64_t>(a) && std::holds_alternative<int64_t>(b);
            double x = value_as_real(a), y = value_as_real(b);
            if (v->kind == ValueKind::add)
                return both_int ? Value(std::get<int64_t>(a) + std::get<int64_t>(b)) : Value(x + y);
            if (v->kind == ValueKind::mul)
                return both_int ? Value(std::get<int64_t>(a) * std::get<int64_t>(b)) : Value(x * y);
            if (y == 0.0)
                throw Error(ErrorCode::eval_error,
                            "division by zero (row " + std::to_string(ctx.row_number) + ")");
            return x / y;
        }
        case ValueKind::ln: {
            double x = value_as_real(eval_value(v->lhs, ctx));
            if (x <= 0.0)
                throw Error(ErrorCode::eval_error,
                            "ln of non-positive value " + std::to_string(x) + " (row " +
                                std::to_string(ctx.row_number) + ")");
            return std::log(x);
        }
        case ValueKind::abs: {
            Value a = eval_value(v->lhs, ctx);
            if (const auto* i = std::get_if<int64_t>(&a)) return std::abs(*i);
            return std::abs(value_as_real(a));
        }
        case ValueKind::sign: {
            double x = value_as_real(eval_value(v->lhs, ctx));
            return static_cast<int64_t>(x > 0.0 ? 1 : (x < 0.0 ? -1 : 0));
        }
        case ValueKind::coalesce: {
            int idx = v->lhs->kind == ValueKind::column ? ctx.schema.index_of(v->lhs->column) : -1;
            if (idx >= 0 && value_is_null(ctx.row[idx])) return eval_value(v->rhs, ctx);
            return eval_value(v->lhs, ctx);
        }
    }
    throw Error(ErrorCode::internal, "unhandled value kind");
}

bool eval_predicate(const Predicate& p, const EvalContext& ctx) {
    Value a = eval_value(p.lhs, ctx);
    Value b = eval_value(p.rhs, ctx);
    bool eq = values_equal(a, b);
    bool lt = value_less(a, b);
    switch (p.op) {
        case CmpOp::lt: return lt;
        case CmpOp::le: return lt || eq;
        case CmpOp::eq: return eq;
        case CmpOp::ne: return !eq;
        case CmpOp::ge: return !lt;
        case CmpOp::gt: return !lt && !eq;
    }
    return false;
}

// Group rows by key tuple, preserving first-appearance order.
struct Grouper {
    std::vector<Row> keys;
    std::vector<std::vector<size_t>> members;
    std::map<std::vector<std::string>, size_t> index;

    size_t group_for(const Row& key) {
        std::vector<std::string> k;
        k.reserve(key.size());
        for (const auto& v : key) k.push_back(value_to_string(v) + "\x1f" + std::to_string(v.index()));
        auto it = index.find(k);
        if (it != index.end()) return it->second;
        index.emplace(std::move(k), keys.size());
        keys.push_back(key);
        members.emplace_back();
        return keys.size() - 1;
    }
};

double median_of(std::vector<double> xs) {
    std::sort(xs.begin(), xs.end());
    size_t n = xs.size();
    if (n % 2 == 1) return xs[n / 2];
    return (xs[n / 2 - 1] + xs[n / 2]) / 2.0;
}

Table eval_aggregate(const Aggregate& agg, Table in, const Catalog& catalog) {
    Table out;
    std::vector<int> group_idx;
    for (const auto& g : agg.group_by) {
        int idx = in.schema.index_of(g);
        if (idx < 0) throw Error(ErrorCode::eval_error, "grouping column " + g + " missing");
        group_idx.push_back(idx);
        out.schema.attributes.push_back(in.schema.attributes[idx]);
    }
    int value_idx = -1;
    if (agg.kind != AggKind::count) {
        value_idx = in.schema.index_of(agg.column);
        if (value_idx < 0)
            throw Error(ErrorCode::eval_error, "aggregate column " + agg.column + " missing");
    }

    Grouper grouper;
    for (size_t r = 0; r < in.rows.size(); ++r) {
        Row key;
        for (int idx : group_idx) key.push_back(in.rows[r][idx]);
        grouper.members[grouper.group_for(key)].push_back(r);
    }
    // Scalar aggregation over an empty input still yields one row for count.
    if (agg.group_by.empty() && grouper.keys.empty()) {
        if (agg.kind != AggKind::count)
            throw Error(ErrorCode::eval_error,
                        std::string(agg_kind_name(agg.kind)) + " over empty input");
        grouper.keys.push_back({});
        grouper.members.push_back({});
    }

    ScalarType value_type = ScalarType::int_type;
    if (agg.kind != AggKind::count) {
        ScalarType in_type = in.schema.attributes[value_idx].type;
        value_type = (agg.kind == AggKind::sum) ? in_type : ScalarType::real_type;
    }
    out.schema.attributes.push_back({aggregate_output_name(agg), value_type});

    for (size_t g = 0; g < grouper.keys.size(); ++g) {
        Row row = grouper.keys[g];
        const auto& members = grouper.members[g];
        switch (agg.kind) {
            case AggKind::count: {
                if (!agg.distinct) {
                    row.push_back(static_cast<int64_t>(members.size()));
                } else {
                    int idx = in.schema.index_of(agg.column);
                    if (idx < 0)
                        throw Error(ErrorCode::eval_error, "distinct column " + agg.column + " missing");
                    std::vector<std::string> seen;
                    for (size_t r : members) seen.push_back(value_to_string(in.rows[r][idx]));
                    std::sort(seen.begin(), seen.end());
                    seen.erase(std::unique(seen.begin(), seen.end()), seen.end());
                    row.push_back(static_cast<int64_t>(seen.size()));
                }
                break;
            }
            case AggKind::sum: {
                if (value_type == ScalarType::int_type) {
                    int64_t total = 0;
                    for (size_t r : members) total += std::get<int64_t>(in.rows[r][value_idx]);
                    row.push_back(total);
                } else {
                    double total = 0;
                    for (size_t r : members) total += value_as_real(in.rows[r][value_idx]);
                    row.push_back(total);
                }
                break;
            }
            case AggKind::avg: {
                if (members.empty()) throw Error(ErrorCode::eval_error, "avg over empty group");
                double total = 0;
                for (size_t r : members) total += value_as_real(in.rows[r][value_idx]);
                row.push_back(total / static_cast<double>(members.size()));
                break;
            }
            case AggKind::median: {
                if (members.empty()) throw Error(ErrorCode::eval_error, "median over empty group");
                std::vector<double> xs;
                for (size_t r : members) xs.push_back(value_as_real(in.rows[r][value_idx]));
                row.push_back(median_of(std::move(xs)));
                break;
            }
        }
        out.rows.push_back(std::move(row));
    }
    (void)catalog;
    return out;
}

} // namespace

Table eval(const RelExprPtr& expr, const Database& db, const Catalog& catalog, RandomSource& rng) {
    if (const auto* t = expr->as<TableRef>()) {
        auto it = db.find(t->name);
        if (it == db.end()) throw Error(ErrorCode::eval_error, "table " + t->name + " not loaded");
        return it->second;
    }
    if (const auto* j = expr->as<Join>()) {
        Table l = eval(j->left, db, catalog, rng);
        Table r = eval(j->right, db, catalog, rng);
        int li = l.schema.index_of(j->left_key);
        int ri = r.schema.index_of(j->right_key);
        if (li < 0 || ri < 0) throw Error(ErrorCode::eval_error, "join key missing at runtime");
        Table out;
        out.schema = l.schema;
        for (const auto& a : r.schema.attributes) out.schema.attributes.push_back(a);
        if (j->kind == JoinKind::inner) {
            for (const auto& lr : l.rows)
                for (const auto& rr : r.rows)
                    if (!value_is_null(lr[li]) && values_equal(lr[li], rr[ri])) {
                        Row row = lr;
                        row.insert(row.end(), rr.begin(), rr.end());
                        out.rows.push_back(std::move(row));
                    }
        } else {
            // right-outer: unmatched right rows survive with nulls on the left
            for (const auto& rr : r.rows) {
                bool matched = false;
                for (const auto& lr : l.rows)
                    if (!value_is_null(lr[li]) && values_equal(lr[li], rr[ri])) {
                        Row row = lr;
                        row.insert(row.end(), rr.begin(), rr.end());
                        out.rows.push_back(std::move(row));
                        matched = true;
                    }
                if (!matched) {
                    Row row(l.schema.size(), Value{});
                    row.insert(row.end(), rr.begin(), rr.end());
                    out.rows.push_back(std::move(row));
                }
            }
        }
        return out;
    }
    if (const auto* p = expr->as<Projection>()) {
        Table in = eval(p->input, db, catalog, rng);
        Table out;
        std::vector<int> pass_idx(p->attrs.size(), -1);
        for (size_t i = 0; i < p->attrs.size(); ++i) {
            const auto& attr = p->attrs[i];
            if (attr.is_binding()) {
                out.schema.attributes.push_back({attr.name, type_of_value(attr.value, in.schema)});
            } else {
                int idx = in.schema.index_of(attr.name);
                if (idx < 0)
                    throw Error(ErrorCode::eval_error, "column " + attr.name + " missing at runtime");
                pass_idx[i] = idx;
                out.schema.attributes.push_back(in.schema.attributes[idx]);
            }
        }
        int64_t row_number = 0;
        for (const auto& row : in.rows) {
            ++row_number;
            Row out_row;
            out_row.reserve(p->attrs.size());
            for (size_t i = 0; i < p->attrs.size(); ++i) {
                if (pass_idx[i] >= 0) {
                    out_row.push_back(row[pass_idx[i]]);
                } else {
                    EvalContext ctx{in.schema, row, row_number, rng};
                    out_row.push_back(eval_value(p->attrs[i].value, ctx));
                }
            }
            out.rows.push_back(std::move(out_row));
        }
        return out;
    }
    if (const auto* s = expr->as<Selection>()) {
        Table in = eval(s->input, db, catalog, rng);
        Table out;
        out.schema = in.schema;
        int64_t row_number = 0;
        for (const auto& row : in.rows) {
            ++row_number;
            EvalContext ctx{in.schema, row, row_number, rng};
            if (eval_predicate(s->pred, ctx)) out.rows.push_back(row);
        }
        return out;
    }
    const auto* g = expr->as<Aggregate>();
    return eval_aggregate(*g, eval(g->input, db, catalog, rng), catalog);
}

namespace {

double laplace_draw(double scale, RandomSource& rng) {
    double u = (rng.draw() - 0.5) * (1.0 - 2e-12);
    double s = u > 0 ? 1.0 : (u < 0 ? -1.0 : 0.0);
    return -scale * s * std::log(1.0 - 2.0 * std::abs(u));
}

double quantile_linear(const std::vector<double>& sorted, double p) {
    if (sorted.empty()) return 0.0;
    if (sorted.size() == 1) return sorted[0];
    double pos = p * static_cast<double>(sorted.size() - 1);
    size_t lo = static_cast<size_t>(pos);
    if (lo + 1 >= sorted.size()) return sorted.back();
    double frac = pos - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

// Widened winsorized mean over one group's subsample estimates: widen the
// interquartile range by its own width on each end, clamp, average, then add
// Laplace noise scaled to the clamped mean's sensitivity (range / subsamples)
// over epsilon. A degenerate range falls back to scale 1/(subsamples*eps).
double winsorized_mean(std::vector<double> values, const SaaFinalizer& fin, RandomSource& rng) {
    if (values.empty()) return fin.output_scale * laplace_draw(1.0 / (double(fin.subsamples) * fin.epsilon), rng);
    std::sort(values.begin(), values.end());
    double q1 = quantile_linear(values, 0.25);
    double q3 = quantile_linear(values, 0.75);
    double width = q3 - q1;
    double lo = q1 - width;
    double hi = q3 + width;
    double sum = 0;
    for (double v : values) sum += std::min(std::max(v, lo), hi);
    double mean = sum / static_cast<double>(values.size());
    double range = hi - lo;
    double noise_scale = (range > 0 ? range : 1.0) / (static_cast<double>(fin.subsamples) * fin.epsilon);
    return fin.output_scale * (mean + laplace_draw(noise_scale, rng));
}

} // namespace

Table eval(const QueryExpr& q, const Database& db, const Catalog& catalog, RandomSource& rng) {
    Table inner = eval(q.root, db, catalog, rng);
    if (!q.finalizer) return inner;

    const SaaFinalizer& fin = *q.finalizer;
    Table out;
    std::vector<int> group_idx;
    for (const auto& g : fin.group_columns) {
        int idx = inner.schema.index_of(g);
        if (idx < 0) throw Error(ErrorCode::eval_error, "group column " + g + " missing");
        group_idx.push_back(idx);
        out.schema.attributes.push_back(inner.schema.attributes[idx]);
    }
    int value_idx = inner.schema.index_of(fin.value_column);
    if (value_idx < 0)
        throw Error(ErrorCode::eval_error, "subsample value column " + fin.value_column + " missing");
    out.schema.attributes.push_back({fin.value_column, ScalarType::real_type});

    Grouper grouper;
    for (size_t r = 0; r < inner.rows.size(); ++r) {
        Row key;
        for (int idx : group_idx) key.push_back(inner.rows[r][idx]);
        grouper.members[grouper.group_for(key)].push_back(r);
    }
    if (fin.group_columns.empty() && grouper.keys.empty()) {
        grouper.keys.push_back({});
        grouper.members.push_back({});
    }
    for (size_t g = 0; g < grouper.keys.size(); ++g) {
        std::vector<double> values;
        for (size_t r : grouper.members[g]) values.push_back(value_as_real(inner.rows[r][value_idx]));
        Row row = grouper.keys[g];
        if (fin.kind == AggregatorKind::passthrough_mean) {
            double sum = 0;
            for (double v : values) sum += v;
            double mean = values.empty() ? 0.0 : sum / static_cast<double>(values.size());
            row.push_back(fin.output_scale * mean);
        } else {
            row.push_back(winsorized_mean(values, fin, rng));
        }
        out.rows.push_back(std::move(row));
    }
    return out;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line, size_t line_no) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (c == '\r') {
            // tolerate CRLF
        } else {
            cur += c;
        }
    }
    if (quoted)
        throw Error(ErrorCode::csv_error, "unterminated quote on line " + std::to_string(line_no));
    fields.push_back(cur);
    return fields;
}

Value parse_csv_value(const std::string& text, ScalarType type, size_t line_no, size_t col) {
    try {
        switch (type) {
            case ScalarType::int_type: return static_cast<int64_t>(std::stoll(text));
            case ScalarType::real_type: return std::stod(text);
            case ScalarType::string_type: return text;
            case ScalarType::bool_type:
                if (text == "true" || text == "1") return true;
                if (text == "false" || text == "0") return false;
                throw std::invalid_argument("bool");
        }
    } catch (const std::exception&) {
        throw Error(ErrorCode::csv_error, "row " + std::to_string(line_no) + ", column " +
                                              std::to_string(col + 1) + ": cannot read \"" + text +
                                              "\" as " + scalar_type_name(type));
    }
    throw Error(ErrorCode::internal, "unhandled scalar type");
}

} // namespace

Table load_csv(const std::string& path, const Schema& schema) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::csv_error, "cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw Error(ErrorCode::csv_error, "missing header in " + path);
    auto header = split_csv_line(line, 1);
    if (header.size() != schema.size())
        throw Error(ErrorCode::csv_error, path + ": header has " + std::to_string(header.size()) +
                                              " fields, schema has " + std::to_string(schema.size()));
    for (size_t i = 0; i < header.size(); ++i)
        if (header[i] != schema.attributes[i].name)
            throw Error(ErrorCode::csv_error, path + ": header field \"" + header[i] +
                                                  "\" does not match schema column \"" +
                                                  schema.attributes[i].name + "\"");
    Table t;
    t.schema = schema;
    size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto fields = split_csv_line(line, line_no);
        if (fields.size() != schema.size())
            throw Error(ErrorCode::csv_error,
                        path + ": row " + std::to_string(line_no) + " has " +
                            std::to_string(fields.size()) + " fields");
        Row row;
        for (size_t i = 0; i < fields.size(); ++i)
            row.push_back(parse_csv_value(fields[i], schema.attributes[i].type, line_no, i));
        t.rows.push_back(std::move(row));
    }
    return t;
}

Database load_database(const std::string& dir, const Catalog& catalog) {
    Database db;
    for (const auto& t : catalog.tables) {
        std::string path = dir + "/" + t.name + ".csv";
        std::ifstream probe(path);
        if (!probe) continue;  // absent tables simply stay unloaded
        db[t.name] = load_csv(path, t.schema());
    }
    return db;
}

std::vector<Database> neighbors(const Database& db, const std::string& protected_table,
                                const std::vector<Row>& addition_pool) {
    auto it = db.find(protected_table);
    if (it == db.end())
        throw Error(ErrorCode::eval_error, "protected table " + protected_table + " not loaded");
    std::vector<Database> out;
    for (size_t i = 0; i < it->second.rows.size(); ++i) {
        Database copy = db;
        auto& rows = copy[protected_table].rows;
        rows.erase(rows.begin() + static_cast<long>(i));
        out.push_back(std::move(copy));
    }
    for (const auto& extra : addition_pool) {
        Database copy = db;
        copy[protected_table].rows.push_back(extra);
        out.push_back(std::move(copy));
    }
    return out;
}

bool tables_equal(const Table& a, const Table& b) {
    if (!(a.schema == b.schema)) return false;
    if (a.rows.size() != b.rows.size()) return false;
    for (size_t i = 0; i < a.rows.size(); ++i)
        for (size_t j = 0; j < a.rows[i].size(); ++j)
            if (!values_equal(a.rows[i][j], b.rows[i][j])) return false;
    return true;
}

bool tables_equal_as_multiset(const Table& a, const Table& b) {
    if (a.rows.size() != b.rows.size()) return false;
    if (a.schema.attributes.size() != b.schema.attributes.size()) return false;
    auto key = [](const Row& r) {
        std::string k;
        for (const auto& v : r) {
            if (value_is_numeric(v)) k += value_to_string(Value(value_as_real(v)));
            else k += value_to_string(v);
            k += '\x1f';
        }
        return k;
    };
    std::multiset<std::string> ka, kb;
    for (const auto& r : a.rows) ka.insert(key(r));
    for (const auto& r : b.rows) kb.insert(key(r));
    return ka == kb;
}

} // namespace chorus
