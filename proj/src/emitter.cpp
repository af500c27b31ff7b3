#include <charconv>
#include <map>
#include <set>
#include <vector>

#include "chorus/errors.hpp"
#include "chorus/sql.hpp"

namespace chorus {

namespace {

std::string real_text(double d) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), d);
    std::string s(buf, res.ptr);
    // keep reals syntactically real so re-parsing preserves the literal kind
    if (s.find('.') == std::string::npos && s.find('e') == std::string::npos &&
        s.find("inf") == std::string::npos && s.find("nan") == std::string::npos)
        s += ".0";
    return s;
}

std::string quote_string(const std::string& s) {
    std::string out = "'";
    for (char c : s) {
        out += c;
        if (c == '\'') out += '\'';
    }
    out += "'";
    return out;
}

bool negative_headed(const ValueExprPtr& e) {
    if (e->kind == ValueKind::int_lit) return e->int_value < 0;
    if (e->kind == ValueKind::real_lit) return e->real_value < 0;
    if (e->kind == ValueKind::mul) return negative_headed(e->lhs);
    return false;
}

// Inverse of the parser's negate(): strips one leading minus sign.
ValueExprPtr positivize(const ValueExprPtr& e) {
    if (e->kind == ValueKind::int_lit) return vint(-e->int_value);
    if (e->kind == ValueKind::real_lit) return vreal(-e->real_value);
    if (e->kind == ValueKind::mul) {
        if (e->lhs->kind == ValueKind::int_lit && e->lhs->int_value == -1) return e->rhs;
        return vmul(positivize(e->lhs), e->rhs);
    }
    throw Error(ErrorCode::internal, "positivize over non-negative expression");
}

// precedence: additive 1, multiplicative 2, atoms 3
int precedence(const ValueExprPtr& e) {
    switch (e->kind) {
        case ValueKind::add: return 1;
        case ValueKind::mul:
        case ValueKind::div: return 2;
        default: return 3;
    }
}

struct ExprEmitter {
    Dialect dialect;

    std::string mod_text(const std::string& lhs, int64_t n) const {
        if (dialect == Dialect::postgres) return lhs + " % " + std::to_string(n);
        return "MOD(" + lhs + ", " + std::to_string(n) + ")";
    }

    std::string emit(const ValueExprPtr& e, int parent_prec) const {
        std::string out = raw(e);
        if (precedence(e) < parent_prec) return "(" + out + ")";
        return out;
    }

    // division prints both compound operands parenthesized: (a*b)/(c+d)
    std::string div_operand(const ValueExprPtr& e) const {
        if (precedence(e) >= 3) return raw(e);
        return "(" + raw(e) + ")";
    }

    std::string raw(const ValueExprPtr& e) const {
        switch (e->kind) {
            case ValueKind::column: return e->column;
            case ValueKind::int_lit: return std::to_string(e->int_value);
            case ValueKind::real_lit: return real_text(e->real_value);
            case ValueKind::string_lit: return quote_string(e->string_value);
            case ValueKind::rand_uniform: return "RANDOM()";
            case ValueKind::rand_int:
                return "FLOOR(RANDOM()*" + std::to_string(e->int_value) + ")";
            case ValueKind::row_mod: return mod_text("ROW_NUMBER() OVER ()", e->int_value);
            case ValueKind::add: {
                std::string lhs = emit(e->lhs, 1);
                if (negative_headed(e->rhs)) return lhs + "-" + emit(positivize(e->rhs), 2);
                return lhs + "+" + emit(e->rhs, 2);
            }
            case ValueKind::mul: return emit(e->lhs, 2) + "*" + emit(e->rhs, 3);
            case ValueKind::div: return div_operand(e->lhs) + "/" + div_operand(e->rhs);
            case ValueKind::ln: return "LN(" + emit(e->lhs, 0) + ")";
            case ValueKind::abs: return "ABS(" + emit(e->lhs, 0) + ")";
            case ValueKind::sign: return "SIGN(" + emit(e->lhs, 0) + ")";
            case ValueKind::coalesce:
                return "CASE WHEN " + emit(e->lhs, 0) + " IS NULL THEN " + emit(e->rhs, 0) +
                       " ELSE " + emit(e->lhs, 0) + " END";
        }
        throw Error(ErrorCode::internal, "unhandled value kind");
    }
};

class SqlEmitter {
public:
    SqlEmitter(Dialect dialect, const Catalog& catalog)
        : dialect_(dialect), catalog_(catalog), expr_{dialect} {}

    std::string emit_query(const RelExprPtr& root) {
        std::string final_block = render_block(root);
        if (ctes_.empty()) return final_block;
        std::string out = "WITH ";
        for (size_t i = 0; i < ctes_.size(); ++i) {
            if (i) out += ",\n     ";
            out += ctes_[i].first + " AS (" + ctes_[i].second + ")";
        }
        out += "\n" + final_block;
        return out;
    }

private:
    Dialect dialect_;
    const Catalog& catalog_;
    ExprEmitter expr_;
    std::vector<std::pair<std::string, std::string>> ctes_;
    std::map<const RelExpr*, std::string> cte_for_node_;
    std::set<std::string> used_aliases_;
    int next_block_ = 1;

    std::string fresh_alias(const std::string& hint) {
        std::string base = hint.empty() ? ("chorus_q" + std::to_string(next_block_++)) : hint;
        std::string alias = base;
        int suffix = 2;
        while (!used_aliases_.insert(alias).second) alias = base + "_" + std::to_string(suffix++);
        return alias;
    }

    // Returns a name usable in a FROM clause, creating a CTE when needed.
    // A subtree shared by several parents (wpinq norms read the same
    // weighted relation the join reads) gets one CTE.
    std::string source_ref(const RelExprPtr& e) {
        if (const auto* t = e->as<TableRef>()) return t->name;
        auto seen = cte_for_node_.find(e.get());
        if (seen != cte_for_node_.end()) return seen->second;
        std::string sql = render_block(e);
        std::string alias = fresh_alias(e->alias_hint);
        ctes_.emplace_back(alias, sql);
        cte_for_node_.emplace(e.get(), alias);
        return alias;
    }

    std::string join_from(const RelExprPtr& e) {
        const auto* j = e->as<Join>();
        if (!j) return source_ref(e);
        std::string left = j->left->is<Join>() ? join_from(j->left) : source_ref(j->left);
        std::string right = source_ref(j->right);
        const char* kw = j->kind == JoinKind::inner ? " JOIN " : " RIGHT JOIN ";
        return left + kw + right + " ON " + j->left_key + " = " + j->right_key;
    }

    std::string predicate_text(const Predicate& p) {
        std::string op = cmp_op_symbol(p.op);
        return expr_.emit(p.lhs, 1) + " " + op + " " + expr_.emit(p.rhs, 1);
    }

    // A projection that only passes through or renames an aggregation's
    // outputs fuses into the aggregate's SELECT via aliases.
    static bool renames_aggregate(const Projection& p, std::vector<std::string>* aliases) {
        const auto* a = p.input->as<Aggregate>();
        if (!a) return false;
        std::vector<std::string> names = a->group_by;
        names.push_back(aggregate_output_name(*a));
        if (p.attrs.size() != names.size()) return false;
        for (size_t i = 0; i < p.attrs.size(); ++i) {
            const auto& attr = p.attrs[i];
            std::string source = attr.is_binding()
                                     ? (attr.value->kind == ValueKind::column ? attr.value->column
                                                                              : std::string())
                                     : attr.name;
            if (source != names[i]) return false;
            aliases->push_back(attr.name);
        }
        return true;
    }

    // Renders one SELECT block: [aggregate | projection]? selection* source.
    std::string render_block(const RelExprPtr& e) {
        const RelExprPtr* cursor = &e;
        const Aggregate* agg = nullptr;
        const Projection* proj = nullptr;
        std::vector<std::string> agg_aliases;
        if (const auto* a = (*cursor)->as<Aggregate>()) {
            agg = a;
            cursor = &a->input;
        } else if (const auto* p = (*cursor)->as<Projection>()) {
            if (renames_aggregate(*p, &agg_aliases)) {
                agg = p->input->as<Aggregate>();
                cursor = &agg->input;
            } else {
                proj = p;
                cursor = &p->input;
            }
        }
        std::vector<const Selection*> sels;
        while (const auto* s = (*cursor)->as<Selection>()) {
            sels.push_back(s);
            cursor = &s->input;
        }
        const RelExprPtr& src = *cursor;

        std::string from = src->is<Join>() ? join_from(src) : source_ref(src);

        std::string select_list;
        if (agg) {
            std::vector<std::string> names = agg->group_by;
            names.push_back(aggregate_output_name(*agg));
            if (agg_aliases.empty()) agg_aliases = names;
            for (size_t i = 0; i < agg->group_by.size(); ++i) {
                select_list += agg->group_by[i];
                if (agg_aliases[i] != agg->group_by[i]) select_list += " AS " + agg_aliases[i];
                select_list += ", ";
            }
            std::string fn;
            switch (agg->kind) {
                case AggKind::count:
                    fn = agg->distinct ? "COUNT(DISTINCT " + agg->column + ")" : "COUNT(*)";
                    break;
                case AggKind::sum: fn = "SUM(" + agg->column + ")"; break;
                case AggKind::avg: fn = "AVG(" + agg->column + ")"; break;
                case AggKind::median: fn = "MEDIAN(" + agg->column + ")"; break;
            }
            select_list += fn + " AS " + agg_aliases.back();
        } else if (proj) {
            select_list = projection_list(*proj);
        } else {
            select_list = "*";
        }

        std::string sql = "SELECT " + select_list + " FROM " + from;
        if (!sels.empty()) {
            sql += " WHERE ";
            // selections were applied innermost-first; print in source order
            for (size_t i = sels.size(); i-- > 0;) {
                sql += predicate_text(sels[i]->pred);
                if (i) sql += " AND ";
            }
        }
        if (agg && !agg->group_by.empty()) {
            sql += " GROUP BY ";
            for (size_t i = 0; i < agg->group_by.size(); ++i) {
                if (i) sql += ", ";
                sql += agg->group_by[i];
            }
        }
        return sql;
    }

    std::string projection_list(const Projection& proj) {
        // star contraction: a leading run of plain columns matching the
        // input schema exactly prints as *
        size_t star_len = 0;
        try {
            Schema in = schema_of(proj.input, catalog_);
            if (proj.attrs.size() >= in.size()) {
                bool match = true;
                for (size_t i = 0; i < in.size(); ++i) {
                    if (proj.attrs[i].is_binding() || proj.attrs[i].name != in.attributes[i].name) {
                        match = false;
                        break;
                    }
                }
                if (match) star_len = in.size();
            }
        } catch (const Error&) {
            star_len = 0;  // schema unavailable; print columns explicitly
        }
        std::string out;
        size_t i = 0;
        if (star_len > 0) {
            out = "*";
            i = star_len;
            if (i < proj.attrs.size()) out += ", ";
        }
        for (; i < proj.attrs.size(); ++i) {
            const auto& attr = proj.attrs[i];
            if (attr.is_binding()) {
                // identity renames print as plain columns
                if (attr.value->kind == ValueKind::column && attr.value->column == attr.name)
                    out += attr.name;
                else
                    out += expr_.emit(attr.value, 0) + " AS " + attr.name;
            } else {
                out += attr.name;
            }
            if (i + 1 < proj.attrs.size()) out += ", ";
        }
        return out;
    }
};

} // namespace

SqlText emit_sql(const QueryExpr& q, Dialect dialect, const Catalog& catalog) {
    SqlEmitter emitter(dialect, catalog);
    return SqlText{emitter.emit_query(q.root), dialect};
}

std::string canonical_sql(const QueryExpr& q, const Catalog& catalog) {
    return emit_sql(q, Dialect::ansi, catalog).text;
}

} // namespace chorus
