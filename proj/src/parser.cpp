#include <algorithm>
#include <cctype>
#include <map>
#include <optional>
#include <vector>

#include "chorus/errors.hpp"
#include "chorus/sql.hpp"

namespace chorus {

Dialect dialect_from_name(const std::string& name) {
    if (name == "ansi") return Dialect::ansi;
    if (name == "postgres") return Dialect::postgres;
    throw Error(ErrorCode::unsupported_feature, "unknown dialect " + name);
}

const char* dialect_name(Dialect d) {
    return d == Dialect::ansi ? "ansi" : "postgres";
}

namespace {

enum class Tok { ident, integer, real, string, punct, end };

struct Token {
    Tok kind = Tok::end;
    std::string text;   // raw text (identifiers keep their case)
    std::string upper;  // uppercased, for keyword checks
    size_t pos = 0;
};

[[noreturn]] void fail(size_t pos, const std::string& msg) {
    throw Error(ErrorCode::parse_error, "at position " + std::to_string(pos) + ": " + msg);
}

[[noreturn]] void unsupported(const std::string& feature) {
    throw Error(ErrorCode::unsupported_feature, feature);
}

std::vector<Token> lex(const std::string& text) {
    std::vector<Token> out;
    size_t i = 0;
    auto push = [&](Tok kind, size_t start, std::string t) {
        Token tok{kind, t, t, start};
        std::transform(tok.upper.begin(), tok.upper.end(), tok.upper.begin(),
                       [](unsigned char c) { return std::toupper(c); });
        out.push_back(std::move(tok));
    };
    while (i < text.size()) {
        char c = text[i];
        if (std::isspace(static_cast<unsigned char>(c))) {
            ++i;
            continue;
        }
        size_t start = i;
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            size_t j = i;
            while (j < text.size() &&
                   (std::isalnum(static_cast<unsigned char>(text[j])) || text[j] == '_'))
                ++j;
            push(Tok::ident, start, text.substr(i, j - i));
            i = j;
        } else if (std::isdigit(static_cast<unsigned char>(c))) {
            size_t j = i;
            bool is_real = false;
            while (j < text.size() && std::isdigit(static_cast<unsigned char>(text[j]))) ++j;
            if (j < text.size() && text[j] == '.') {
                is_real = true;
                ++j;
                while (j < text.size() && std::isdigit(static_cast<unsigned char>(text[j]))) ++j;
            }
            if (j < text.size() && (text[j] == 'e' || text[j] == 'E')) {
                is_real = true;
                ++j;
                if (j < text.size() && (text[j] == '+' || text[j] == '-')) ++j;
                while (j < text.size() && std::isdigit(static_cast<unsigned char>(text[j]))) ++j;
            }
            push(is_real ? Tok::real : Tok::integer, start, text.substr(i, j - i));
            i = j;
        } else if (c == '\'') {
            std::string s;
            size_t j = i + 1;
            while (true) {
                if (j >= text.size()) fail(start, "unterminated string literal");
                if (text[j] == '\'') {
                    if (j + 1 < text.size() && text[j + 1] == '\'') {
                        s += '\'';
                        j += 2;
                    } else {
                        ++j;
                        break;
                    }
                } else {
                    s += text[j];
                    ++j;
                }
            }
            out.push_back(Token{Tok::string, s, s, start});
            i = j;
        } else {
            static const char* two_char[] = {"<>", "!=", "<=", ">="};
            bool matched = false;
            for (const char* op : two_char) {
                if (text.compare(i, 2, op) == 0) {
                    push(Tok::punct, start, op);
                    i += 2;
                    matched = true;
                    break;
                }
            }
            if (matched) continue;
            static const std::string singles = "(),.*=<>+-/%";
            if (singles.find(c) == std::string::npos)
                fail(start, std::string("unexpected character '") + c + "'");
            push(Tok::punct, start, std::string(1, c));
            ++i;
        }
    }
    out.push_back(Token{Tok::end, "", "", text.size()});
    return out;
}

// Constructs outside the subset, rejected by name wherever they could start.
const char* kRejected[] = {"ORDER", "LIMIT",     "HAVING",  "OFFSET", "UNION",
                           "EXCEPT", "INTERSECT", "LEFT",    "FULL",   "OUTER",
                           "CROSS",  "OR",        "NOT",     "IN",     "LIKE",
                           "BETWEEN", "EXISTS"};

struct FromItem {
    std::string name;  // qualifier: alias if given, else table/cte name
    RelExprPtr rel;
    Schema schema;
};

struct SelectItem {
    bool is_aggregate = false;
    bool is_star = false;
    std::string alias;
    size_t pos = 0;
    size_t raw_start = 0, raw_end = 0;  // token range of a value expression
    AggKind agg_kind = AggKind::count;
    std::string agg_column;
    bool agg_distinct = false;
};

class Parser {
public:
    Parser(const std::string& text, const Catalog& catalog)
        : tokens_(lex(text)), catalog_(catalog) {}

    QueryExpr parse_query() {
        if (is_keyword("WITH")) {
            next();
            while (true) {
                Token name = expect_ident("WITH alias");
                if (ctes_.count(name.text)) fail(name.pos, "duplicate WITH alias " + name.text);
                expect_keyword("AS");
                expect_punct("(");
                RelExprPtr body = parse_select();
                expect_punct(")");
                ctes_.emplace(name.text, body);
                if (accept_punct(",")) continue;
                break;
            }
        }
        RelExprPtr root = parse_select();
        if (peek().kind != Tok::end) fail(peek().pos, "trailing input after query");
        if (!outermost_aggregate(root))
            unsupported("raw-rows: the top-level query must be an aggregation");
        return QueryExpr::make(root);
    }

private:
    std::vector<Token> tokens_;
    size_t cursor_ = 0;
    const Catalog& catalog_;
    std::map<std::string, RelExprPtr> ctes_;

    const Token& peek(size_t ahead = 0) const {
        size_t i = std::min(cursor_ + ahead, tokens_.size() - 1);
        return tokens_[i];
    }
    Token next() {
        const Token& t = tokens_[std::min(cursor_, tokens_.size() - 1)];
        if (cursor_ < tokens_.size() - 1) ++cursor_;
        return t;
    }

    bool is_keyword(const std::string& kw, size_t ahead = 0) const {
        return peek(ahead).kind == Tok::ident && peek(ahead).upper == kw;
    }
    bool accept_keyword(const std::string& kw) {
        if (is_keyword(kw)) {
            next();
            return true;
        }
        return false;
    }
    void expect_keyword(const std::string& kw) {
        if (!accept_keyword(kw)) fail(peek().pos, "expected " + kw);
    }
    Token expect_ident(const std::string& what) {
        if (peek().kind != Tok::ident) fail(peek().pos, "expected " + what);
        return next();
    }
    void expect_punct(const std::string& p) {
        if (peek().kind != Tok::punct || peek().text != p)
            fail(peek().pos, "expected \"" + p + "\"");
        next();
    }
    bool accept_punct(const std::string& p) {
        if (peek().kind == Tok::punct && peek().text == p) {
            next();
            return true;
        }
        return false;
    }

    void check_rejected(const Token& t) {
        for (const char* kw : kRejected)
            if (t.upper == kw) unsupported(std::string(kw) + " is outside the supported subset");
    }

    static bool reserved(const std::string& upper) {
        static const char* kw[] = {"SELECT", "FROM",  "WHERE", "GROUP", "BY",    "AS",
                                   "JOIN",   "ON",    "AND",   "WITH",  "INNER", "ORDER",
                                   "LIMIT",  "HAVING", "UNION", "RIGHT", "LEFT",  "FULL",
                                   "OUTER",  "CROSS",  "OR",    "NOT"};
        for (const char* k : kw)
            if (upper == k) return true;
        return false;
    }

    // ---- scope ----

    struct Scope {
        std::vector<FromItem> items;
        const FromItem* by_qualifier(const std::string& q) const {
            for (const auto& it : items)
                if (it.name == q) return &it;
            return nullptr;
        }
    };

    std::string resolve_column(const Scope& scope, const std::string& qualifier,
                               const std::string& column, size_t pos) const {
        if (!qualifier.empty()) {
            const FromItem* item = scope.by_qualifier(qualifier);
            if (!item) fail(pos, "unknown table or alias " + qualifier);
            if (!item->schema.has(column)) fail(pos, qualifier + " has no column " + column);
            return column;
        }
        int hits = 0;
        for (const auto& it : scope.items)
            if (it.schema.has(column)) ++hits;
        if (hits == 0) fail(pos, "unknown column " + column);
        if (hits > 1) fail(pos, "ambiguous column " + column + "; qualify it");
        return column;
    }

    int item_of_column(const Scope& scope, const std::string& qualifier,
                       const std::string& column) const {
        for (size_t i = 0; i < scope.items.size(); ++i) {
            if (!qualifier.empty()) {
                if (scope.items[i].name == qualifier) return static_cast<int>(i);
            } else if (scope.items[i].schema.has(column)) {
                return static_cast<int>(i);
            }
        }
        return -1;
    }

    // ---- expressions ----

    struct ColRef {
        std::string qualifier, column;
        size_t pos = 0;
    };

    ColRef parse_colref() {
        Token first = expect_ident("column name");
        check_rejected(first);
        if (accept_punct(".")) {
            Token second = expect_ident("column name after \".\"");
            return {first.text, second.text, first.pos};
        }
        return {"", first.text, first.pos};
    }

    // A lone identifier (possibly dotted) not spelling a function call.
    bool looks_like_colref() const {
        const Token& t = peek();
        if (t.kind != Tok::ident || reserved(t.upper)) return false;
        static const char* fns[] = {"RANDOM", "RAND",  "ROW_NUMBER", "MOD",   "LN",
                                    "ABS",    "SIGN",  "FLOOR",      "COALESCE", "CASE",
                                    "COUNT",  "SUM",   "AVG",        "MEDIAN"};
        for (const char* f : fns)
            if (t.upper == f) return false;
        return true;
    }

    ValueExprPtr negate(const ValueExprPtr& e) {
        if (e->kind == ValueKind::int_lit) return vint(-e->int_value);
        if (e->kind == ValueKind::real_lit) return vreal(-e->real_value);
        if (e->kind == ValueKind::mul) return vmul(negate(e->lhs), e->rhs);
        return vmul(vint(-1), e);
    }

    ValueExprPtr fold_row_mod(const ValueExprPtr& lhs, const ValueExprPtr& rhs, size_t pos) {
        // modulus 0 marks a bare ROW_NUMBER() awaiting its modulus
        if (lhs->kind == ValueKind::row_mod && lhs->int_value == 0 &&
            rhs->kind == ValueKind::int_lit && rhs->int_value > 0)
            return vrow_mod(rhs->int_value);
        fail(pos, "modulo is supported only as ROW_NUMBER() OVER () mod <n>");
    }

    ValueExprPtr parse_expr(const Scope& scope) { return parse_additive(scope); }

    ValueExprPtr parse_additive(const Scope& scope) {
        ValueExprPtr lhs = parse_multiplicative(scope);
        while (true) {
            if (accept_punct("+")) lhs = vadd(lhs, parse_multiplicative(scope));
            else if (accept_punct("-")) lhs = vadd(lhs, negate(parse_multiplicative(scope)));
            else return lhs;
        }
    }

    ValueExprPtr parse_multiplicative(const Scope& scope) {
        ValueExprPtr lhs = parse_unary(scope);
        while (true) {
            if (accept_punct("*")) {
                lhs = vmul(lhs, parse_unary(scope));
            } else if (accept_punct("/")) {
                lhs = vdiv(lhs, parse_unary(scope));
            } else if (peek().kind == Tok::punct && peek().text == "%") {
                size_t pos = peek().pos;
                next();
                lhs = fold_row_mod(lhs, parse_unary(scope), pos);
            } else {
                return lhs;
            }
        }
    }

    ValueExprPtr parse_unary(const Scope& scope) {
        if (accept_punct("-")) return negate(parse_unary(scope));
        return parse_primary(scope);
    }

    ValueExprPtr parse_primary(const Scope& scope) {
        const Token& t = peek();
        if (t.kind == Tok::integer) return vint(std::stoll(next().text));
        if (t.kind == Tok::real) return vreal(std::stod(next().text));
        if (t.kind == Tok::string) return vstring(next().text);
        if (accept_punct("(")) {
            ValueExprPtr e = parse_expr(scope);
            expect_punct(")");
            return e;
        }
        if (t.kind != Tok::ident) fail(t.pos, "expected an expression");
        check_rejected(t);
        if (t.upper == "RANDOM" || t.upper == "RAND") {
            next();
            expect_punct("(");
            expect_punct(")");
            return vrand();
        }
        if (t.upper == "ROW_NUMBER") {
            next();
            expect_punct("(");
            expect_punct(")");
            expect_keyword("OVER");
            expect_punct("(");
            expect_punct(")");
            ValueExpr v{ValueKind::row_mod, {}, 0, 0.0, {}, nullptr, nullptr};
            return std::make_shared<ValueExpr>(std::move(v));
        }
        if (t.upper == "MOD") {
            size_t pos = t.pos;
            next();
            expect_punct("(");
            ValueExprPtr a = parse_expr(scope);
            expect_punct(",");
            ValueExprPtr b = parse_expr(scope);
            expect_punct(")");
            return fold_row_mod(a, b, pos);
        }
        if (t.upper == "LN" || t.upper == "ABS" || t.upper == "SIGN") {
            std::string fn = t.upper;
            next();
            expect_punct("(");
            ValueExprPtr a = parse_expr(scope);
            expect_punct(")");
            if (fn == "LN") return vln(a);
            if (fn == "ABS") return vabs(a);
            return vsign(a);
        }
        if (t.upper == "FLOOR") {
            size_t pos = t.pos;
            next();
            expect_punct("(");
            ValueExprPtr a = parse_expr(scope);
            expect_punct(")");
            if (a->kind == ValueKind::mul && a->lhs->kind == ValueKind::rand_uniform &&
                a->rhs->kind == ValueKind::int_lit && a->rhs->int_value > 0)
                return vrand_int(a->rhs->int_value);
            fail(pos, "FLOOR is supported only as FLOOR(RANDOM()*<n>)");
        }
        if (t.upper == "COALESCE") {
            next();
            expect_punct("(");
            ValueExprPtr a = parse_expr(scope);
            expect_punct(",");
            ValueExprPtr b = parse_expr(scope);
            expect_punct(")");
            return vcoalesce(a, b);
        }
        if (t.upper == "CASE") {
            size_t pos = t.pos;
            next();
            expect_keyword("WHEN");
            ValueExprPtr probe = parse_expr(scope);
            expect_keyword("IS");
            expect_keyword("NULL");
            expect_keyword("THEN");
            ValueExprPtr dflt = parse_expr(scope);
            expect_keyword("ELSE");
            ValueExprPtr other = parse_expr(scope);
            expect_keyword("END");
            if (!value_expr_equal(probe, other))
                fail(pos, "only CASE WHEN x IS NULL THEN d ELSE x END is supported");
            return vcoalesce(probe, dflt);
        }
        if (t.upper == "COUNT" || t.upper == "SUM" || t.upper == "AVG" || t.upper == "MEDIAN")
            fail(t.pos, "aggregate not allowed inside an expression");
        ColRef ref = parse_colref();
        return vcolumn(resolve_column(scope, ref.qualifier, ref.column, ref.pos));
    }

    CmpOp parse_cmp_op() {
        const Token& t = peek();
        if (t.kind != Tok::punct) fail(t.pos, "expected a comparison operator");
        std::string op = next().text;
        if (op == "<") return CmpOp::lt;
        if (op == "<=") return CmpOp::le;
        if (op == "=") return CmpOp::eq;
        if (op == "<>" || op == "!=") return CmpOp::ne;
        if (op == ">=") return CmpOp::ge;
        if (op == ">") return CmpOp::gt;
        fail(t.pos, "expected a comparison operator, got \"" + op + "\"");
    }

    bool next_is_cmp_op() const {
        const Token& t = peek();
        if (t.kind != Tok::punct) return false;
        return t.text == "<" || t.text == "<=" || t.text == "=" || t.text == "<>" ||
               t.text == "!=" || t.text == ">=" || t.text == ">";
    }

    // ---- comparisons (WHERE / ON) ----

    struct RawComparison {
        std::optional<ColRef> lhs_col, rhs_col;  // set when that side is a bare column
        int lhs_item = -1, rhs_item = -1;
        ValueExprPtr lhs, rhs;
        CmpOp op = CmpOp::eq;
        size_t pos = 0;
    };

    RawComparison parse_comparison(const Scope& scope) {
        RawComparison cmp;
        cmp.pos = peek().pos;
        // Bare column refs are remembered so equality conditions between two
        // tables can be promoted to equijoin keys.
        if (looks_like_colref()) {
            size_t save = cursor_;
            ColRef ref = parse_colref();
            if (next_is_cmp_op()) {
                cmp.lhs_col = ref;
                cmp.lhs = vcolumn(resolve_column(scope, ref.qualifier, ref.column, ref.pos));
                cmp.lhs_item = item_of_column(scope, ref.qualifier, ref.column);
            } else {
                cursor_ = save;
                cmp.lhs = parse_expr(scope);
            }
        } else {
            cmp.lhs = parse_expr(scope);
        }
        cmp.op = parse_cmp_op();
        if (looks_like_colref()) {
            size_t save = cursor_;
            ColRef ref = parse_colref();
            bool terminal = !(peek().kind == Tok::punct &&
                              (peek().text == "+" || peek().text == "-" || peek().text == "*" ||
                               peek().text == "/" || peek().text == "%"));
            if (terminal) {
                cmp.rhs_col = ref;
                cmp.rhs = vcolumn(resolve_column(scope, ref.qualifier, ref.column, ref.pos));
                cmp.rhs_item = item_of_column(scope, ref.qualifier, ref.column);
            } else {
                cursor_ = save;
                cmp.rhs = parse_expr(scope);
            }
        } else {
            cmp.rhs = parse_expr(scope);
        }
        return cmp;
    }

    // ---- FROM ----

    void parse_from_item(Scope& scope) {
        if (accept_punct("(")) {
            RelExprPtr sub = parse_select();
            expect_punct(")");
            std::string alias;
            if (peek().kind == Tok::ident && !reserved(peek().upper)) alias = next().text;
            if (alias.empty()) alias = "chorus_sub" + std::to_string(scope.items.size() + 1);
            scope.items.push_back({alias, sub, schema_of(sub, catalog_)});
            return;
        }
        Token name = expect_ident("table name");
        check_rejected(name);
        RelExprPtr rel;
        auto cte = ctes_.find(name.text);
        if (cte != ctes_.end()) rel = cte->second;
        else if (catalog_.table(name.text)) rel = rel_table(name.text);
        else throw Error(ErrorCode::unknown_table, name.text);
        std::string qualifier = name.text;
        if (peek().kind == Tok::ident && !reserved(peek().upper)) qualifier = next().text;
        scope.items.push_back({qualifier, rel, schema_of(rel, catalog_)});
    }

    RelExprPtr build_join_tree(const Scope& scope, const std::vector<RawComparison>& conds) {
        if (scope.items.size() == 1) {
            if (!conds.empty()) fail(conds[0].pos, "join condition without a second table");
            return scope.items[0].rel;
        }
        std::vector<bool> joined(scope.items.size(), false);
        std::vector<bool> used(conds.size(), false);
        joined[0] = true;
        RelExprPtr tree = scope.items[0].rel;
        size_t remaining = scope.items.size() - 1;
        while (remaining > 0) {
            bool progress = false;
            for (size_t c = 0; c < conds.size() && !progress; ++c) {
                if (used[c]) continue;
                const auto& cond = conds[c];
                int li = cond.lhs_item, ri = cond.rhs_item;
                if (li < 0 || ri < 0) continue;
                if (joined[li] && !joined[ri]) {
                    tree = rel_join(tree, scope.items[ri].rel, cond.lhs_col->column,
                                    cond.rhs_col->column);
                    joined[ri] = true;
                } else if (joined[ri] && !joined[li]) {
                    tree = rel_join(tree, scope.items[li].rel, cond.rhs_col->column,
                                    cond.lhs_col->column);
                    joined[li] = true;
                } else {
                    continue;
                }
                used[c] = true;
                progress = true;
                --remaining;
            }
            if (!progress)
                unsupported("tables without a connecting equijoin condition (cartesian product)");
        }
        for (size_t c = 0; c < conds.size(); ++c)
            if (!used[c])
                fail(conds[c].pos, "redundant join condition between already-joined tables");
        return tree;
    }

    // ---- SELECT ----

    SelectItem parse_select_item() {
        SelectItem item;
        item.pos = peek().pos;
        if (accept_punct("*")) {
            item.is_star = true;
            return item;
        }
        const Token& t = peek();
        if (t.kind == Tok::ident &&
            (t.upper == "COUNT" || t.upper == "SUM" || t.upper == "AVG" || t.upper == "MEDIAN")) {
            item.is_aggregate = true;
            std::string fn = t.upper;
            next();
            expect_punct("(");
            if (accept_keyword("DISTINCT")) item.agg_distinct = true;
            if (fn == "COUNT") {
                item.agg_kind = AggKind::count;
                if (accept_punct("*")) {
                    if (item.agg_distinct) fail(t.pos, "COUNT(DISTINCT *) is not meaningful");
                } else {
                    ColRef ref = parse_colref();
                    item.agg_column = ref.column;
                    if (!item.agg_distinct)
                        unsupported("COUNT(column): use COUNT(*) or COUNT(DISTINCT column)");
                }
            } else {
                if (item.agg_distinct) unsupported("DISTINCT inside " + fn);
                item.agg_kind =
                    fn == "SUM" ? AggKind::sum : (fn == "AVG" ? AggKind::avg : AggKind::median);
                ColRef ref = parse_colref();
                item.agg_column = ref.column;
            }
            expect_punct(")");
        } else {
            // scope is unknown until FROM is read; remember the token range
            item.raw_start = cursor_;
            skip_expression_tokens();
            item.raw_end = cursor_;
        }
        if (accept_keyword("AS")) item.alias = expect_ident("alias").text;
        return item;
    }

    void skip_expression_tokens() {
        int depth = 0;
        size_t start = cursor_;
        while (true) {
            const Token& t = peek();
            if (t.kind == Tok::end) break;
            if (t.kind == Tok::punct) {
                if (t.text == "(") ++depth;
                else if (t.text == ")") {
                    if (depth == 0) break;
                    --depth;
                } else if (t.text == "," && depth == 0) {
                    break;
                }
            }
            if (t.kind == Tok::ident && depth == 0 && (t.upper == "FROM" || t.upper == "AS")) break;
            next();
        }
        if (cursor_ == start) fail(peek().pos, "expected an expression");
    }

    ValueExprPtr reparse_item_expr(const SelectItem& item, const Scope& scope) {
        size_t save = cursor_;
        cursor_ = item.raw_start;
        ValueExprPtr e = parse_expr(scope);
        if (cursor_ != item.raw_end) fail(peek().pos, "could not parse select item");
        cursor_ = save;
        return e;
    }

    RelExprPtr parse_select() {
        expect_keyword("SELECT");
        if (is_keyword("DISTINCT")) unsupported("SELECT DISTINCT is outside the supported subset");

        std::vector<SelectItem> items;
        while (true) {
            items.push_back(parse_select_item());
            if (!accept_punct(",")) break;
        }

        expect_keyword("FROM");
        Scope scope;
        parse_from_item(scope);
        std::vector<RawComparison> join_conds;
        while (true) {
            if (accept_punct(",")) {
                parse_from_item(scope);
                continue;
            }
            if (is_keyword("INNER")) {
                next();
                expect_keyword("JOIN");
            } else if (is_keyword("JOIN")) {
                next();
            } else if (is_keyword("LEFT") || is_keyword("RIGHT") || is_keyword("FULL") ||
                       is_keyword("CROSS") || is_keyword("OUTER")) {
                unsupported("only inner equijoins are supported");
            } else {
                break;
            }
            parse_from_item(scope);
            expect_keyword("ON");
            RawComparison cond = parse_comparison(scope);
            if (cond.op != CmpOp::eq || !cond.lhs_col || !cond.rhs_col)
                fail(cond.pos, "JOIN condition must be an equality of two columns");
            join_conds.push_back(cond);
        }

        std::vector<RawComparison> filters;
        if (accept_keyword("WHERE")) {
            while (true) {
                RawComparison cmp = parse_comparison(scope);
                bool is_join_cond = cmp.op == CmpOp::eq && cmp.lhs_col && cmp.rhs_col &&
                                    cmp.lhs_item >= 0 && cmp.rhs_item >= 0 &&
                                    cmp.lhs_item != cmp.rhs_item;
                if (is_join_cond && scope.items.size() > 1) join_conds.push_back(cmp);
                else filters.push_back(cmp);
                if (!accept_keyword("AND")) break;
            }
        }

        std::vector<std::string> group_by;
        if (accept_keyword("GROUP")) {
            expect_keyword("BY");
            while (true) {
                ColRef ref = parse_colref();
                group_by.push_back(resolve_column(scope, ref.qualifier, ref.column, ref.pos));
                if (!accept_punct(",")) break;
            }
        }
        if (peek().kind == Tok::ident) check_rejected(peek());

        RelExprPtr rel = build_join_tree(scope, join_conds);
        for (const auto& f : filters) rel = rel_select(Predicate{f.lhs, f.op, f.rhs}, rel);
        return apply_select_list(rel, scope, items, group_by);
    }

    RelExprPtr apply_select_list(RelExprPtr rel, const Scope& scope,
                                 const std::vector<SelectItem>& items,
                                 const std::vector<std::string>& group_by) {
        Schema flat = schema_of(rel, catalog_);
        size_t agg_count = 0;
        for (const auto& it : items) agg_count += it.is_aggregate ? 1 : 0;
        if (agg_count > 1) unsupported("multiple aggregation functions in one query");

        if (agg_count == 0) {
            if (!group_by.empty()) unsupported("GROUP BY without an aggregate");
            std::vector<AttrExpr> attrs;
            bool all_star = items.size() == 1 && items[0].is_star;
            for (const auto& it : items) {
                if (it.is_star) {
                    for (const auto& a : flat.attributes) attrs.push_back(AttrExpr::col(a.name));
                    continue;
                }
                ValueExprPtr e = reparse_item_expr(it, scope);
                if (e->kind == ValueKind::column && (it.alias.empty() || it.alias == e->column)) {
                    attrs.push_back(AttrExpr::col(e->column));
                } else {
                    if (it.alias.empty()) fail(it.pos, "computed select item needs an AS alias");
                    attrs.push_back(AttrExpr::bind(it.alias, e));
                }
            }
            if (all_star) return rel;  // SELECT * adds nothing
            return rel_project(std::move(attrs), rel);
        }

        // one aggregate: plain columns must equal the GROUP BY list, in order
        std::vector<std::string> plain;
        const SelectItem* agg_item = nullptr;
        for (const auto& it : items) {
            if (it.is_star) unsupported("* mixed with an aggregate");
            if (it.is_aggregate) {
                agg_item = &it;
                continue;
            }
            if (agg_item) unsupported("grouping columns must precede the aggregate");
            ValueExprPtr e = reparse_item_expr(it, scope);
            if (e->kind != ValueKind::column || (!it.alias.empty() && it.alias != e->column))
                unsupported("non-column select item alongside an aggregate");
            plain.push_back(e->column);
        }
        if (plain != group_by)
            unsupported("selected columns must match GROUP BY columns in order");

        std::string column = agg_item->agg_column;
        if (!column.empty()) column = resolve_column(scope, "", column, agg_item->pos);
        if (!agg_item->alias.empty()) {
            std::string canonical =
                agg_item->agg_kind == AggKind::count
                    ? "count"
                    : std::string(agg_kind_name(agg_item->agg_kind)) + "_" + column;
            if (agg_item->alias != canonical)
                unsupported("aggregate alias \"" + agg_item->alias + "\" (canonical name is " +
                            canonical + ")");
        }
        return rel_aggregate(agg_item->agg_kind, column, rel, group_by, agg_item->agg_distinct);
    }
};

} // namespace

QueryExpr parse_sql(const std::string& text, Dialect, const Catalog& catalog) {
    Parser p(text, catalog);
    return p.parse_query();
}

} // namespace chorus
