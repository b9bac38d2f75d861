#pragma once

#include <cctype>
#include <charconv>
#include <map>
#include <set>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <variant>
#include <vector>

#include "cep/error.hpp"
#include "cep/pattern.hpp"

namespace cep {

struct SourceSpan {
    std::size_t line = 1;
    std::size_t column = 1;
    std::size_t length = 1;  // >= 1
    bool operator==(const SourceSpan&) const = default;
};

class ParseError : public DataError {
public:
    ParseError(SourceSpan span, std::string message, std::vector<std::string> expected = {})
        : DataError(format(span, message, expected)),
          span_(span),
          message_(std::move(message)),
          expected_(std::move(expected)) {}

    [[nodiscard]] const SourceSpan& span() const noexcept { return span_; }
    [[nodiscard]] const std::string& message() const noexcept { return message_; }
    [[nodiscard]] const std::vector<std::string>& expected() const noexcept { return expected_; }

private:
    static std::string format(const SourceSpan& s, const std::string& msg, const std::vector<std::string>& exp) {
        std::string out = std::to_string(s.line) + ":" + std::to_string(s.column) + ": " + msg;
        if (!exp.empty()) {
            out += " (expected ";
            for (std::size_t i = 0; i < exp.size(); ++i) out += (i ? ", " : "") + exp[i];
            out += ")";
        }
        return out;
    }

    SourceSpan span_;
    std::string message_;
    std::vector<std::string> expected_;
};

/// Shortest decimal text that parses back to exactly `v`.
[[nodiscard]] inline std::string format_number(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

namespace detail {

enum class Tok { ident, number, string, symbol, end };

struct Token {
    Tok kind = Tok::end;
    std::string text;
    double number = 0.0;
    std::size_t offset = 0;
    std::size_t line = 1;
    std::size_t column = 1;
    std::size_t length = 1;
};

class Lexer {
public:
    explicit Lexer(std::string_view src) : src_(src) {}

    std::vector<Token> run() {
        std::vector<Token> out;
        for (;;) {
            skip_space();
            Token t;
            t.offset = pos_;
            t.line = line_;
            t.column = col_;
            if (pos_ >= src_.size()) {
                t.kind = Tok::end;
                t.length = 1;
                out.push_back(t);
                return out;
            }
            unsigned char c = static_cast<unsigned char>(src_[pos_]);
            if (std::isalpha(c) || c == '_') {
                while (pos_ < src_.size() && (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_'))
                    advance();
                t.kind = Tok::ident;
            } else if (std::isdigit(c) || (c == '.' && pos_ + 1 < src_.size() &&
                                            std::isdigit(static_cast<unsigned char>(src_[pos_ + 1])))) {
                lex_number(t);
            } else if (c == '"') {
                lex_string(t);
            } else {
                lex_symbol(t);
            }
            t.length = std::max<std::size_t>(1, pos_ - t.offset);
            if (t.kind != Tok::string) t.text = std::string(src_.substr(t.offset, pos_ - t.offset));
            out.push_back(t);
        }
    }

private:
    void advance() {
        if (src_[pos_] == '\n') {
            ++line_;
            col_ = 1;
        } else {
            ++col_;
        }
        ++pos_;
    }

    void skip_space() {
        while (pos_ < src_.size()) {
            char c = src_[pos_];
            if (c == '#') {
                while (pos_ < src_.size() && src_[pos_] != '\n') advance();
            } else if (std::isspace(static_cast<unsigned char>(c))) {
                advance();
            } else {
                break;
            }
        }
    }

    [[noreturn]] void fail(std::size_t line, std::size_t col, std::size_t len, const std::string& msg) {
        throw ParseError({line, col, std::max<std::size_t>(1, len)}, msg);
    }

    void lex_number(Token& t) {
        auto digits = [&] {
            while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) advance();
        };
        digits();
        if (pos_ < src_.size() && src_[pos_] == '.') {
            advance();
            digits();
        }
        if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
            std::size_t save_pos = pos_, save_col = col_;
            advance();
            if (pos_ < src_.size() && (src_[pos_] == '+' || src_[pos_] == '-')) advance();
            if (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) {
                digits();
            } else {
                pos_ = save_pos;  // `e` belongs to the next token
                col_ = save_col;
            }
        }
        std::string text(src_.substr(t.offset, pos_ - t.offset));
        double v = 0.0;
        auto res = std::from_chars(text.data(), text.data() + text.size(), v);
        if (res.ec != std::errc() || res.ptr != text.data() + text.size() || !std::isfinite(v))
            fail(t.line, t.column, text.size(), "malformed number '" + text + "'");
        t.kind = Tok::number;
        t.number = v;
    }

    void lex_string(Token& t) {
        advance();  // opening quote
        std::string value;
        for (;;) {
            if (pos_ >= src_.size() || src_[pos_] == '\n')
                fail(t.line, t.column, pos_ - t.offset, "unterminated string literal");
            char c = src_[pos_];
            if (c == '"') {
                advance();
                break;
            }
            if (c == '\\') {
                advance();
                if (pos_ >= src_.size()) fail(t.line, t.column, pos_ - t.offset, "unterminated string literal");
                char e = src_[pos_];
                if (e == 'n')
                    value += '\n';
                else if (e == 't')
                    value += '\t';
                else
                    value += e;
                advance();
                continue;
            }
            value += c;
            advance();
        }
        t.kind = Tok::string;
        t.text = std::move(value);
    }

    void lex_symbol(Token& t) {
        static constexpr std::string_view multi[] = {"<=", ">=", "!=", "<>", "==", "\xE2\x89\xA4", "\xE2\x89\xA5",
                                                     "\xE2\x89\xA0"};
        for (auto m : multi) {
            if (src_.substr(pos_, m.size()) == m) {
                for (std::size_t i = 0; i < m.size(); ++i) advance();
                if (m.size() == 3) col_ -= 2;  // one visible column per UTF-8 symbol
                t.kind = Tok::symbol;
                return;
            }
        }
        static constexpr std::string_view single = "(),.<>=+-";
        if (single.find(src_[pos_]) != std::string_view::npos) {
            advance();
            t.kind = Tok::symbol;
            return;
        }
        // Consume a whole UTF-8 sequence so the span covers one character.
        std::size_t len = 1;
        unsigned char c = static_cast<unsigned char>(src_[pos_]);
        if (c >= 0xF0) len = 4;
        else if (c >= 0xE0) len = 3;
        else if (c >= 0xC0) len = 2;
        len = std::min(len, src_.size() - pos_);
        fail(line_, col_, 1, "unexpected character '" + std::string(src_.substr(pos_, len)) + "'");
    }

    std::string_view src_;
    std::size_t pos_ = 0;
    std::size_t line_ = 1;
    std::size_t col_ = 1;
};

class Parser {
public:
    explicit Parser(std::string_view src) : src_(src), toks_(Lexer(src).run()) {}

    Pattern parse() {
        Pattern p;
        expect_ident("PATTERN");
        p.root = parse_operator(0);
        if (peek_ident("WHERE")) {
            next();
            parse_where(p);
        }
        expect_ident("WITHIN");
        const Token& w = expect_kind(Tok::number, "number");
        double unit = parse_unit();
        p.window = w.number * unit;
        if (peek_ident("STRATEGY")) {
            next();
            p.strategy = parse_strategy();
        }
        if (cur().kind != Tok::end) error(cur(), "unexpected trailing input", {"end of input"});
        resolve(p);
        return p;
    }

private:
    static constexpr std::size_t kMaxDepth = 200;

    struct PendingOperand {
        Operand operand;
        std::string alias;  // empty for literals
        Token at;
    };
    struct PendingPredicate {
        PendingOperand lhs;
        Comparator cmp;
        PendingOperand rhs;
    };

    const Token& cur() const { return toks_[i_]; }
    const Token& next() {
        const Token& t = toks_[i_];
        if (i_ + 1 < toks_.size()) ++i_;
        return t;
    }

    SourceSpan span_of(const Token& t) const {
        if (t.kind != Tok::end) return {t.line, t.column, t.length};
        // End of input: point at the last character, or 1:1 for empty input.
        if (i_ == 0 || toks_.size() < 2) return {1, 1, 1};
        const Token& prev = toks_[toks_.size() - 2];
        return {prev.line, prev.column + prev.length - 1, 1};
    }

    [[noreturn]] void error(const Token& t, const std::string& msg, std::vector<std::string> expected = {}) const {
        std::string found = t.kind == Tok::end ? "end of input" : "'" + t.text + "'";
        throw ParseError(span_of(t), msg + ", found " + found, std::move(expected));
    }

    bool peek_ident(std::string_view word) const { return cur().kind == Tok::ident && cur().text == word; }
    bool peek_symbol(std::string_view sym) const { return cur().kind == Tok::symbol && cur().text == sym; }

    void expect_ident(std::string_view word) {
        if (!peek_ident(word)) error(cur(), "expected " + std::string(word), {std::string(word)});
        next();
    }
    void expect_symbol(std::string_view sym) {
        if (!peek_symbol(sym)) error(cur(), "expected '" + std::string(sym) + "'", {"'" + std::string(sym) + "'"});
        next();
    }
    const Token& expect_kind(Tok k, const std::string& what) {
        if (cur().kind != k) error(cur(), "expected " + what, {what});
        return next();
    }

    PatternNode parse_operator(std::size_t depth) {
        if (depth > kMaxDepth) error(cur(), "pattern nested too deeply");
        const Token& kw = cur();
        NodeKind kind;
        if (peek_ident("SEQ"))
            kind = NodeKind::seq;
        else if (peek_ident("AND"))
            kind = NodeKind::conj;
        else if (peek_ident("OR"))
            kind = NodeKind::disj;
        else
            error(kw, "expected an operator", {"SEQ", "AND", "OR"});
        next();
        expect_symbol("(");
        std::vector<PatternNode> children;
        children.push_back(parse_item(depth + 1, false));
        while (peek_symbol(",")) {
            next();
            children.push_back(parse_item(depth + 1, false));
        }
        expect_symbol(")");
        return PatternNode::op(kind, std::move(children));
    }

    PatternNode parse_item(std::size_t depth, bool inside_unary) {
        if (depth > kMaxDepth) error(cur(), "pattern nested too deeply");
        if (peek_ident("SEQ") || peek_ident("AND") || peek_ident("OR")) {
            if (inside_unary) error(cur(), "NOT and KL apply to a single event", {"event type"});
            return parse_operator(depth);
        }
        if (peek_ident("NOT") || peek_ident("KL")) {
            const Token& kw = cur();
            if (inside_unary) error(kw, "NOT and KL cannot be nested", {"event type"});
            NodeKind kind = kw.text == "NOT" ? NodeKind::negation : NodeKind::kleene;
            next();
            expect_symbol("(");
            PatternNode inner = parse_item(depth + 1, true);
            expect_symbol(")");
            return PatternNode::op(kind, {std::move(inner)});
        }
        if (cur().kind != Tok::ident) error(cur(), "expected an event declaration", {"event type", "SEQ", "AND", "OR", "NOT", "KL"});
        const Token& type = next();
        if (cur().kind != Tok::ident) error(cur(), "expected an alias after event type '" + type.text + "'", {"alias"});
        const Token& alias = next();
        if (!types_.insert(type.text).second) error(type, "event type '" + type.text + "' declared twice");
        if (!aliases_.emplace(alias.text, leaf_count_).second) error(alias, "alias '" + alias.text + "' declared twice");
        ++leaf_count_;
        return PatternNode::leaf(type.text, alias.text);
    }

    void parse_where(Pattern& p) {
        if (!peek_symbol("(")) error(cur(), "WHERE clause must be parenthesised", {"'('"});
        parse_conjunction(0);
        (void)p;
    }

    void parse_conjunction(std::size_t depth) {
        parse_term(depth);
        while (peek_ident("AND")) {
            next();
            parse_term(depth);
        }
    }

    void parse_term(std::size_t depth) {
        if (depth > kMaxDepth) error(cur(), "condition nested too deeply");
        if (peek_symbol("(")) {
            next();
            parse_conjunction(depth + 1);
            expect_symbol(")");
            return;
        }
        if (peek_ident("true")) {
            next();
            return;
        }
        parse_chain();
    }

    void parse_chain() {
        PendingOperand left = parse_operand();
        auto cmp = parse_comparator();
        if (!cmp) error(cur(), "expected a comparison", {"<", "<=", "=", ">=", ">", "!="});
        do {
            PendingOperand right = parse_operand();
            pending_.push_back({left, *cmp, right});
            left = right;
            cmp = parse_comparator();
        } while (cmp);
    }

    std::optional<Comparator> parse_comparator() {
        if (cur().kind != Tok::symbol) return std::nullopt;
        const std::string& s = cur().text;
        std::optional<Comparator> c;
        if (s == "<") c = Comparator::lt;
        else if (s == "<=" || s == "\xE2\x89\xA4") c = Comparator::le;
        else if (s == "=" || s == "==") c = Comparator::eq;
        else if (s == ">=" || s == "\xE2\x89\xA5") c = Comparator::ge;
        else if (s == ">") c = Comparator::gt;
        else if (s == "!=" || s == "<>" || s == "\xE2\x89\xA0") c = Comparator::ne;
        if (c) next();
        return c;
    }

    PendingOperand parse_operand() {
        PendingOperand o;
        o.at = cur();
        if (cur().kind == Tok::number) {
            o.operand = Operand::value(next().number);
            return o;
        }
        if (peek_symbol("-") || peek_symbol("+")) {
            bool neg = next().text == "-";
            const Token& n = expect_kind(Tok::number, "number");
            o.operand = Operand::value(neg ? -n.number : n.number);
            return o;
        }
        if (cur().kind == Tok::string) {
            o.operand = Operand::value(next().text);
            return o;
        }
        if (cur().kind != Tok::ident) error(cur(), "expected an operand", {"alias.attribute", "number", "string"});
        const Token& alias = next();
        expect_symbol(".");
        const Token& attr = expect_kind(Tok::ident, "attribute name");
        o.alias = alias.text;
        o.operand.attribute = attr.text;
        o.operand.position = 0;  // resolved later
        if (peek_symbol("+") || peek_symbol("-")) {
            bool neg = next().text == "-";
            const Token& n = expect_kind(Tok::number, "number");
            o.operand.offset = neg ? -n.number : n.number;
        }
        return o;
    }

    double parse_unit() {
        if (cur().kind != Tok::ident) error(cur(), "expected a time unit", {"seconds", "minutes", "hours"});
        const std::string& u = cur().text;
        double f = 0.0;
        if (u == "seconds" || u == "second" || u == "s" || u == "sec") f = 1.0;
        else if (u == "minutes" || u == "minute" || u == "min") f = 60.0;
        else if (u == "hours" || u == "hour" || u == "h") f = 3600.0;
        else error(cur(), "unknown time unit", {"seconds", "minutes", "hours"});
        next();
        return f;
    }

    SelectionStrategy parse_strategy() {
        const Token& start = cur();
        std::string name = expect_kind(Tok::ident, "selection strategy").text;
        while (peek_symbol("-")) {
            next();
            name += "-" + expect_kind(Tok::ident, "selection strategy").text;
        }
        if (name == "partition-contiguity") {
            expect_symbol("(");
            std::string key = expect_kind(Tok::ident, "partition attribute").text;
            expect_symbol(")");
            name += "(" + key + ")";
        }
        try {
            return parse_strategy_name(name);
        } catch (const ContractError&) {
            error(start, "unknown selection strategy",
                  {"any-match", "next-match", "strict-contiguity", "partition-contiguity(key)"});
        }
    }

    void resolve(Pattern& p) {
        for (auto& pp : pending_) {
            Predicate pred;
            pred.cmp = pp.cmp;
            pred.lhs = resolve_operand(pp.lhs);
            pred.rhs = resolve_operand(pp.rhs);
            if (pred.lhs.is_literal() && pred.rhs.is_literal())
                throw ParseError(span_of(pp.lhs.at), "comparison between two literals");
            bool text = (pred.lhs.is_literal() && std::holds_alternative<std::string>(pred.lhs.literal)) ||
                        (pred.rhs.is_literal() && std::holds_alternative<std::string>(pred.rhs.literal));
            if (text && pred.cmp != Comparator::eq && pred.cmp != Comparator::ne)
                throw ParseError(span_of(pp.rhs.at), "text values support only = and !=", {"=", "!="});
            p.predicates.push_back(std::move(pred));
        }
    }

    Operand resolve_operand(const PendingOperand& o) const {
        if (o.alias.empty()) return o.operand;
        auto it = aliases_.find(o.alias);
        if (it == aliases_.end())
            throw ParseError(span_of(o.at), "unknown alias '" + o.alias + "'");
        Operand r = o.operand;
        r.position = it->second;
        return r;
    }

    std::string_view src_;
    std::vector<Token> toks_;
    std::size_t i_ = 0;
    std::set<std::string> types_;
    std::map<std::string, std::size_t> aliases_;
    std::size_t leaf_count_ = 0;
    std::vector<PendingPredicate> pending_;
};

}  // namespace detail

/// Pattern on success; otherwise the first fault with its span.
[[nodiscard]] inline std::variant<Pattern, ParseError> parse_pattern(std::string_view source) {
    try {
        return detail::Parser(source).parse();
    } catch (const ParseError& e) {
        return e;
    }
}

/// Throwing form of parse_pattern.
[[nodiscard]] inline Pattern parse_pattern_or_throw(std::string_view source) {
    auto r = parse_pattern(source);
    if (auto* e = std::get_if<ParseError>(&r)) throw *e;
    return std::get<Pattern>(std::move(r));
}

[[nodiscard]] inline Pattern load_pattern(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open pattern file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    try {
        return parse_pattern_or_throw(ss.str());
    } catch (const ParseError& e) {
        throw ParseError(e.span(), path + ": " + e.message(), e.expected());
    }
}

namespace detail {

inline std::string quote(const std::string& s) {
    std::string out = "\"";
    for (char c : s) {
        if (c == '"' || c == '\\') out += '\\';
        if (c == '\n') {
            out += "\\n";
            continue;
        }
        out += c;
    }
    return out + "\"";
}

inline std::string render_operand(const Operand& o, const std::vector<LeafInfo>& leaves) {
    if (o.is_literal()) {
        if (const auto* s = std::get_if<std::string>(&o.literal)) return quote(*s);
        return format_number(std::get<double>(o.literal));
    }
    std::string out = leaves.at(*o.position).alias + "." + o.attribute;
    if (o.offset > 0)
        out += "+" + format_number(o.offset);
    else if (o.offset < 0)
        out += "-" + format_number(-o.offset);
    return out;
}

inline void render_node(const PatternNode& n, std::string& out) {
    if (n.kind == NodeKind::leaf) {
        out += n.type + " " + n.alias;
        return;
    }
    out += node_keyword(n.kind);
    out += "(";
    for (std::size_t i = 0; i < n.children.size(); ++i) {
        if (i) out += ", ";
        render_node(n.children[i], out);
    }
    out += ")";
}

}  // namespace detail

/// Canonical text; parse_pattern of the result is structurally equal to `p`.
[[nodiscard]] inline std::string render_pattern(const Pattern& p) {
    auto leaves = p.leaves();
    std::string out = "PATTERN ";
    detail::render_node(p.root, out);
    out += " WHERE (";
    if (p.predicates.empty()) out += "true";
    for (std::size_t i = 0; i < p.predicates.size(); ++i) {
        const auto& pr = p.predicates[i];
        if (i) out += " AND ";
        out += detail::render_operand(pr.lhs, leaves);
        out += " ";
        out += comparator_symbol(pr.cmp);
        out += " ";
        out += detail::render_operand(pr.rhs, leaves);
    }
    out += ") WITHIN " + format_number(p.window) + " seconds";
    if (p.strategy.kind != SelectionKind::any_match) out += " STRATEGY " + strategy_name(p.strategy);
    return out;
}

}  // namespace cep
