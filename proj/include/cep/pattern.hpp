#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "cep/error.hpp"

namespace cep {

// ---------------------------------------------------------------------------
// Events
// ---------------------------------------------------------------------------

enum class AttrKind { number, text, timestamp };

/// Declared shape of an event type. Every type implicitly carries `ts`.
struct EventType {
    std::string name;
    std::vector<std::pair<std::string, AttrKind>> attributes;
    bool operator==(const EventType&) const = default;
};

using AttrValue = std::variant<double, std::string>;

/// Attribute names resolved from event fields rather than the attribute list.
inline constexpr std::string_view kTimestampAttr = "ts";
inline constexpr std::string_view kSerialAttr = "serial";
/// Per-partition arrival index, written by the partition annotator.
inline constexpr std::string_view kPartitionSerialAttr = "pserial";

struct Event {
    std::string type;
    double timestamp = 0.0;
    std::uint64_t serial = 0;
    std::vector<std::pair<std::string, AttrValue>> attributes;

    [[nodiscard]] const AttrValue* find(std::string_view name) const {
        for (const auto& [k, v] : attributes)
            if (k == name) return &v;
        return nullptr;
    }

    /// Attribute lookup that also resolves `ts` and `serial`.
    [[nodiscard]] std::optional<AttrValue> value(std::string_view name) const {
        if (name == kTimestampAttr) return AttrValue(timestamp);
        if (name == kSerialAttr) return AttrValue(static_cast<double>(serial));
        if (const auto* v = find(name)) return *v;
        return std::nullopt;
    }

    void set(std::string_view name, AttrValue v) {
        for (auto& [k, old] : attributes) {
            if (k == name) {
                old = std::move(v);
                return;
            }
        }
        attributes.emplace_back(std::string(name), std::move(v));
    }
};

using EventPtr = std::shared_ptr<const Event>;
using EventStream = std::vector<EventPtr>;

// ---------------------------------------------------------------------------
// Predicates
// ---------------------------------------------------------------------------

enum class Comparator { lt, le, eq, ge, gt, ne };

[[nodiscard]] inline std::string_view comparator_symbol(Comparator c) {
    switch (c) {
        case Comparator::lt: return "<";
        case Comparator::le: return "<=";
        case Comparator::eq: return "=";
        case Comparator::ge: return ">=";
        case Comparator::gt: return ">";
        case Comparator::ne: return "!=";
    }
    return "?";
}

/// Comparator that holds for (y, x) exactly when `c` holds for (x, y).
[[nodiscard]] inline Comparator mirrored(Comparator c) {
    switch (c) {
        case Comparator::lt: return Comparator::gt;
        case Comparator::le: return Comparator::ge;
        case Comparator::ge: return Comparator::le;
        case Comparator::gt: return Comparator::lt;
        default: return c;
    }
}

template <typename T>
[[nodiscard]] bool compare_values(const T& x, Comparator c, const T& y) {
    switch (c) {
        case Comparator::lt: return x < y;
        case Comparator::le: return x <= y;
        case Comparator::eq: return x == y;
        case Comparator::ge: return x >= y;
        case Comparator::gt: return x > y;
        case Comparator::ne: return x != y;
    }
    return false;
}

/// Either `position.attribute + offset` or a literal.
struct Operand {
    std::optional<std::size_t> position;
    std::string attribute;
    double offset = 0.0;
    AttrValue literal = 0.0;

    [[nodiscard]] bool is_literal() const { return !position.has_value(); }

    static Operand attr(std::size_t pos, std::string name, double offset = 0.0) {
        Operand o;
        o.position = pos;
        o.attribute = std::move(name);
        o.offset = offset;
        return o;
    }
    static Operand value(AttrValue v) {
        Operand o;
        o.literal = std::move(v);
        return o;
    }
    bool operator==(const Operand&) const = default;
};

/// Why a predicate exists; only user predicates are estimated from data.
enum class PredicateOrigin { user, temporal, contiguity };

struct Predicate {
    Operand lhs;
    Comparator cmp = Comparator::eq;
    Operand rhs;
    PredicateOrigin origin = PredicateOrigin::user;

    /// Distinct positions referenced, ascending.
    [[nodiscard]] std::vector<std::size_t> positions() const {
        std::vector<std::size_t> out;
        if (lhs.position) out.push_back(*lhs.position);
        if (rhs.position && (!lhs.position || *rhs.position != *lhs.position)) out.push_back(*rhs.position);
        std::sort(out.begin(), out.end());
        return out;
    }
    [[nodiscard]] bool references(std::size_t pos) const {
        return (lhs.position && *lhs.position == pos) || (rhs.position && *rhs.position == pos);
    }
    bool operator==(const Predicate&) const = default;
};

// ---------------------------------------------------------------------------
// Pattern tree
// ---------------------------------------------------------------------------

enum class NodeKind { seq, conj, disj, negation, kleene, leaf };

[[nodiscard]] inline bool is_nary(NodeKind k) {
    return k == NodeKind::seq || k == NodeKind::conj || k == NodeKind::disj;
}
[[nodiscard]] inline bool is_unary(NodeKind k) { return k == NodeKind::negation || k == NodeKind::kleene; }

[[nodiscard]] inline std::string_view node_keyword(NodeKind k) {
    switch (k) {
        case NodeKind::seq: return "SEQ";
        case NodeKind::conj: return "AND";
        case NodeKind::disj: return "OR";
        case NodeKind::negation: return "NOT";
        case NodeKind::kleene: return "KL";
        case NodeKind::leaf: return "";
    }
    return "";
}

struct PatternNode {
    NodeKind kind = NodeKind::leaf;
    std::vector<PatternNode> children;
    std::string type;   // leaf only
    std::string alias;  // leaf only

    static PatternNode leaf(std::string type, std::string alias) {
        PatternNode n;
        n.type = std::move(type);
        n.alias = std::move(alias);
        return n;
    }
    static PatternNode op(NodeKind kind, std::vector<PatternNode> children) {
        PatternNode n;
        n.kind = kind;
        n.children = std::move(children);
        return n;
    }
    bool operator==(const PatternNode&) const = default;
};

/// Wrapper applied to a leaf position.
enum class Unary { none, negation, kleene };

struct LeafInfo {
    std::string type;
    std::string alias;
    Unary unary = Unary::none;
};

enum class SelectionKind { any_match, next_match, strict_contiguity, partition_contiguity };

struct SelectionStrategy {
    SelectionKind kind = SelectionKind::any_match;
    std::string partition_key;  // partition_contiguity only

    [[nodiscard]] bool is_contiguity() const {
        return kind == SelectionKind::strict_contiguity || kind == SelectionKind::partition_contiguity;
    }
    bool operator==(const SelectionStrategy&) const = default;
};

[[nodiscard]] inline std::string strategy_name(const SelectionStrategy& s) {
    switch (s.kind) {
        case SelectionKind::any_match: return "any-match";
        case SelectionKind::next_match: return "next-match";
        case SelectionKind::strict_contiguity: return "strict-contiguity";
        case SelectionKind::partition_contiguity: return "partition-contiguity(" + s.partition_key + ")";
    }
    return "any-match";
}

/// Parses the names produced by strategy_name.
[[nodiscard]] inline SelectionStrategy parse_strategy_name(std::string_view text) {
    SelectionStrategy s;
    if (text == "any-match" || text == "any") return s;
    if (text == "next-match" || text == "next") {
        s.kind = SelectionKind::next_match;
        return s;
    }
    if (text == "strict-contiguity" || text == "strict") {
        s.kind = SelectionKind::strict_contiguity;
        return s;
    }
    constexpr std::string_view prefix = "partition-contiguity(";
    if (text.starts_with(prefix) && text.ends_with(")") && text.size() > prefix.size() + 1) {
        s.kind = SelectionKind::partition_contiguity;
        s.partition_key = std::string(text.substr(prefix.size(), text.size() - prefix.size() - 1));
        return s;
    }
    throw ContractError("unknown selection strategy '" + std::string(text) + "'");
}

/**
 * Operator tree plus a predicate conjunction and a window.
 *
 * Leaf positions are numbered in depth-first declaration order, counting
 * negated and Kleene leaves; predicates refer to those positions.
 */
struct Pattern {
    PatternNode root;
    std::vector<Predicate> predicates;
    double window = 0.0;  // seconds
    SelectionStrategy strategy;

    bool operator==(const Pattern&) const = default;

    [[nodiscard]] std::vector<LeafInfo> leaves() const {
        std::vector<LeafInfo> out;
        collect(root, Unary::none, out);
        return out;
    }

    /// Positions of leaves without a negation wrapper, in declaration order.
    [[nodiscard]] std::vector<std::size_t> positive_positions() const {
        std::vector<std::size_t> out;
        auto ls = leaves();
        for (std::size_t i = 0; i < ls.size(); ++i)
            if (ls[i].unary != Unary::negation) out.push_back(i);
        return out;
    }

    /// Types of non-negated leaves, declaration order.
    [[nodiscard]] std::vector<std::string> positive_types() const {
        std::vector<std::string> out;
        for (const auto& l : leaves())
            if (l.unary != Unary::negation) out.push_back(l.type);
        return out;
    }

    [[nodiscard]] std::optional<std::size_t> position_of_type(std::string_view type) const {
        auto ls = leaves();
        for (std::size_t i = 0; i < ls.size(); ++i)
            if (ls[i].type == type) return i;
        return std::nullopt;
    }

    [[nodiscard]] std::optional<std::size_t> position_of_alias(std::string_view alias) const {
        auto ls = leaves();
        for (std::size_t i = 0; i < ls.size(); ++i)
            if (ls[i].alias == alias) return i;
        return std::nullopt;
    }

    /// True when the root is one n-ary operator over leaves (each with at most one wrapper).
    [[nodiscard]] bool is_simple() const {
        if (!is_nary(root.kind)) return false;
        for (const auto& c : root.children) {
            if (c.kind == NodeKind::leaf) continue;
            if (is_unary(c.kind) && c.children.size() == 1 && c.children[0].kind == NodeKind::leaf) continue;
            return false;
        }
        return true;
    }

private:
    static void collect(const PatternNode& n, Unary wrap, std::vector<LeafInfo>& out) {
        switch (n.kind) {
            case NodeKind::leaf: out.push_back({n.type, n.alias, wrap}); return;
            case NodeKind::negation:
                for (const auto& c : n.children) collect(c, Unary::negation, out);
                return;
            case NodeKind::kleene:
                for (const auto& c : n.children) collect(c, wrap == Unary::none ? Unary::kleene : wrap, out);
                return;
            default:
                for (const auto& c : n.children) collect(c, Unary::none, out);
        }
    }
};

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

struct Violation {
    std::string rule;
    std::string message;
    bool operator==(const Violation&) const = default;
};

namespace detail {

inline void validate_node(const PatternNode& n, bool is_root, std::vector<Violation>& out) {
    if (is_root && !is_nary(n.kind))
        out.push_back({"root-operator", "pattern root must be SEQ, AND or OR"});
    if (n.kind == NodeKind::leaf) {
        if (n.type.empty()) out.push_back({"leaf-type", "leaf without an event type"});
        if (n.alias.empty()) out.push_back({"leaf-alias", "leaf '" + n.type + "' without an alias"});
        if (!n.children.empty()) out.push_back({"leaf-children", "leaf '" + n.type + "' has children"});
        return;
    }
    if (is_unary(n.kind)) {
        if (n.children.size() != 1) {
            out.push_back({"unary-arity", std::string(node_keyword(n.kind)) + " takes exactly one operand"});
        } else if (is_unary(n.children[0].kind)) {
            out.push_back({"unary-nesting", std::string(node_keyword(n.kind)) + " wraps " +
                                                std::string(node_keyword(n.children[0].kind))});
        } else if (n.children[0].kind != NodeKind::leaf) {
            out.push_back({"unary-operand", std::string(node_keyword(n.kind)) + " must wrap a single event"});
        }
    } else if (n.children.empty()) {
        out.push_back({"operator-arity", std::string(node_keyword(n.kind)) + " without operands"});
    }
    for (const auto& c : n.children) validate_node(c, false, out);
}

}  // namespace detail

/// Every violated rule, in a fixed order; empty iff the pattern is well formed.
[[nodiscard]] inline std::vector<Violation> validate_pattern(const Pattern& p) {
    std::vector<Violation> out;
    if (!(p.window > 0.0)) out.push_back({"window-positivity", "window must be positive"});
    detail::validate_node(p.root, true, out);

    auto leaves = p.leaves();
    std::set<std::string> types, aliases;
    for (const auto& l : leaves) {
        if (!l.type.empty() && !types.insert(l.type).second)
            out.push_back({"duplicate-type", "event type '" + l.type + "' appears more than once"});
        if (!l.alias.empty() && !aliases.insert(l.alias).second)
            out.push_back({"duplicate-alias", "alias '" + l.alias + "' appears more than once"});
    }
    if (!leaves.empty() && std::all_of(leaves.begin(), leaves.end(),
                                       [](const LeafInfo& l) { return l.unary == Unary::negation; }))
        out.push_back({"positive-event", "pattern has no positive event"});

    for (std::size_t i = 0; i < p.predicates.size(); ++i) {
        const auto& pr = p.predicates[i];
        if (pr.lhs.is_literal() && pr.rhs.is_literal())
            out.push_back({"predicate-position", "predicate " + std::to_string(i) + " references no event"});
        for (const auto* o : {&pr.lhs, &pr.rhs}) {
            if (o->position && *o->position >= leaves.size())
                out.push_back({"predicate-position", "predicate " + std::to_string(i) + " references position " +
                                                         std::to_string(*o->position)});
            if (o->position && o->attribute.empty())
                out.push_back({"predicate-attribute", "predicate " + std::to_string(i) + " has an empty attribute"});
        }
        bool text = (pr.lhs.is_literal() && std::holds_alternative<std::string>(pr.lhs.literal)) ||
                    (pr.rhs.is_literal() && std::holds_alternative<std::string>(pr.rhs.literal));
        if (text && pr.cmp != Comparator::eq && pr.cmp != Comparator::ne)
            out.push_back({"text-comparator", "text values support only = and !="});
    }

    if (p.strategy.kind == SelectionKind::partition_contiguity && p.strategy.partition_key.empty())
        out.push_back({"partition-key", "partition contiguity requires a partition key"});
    return out;
}

/// Throws ContractError listing every violation.
inline void require_valid(const Pattern& p) {
    auto v = validate_pattern(p);
    if (v.empty()) return;
    std::string msg = "invalid pattern:";
    for (const auto& x : v) msg += " [" + x.rule + "] " + x.message + ";";
    throw ContractError(msg);
}

/// Catalog key of a predicate: sorted type pair, or a single type for filters.
struct SelectivityKey {
    std::string first;
    std::string second;  // empty for a single-type filter

    [[nodiscard]] bool is_filter() const { return second.empty(); }
    [[nodiscard]] std::string str() const { return is_filter() ? first : first + "," + second; }
    auto operator<=>(const SelectivityKey&) const = default;

    static SelectivityKey of(std::string a, std::string b) {
        if (a == b) return {std::move(a), {}};
        if (b < a) std::swap(a, b);
        return {std::move(a), std::move(b)};
    }
};

[[nodiscard]] inline SelectivityKey predicate_selectivity_key(const Predicate& pred, const Pattern& p) {
    auto leaves = p.leaves();
    auto pos = pred.positions();
    if (pos.empty()) throw ContractError("predicate references no event position");
    for (auto i : pos)
        if (i >= leaves.size()) throw ContractError("predicate references unknown position " + std::to_string(i));
    if (pos.size() == 1) return SelectivityKey::of(leaves[pos[0]].type, leaves[pos[0]].type);
    return SelectivityKey::of(leaves[pos[0]].type, leaves[pos[1]].type);
}

}  // namespace cep
