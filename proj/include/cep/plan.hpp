#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "cep/error.hpp"
#include "cep/magnitude.hpp"
#include "cep/pattern.hpp"

namespace cep {

/// Per-step (order) or per-node (tree) partial-match estimates plus totals.
struct CostBreakdown {
    std::vector<Magnitude> components;
    Magnitude throughput;
    Magnitude latency;
    double alpha = 0.0;
    Magnitude combined;
};

/**
 * Processing order over the positive event types of one conjunct.
 * Checkpoint steps are 1-based: step k means "after the k-th type is accepted".
 */
struct OrderPlan {
    std::vector<std::string> order;
    std::map<std::string, std::size_t> negation_checkpoints;
    std::set<std::string> kleene;

    bool operator==(const OrderPlan&) const = default;
};

struct TreeNode {
    std::string type;  // leaves only
    int left = -1;
    int right = -1;

    [[nodiscard]] bool is_leaf() const { return left < 0; }
    bool operator==(const TreeNode&) const = default;
};

/// Binary evaluation tree stored as a node array; `root` indexes into `nodes`.
struct TreePlan {
    std::vector<TreeNode> nodes;
    int root = -1;
    std::map<std::string, std::size_t> negation_checkpoints;  // negated type -> node index
    std::set<std::string> kleene;

    bool operator==(const TreePlan&) const = default;

    [[nodiscard]] static TreePlan leaf(const std::string& type) {
        TreePlan t;
        t.nodes.push_back({type, -1, -1});
        t.root = 0;
        return t;
    }

    /// New tree whose root joins `l` and `r`; annotations are not carried.
    [[nodiscard]] static TreePlan join(const TreePlan& l, const TreePlan& r) {
        TreePlan t;
        int lroot = t.graft(l, l.root);
        int rroot = t.graft(r, r.root);
        t.nodes.push_back({"", lroot, rroot});
        t.root = static_cast<int>(t.nodes.size()) - 1;
        return t;
    }

    [[nodiscard]] static TreePlan left_deep(const std::vector<std::string>& order) {
        if (order.empty()) throw ContractError("left-deep tree over no types");
        TreePlan t = leaf(order[0]);
        for (std::size_t i = 1; i < order.size(); ++i) t = join(t, leaf(order[i]));
        return t;
    }

    /// Leaf types under `node`, left to right.
    [[nodiscard]] std::vector<std::string> leaves(int node) const {
        std::vector<std::string> out;
        std::function<void(int)> walk = [&](int n) {
            const auto& nd = nodes.at(static_cast<std::size_t>(n));
            if (nd.is_leaf()) {
                out.push_back(nd.type);
                return;
            }
            walk(nd.left);
            walk(nd.right);
        };
        walk(node);
        return out;
    }
    [[nodiscard]] std::vector<std::string> leaves() const { return leaves(root); }

    /// parent[i] = index of i's parent, -1 at the root.
    [[nodiscard]] std::vector<int> parents() const {
        std::vector<int> p(nodes.size(), -1);
        for (std::size_t i = 0; i < nodes.size(); ++i) {
            if (nodes[i].is_leaf()) continue;
            p[static_cast<std::size_t>(nodes[i].left)] = static_cast<int>(i);
            p[static_cast<std::size_t>(nodes[i].right)] = static_cast<int>(i);
        }
        return p;
    }

    [[nodiscard]] int leaf_index(const std::string& type) const {
        for (std::size_t i = 0; i < nodes.size(); ++i)
            if (nodes[i].is_leaf() && nodes[i].type == type) return static_cast<int>(i);
        return -1;
    }

    /// Nodes in post-order (children before parents) reachable from the root.
    [[nodiscard]] std::vector<int> post_order() const {
        std::vector<int> out;
        std::function<void(int)> walk = [&](int n) {
            const auto& nd = nodes.at(static_cast<std::size_t>(n));
            if (!nd.is_leaf()) {
                walk(nd.left);
                walk(nd.right);
            }
            out.push_back(n);
        };
        if (root >= 0) walk(root);
        return out;
    }

    /// Parenthesised text such as "((A,C),B)".
    [[nodiscard]] std::string str(int node) const {
        const auto& nd = nodes.at(static_cast<std::size_t>(node));
        if (nd.is_leaf()) return kleene.count(nd.type) ? "KL(" + nd.type + ")" : nd.type;
        return "(" + str(nd.left) + "," + str(nd.right) + ")";
    }
    [[nodiscard]] std::string str() const { return root < 0 ? "()" : str(root); }

    /// Structural checks: every node reachable once, binary, leaves distinct.
    void check() const {
        if (root < 0 || static_cast<std::size_t>(root) >= nodes.size()) throw ContractError("tree plan without root");
        std::vector<int> seen(nodes.size(), 0);
        std::set<std::string> types;
        std::function<void(int)> walk = [&](int n) {
            if (n < 0 || static_cast<std::size_t>(n) >= nodes.size()) throw ContractError("tree plan: bad child index");
            if (seen[static_cast<std::size_t>(n)]++) throw ContractError("tree plan: node reached twice");
            const auto& nd = nodes[static_cast<std::size_t>(n)];
            if (nd.is_leaf()) {
                if (nd.right >= 0) throw ContractError("tree plan: node with one child");
                if (!types.insert(nd.type).second) throw ContractError("tree plan: duplicate leaf '" + nd.type + "'");
                return;
            }
            walk(nd.left);
            walk(nd.right);
        };
        walk(root);
    }

private:
    int graft(const TreePlan& src, int node) {
        const auto& nd = src.nodes.at(static_cast<std::size_t>(node));
        if (nd.is_leaf()) {
            nodes.push_back(nd);
            return static_cast<int>(nodes.size()) - 1;
        }
        int l = graft(src, nd.left);
        int r = graft(src, nd.right);
        nodes.push_back({"", l, r});
        return static_cast<int>(nodes.size()) - 1;
    }
};

using Plan = std::variant<OrderPlan, TreePlan>;

[[nodiscard]] inline std::vector<std::string> plan_types(const Plan& p) {
    if (const auto* o = std::get_if<OrderPlan>(&p)) return o->order;
    return std::get<TreePlan>(p).leaves();
}

[[nodiscard]] inline std::string plan_str(const Plan& p) {
    if (const auto* t = std::get_if<TreePlan>(&p)) return t->str();
    const auto& o = std::get<OrderPlan>(p);
    std::string s = "(";
    for (std::size_t i = 0; i < o.order.size(); ++i) {
        if (i) s += ",";
        s += o.kleene.count(o.order[i]) ? "KL(" + o.order[i] + ")" : o.order[i];
    }
    return s + ")";
}

/**
 * Node assigned to each predicate: the lowest node whose subtree holds every
 * type the predicate references. Filters land on their leaf.
 */
[[nodiscard]] inline std::vector<int> assign_predicates(const TreePlan& tree, const Pattern& p) {
    auto leaves = p.leaves();
    auto parents = tree.parents();
    std::vector<int> out;
    for (const auto& pred : p.predicates) {
        auto pos = pred.positions();
        std::vector<int> at;
        for (auto i : pos) {
            int l = tree.leaf_index(leaves.at(i).type);
            if (l < 0) throw ContractError("predicate references type '" + leaves.at(i).type + "' absent from tree");
            at.push_back(l);
        }
        if (at.size() == 1) {
            out.push_back(at[0]);
            continue;
        }
        std::set<int> anc;
        for (int n = at[0]; n >= 0; n = parents[static_cast<std::size_t>(n)]) anc.insert(n);
        int n = at[1];
        while (!anc.count(n)) n = parents[static_cast<std::size_t>(n)];
        out.push_back(n);
    }
    return out;
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

[[nodiscard]] inline nlohmann::json magnitude_json(const Magnitude& m) {
    if (m.is_log()) return {{"log2", m.log2()}};
    return m.linear();
}

[[nodiscard]] inline Magnitude magnitude_from_json(const nlohmann::json& j) {
    if (j.is_number()) return Magnitude(j.get<double>());
    if (j.is_object() && j.contains("log2")) return Magnitude::from_log2(j["log2"].get<double>());
    throw DataError("plan: malformed cost value");
}

[[nodiscard]] inline nlohmann::json cost_json(const CostBreakdown& c) {
    nlohmann::json comps = nlohmann::json::array();
    for (const auto& m : c.components) comps.push_back(magnitude_json(m));
    return {{"components", comps},
            {"throughput", magnitude_json(c.throughput)},
            {"latency", magnitude_json(c.latency)},
            {"alpha", c.alpha},
            {"combined", magnitude_json(c.combined)}};
}

[[nodiscard]] inline CostBreakdown cost_from_json(const nlohmann::json& j) {
    CostBreakdown c;
    for (const auto& m : j.at("components")) c.components.push_back(magnitude_from_json(m));
    c.throughput = magnitude_from_json(j.at("throughput"));
    c.latency = magnitude_from_json(j.at("latency"));
    c.alpha = j.at("alpha").get<double>();
    c.combined = magnitude_from_json(j.at("combined"));
    return c;
}

namespace detail {

inline nlohmann::json tree_node_json(const TreePlan& t, int n) {
    const auto& nd = t.nodes.at(static_cast<std::size_t>(n));
    if (nd.is_leaf()) return {{"leaf", nd.type}, {"kleene", t.kleene.count(nd.type) != 0}};
    return {{"left", tree_node_json(t, nd.left)}, {"right", tree_node_json(t, nd.right)}};
}

inline int tree_node_from_json(TreePlan& t, const nlohmann::json& j) {
    if (j.contains("leaf")) {
        std::string type = j["leaf"].get<std::string>();
        if (j.value("kleene", false)) t.kleene.insert(type);
        t.nodes.push_back({type, -1, -1});
        return static_cast<int>(t.nodes.size()) - 1;
    }
    if (!j.contains("left") || !j.contains("right")) throw DataError("plan: tree node needs 'leaf' or 'left'/'right'");
    int l = tree_node_from_json(t, j["left"]);
    int r = tree_node_from_json(t, j["right"]);
    t.nodes.push_back({"", l, r});
    return static_cast<int>(t.nodes.size()) - 1;
}

}  // namespace detail

[[nodiscard]] inline nlohmann::json plan_json(const Plan& plan) {
    if (const auto* o = std::get_if<OrderPlan>(&plan)) {
        nlohmann::json k = nlohmann::json::array();
        for (const auto& t : o->kleene) k.push_back(t);
        return {{"kind", "order"}, {"order", o->order}, {"negation_checkpoints", o->negation_checkpoints},
                {"kleene", k}};
    }
    const auto& t = std::get<TreePlan>(plan);
    // Checkpoints are stored by the leaf set of their node so the nested form stays index-free.
    nlohmann::json cps = nlohmann::json::object();
    for (const auto& [neg, node] : t.negation_checkpoints) cps[neg] = t.leaves(static_cast<int>(node));
    return {{"kind", "tree"}, {"tree", detail::tree_node_json(t, t.root)}, {"negation_checkpoints", cps}};
}

[[nodiscard]] inline Plan plan_from_json(const nlohmann::json& j) {
    try {
        std::string kind = j.at("kind").get<std::string>();
        if (kind == "order") {
            OrderPlan o;
            o.order = j.at("order").get<std::vector<std::string>>();
            if (j.contains("negation_checkpoints"))
                o.negation_checkpoints = j["negation_checkpoints"].get<std::map<std::string, std::size_t>>();
            if (j.contains("kleene"))
                for (const auto& k : j["kleene"]) o.kleene.insert(k.get<std::string>());
            return o;
        }
        if (kind == "tree") {
            TreePlan t;
            t.root = detail::tree_node_from_json(t, j.at("tree"));
            t.check();
            if (j.contains("negation_checkpoints")) {
                for (const auto& [neg, leafset] : j["negation_checkpoints"].items()) {
                    auto want = leafset.get<std::vector<std::string>>();
                    std::sort(want.begin(), want.end());
                    bool found = false;
                    for (std::size_t i = 0; i < t.nodes.size() && !found; ++i) {
                        auto have = t.leaves(static_cast<int>(i));
                        std::sort(have.begin(), have.end());
                        if (have == want) {
                            t.negation_checkpoints[neg] = i;
                            found = true;
                        }
                    }
                    if (!found) throw DataError("plan: checkpoint of '" + neg + "' names no tree node");
                }
            }
            return t;
        }
        throw DataError("plan: unknown kind '" + kind + "'");
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("plan: ") + e.what());
    }
}

}  // namespace cep
