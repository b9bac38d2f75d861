#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cep/error.hpp"
#include "cep/magnitude.hpp"
#include "cep/plan.hpp"
#include "cep/statistics.hpp"

namespace cep {

/// Counts of temporal arrival orders observed among full matches.
struct ArrivalOrderProfile {
    std::map<std::vector<std::string>, std::size_t> counts;
    std::size_t total = 0;

    /// Most frequent order; ties go to the lexicographically smallest.
    [[nodiscard]] std::optional<std::vector<std::string>> mode() const {
        std::optional<std::vector<std::string>> best;
        std::size_t best_count = 0;
        for (const auto& [order, n] : counts)
            if (n > best_count) {
                best = order;
                best_count = n;
            }
        return best;
    }
};

enum class Objective { throughput, latency, hybrid };

/// Which partial-match formula family a strategy uses.
enum class CostFamily { any_match, next_match };

[[nodiscard]] inline CostFamily cost_family(const SelectionStrategy& s) {
    return s.kind == SelectionKind::any_match ? CostFamily::any_match : CostFamily::next_match;
}

struct CostModelConfig {
    Objective objective = Objective::throughput;
    double alpha = 0.0;
    CostFamily family = CostFamily::any_match;
    /// Explicit T_n; wins over the profile and the structural default.
    std::string last_type;
    std::optional<ArrivalOrderProfile> profile;

    [[nodiscard]] static CostModelConfig hybrid(double alpha, CostFamily family = CostFamily::any_match) {
        if (alpha < 0) throw ContractError("alpha must be non-negative");
        CostModelConfig c;
        c.objective = alpha == 0.0 ? Objective::throughput : Objective::hybrid;
        c.alpha = alpha;
        c.family = family;
        return c;
    }
};

/**
 * T_n for latency: explicit hint, else the profile mode's last type, else the
 * structurally forced last type (sequences), else the highest-rate type
 * (first in declaration order on ties).
 */
[[nodiscard]] inline std::string resolve_last_type(const CostModelConfig& cfg, const std::vector<std::string>& types,
                                                   const StatisticsCatalog& stats, const std::string& structural) {
    auto present = [&](const std::string& t) { return std::find(types.begin(), types.end(), t) != types.end(); };
    if (!cfg.last_type.empty() && present(cfg.last_type)) return cfg.last_type;
    if (cfg.profile) {
        if (auto m = cfg.profile->mode(); m && !m->empty() && present(m->back())) return m->back();
    }
    if (!structural.empty() && present(structural)) return structural;
    std::string best;
    for (const auto& t : types)
        if (best.empty() || stats.rate(best) < stats.rate(t)) best = t;
    return best;
}

/**
 * Index-based view of one planning problem: W*r per type and the symmetric
 * selectivity matrix (diagonal = filters). All plan generators run on this.
 */
class CostProblem {
public:
    std::vector<std::string> types;
    double window = 0.0;
    std::vector<Magnitude> wr;
    std::vector<double> sel;  // n*n
    int last = -1;
    CostModelConfig config;

    [[nodiscard]] static CostProblem make(const std::vector<std::string>& types, const StatisticsCatalog& stats,
                                          double window, const CostModelConfig& cfg = {},
                                          const std::string& last_type = {}) {
        if (!(window > 0)) throw ContractError("cost: window must be positive");
        CostProblem p;
        p.types = types;
        p.window = window;
        p.config = cfg;
        std::size_t n = types.size();
        p.sel.assign(n * n, 1.0);
        for (std::size_t i = 0; i < n; ++i) {
            p.wr.push_back(stats.window_count(types[i], window));
            for (std::size_t j = 0; j < n; ++j) p.sel[i * n + j] = stats.selectivity(types[i], types[j]);
        }
        if (!last_type.empty()) p.last = p.index(last_type);
        return p;
    }

    [[nodiscard]] std::size_t size() const { return types.size(); }
    [[nodiscard]] double s(std::size_t i, std::size_t j) const { return sel[i * types.size() + j]; }

    [[nodiscard]] int index(const std::string& t) const {
        for (std::size_t i = 0; i < types.size(); ++i)
            if (types[i] == t) return static_cast<int>(i);
        throw ContractError("cost: type '" + t + "' not in problem");
    }

    [[nodiscard]] std::vector<int> indices(const std::vector<std::string>& names) const {
        std::vector<int> out;
        for (const auto& n : names) out.push_back(index(n));
        std::vector<int> sorted = out;
        std::sort(sorted.begin(), sorted.end());
        if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end() || sorted.size() != types.size())
            throw ContractError("cost: plan is not a permutation of the pattern types");
        return out;
    }

    [[nodiscard]] bool uses_latency() const { return config.objective != Objective::throughput; }
    [[nodiscard]] bool uses_throughput() const { return config.objective != Objective::latency; }

    [[nodiscard]] Magnitude combine(const Magnitude& thr, const Magnitude& lat) const {
        switch (config.objective) {
            case Objective::throughput: return thr;
            case Objective::latency: return lat;
            case Objective::hybrid: return thr + Magnitude(config.alpha) * lat;
        }
        return thr;
    }

    /// Running products over a set of types.
    struct Subset {
        Magnitude pm{1.0};           // prod W r * prod_{i<=j} sel (filters included)
        Magnitude min_wr{0.0};       // valid when !empty
        Magnitude selprod{1.0};      // prod_{i<=j} sel
        Magnitude selprod_pairs{1.0};  // prod_{i<j} sel
        Magnitude wr_prod{1.0};
        std::uint64_t mask = 0;
        [[nodiscard]] bool empty() const { return mask == 0; }
    };

    [[nodiscard]] Subset extend(const Subset& s, std::size_t t) const {
        Subset r = s;
        double cross = 1.0;
        std::uint64_t m = s.mask;
        while (m) {
            auto i = static_cast<std::size_t>(__builtin_ctzll(m));
            m &= m - 1;
            cross *= this->s(i, t);
        }
        Magnitude filt(this->s(t, t));
        r.pm = s.pm * wr[t] * Magnitude(cross) * filt;
        r.selprod = s.selprod * Magnitude(cross) * filt;
        r.selprod_pairs = s.selprod_pairs * Magnitude(cross);
        r.wr_prod = s.wr_prod * wr[t];
        r.min_wr = s.empty() ? wr[t] : min(s.min_wr, wr[t]);
        r.mask = s.mask | (std::uint64_t{1} << t);
        return r;
    }

    /// Order step cost after adding `t`: PM(k) (any) or W*m[k] (next).
    [[nodiscard]] Magnitude order_pm(const Subset& after) const {
        if (config.family == CostFamily::any_match) return after.pm;
        return Magnitude(window) * after.min_wr * after.selprod;
    }

    /// Tree node PM for the subset of leaves under a node.
    [[nodiscard]] Magnitude tree_pm(const Subset& s) const {
        if (config.family == CostFamily::any_match) return s.wr_prod * s.selprod_pairs;
        return s.min_wr * s.selprod_pairs;
    }

    [[nodiscard]] bool contains_last(std::uint64_t mask) const {
        return last >= 0 && (mask >> static_cast<unsigned>(last) & 1U);
    }
};

// ---------------------------------------------------------------------------
// Evaluation over index plans
// ---------------------------------------------------------------------------

[[nodiscard]] inline CostBreakdown evaluate_order(const CostProblem& p, const std::vector<int>& order) {
    CostBreakdown b;
    CostProblem::Subset s;
    Magnitude thr(0.0), lat(0.0);
    for (int t : order) {
        auto next = p.extend(s, static_cast<std::size_t>(t));
        Magnitude pm = p.order_pm(next);
        b.components.push_back(pm);
        thr += pm;
        if (p.contains_last(s.mask)) lat += p.wr[static_cast<std::size_t>(t)];
        s = next;
    }
    b.throughput = thr;
    b.latency = lat;
    b.alpha = p.config.alpha;
    b.combined = p.combine(thr, lat);
    return b;
}

/// Leaf-type masks per tree node; the tree's leaf types must be in `p`.
[[nodiscard]] inline std::vector<std::uint64_t> tree_masks(const CostProblem& p, const TreePlan& t) {
    std::vector<std::uint64_t> mask(t.nodes.size(), 0);
    for (int n : t.post_order()) {
        const auto& nd = t.nodes[static_cast<std::size_t>(n)];
        mask[static_cast<std::size_t>(n)] =
            nd.is_leaf() ? std::uint64_t{1} << p.index(nd.type)
                         : mask[static_cast<std::size_t>(nd.left)] | mask[static_cast<std::size_t>(nd.right)];
    }
    return mask;
}

[[nodiscard]] inline CostProblem::Subset subset_of(const CostProblem& p, std::uint64_t mask) {
    CostProblem::Subset s;
    for (std::size_t i = 0; i < p.size(); ++i)
        if (mask >> i & 1U) s = p.extend(s, i);
    return s;
}

[[nodiscard]] inline CostBreakdown evaluate_tree(const CostProblem& p, const TreePlan& t) {
    t.check();
    auto masks = tree_masks(p, t);
    std::vector<Magnitude> pm(t.nodes.size(), Magnitude(0.0));
    // Terms are multiplied and summed in a canonical order so mirrored trees cost the same bit for bit.
    std::vector<Magnitude> thr_terms, lat_terms;
    for (int n : t.post_order()) {
        auto un = static_cast<std::size_t>(n);
        const auto& nd = t.nodes[un];
        if (nd.is_leaf()) {
            pm[un] = p.wr[static_cast<std::size_t>(p.index(nd.type))];
        } else if (p.config.family == CostFamily::any_match) {
            auto lm = masks[static_cast<std::size_t>(nd.left)];
            auto rm = masks[static_cast<std::size_t>(nd.right)];
            double cross = 1.0;
            for (std::size_t i = 0; i < p.size(); ++i)
                for (std::size_t j = i + 1; j < p.size(); ++j)
                    if (((lm >> i & 1U) && (rm >> j & 1U)) || ((rm >> i & 1U) && (lm >> j & 1U))) cross *= p.s(i, j);
            pm[un] = pm[static_cast<std::size_t>(nd.left)] * pm[static_cast<std::size_t>(nd.right)] * Magnitude(cross);
        } else {
            pm[un] = p.tree_pm(subset_of(p, masks[un]));
        }
        thr_terms.push_back(pm[un]);
        if (!nd.is_leaf() && p.contains_last(masks[un])) {
            bool in_left = p.contains_last(masks[static_cast<std::size_t>(nd.left)]);
            lat_terms.push_back(pm[static_cast<std::size_t>(in_left ? nd.right : nd.left)]);
        }
    }
    auto total = [](std::vector<Magnitude>& xs) {
        std::sort(xs.begin(), xs.end());
        Magnitude sum(0.0);
        for (const auto& x : xs) sum += x;
        return sum;
    };
    Magnitude thr = total(thr_terms), lat = total(lat_terms);
    CostBreakdown b;
    b.components = pm;
    b.throughput = thr;
    b.latency = lat;
    b.alpha = p.config.alpha;
    b.combined = p.combine(thr, lat);
    return b;
}

[[nodiscard]] inline CostBreakdown evaluate_plan(const CostProblem& p, const Plan& plan) {
    if (const auto* o = std::get_if<OrderPlan>(&plan)) return evaluate_order(p, p.indices(o->order));
    const auto& t = std::get<TreePlan>(plan);
    (void)p.indices(t.leaves());  // validates the leaf set
    return evaluate_tree(p, t);
}

// ---------------------------------------------------------------------------
// Named cost functions
// ---------------------------------------------------------------------------

namespace detail {
/// Tree problems index types in sorted order, so a tree and its mirror share one index order.
inline std::vector<std::string> sorted(std::vector<std::string> xs) {
    std::sort(xs.begin(), xs.end());
    return xs;
}

inline CostProblem problem_for(const std::vector<std::string>& types, const StatisticsCatalog& stats, double W,
                               CostFamily family, const std::string& last = {}) {
    CostModelConfig cfg;
    cfg.family = family;
    return CostProblem::make(types, stats, W, cfg, last);
}
}  // namespace detail

/// Sum over k of PM(k) = W^k prod r prod_{i<=j<=k} sel.
[[nodiscard]] inline CostBreakdown cost_ord(const OrderPlan& order, const StatisticsCatalog& stats, double W) {
    auto p = detail::problem_for(order.order, stats, W, CostFamily::any_match);
    return evaluate_order(p, p.indices(order.order));
}

/// Sum over nodes; leaves W r, internal PM(L) PM(R) SEL_LR.
[[nodiscard]] inline CostBreakdown cost_tree(const TreePlan& tree, const StatisticsCatalog& stats, double W) {
    auto p = detail::problem_for(detail::sorted(tree.leaves()), stats, W, CostFamily::any_match);
    return evaluate_tree(p, tree);
}

/// Sum over k of W * m[k], m[k] = W min(r_1..k) prod sel.
[[nodiscard]] inline CostBreakdown cost_ord_next(const OrderPlan& order, const StatisticsCatalog& stats, double W) {
    auto p = detail::problem_for(order.order, stats, W, CostFamily::next_match);
    return evaluate_order(p, p.indices(order.order));
}

/// Sum over nodes of W min_{subtree} r prod_{i<j in subtree} sel.
[[nodiscard]] inline CostBreakdown cost_tree_next(const TreePlan& tree, const StatisticsCatalog& stats, double W) {
    auto p = detail::problem_for(detail::sorted(tree.leaves()), stats, W, CostFamily::next_match);
    return evaluate_tree(p, tree);
}

/// Sum of W r over the types placed after T_n.
[[nodiscard]] inline Magnitude cost_ord_latency(const OrderPlan& order, const StatisticsCatalog& stats, double W,
                                                const std::string& last_type) {
    if (std::find(order.order.begin(), order.order.end(), last_type) == order.order.end())
        throw ContractError("latency: T_n '" + last_type + "' not in the order");
    auto p = detail::problem_for(order.order, stats, W, CostFamily::any_match, last_type);
    return evaluate_order(p, p.indices(order.order)).latency;
}

/// Sum of PM(sibling) over the ancestors of T_n's leaf, the root excluded.
[[nodiscard]] inline Magnitude cost_tree_latency(const TreePlan& tree, const StatisticsCatalog& stats, double W,
                                                 const std::string& last_type) {
    if (tree.leaf_index(last_type) < 0) throw ContractError("latency: T_n '" + last_type + "' not a tree leaf");
    auto p = detail::problem_for(detail::sorted(tree.leaves()), stats, W, CostFamily::any_match, last_type);
    return evaluate_tree(p, tree).latency;
}

/// Throughput cost + alpha * latency cost in the plan's own formula family.
[[nodiscard]] inline Magnitude cost_hybrid(const Plan& plan, const StatisticsCatalog& stats, double W, double alpha,
                                           const std::string& last_type) {
    auto cfg = CostModelConfig::hybrid(alpha);
    cfg.objective = Objective::hybrid;
    auto p = CostProblem::make(plan_types(plan), stats, W, cfg, last_type);
    return evaluate_plan(p, plan).combined;
}

// ---------------------------------------------------------------------------
// Join-query formulations
// ---------------------------------------------------------------------------

/// Relations for the join view: |R_i| and the f_{i,j} matrix.
struct JoinRelations {
    std::vector<std::string> names;
    std::vector<double> cardinality;
    std::vector<std::vector<double>> f;

    [[nodiscard]] std::size_t index(const std::string& n) const {
        for (std::size_t i = 0; i < names.size(); ++i)
            if (names[i] == n) return i;
        throw ContractError("join: unknown relation '" + n + "'");
    }
};

/// |R_i| = W r_i, f_{i,j} = sel_{i,j}.
[[nodiscard]] inline JoinRelations relations_from(const std::vector<std::string>& types,
                                                  const StatisticsCatalog& stats, double W) {
    JoinRelations r;
    r.names = types;
    for (const auto& a : types) {
        r.cardinality.push_back(W * stats.rate(a).linear());
        std::vector<double> row;
        for (const auto& b : types) row.push_back(stats.selectivity(a, b));
        r.f.push_back(std::move(row));
    }
    return r;
}

/// Left-deep join cost: C_1 = |R_1| f_11, then |P_{k-1}| |R_k| f_{P,R_k} per join.
[[nodiscard]] inline double cost_ldj(const std::vector<std::string>& order, const JoinRelations& rel) {
    if (order.empty()) return 0.0;
    std::vector<std::size_t> o;
    for (const auto& n : order) o.push_back(rel.index(n));
    double size = rel.cardinality[o[0]] * rel.f[o[0]][o[0]];
    double total = size;
    for (std::size_t k = 1; k < o.size(); ++k) {
        double f = rel.f[o[k]][o[k]];
        for (std::size_t i = 0; i < k; ++i) f *= rel.f[o[i]][o[k]];
        size = size * rel.cardinality[o[k]] * f;
        total += size;
    }
    return total;
}

/// Bushy join cost: leaves |R_i|, internal |L| |R| f_{L,R}, summed over nodes.
[[nodiscard]] inline double cost_bj(const TreePlan& tree, const JoinRelations& rel) {
    tree.check();
    std::vector<double> card(tree.nodes.size(), 0.0);
    std::vector<std::vector<std::size_t>> rels(tree.nodes.size());
    double total = 0.0;
    for (int n : tree.post_order()) {
        auto un = static_cast<std::size_t>(n);
        const auto& nd = tree.nodes[un];
        if (nd.is_leaf()) {
            auto i = rel.index(nd.type);
            card[un] = rel.cardinality[i];
            rels[un] = {i};
        } else {
            auto l = static_cast<std::size_t>(nd.left), r = static_cast<std::size_t>(nd.right);
            double f = 1.0;
            for (auto i : rels[l])
                for (auto j : rels[r]) f *= rel.f[i][j];
            card[un] = card[l] * card[r] * f;
            rels[un] = rels[l];
            rels[un].insert(rels[un].end(), rels[r].begin(), rels[r].end());
        }
        total += card[un];
    }
    return total;
}

// ---------------------------------------------------------------------------
// Rank functions for the adjacent-sequence-interchange property
// ---------------------------------------------------------------------------

struct RankValue {
    Magnitude t{1.0};
    Magnitude c{0.0};
    double rank = 0.0;
};

/**
 * Per-type factors W r_i sel_i^R for a predicate forest rooted at `root`:
 * sel_i^R is the selectivity of the edge from i to its parent. Types outside
 * the root's component, and the root itself, get factor W r_i. Filters
 * multiply in, mirroring their entry-step placement in cost_ord.
 */
[[nodiscard]] inline std::map<std::string, Magnitude> rooted_factors(const std::vector<std::string>& types,
                                                                     const StatisticsCatalog& stats, double W,
                                                                     const std::string& root) {
    std::size_t n = types.size();
    std::vector<std::vector<std::size_t>> adj(n);
    std::vector<std::size_t> parent_of(n);
    for (std::size_t i = 0; i < n; ++i) parent_of[i] = i;
    std::function<std::size_t(std::size_t)> find = [&](std::size_t x) {
        return parent_of[x] == x ? x : parent_of[x] = find(parent_of[x]);
    };
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            if (stats.selectivity(types[i], types[j]) == 1.0) continue;
            auto a = find(i), b = find(j);
            if (a == b) throw UnsupportedPatternError("rank: predicate graph is cyclic");
            parent_of[a] = b;
            adj[i].push_back(j);
            adj[j].push_back(i);
        }
    std::map<std::string, Magnitude> out;
    std::vector<double> edge(n, 1.0);
    std::vector<bool> seen(n, false);
    auto r = static_cast<std::size_t>(std::find(types.begin(), types.end(), root) - types.begin());
    if (r >= n) throw ContractError("rank: root '" + root + "' not a pattern type");
    std::vector<std::size_t> stack{r};
    seen[r] = true;
    while (!stack.empty()) {
        auto u = stack.back();
        stack.pop_back();
        for (auto v : adj[u])
            if (!seen[v]) {
                seen[v] = true;
                edge[v] = stats.selectivity(types[u], types[v]);
                stack.push_back(v);
            }
    }
    for (std::size_t i = 0; i < n; ++i)
        out[types[i]] = stats.window_count(types[i], W) * Magnitude(edge[i]) *
                        Magnitude(stats.selectivity(types[i], types[i]));
    return out;
}

/// T(s) and C(s) from precomputed factors; C(e) = 0, T(e) = 1.
[[nodiscard]] inline RankValue rank_components(const std::vector<std::string>& s,
                                               const std::map<std::string, Magnitude>& factor) {
    RankValue v;
    for (const auto& t : s) {
        v.t = v.t * factor.at(t);
        v.c = v.c + v.t;
    }
    if (!s.empty()) {
        if (!v.t.is_log() && !v.c.is_log())
            v.rank = (v.t.linear() - 1.0) / v.c.linear();
        else
            v.rank = std::exp2(v.t.log2() - v.c.log2());  // the -1 vanishes at this scale
    }
    return v;
}

/// rank(s) = (T(s) - 1) / C(s) for the throughput cost rooted at `root`.
[[nodiscard]] inline RankValue rank_trpt(const std::vector<std::string>& s, const std::vector<std::string>& types,
                                         const StatisticsCatalog& stats, double W, const std::string& root) {
    if (s.empty()) throw ContractError("rank of the empty sequence is undefined");
    return rank_components(s, rooted_factors(types, stats, W, root));
}

/// Sum of W r over elements of `s` after T_n when T_n is in `s`, else 0.
[[nodiscard]] inline double rank_lat(const std::vector<std::string>& s, const StatisticsCatalog& stats, double W,
                                     const std::string& last_type) {
    auto it = std::find(s.begin(), s.end(), last_type);
    if (it == s.end()) return 0.0;
    double sum = 0.0;
    for (++it; it != s.end(); ++it) sum += W * stats.rate(*it).linear();
    return sum;
}

}  // namespace cep
