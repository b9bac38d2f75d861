#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "cep/cost.hpp"
#include "cep/error.hpp"
#include "cep/plan.hpp"
#include "cep/statistics.hpp"
#include "cep/transform.hpp"

namespace cep {

enum class Algorithm { trivial, efreq, greedy, ii_random, ii_greedy, dp_ld, zstream, zstream_ord, dp_b };

[[nodiscard]] inline std::string algorithm_name(Algorithm a) {
    switch (a) {
        case Algorithm::trivial: return "TRIVIAL";
        case Algorithm::efreq: return "EFREQ";
        case Algorithm::greedy: return "GREEDY";
        case Algorithm::ii_random: return "II-RANDOM";
        case Algorithm::ii_greedy: return "II-GREEDY";
        case Algorithm::dp_ld: return "DP-LD";
        case Algorithm::zstream: return "ZSTREAM";
        case Algorithm::zstream_ord: return "ZSTREAM-ORD";
        case Algorithm::dp_b: return "DP-B";
    }
    return "?";
}

[[nodiscard]] inline const std::vector<Algorithm>& all_algorithms() {
    static const std::vector<Algorithm> all{Algorithm::trivial,   Algorithm::efreq,   Algorithm::greedy,
                                            Algorithm::ii_random, Algorithm::ii_greedy, Algorithm::dp_ld,
                                            Algorithm::zstream,   Algorithm::zstream_ord, Algorithm::dp_b};
    return all;
}

/// Case-insensitive; '_' and '-' are interchangeable.
[[nodiscard]] inline Algorithm parse_algorithm(std::string text) {
    for (auto& ch : text) ch = ch == '_' ? '-' : static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
    for (auto a : all_algorithms())
        if (algorithm_name(a) == text) return a;
    throw ContractError("unknown algorithm '" + text + "'");
}

[[nodiscard]] inline bool produces_tree(Algorithm a) {
    return a == Algorithm::zstream || a == Algorithm::zstream_ord || a == Algorithm::dp_b;
}

struct PlannerConfig {
    CostModelConfig cost;
    std::uint64_t seed = 1;
    int ii_random_restarts = 10;
    int ii_greedy_restarts = 1;
    bool ii_first_improvement = false;
    std::size_t dp_ld_limit = 20;
    std::size_t dp_b_limit = 14;
    /// Worker threads for neighbourhood evaluation; results do not depend on it.
    unsigned threads = 1;
};

struct PlanSearchReport {
    Plan plan;
    CostBreakdown cost;
    std::size_t candidates = 0;
    double wall_ms = 0.0;
    std::string algorithm;
    std::optional<std::uint64_t> seed;
};

namespace detail {

using Order = std::vector<int>;

inline OrderPlan to_order_plan(const CostProblem& p, const Order& o) {
    OrderPlan plan;
    for (int i : o) plan.order.push_back(p.types[static_cast<std::size_t>(i)]);
    return plan;
}

inline Magnitude order_cost(const CostProblem& p, const Order& o) { return evaluate_order(p, o).combined; }

/// Combined cost of adding `t` after the set `prefix`.
inline Magnitude step_cost(const CostProblem& p, const CostProblem::Subset& prefix, std::size_t t) {
    auto next = p.extend(prefix, t);
    Magnitude lat = p.contains_last(prefix.mask) ? p.wr[t] : Magnitude(0.0);
    return p.combine(p.order_pm(next), lat);
}

inline Order trivial(const CostProblem& p) {
    Order o(p.size());
    std::iota(o.begin(), o.end(), 0);
    return o;
}

inline Order efreq(const CostProblem& p) {
    Order o = trivial(p);
    std::stable_sort(o.begin(), o.end(), [&](int a, int b) {
        return p.wr[static_cast<std::size_t>(a)] < p.wr[static_cast<std::size_t>(b)];
    });
    return o;
}

inline Order greedy(const CostProblem& p, std::size_t& candidates) {
    Order o;
    CostProblem::Subset s;
    std::vector<bool> used(p.size(), false);
    for (std::size_t k = 0; k < p.size(); ++k) {
        int best = -1;
        Magnitude best_cost;
        for (std::size_t t = 0; t < p.size(); ++t) {
            if (used[t]) continue;
            ++candidates;
            auto c = step_cost(p, s, t);
            if (best < 0 || c < best_cost) {
                best = static_cast<int>(t);
                best_cost = c;
            }
        }
        used[static_cast<std::size_t>(best)] = true;
        s = p.extend(s, static_cast<std::size_t>(best));
        o.push_back(best);
    }
    return o;
}

/// Swap and 3-cycle neighbours in a fixed enumeration order.
inline std::vector<Order> neighbours(const Order& o) {
    std::vector<Order> out;
    std::size_t n = o.size();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            Order x = o;
            std::swap(x[i], x[j]);
            out.push_back(std::move(x));
        }
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            for (std::size_t k = j + 1; k < n; ++k) {
                Order x = o;
                x[i] = o[k], x[j] = o[i], x[k] = o[j];
                out.push_back(x);
                x[i] = o[j], x[j] = o[k], x[k] = o[i];
                out.push_back(std::move(x));
            }
    return out;
}

/// Evaluates all candidates, possibly on several threads; the result is independent of `threads`.
inline std::vector<Magnitude> evaluate_all(const CostProblem& p, const std::vector<Order>& cands, unsigned threads) {
    std::vector<Magnitude> out(cands.size());
    if (threads <= 1 || cands.size() < 64) {
        for (std::size_t i = 0; i < cands.size(); ++i) out[i] = order_cost(p, cands[i]);
        return out;
    }
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < threads; ++w)
        pool.emplace_back([&, w] {
            for (std::size_t i = w; i < cands.size(); i += threads) out[i] = order_cost(p, cands[i]);
        });
    for (auto& t : pool) t.join();
    return out;
}

/// Local search to a swap/cycle local minimum.
inline Order improve(const CostProblem& p, Order o, bool first_improvement, unsigned threads,
                     std::size_t& candidates) {
    Magnitude cur = order_cost(p, o);
    ++candidates;
    for (;;) {
        auto cands = neighbours(o);
        std::optional<std::size_t> pick;
        if (first_improvement) {
            for (std::size_t i = 0; i < cands.size(); ++i) {
                ++candidates;
                auto c = order_cost(p, cands[i]);
                if (c < cur) {
                    pick = i;
                    cur = c;
                    break;
                }
            }
        } else {
            auto costs = evaluate_all(p, cands, threads);
            candidates += cands.size();
            Magnitude best = cur;
            for (std::size_t i = 0; i < cands.size(); ++i)
                if (costs[i] < best) {
                    best = costs[i];
                    pick = i;
                }
            cur = best;
        }
        if (!pick) return o;
        o = cands[*pick];
    }
}

inline Order iterative_improvement(const CostProblem& p, bool from_greedy, int restarts, std::uint64_t seed,
                                   bool first_improvement, unsigned threads, std::size_t& candidates) {
    if (restarts < 1) throw ContractError("iterative improvement needs at least one restart");
    std::mt19937_64 rng(seed);
    std::optional<Order> best;
    Magnitude best_cost;
    for (int r = 0; r < restarts; ++r) {
        Order start;
        if (from_greedy) {
            start = greedy(p, candidates);
        } else {
            start = trivial(p);
            // Fisher-Yates with our own index draw keeps runs identical across standard libraries.
            for (std::size_t i = start.size(); i > 1; --i) std::swap(start[i - 1], start[rng() % i]);
        }
        auto local = improve(p, start, first_improvement, threads, candidates);
        auto c = order_cost(p, local);
        if (!best || c < best_cost) {
            best = local;
            best_cost = c;
        }
    }
    return *best;
}

inline Order dp_ld(const CostProblem& p, std::size_t limit, std::size_t& candidates) {
    std::size_t n = p.size();
    if (n > limit) throw ResourceError("dp_ld_limit", limit, n);
    std::size_t full = std::size_t{1} << n;
    // Per subset: best cost and the last type of the best order over it.
    std::vector<Magnitude> best(full);
    std::vector<std::int8_t> choice(full, -1);
    std::vector<bool> done(full, false);
    done[0] = true;
    best[0] = Magnitude(0.0);
    // Step PM per subset, built from the subset without its lowest type.
    std::vector<Magnitude> f(full);
    std::vector<Magnitude> pm_any(full), selprod(full), minwr(full);
    pm_any[0] = Magnitude(1.0);
    selprod[0] = Magnitude(1.0);
    for (std::size_t m = 1; m < full; ++m) {
        auto t = static_cast<std::size_t>(__builtin_ctzll(m));
        std::size_t rest = m & (m - 1);
        double cross = p.s(t, t);
        for (std::size_t r = rest; r; r &= r - 1) cross *= p.s(static_cast<std::size_t>(__builtin_ctzll(r)), t);
        pm_any[m] = pm_any[rest] * p.wr[t] * Magnitude(cross);
        selprod[m] = selprod[rest] * Magnitude(cross);
        minwr[m] = rest == 0 ? p.wr[t] : min(minwr[rest], p.wr[t]);
        f[m] = p.config.family == CostFamily::any_match ? pm_any[m] : Magnitude(p.window) * minwr[m] * selprod[m];
    }
    for (std::size_t m = 1; m < full; ++m) {
        for (std::size_t t = 0; t < n; ++t) {
            if (!(m >> t & 1U)) continue;
            std::size_t prev = m & ~(std::size_t{1} << t);
            ++candidates;
            Magnitude lat = p.contains_last(prev) ? p.wr[t] : Magnitude(0.0);
            Magnitude c = best[prev] + p.combine(f[m], lat);
            if (!done[m] || c < best[m]) {
                best[m] = c;
                choice[m] = static_cast<std::int8_t>(t);
                done[m] = true;
            }
        }
    }
    Order o(n);
    std::size_t m = full - 1;
    for (std::size_t k = n; k-- > 0;) {
        o[k] = choice[m];
        m &= ~(std::size_t{1} << static_cast<std::size_t>(choice[m]));
    }
    return o;
}

/// Tree PM per subset mask, in the problem's family.
inline std::vector<Magnitude> tree_pm_table(const CostProblem& p) {
    std::size_t full = std::size_t{1} << p.size();
    std::vector<Magnitude> wrp(full), pairs(full), minwr(full), out(full);
    wrp[0] = Magnitude(1.0);
    pairs[0] = Magnitude(1.0);
    for (std::size_t m = 1; m < full; ++m) {
        auto t = static_cast<std::size_t>(__builtin_ctzll(m));
        std::size_t rest = m & (m - 1);
        double cross = 1.0;
        for (std::size_t r = rest; r; r &= r - 1) cross *= p.s(static_cast<std::size_t>(__builtin_ctzll(r)), t);
        wrp[m] = wrp[rest] * p.wr[t];
        pairs[m] = pairs[rest] * Magnitude(cross);
        minwr[m] = rest == 0 ? p.wr[t] : min(minwr[rest], p.wr[t]);
        out[m] = p.config.family == CostFamily::any_match ? wrp[m] * pairs[m] : minwr[m] * pairs[m];
    }
    return out;
}

/// Combined cost of the internal node joining `l` and `r`.
inline Magnitude join_cost(const CostProblem& p, const std::vector<Magnitude>& pm, std::size_t l, std::size_t r) {
    Magnitude lat(0.0);
    if (p.contains_last(l))
        lat = pm[r];
    else if (p.contains_last(r))
        lat = pm[l];
    return p.combine(pm[l | r], lat);
}

inline Magnitude leaf_cost(const CostProblem& p, std::size_t t) { return p.combine(p.wr[t], Magnitude(0.0)); }

/// Best topology over a fixed leaf sequence; `topologies` receives the number of trees the DP covers.
inline TreePlan zstream(const CostProblem& p, const Order& leaves, std::size_t& topologies) {
    std::size_t n = leaves.size();
    if (n == 0) throw ContractError("zstream: empty leaf sequence");
    if (p.size() > 24) throw ResourceError("zstream_types", 24, p.size());
    auto pm = tree_pm_table(p);
    std::vector<std::vector<Magnitude>> cost(n, std::vector<Magnitude>(n));
    std::vector<std::vector<std::size_t>> split(n, std::vector<std::size_t>(n, 0));
    std::vector<std::vector<std::size_t>> mask(n, std::vector<std::size_t>(n, 0));
    std::vector<std::vector<double>> count(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
        auto t = static_cast<std::size_t>(leaves[i]);
        cost[i][i] = leaf_cost(p, t);
        mask[i][i] = std::size_t{1} << t;
        count[i][i] = 1;
    }
    for (std::size_t len = 2; len <= n; ++len)
        for (std::size_t i = 0; i + len <= n; ++i) {
            std::size_t j = i + len - 1;
            mask[i][j] = mask[i][i] | mask[i + 1][j];
            bool have = false;
            for (std::size_t k = i; k < j; ++k) {
                count[i][j] += count[i][k] * count[k + 1][j];
                Magnitude c = cost[i][k] + cost[k + 1][j] + join_cost(p, pm, mask[i][k], mask[k + 1][j]);
                if (!have || c < cost[i][j]) {
                    cost[i][j] = c;
                    split[i][j] = k;
                    have = true;
                }
            }
        }
    topologies = static_cast<std::size_t>(std::llround(count[0][n - 1]));
    std::function<TreePlan(std::size_t, std::size_t)> build = [&](std::size_t i, std::size_t j) {
        if (i == j) return TreePlan::leaf(p.types[static_cast<std::size_t>(leaves[i])]);
        return TreePlan::join(build(i, split[i][j]), build(split[i][j] + 1, j));
    };
    return build(0, n - 1);
}

inline TreePlan dp_b(const CostProblem& p, std::size_t limit, std::size_t& candidates) {
    std::size_t n = p.size();
    if (n > limit) throw ResourceError("dp_b_limit", limit, n);
    std::size_t full = std::size_t{1} << n;
    auto pm = tree_pm_table(p);
    std::vector<Magnitude> best(full);
    std::vector<std::size_t> left(full, 0);
    for (std::size_t m = 1; m < full; ++m) {
        if ((m & (m - 1)) == 0) {
            best[m] = leaf_cost(p, static_cast<std::size_t>(__builtin_ctzll(m)));
            continue;
        }
        // Left child always holds the lowest type; the mirrored tree costs the same.
        std::size_t low = m & (~m + 1);
        std::size_t rest = m ^ low;
        bool have = false;
        for (std::size_t sub = rest;; sub = (sub - 1) & rest) {
            std::size_t l = low | sub;
            if (l != m) {
                std::size_t r = m ^ l;
                ++candidates;
                Magnitude c = best[l] + best[r] + join_cost(p, pm, l, r);
                if (!have || c < best[m]) {
                    best[m] = c;
                    left[m] = l;
                    have = true;
                }
            }
            if (sub == 0) break;
        }
    }
    std::function<TreePlan(std::size_t)> build = [&](std::size_t m) {
        if ((m & (m - 1)) == 0) return TreePlan::leaf(p.types[static_cast<std::size_t>(__builtin_ctzll(m))]);
        return TreePlan::join(build(left[m]), build(m ^ left[m]));
    };
    return build(full - 1);
}

}  // namespace detail

/// Runs one algorithm over an index problem. The plan names the problem's types.
[[nodiscard]] inline PlanSearchReport generate_plan(Algorithm alg, const CostProblem& p, const PlannerConfig& cfg = {}) {
    if (p.size() == 0) throw ContractError("plan generation over an empty type set");
    auto start = std::chrono::steady_clock::now();
    PlanSearchReport r;
    r.algorithm = algorithm_name(alg);
    std::size_t cands = 0;
    switch (alg) {
        case Algorithm::trivial: r.plan = detail::to_order_plan(p, detail::trivial(p)), cands = 1; break;
        case Algorithm::efreq: r.plan = detail::to_order_plan(p, detail::efreq(p)), cands = 1; break;
        case Algorithm::greedy: r.plan = detail::to_order_plan(p, detail::greedy(p, cands)); break;
        case Algorithm::ii_random:
        case Algorithm::ii_greedy: {
            bool g = alg == Algorithm::ii_greedy;
            r.seed = cfg.seed;
            r.plan = detail::to_order_plan(
                p, detail::iterative_improvement(p, g, g ? cfg.ii_greedy_restarts : cfg.ii_random_restarts, cfg.seed,
                                                 cfg.ii_first_improvement, cfg.threads, cands));
            break;
        }
        case Algorithm::dp_ld: r.plan = detail::to_order_plan(p, detail::dp_ld(p, cfg.dp_ld_limit, cands)); break;
        case Algorithm::zstream: r.plan = detail::zstream(p, detail::trivial(p), cands); break;
        case Algorithm::zstream_ord: {
            std::size_t g = 0;
            r.plan = detail::zstream(p, detail::greedy(p, g), cands);
            break;
        }
        case Algorithm::dp_b: r.plan = detail::dp_b(p, cfg.dp_b_limit, cands); break;
    }
    r.candidates = std::max<std::size_t>(cands, 1);
    r.cost = evaluate_plan(p, r.plan);
    r.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    return r;
}

// ---------------------------------------------------------------------------
// Pattern-level entry points (flat positive patterns, catalog used as given)
// ---------------------------------------------------------------------------

[[nodiscard]] inline CostProblem problem_for(const Pattern& p, const StatisticsCatalog& stats,
                                             const CostModelConfig& cfg = {}) {
    auto types = p.positive_types();
    std::string structural = p.root.kind == NodeKind::seq && !types.empty() ? types.back() : std::string{};
    auto last = cfg.objective == Objective::throughput ? std::string{}
                                                        : resolve_last_type(cfg, types, stats, structural);
    return CostProblem::make(types, stats, p.window, cfg, last);
}

[[nodiscard]] inline OrderPlan gen_trivial(const Pattern& p) {
    OrderPlan o;
    o.order = p.positive_types();
    return o;
}

[[nodiscard]] inline OrderPlan gen_efreq(const Pattern& p, const StatisticsCatalog& stats) {
    return std::get<OrderPlan>(generate_plan(Algorithm::efreq, problem_for(p, stats)).plan);
}

[[nodiscard]] inline OrderPlan gen_greedy(const Pattern& p, const StatisticsCatalog& stats,
                                          const CostModelConfig& cfg = {}) {
    return std::get<OrderPlan>(generate_plan(Algorithm::greedy, problem_for(p, stats, cfg)).plan);
}

[[nodiscard]] inline OrderPlan gen_iterative_improvement(const Pattern& p, const StatisticsCatalog& stats,
                                                         const PlannerConfig& cfg, bool from_greedy) {
    auto alg = from_greedy ? Algorithm::ii_greedy : Algorithm::ii_random;
    return std::get<OrderPlan>(generate_plan(alg, problem_for(p, stats, cfg.cost), cfg).plan);
}

[[nodiscard]] inline OrderPlan gen_dp_ld(const Pattern& p, const StatisticsCatalog& stats,
                                         const PlannerConfig& cfg = {}) {
    return std::get<OrderPlan>(generate_plan(Algorithm::dp_ld, problem_for(p, stats, cfg.cost), cfg).plan);
}

/// Interval DP over `leaf_order` (declaration order when empty).
[[nodiscard]] inline PlanSearchReport gen_zstream(const Pattern& p, const StatisticsCatalog& stats,
                                                  const std::vector<std::string>& leaf_order = {},
                                                  const CostModelConfig& cfg = {}) {
    auto prob = problem_for(p, stats, cfg);
    auto start = std::chrono::steady_clock::now();
    std::vector<int> leaves = leaf_order.empty() ? detail::trivial(prob) : prob.indices(leaf_order);
    PlanSearchReport r;
    r.algorithm = algorithm_name(Algorithm::zstream);
    r.plan = detail::zstream(prob, leaves, r.candidates);
    r.cost = evaluate_plan(prob, r.plan);
    r.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    return r;
}

[[nodiscard]] inline TreePlan gen_zstream_ord(const Pattern& p, const StatisticsCatalog& stats,
                                              const CostModelConfig& cfg = {}) {
    return std::get<TreePlan>(generate_plan(Algorithm::zstream_ord, problem_for(p, stats, cfg)).plan);
}

[[nodiscard]] inline TreePlan gen_dp_b(const Pattern& p, const StatisticsCatalog& stats,
                                       const PlannerConfig& cfg = {}) {
    return std::get<TreePlan>(generate_plan(Algorithm::dp_b, problem_for(p, stats, cfg.cost), cfg).plan);
}

// ---------------------------------------------------------------------------
// Exhaustive enumeration (reference results for tests and verification)
// ---------------------------------------------------------------------------

[[nodiscard]] inline std::vector<std::vector<std::string>> all_orders(std::vector<std::string> types) {
    std::sort(types.begin(), types.end());
    std::vector<std::vector<std::string>> out;
    do out.push_back(types);
    while (std::next_permutation(types.begin(), types.end()));
    return out;
}

/// Every binary tree over the types: all topologies, all leaf orders, both child orientations.
[[nodiscard]] inline std::vector<TreePlan> all_trees(const std::vector<std::string>& types) {
    std::function<std::vector<TreePlan>(const std::vector<std::string>&)> rec =
        [&](const std::vector<std::string>& set) -> std::vector<TreePlan> {
        if (set.size() == 1) return {TreePlan::leaf(set[0])};
        std::vector<TreePlan> out;
        std::size_t n = set.size();
        for (std::size_t m = 1; m + 1 < (std::size_t{1} << n); ++m) {
            std::vector<std::string> l, r;
            for (std::size_t i = 0; i < n; ++i) (m >> i & 1U ? l : r).push_back(set[i]);
            auto ls = rec(l);
            auto rs = rec(r);
            for (const auto& a : ls)
                for (const auto& b : rs) out.push_back(TreePlan::join(a, b));
        }
        return out;
    };
    if (types.empty()) return {};
    return rec(types);
}

[[nodiscard]] inline std::uint64_t catalan(unsigned n) {
    std::uint64_t c = 1;
    for (unsigned i = 0; i < n; ++i) c = c * 2 * (2 * i + 1) / (i + 2);
    return c;
}

// ---------------------------------------------------------------------------
// Finalization and whole-pattern planning
// ---------------------------------------------------------------------------

/**
 * Renames synthetic Kleene types back to their origins (marking them Kleene)
 * and places each negation checkpoint at the earliest step or smallest node
 * whose accepted types cover its dependencies. A checkpoint without
 * dependencies goes to step 1 or to the root.
 */
[[nodiscard]] inline Plan finalize_plan(Plan plan, const Conjunct& c) {
    std::map<std::string, std::string> origin;
    for (const auto& s : c.annotations.kleene) origin[s.name] = s.origin;
    auto rename = [&](std::string& t) {
        if (auto it = origin.find(t); it != origin.end()) t = it->second;
    };
    if (auto* o = std::get_if<OrderPlan>(&plan)) {
        for (auto& t : o->order) rename(t);
        for (const auto& s : c.annotations.kleene) o->kleene.insert(s.origin);
        for (const auto& neg : c.annotations.negations) {
            std::set<std::string> have;
            std::size_t step = 0;
            for (std::size_t k = 0; k < o->order.size() && step == 0; ++k) {
                have.insert(o->order[k]);
                if (std::includes(have.begin(), have.end(), neg.dependencies.begin(), neg.dependencies.end()))
                    step = k + 1;
            }
            if (step == 0) throw ContractError("negation of '" + neg.type + "' depends on types outside the plan");
            o->negation_checkpoints[neg.type] = step;
        }
        return plan;
    }
    auto& t = std::get<TreePlan>(plan);
    for (auto& nd : t.nodes)
        if (nd.is_leaf()) rename(nd.type);
    for (const auto& s : c.annotations.kleene) t.kleene.insert(s.origin);
    for (const auto& neg : c.annotations.negations) {
        if (neg.dependencies.empty()) {
            t.negation_checkpoints[neg.type] = static_cast<std::size_t>(t.root);
            continue;
        }
        std::optional<std::size_t> bestnode;
        std::size_t best_size = 0;
        for (std::size_t i = 0; i < t.nodes.size(); ++i) {
            auto l = t.leaves(static_cast<int>(i));
            std::set<std::string> have(l.begin(), l.end());
            if (!std::includes(have.begin(), have.end(), neg.dependencies.begin(), neg.dependencies.end())) continue;
            if (!bestnode || l.size() < best_size) {
                bestnode = i;
                best_size = l.size();
            }
        }
        if (!bestnode) throw ContractError("negation of '" + neg.type + "' depends on types outside the plan");
        t.negation_checkpoints[neg.type] = *bestnode;
    }
    return plan;
}

/// Ratio cost(EFREQ) / cost(plan) under the same cost model.
[[nodiscard]] inline double normalized_cost(const Plan& plan, const CostProblem& p) {
    auto base = evaluate_order(p, detail::efreq(p)).combined;
    auto own = evaluate_plan(p, plan).combined;
    if (own.is_zero()) throw ContractError("normalized cost of a zero-cost plan");
    if (!base.is_log() && !own.is_log()) return base.linear() / own.linear();
    return std::exp2(base.log2() - own.log2());
}

[[nodiscard]] inline double normalized_cost(const Plan& plan, const Pattern& pattern, const StatisticsCatalog& stats,
                                            const CostModelConfig& cfg = {}) {
    return normalized_cost(plan, problem_for(pattern, stats, cfg));
}

struct ConjunctPlan {
    Plan plan;  // finalized: original type names, checkpoints placed
    PlanSearchReport search;
    StatisticsCatalog catalog;
    std::string last_type;
};

/// Plans for every conjunct of a normalized pattern.
struct ExecutionPlan {
    NormalizedPattern normalized;
    std::vector<ConjunctPlan> conjuncts;
    std::string algorithm;

    [[nodiscard]] Magnitude total_cost() const {
        Magnitude m(0.0);
        for (const auto& c : conjuncts) m += c.search.cost.combined;
        return m;
    }
    [[nodiscard]] std::size_t candidates() const {
        std::size_t n = 0;
        for (const auto& c : conjuncts) n += c.search.candidates;
        return n;
    }
    [[nodiscard]] double wall_ms() const {
        double t = 0;
        for (const auto& c : conjuncts) t += c.search.wall_ms;
        return t;
    }
};

/// The index problem a conjunct is planned on: core types, planning catalog, family from the strategy.
[[nodiscard]] inline CostProblem conjunct_problem(const Conjunct& c, const StatisticsCatalog& catalog,
                                                  CostModelConfig cfg) {
    auto types = c.core.positive_types();
    cfg.family = cost_family(c.pattern.strategy);
    std::map<std::string, std::string> core_name;
    for (const auto& s : c.annotations.kleene) core_name[s.origin] = s.name;
    auto to_core = [&](const std::string& t) {
        auto it = core_name.find(t);
        return it == core_name.end() ? t : it->second;
    };
    if (!cfg.last_type.empty()) cfg.last_type = to_core(cfg.last_type);
    if (cfg.profile) {
        ArrivalOrderProfile mapped;
        mapped.total = cfg.profile->total;
        for (const auto& [order, n] : cfg.profile->counts) {
            std::vector<std::string> o;
            for (const auto& t : order) o.push_back(to_core(t));
            mapped.counts[o] += n;
        }
        cfg.profile = mapped;
    }
    std::string last;
    if (cfg.objective != Objective::throughput)
        last = resolve_last_type(cfg, types, catalog, to_core(c.annotations.last_type));
    return CostProblem::make(types, catalog, c.core.window, cfg, last);
}

[[nodiscard]] inline ExecutionPlan plan_pattern(const Pattern& pattern, const StatisticsCatalog& stats, Algorithm alg,
                                                const PlannerConfig& cfg = {}, const PlanningOptions& opt = {}) {
    ExecutionPlan out;
    out.normalized = normalize(pattern);
    out.algorithm = algorithm_name(alg);
    for (const auto& c : out.normalized.conjuncts) {
        ConjunctPlan cp;
        cp.catalog = planning_catalog(c, stats, opt);
        auto prob = conjunct_problem(c, cp.catalog, cfg.cost);
        cp.last_type = prob.last >= 0 ? prob.types[static_cast<std::size_t>(prob.last)] : std::string{};
        cp.search = generate_plan(alg, prob, cfg);
        cp.plan = finalize_plan(cp.search.plan, c);
        out.conjuncts.push_back(std::move(cp));
    }
    return out;
}

/// Plan files carry no wall-clock fields unless asked, so equal seeds give byte-identical files.
[[nodiscard]] inline nlohmann::json execution_plan_json(const ExecutionPlan& e, bool timings = false) {
    nlohmann::json j;
    j["algorithm"] = e.algorithm;
    j["total_cost"] = magnitude_json(e.total_cost());
    j["conjuncts"] = nlohmann::json::array();
    for (const auto& c : e.conjuncts) {
        auto pj = plan_json(c.plan);
        pj["cost"] = cost_json(c.search.cost);
        pj["candidates"] = c.search.candidates;
        if (timings) pj["wall_ms"] = c.search.wall_ms;
        if (c.search.seed) pj["seed"] = *c.search.seed;
        if (!c.last_type.empty()) pj["last_type"] = c.last_type;
        j["conjuncts"].push_back(pj);
    }
    return j;
}

}  // namespace cep
