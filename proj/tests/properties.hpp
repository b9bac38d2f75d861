#pragma once

// Property checks shared by the unit tests (small scale) and the acceptance binary (full scale).
// Each returns counts plus the first counterexample, so callers decide what passing means.

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "support.hpp"

namespace cep::testing {

struct Tally {
    std::size_t checked = 0;
    std::size_t failed = 0;
    double worst = 0.0;  // largest relative error seen, where applicable
    std::string first_failure;

    void fail(const std::string& what) {
        if (failed++ == 0) first_failure = what;
    }
    void merge(const Tally& o) {
        if (failed == 0 && o.failed) first_failure = o.first_failure;
        checked += o.checked;
        failed += o.failed;
        worst = std::max(worst, o.worst);
    }
};

inline double rel_err(double a, double b) {
    double scale = std::max(std::abs(a), std::abs(b));
    return scale == 0 ? 0.0 : std::abs(a - b) / scale;
}

inline std::string join(const std::vector<std::string>& v) {
    std::string s;
    for (const auto& x : v) s += (s.empty() ? "" : ",") + x;
    return s;
}

// ---------------------------------------------------------------------------
// Cost-model equivalences
// ---------------------------------------------------------------------------

/// Random join instance: cardinalities in [1, 200], f in (0,1] on a random subset of pairs.
inline JoinRelations random_relations(std::mt19937_64& rng, const std::vector<std::string>& names) {
    std::uniform_real_distribution<double> card(1.0, 200.0), f(0.005, 1.0), coin(0.0, 1.0);
    JoinRelations r;
    r.names = names;
    std::size_t n = names.size();
    r.f.assign(n, std::vector<double>(n, 1.0));
    for (std::size_t i = 0; i < n; ++i) {
        r.cardinality.push_back(card(rng));
        for (std::size_t j = i; j < n; ++j)
            if (coin(rng) < (i == j ? 0.2 : 0.6)) r.f[i][j] = r.f[j][i] = f(rng);
    }
    return r;
}

/// The CEP instance a join instance maps to: r_i = |R_i| / W, sel = f.
inline StatisticsCatalog catalog_from_relations(const JoinRelations& rel, double W) {
    StatisticsCatalog c;
    for (std::size_t i = 0; i < rel.names.size(); ++i) {
        c.set_rate(rel.names[i], Magnitude(rel.cardinality[i] / W));
        for (std::size_t j = i; j < rel.names.size(); ++j)
            if (rel.f[i][j] != 1.0) c.set_selectivity(rel.names[i], rel.names[j], rel.f[i][j]);
    }
    return c;
}

/// cost_ord = cost_ldj over every permutation, in both reduction directions.
inline Tally check_order_join_equivalence(std::size_t catalogs, std::size_t max_n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> wdist(0.5, 20.0);
    Tally t;
    for (std::size_t k = 0; k < catalogs; ++k) {
        std::size_t n = 1 + k % max_n;
        auto types = type_names(n);
        double W = wdist(rng);
        // CEP instance -> join instance.
        auto stats = random_catalog(rng, types);
        auto rel = relations_from(types, stats, W);
        // Join instance -> CEP instance.
        auto rel2 = random_relations(rng, types);
        auto stats2 = catalog_from_relations(rel2, W);
        for (const auto& order : all_orders(types)) {
            OrderPlan o;
            o.order = order;
            for (auto [s, r] : {std::pair{&stats, &rel}, std::pair{&stats2, &rel2}}) {
                double a = cost_ord(o, *s, W).throughput.linear();
                double b = cost_ldj(order, *r);
                double e = rel_err(a, b);
                t.worst = std::max(t.worst, e);
                ++t.checked;
                if (!(e <= 1e-9)) t.fail("order " + join(order) + ": cost_ord " + std::to_string(a) + " vs " + std::to_string(b));
            }
        }
    }
    return t;
}

/// cost_tree = cost_bj over every tree (topologies x leaf orders x orientations).
inline Tally check_tree_join_equivalence(std::size_t catalogs, std::size_t max_n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> wdist(0.5, 20.0);
    Tally t;
    for (std::size_t k = 0; k < catalogs; ++k) {
        std::size_t n = 1 + k % max_n;
        auto types = type_names(n);
        double W = wdist(rng);
        auto stats = random_catalog(rng, types, 0.6, false);
        auto rel = relations_from(types, stats, W);
        auto rel2 = random_relations(rng, types);
        for (std::size_t i = 0; i < n; ++i) rel2.f[i][i] = 1.0;  // neither formula has a filter term
        auto stats2 = catalog_from_relations(rel2, W);
        for (const auto& tree : all_trees(types)) {
            for (auto [s, r] : {std::pair{&stats, &rel}, std::pair{&stats2, &rel2}}) {
                double a = cost_tree(tree, *s, W).throughput.linear();
                double b = cost_bj(tree, *r);
                double e = rel_err(a, b);
                t.worst = std::max(t.worst, e);
                ++t.checked;
                if (!(e <= 1e-9)) t.fail("tree " + tree.str() + ": cost_tree " + std::to_string(a) + " vs " + std::to_string(b));
            }
        }
    }
    return t;
}

/// DP-LD cost equals the permutation minimum; DP-B cost equals the minimum over all trees. Exact.
inline Tally check_dp_optimality(std::size_t ld_catalogs, std::size_t ld_max_n, std::size_t b_catalogs,
                                 std::size_t b_max_n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> wdist(0.5, 5.0);
    Tally t;
    for (std::size_t k = 0; k < ld_catalogs + b_catalogs; ++k) {
        bool ld = k < ld_catalogs;
        std::size_t n = 1 + k % (ld ? ld_max_n : b_max_n);
        auto types = type_names(n);
        auto stats = random_catalog(rng, types);
        auto prob = CostProblem::make(types, stats, wdist(rng));
        Magnitude best(0.0);
        bool first = true;
        if (ld) {
            for (const auto& o : all_orders(types)) {
                auto c = evaluate_order(prob, prob.indices(o)).combined;
                if (first || c < best) best = c;
                first = false;
            }
        } else {
            for (const auto& tree : all_trees(types)) {
                auto c = evaluate_tree(prob, tree).combined;
                if (first || c < best) best = c;
                first = false;
            }
        }
        auto r = generate_plan(ld ? Algorithm::dp_ld : Algorithm::dp_b, prob);
        ++t.checked;
        t.worst = std::max(t.worst, relative_error(r.cost.combined, best));
        if (!(r.cost.combined == best)) {
            std::ostringstream s;
            s.precision(17);
            s << (ld ? "DP-LD" : "DP-B") << " n=" << n << " plan " << plan_str(r.plan) << " cost " << r.cost.combined
              << " vs brute-force " << best;
            t.fail(s.str());
        }
    }
    return t;
}

// ---------------------------------------------------------------------------
// Adjacent sequence interchange
// ---------------------------------------------------------------------------

struct AsiResult {
    Tally trpt;
    Tally lat;
    /// Orders where cost_ord must equal the rooted C(s): root first, parents before children.
    Tally rooted_cost;
    std::size_t lat_cases[3] = {0, 0, 0};  // T_n in u, in v, in neither
};

/// Random spanning forest over the types, each edge with a selectivity below 1; optional filters.
inline StatisticsCatalog random_acyclic_catalog(std::mt19937_64& rng, const std::vector<std::string>& types,
                                                std::vector<int>& parent) {
    std::uniform_real_distribution<double> rate(0.1, 3.0), sel(0.02, 0.98), coin(0.0, 1.0);
    StatisticsCatalog c;
    parent.assign(types.size(), -1);
    for (std::size_t i = 0; i < types.size(); ++i) {
        c.set_rate(types[i], Magnitude(rate(rng)));
        if (coin(rng) < 0.2) c.set_selectivity(types[i], types[i], sel(rng));
        if (i > 0 && coin(rng) < 0.85) {
            auto p = rng() % i;
            parent[i] = static_cast<int>(p);
            c.set_selectivity(types[p], types[i], sel(rng));
        }
    }
    return c;
}

/// Biconditional with ties admitted either way when ranks or costs agree within `tol`.
inline bool asi_holds(double cost_uv, double cost_vu, double rank_u, double rank_v, double tol = 1e-9) {
    bool rank_tie = std::abs(rank_u - rank_v) <= tol * std::max({1.0, std::abs(rank_u), std::abs(rank_v)});
    bool cost_tie = rel_err(cost_uv, cost_vu) <= tol;
    if (rank_tie || cost_tie) return true;
    return (cost_uv < cost_vu) == (rank_u < rank_v);
}

inline AsiResult check_asi(std::size_t catalogs, std::size_t max_n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> wdist(0.2, 3.0);
    AsiResult out;
    for (std::size_t k = 0; k < catalogs; ++k) {
        std::size_t n = 2 + k % (max_n - 1);
        auto types = type_names(n);
        std::vector<int> parent;
        auto stats = random_acyclic_catalog(rng, types, parent);
        double W = wdist(rng);
        std::string root = types[rng() % n];
        std::string last = types[rng() % n];
        auto factors = rooted_factors(types, stats, W, root);
        auto C = [&](const std::vector<std::string>& s) { return rank_components(s, factors).c.linear(); };

        auto orders = all_orders(types);
        if (orders.size() > 120) {
            std::shuffle(orders.begin(), orders.end(), rng);
            orders.resize(120);
        }
        for (const auto& seq : orders) {
            // Rooted-valid orders: Cost_ord equals C(s) with factors rooted at the first element.
            {
                auto f = rooted_factors(types, stats, W, seq[0]);
                auto comp = [&](std::size_t i) {
                    while (parent[i] >= 0) i = static_cast<std::size_t>(parent[i]);
                    return i;
                };
                auto root_comp = comp(static_cast<std::size_t>(seq[0][0] - 'A'));
                std::set<std::size_t> seen;
                bool valid = true;
                for (const auto& x : seq) {
                    auto i = static_cast<std::size_t>(x[0] - 'A');
                    std::size_t linked = 0;
                    for (auto j : seen)
                        if (stats.selectivity(types[i], types[j]) != 1.0) ++linked;
                    std::size_t want = seen.empty() || comp(i) != root_comp ? 0 : 1;
                    valid = valid && linked == want;
                    seen.insert(i);
                }
                if (valid) {
                    OrderPlan o;
                    o.order = seq;
                    double a = cost_ord(o, stats, W).throughput.linear();
                    double b = rank_components(seq, f).c.linear();
                    ++out.rooted_cost.checked;
                    out.rooted_cost.worst = std::max(out.rooted_cost.worst, rel_err(a, b));
                    if (rel_err(a, b) > 1e-9) out.rooted_cost.fail("rooted order " + join(seq));
                }
            }
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = i + 1; j < n; ++j)
                    for (std::size_t m = j + 1; m <= n; ++m) {
                        std::vector<std::string> a(seq.begin(), seq.begin() + static_cast<long>(i));
                        std::vector<std::string> u(seq.begin() + static_cast<long>(i), seq.begin() + static_cast<long>(j));
                        std::vector<std::string> v(seq.begin() + static_cast<long>(j), seq.begin() + static_cast<long>(m));
                        std::vector<std::string> b(seq.begin() + static_cast<long>(m), seq.end());
                        auto cat = [](std::initializer_list<const std::vector<std::string>*> parts) {
                            std::vector<std::string> r;
                            for (const auto* p : parts) r.insert(r.end(), p->begin(), p->end());
                            return r;
                        };
                        auto auvb = cat({&a, &u, &v, &b});
                        auto avub = cat({&a, &v, &u, &b});

                        double ru = rank_trpt(u, types, stats, W, root).rank;
                        double rv = rank_trpt(v, types, stats, W, root).rank;
                        double c1 = C(auvb), c2 = C(avub);
                        ++out.trpt.checked;
                        if (!asi_holds(c1, c2, ru, rv))
                            out.trpt.fail("trpt split a=" + join(a) + " u=" + join(u) + " v=" + join(v) + " b=" + join(b));

                        OrderPlan o1, o2;
                        o1.order = auvb;
                        o2.order = avub;
                        double l1 = cost_ord_latency(o1, stats, W, last).linear();
                        double l2 = cost_ord_latency(o2, stats, W, last).linear();
                        double lu = rank_lat(u, stats, W, last), lv = rank_lat(v, stats, W, last);
                        bool in_u = std::find(u.begin(), u.end(), last) != u.end();
                        bool in_v = std::find(v.begin(), v.end(), last) != v.end();
                        ++out.lat_cases[in_u ? 0 : in_v ? 1 : 2];
                        ++out.lat.checked;
                        if (!asi_holds(l1, l2, lu, lv))
                            out.lat.fail("lat split a=" + join(a) + " u=" + join(u) + " v=" + join(v) + " b=" + join(b) +
                                         " T_n=" + last);
                    }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Semantic preservation of the pattern transformations
// ---------------------------------------------------------------------------

struct PreservationCase {
    std::string family;
    std::string text;
};

inline std::vector<PreservationCase> preservation_cases() {
    return {
        {"seq-to-and", "PATTERN SEQ(A a, B b, C c) WHERE (a.x < b.x) WITHIN 1 seconds"},
        {"seq-to-and", "PATTERN SEQ(A a, B b, C c, D d) WHERE (a.x = d.x AND b.x >= c.x) WITHIN 1.5 seconds"},
        {"kleene", "PATTERN AND(A a, KL(B b), C c) WHERE (a.x <= b.x) WITHIN 1 seconds"},
        {"kleene", "PATTERN SEQ(A a, KL(B b), C c) WHERE (b.x < c.x + 1) WITHIN 1 seconds"},
        {"kleene", "PATTERN SEQ(KL(A a), B b, KL(C c)) WHERE (a.x != c.x) WITHIN 1 seconds"},
        {"negation", "PATTERN SEQ(A a, NOT(B b), C c) WHERE (b.x = a.x) WITHIN 1 seconds"},
        {"negation", "PATTERN SEQ(A a, B b, NOT(C c)) WITHIN 1 seconds"},
        {"negation", "PATTERN SEQ(NOT(A a), B b, C c) WHERE (a.x > c.x) WITHIN 1 seconds"},
        {"negation", "PATTERN AND(A a, NOT(B b), C c) WHERE (b.x < c.x) WITHIN 1 seconds"},
        {"negation", "PATTERN AND(A a, NOT(B b)) WITHIN 1 seconds"},
        {"dnf", "PATTERN AND(A a, B b, OR(C c, D d)) WHERE (a.x < c.x) WITHIN 1 seconds"},
        {"dnf", "PATTERN OR(SEQ(A a, B b), SEQ(C c, D d), SEQ(E e, F f)) WHERE (a.x < b.x) WITHIN 1 seconds"},
        {"dnf", "PATTERN SEQ(A a, OR(B b, C c), D d) WITHIN 1 seconds"},
        {"dnf", "PATTERN AND(SEQ(A a, B b), SEQ(C c, NOT(D d), E e)) WITHIN 1 seconds"},
    };
}

/// Original pattern vs its transformation, compared by oracle match sets.
inline MatchSet transformed_matches(const std::string& family, const Pattern& p, const EventStream& s,
                                    const OracleOptions& opt) {
    if (family == "seq-to-and") return oracle::match(seq_to_and(p), s, opt);
    if (family == "kleene") {
        StatisticsCatalog stats;
        for (const auto& t : p.positive_types()) stats.set_rate(t, Magnitude(2.0));
        auto rw = rewrite_kleene(p, stats);
        OracleOptions o = opt;
        for (const auto& syn : rw.rewrites) o.synthetic[syn.name] = syn.origin;
        return oracle::match(rw.pattern, s, o);
    }
    if (family == "negation") {
        auto split = split_negation(p);
        return oracle::match_checkpointed(p, split.checkpoints, s, opt);
    }
    return oracle::match(normalize(p), s, opt);
}

struct PreservationResult {
    std::map<std::string, Tally> by_family;
    std::size_t nonempty = 0;
};

/// `streams` random streams of at most `max_events` events per case; streams that break the oracle bound are redrawn.
inline PreservationResult check_semantic_preservation(std::size_t streams, std::size_t max_events, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    PreservationResult out;
    OracleOptions opt;
    for (const auto& c : preservation_cases()) {
        auto p = parse_pattern_or_throw(c.text);
        auto np = normalize(p);
        auto types = p.positive_types();
        for (const auto& l : p.leaves()) types.push_back(l.type);
        types.push_back("Z");
        std::sort(types.begin(), types.end());
        types.erase(std::unique(types.begin(), types.end()), types.end());
        auto& t = out.by_family[c.family];
        std::size_t done = 0;
        for (std::size_t attempt = 0; done < streams && attempt < streams * 20; ++attempt) {
            std::size_t n = max_events / 2 + rng() % (max_events / 2 + 1);
            auto s = random_stream(rng, types, n, 0.125);
            MatchSet want;
            try {
                want = oracle::match(p, s, opt);
            } catch (const ResourceError&) {
                continue;
            }
            ++done;
            out.nonempty += !want.empty();
            auto got = transformed_matches(c.family, p, s, opt);
            auto full = oracle::match(np, s, opt);
            t.checked += 2;
            if (got != want) t.fail(c.text + ": transformed set has " + std::to_string(got.size()) + " matches, original " + std::to_string(want.size()));
            if (full != want) t.fail(c.text + ": normalized set has " + std::to_string(full.size()) + " matches, original " + std::to_string(want.size()));
        }
        if (done < streams) t.fail(c.text + ": only " + std::to_string(done) + " streams within the oracle bound");
    }
    return out;
}

// ---------------------------------------------------------------------------
// Engines against the oracle
// ---------------------------------------------------------------------------

struct EngineCheck {
    Tally cells;
    std::size_t oracle_matches = 0;
};

/// Every corpus (pattern, stream, strategy) cell: all algorithms on both engines, plus random plans.
inline EngineCheck check_engine_corpus(std::uint64_t seed, std::size_t per_size, std::size_t random_plans) {
    std::mt19937_64 rng(seed);
    EngineCheck out;
    PlannerConfig pc;
    pc.seed = seed;
    for (const auto& cc : builtin_corpus(seed, per_size)) {
        for (const auto& strategy : applicable_strategies(cc.pattern)) {
            Pattern p = cc.pattern;
            p.strategy = strategy;
            auto np = normalize(p);
            for (std::size_t si = 0; si < cc.streams.size(); ++si) {
                const auto& s = cc.streams[si];
                std::string where = cc.id + "/" + strategy_name(strategy) + "/stream" + std::to_string(si);
                auto rep = verify(p, s, all_algorithms(), pc);
                out.oracle_matches += rep.oracle.size();
                for (const auto& cell : rep.cells) {
                    ++out.cells.checked;
                    if (!cell.pass) out.cells.fail(where + " " + cell.algorithm + "/" + cell.engine + " " + cell.error);
                }
                for (std::size_t r = 0; r < random_plans; ++r) {
                    std::vector<Plan> plans;
                    for (const auto& c : np.conjuncts) {
                        auto ts = c.core.positive_types();
                        std::shuffle(ts.begin(), ts.end(), rng);
                        Plan pl;
                        if (r % 2 == 0) {
                            OrderPlan o;
                            o.order = ts;
                            pl = o;
                        } else {
                            auto trees = all_trees(ts);
                            pl = trees[rng() % trees.size()];
                        }
                        plans.push_back(finalize_plan(pl, c));
                    }
                    for (auto kind : {EngineKind::nfa, EngineKind::tree}) {
                        ++out.cells.checked;
                        auto got = run_engine(np, plans, kind, s);
                        if (got != rep.oracle) out.cells.fail(where + " random plan " + plan_str(plans[0]) + "/" + engine_name(kind));
                    }
                }
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Exact counts
// ---------------------------------------------------------------------------

/// ZSTREAM examines Catalan(n-1) topologies over its fixed leaf sequence.
inline Tally check_zstream_counts(unsigned lo, unsigned hi) {
    Tally t;
    std::mt19937_64 rng(4);
    for (unsigned n = lo; n <= hi; ++n) {
        auto types = type_names(n);
        auto stats = random_catalog(rng, types);
        Pattern p;
        p.window = 1.0;
        std::vector<PatternNode> kids;
        for (const auto& ty : types) kids.push_back(PatternNode::leaf(ty, "e" + ty));
        p.root = PatternNode::op(NodeKind::seq, kids);
        auto r = gen_zstream(p, stats);
        ++t.checked;
        if (r.candidates != catalan(n - 1))
            t.fail("n=" + std::to_string(n) + ": " + std::to_string(r.candidates) + " topologies, expected " +
                   std::to_string(catalan(n - 1)));
    }
    return t;
}

/// log2(r' W) = r W exactly, for random (r, W) with integral r W, on the planner's synthetic catalog entry.
inline Tally check_kleene_rate_law(std::size_t samples, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> wdist(0.25, 50.0);
    Tally t;
    auto p = parse_pattern_or_throw("PATTERN AND(A a, KL(B b), C c) WITHIN 10 seconds");
    auto check = [&](double r, double W) {
        Pattern q = p;
        q.window = W;
        auto stats = catalog({{"A", 1.0}, {"B", r}, {"C", 1.0}});
        auto rw = rewrite_kleene(q, stats);
        const auto& syn = rw.rewrites.at(0);
        double target = r * W;
        double via_type = syn.window_count().log2();
        double via_rate = rw.stats.window_count(syn.name, W).log2();
        ++t.checked;
        if (via_type != target || via_rate != target || rw.stats.rate(syn.name) != syn.rate()) {
            std::ostringstream s;
            s.precision(17);
            s << "r=" << r << " W=" << W << ": log2(r'W) " << via_type << " / " << via_rate << " vs rW " << target;
            t.fail(s.str());
        }
    };
    check(5.0, 10.0);
    for (std::size_t i = 1; i < samples; ++i) {
        double W = wdist(rng);
        auto k = static_cast<double>(1 + rng() % 3000);
        check(k / W, W);
    }
    return t;
}

}  // namespace cep::testing
