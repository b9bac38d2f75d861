#include <gtest/gtest.h>

#include "properties.hpp"

using namespace cep;
using namespace cep::testing;

namespace {

constexpr double W = 10.0;

OrderPlan order(std::vector<std::string> o) {
    OrderPlan p;
    p.order = std::move(o);
    return p;
}

TreePlan L(const std::string& t) { return TreePlan::leaf(t); }
TreePlan J(const TreePlan& a, const TreePlan& b) { return TreePlan::join(a, b); }

/// ((A,C),B): the tree that joins the selective pair first.
TreePlan ac_b() { return J(J(L("A"), L("C")), L("B")); }

std::vector<double> linear(const std::vector<Magnitude>& ms) {
    std::vector<double> out;
    for (const auto& m : ms) out.push_back(m.linear());
    return out;
}

}  // namespace

TEST(CostOrd, S3OrderABC) {
    auto b = cost_ord(order({"A", "B", "C"}), s3(), W);
    EXPECT_EQ(linear(b.components), (std::vector<double>{10, 100, 400}));
    EXPECT_DOUBLE_EQ(b.throughput.linear(), 510);
    EXPECT_DOUBLE_EQ(b.combined.linear(), 510);
}

TEST(CostOrd, S3OrderACB) { EXPECT_DOUBLE_EQ(cost_ord(order({"A", "C", "B"}), s3(), W).throughput.linear(), 450); }

TEST(CostOrd, SingleType) {
    EXPECT_DOUBLE_EQ(cost_ord(order({"A"}), catalog({{"A", 1}}), W).throughput.linear(), 10);
}

TEST(CostOrd, FilterEntersAtItsStep) {
    auto stats = s3();
    stats.set_selectivity("C", "C", 0.5);
    auto b = cost_ord(order({"A", "C", "B"}), stats, W);
    EXPECT_EQ(linear(b.components), (std::vector<double>{10, 20, 200}));
}

TEST(CostOrd, MissingRateIsAStatisticsError) {
    EXPECT_THROW((void)cost_ord(order({"A", "Q"}), s3(), W), DataError);
}

TEST(CostLdj, S3Relations) {
    auto rel = relations_from({"A", "B", "C"}, s3(), W);
    EXPECT_EQ(rel.cardinality, (std::vector<double>{10, 20, 40}));
    EXPECT_DOUBLE_EQ(cost_ldj({"A", "B", "C"}, rel), 510);
    for (const auto& o : all_orders({"A", "B", "C"}))
        EXPECT_NEAR(cost_ldj(o, rel), cost_ord(order(o), s3(), W).throughput.linear(), 1e-9) << join(o);
}

TEST(CostLdj, SingleRelation) {
    JoinRelations r{{"R"}, {10.0}, {{1.0}}};
    EXPECT_DOUBLE_EQ(cost_ldj({"R"}, r), 10);
}

TEST(CostTree, S3NodePartialMatches) {
    auto t = ac_b();
    auto b = cost_tree(t, s3(), W);
    EXPECT_DOUBLE_EQ(b.throughput.linear(), 510);
    std::map<std::string, double> by_node;
    for (std::size_t i = 0; i < t.nodes.size(); ++i) {
        auto l = t.leaves(static_cast<int>(i));
        by_node[join(l)] = b.components[i].linear();
    }
    EXPECT_EQ(by_node, (std::map<std::string, double>{{"A", 10}, {"C", 40}, {"B", 20}, {"A,C", 40}, {"A,C,B", 400}}));
}

TEST(CostTree, SingleLeaf) { EXPECT_DOUBLE_EQ(cost_tree(L("B"), s3(), W).throughput.linear(), 20); }

TEST(CostBj, S3AndSingleRelation) {
    EXPECT_DOUBLE_EQ(cost_bj(ac_b(), relations_from({"A", "B", "C"}, s3(), W)), 510);
    JoinRelations r{{"R"}, {10.0}, {{1.0}}};
    EXPECT_DOUBLE_EQ(cost_bj(L("R"), r), 10);
}

TEST(CostBj, FourRelationsAllTrees) {
    std::mt19937_64 rng(3);
    auto types = type_names(4);
    auto rel = random_relations(rng, types);
    auto stats = catalog_from_relations(rel, W);
    auto trees = all_trees(types);
    // 5 topologies x 4! leaf orders; the leaf orders already include every mirror.
    EXPECT_EQ(trees.size(), 5u * 24u);
    for (const auto& t : trees) EXPECT_LE(rel_err(cost_bj(t, rel), cost_tree(t, stats, W).throughput.linear()), 1e-9);
}

TEST(CostTree, BridgingIdentityOnFilterFreeCatalogs) {
    // cost_tree(left_deep(o)) = cost_ord(o) + sum_{k>=2} W r_{o_k}
    std::mt19937_64 rng(8);
    for (int c = 0; c < 40; ++c) {
        auto types = type_names(2 + static_cast<std::size_t>(c % 5));
        auto stats = random_catalog(rng, types, 0.6, false);
        for (const auto& o : all_orders(types)) {
            double extra = 0;
            for (std::size_t k = 1; k < o.size(); ++k) extra += W * stats.rate(o[k]).linear();
            double tree = cost_tree(TreePlan::left_deep(o), stats, W).throughput.linear();
            double ord = cost_ord(order(o), stats, W).throughput.linear();
            ASSERT_LE(rel_err(tree, ord + extra), 1e-12) << join(o);
        }
    }
}

TEST(Latency, OrderSuccessorsOfLastType) {
    EXPECT_DOUBLE_EQ(cost_ord_latency(order({"C", "A", "B"}), s3(), W, "C").linear(), 30);
    EXPECT_DOUBLE_EQ(cost_ord_latency(order({"A", "B", "C"}), s3(), W, "C").linear(), 0);
    EXPECT_THROW((void)cost_ord_latency(order({"A", "B"}), s3(), W, "C"), ContractError);
}

TEST(Latency, TreeSiblingsOnTheAncestorPath) {
    EXPECT_DOUBLE_EQ(cost_tree_latency(ac_b(), s3(), W, "B").linear(), 40);
    EXPECT_DOUBLE_EQ(cost_tree_latency(J(L("A"), L("B")), s3(), W, "A").linear(), 20);
    EXPECT_DOUBLE_EQ(cost_tree_latency(J(L("A"), L("B")), s3(), W, "B").linear(), 10);
    // Left-deep with T_n first: every other leaf is a sibling on the path.
    EXPECT_DOUBLE_EQ(cost_tree_latency(TreePlan::left_deep({"A", "B", "C"}), s3(), W, "A").linear(), 20 + 40);
    EXPECT_THROW((void)cost_tree_latency(ac_b(), s3(), W, "D"), ContractError);
}

TEST(Latency, ProfileModeChoosesLastType) {
    ArrivalOrderProfile prof;
    prof.counts[{"A", "B", "C"}] = 2;
    prof.counts[{"C", "B", "A"}] = 5;
    prof.total = 7;
    CostModelConfig cfg = CostModelConfig::hybrid(1.0);
    cfg.profile = prof;
    EXPECT_EQ(resolve_last_type(cfg, {"A", "B", "C"}, s3(), ""), "A");
    cfg.profile.reset();
    EXPECT_EQ(resolve_last_type(cfg, {"A", "B", "C"}, s3(), ""), "C");  // highest rate
    EXPECT_EQ(resolve_last_type(cfg, {"A", "B", "C"}, s3(), "B"), "B");  // forced by ordering
    cfg.last_type = "A";
    EXPECT_EQ(resolve_last_type(cfg, {"A", "B", "C"}, s3(), "B"), "A");
}

TEST(Hybrid, DegenerateAndWorkedValues) {
    Plan cab = order({"C", "A", "B"});
    EXPECT_DOUBLE_EQ(cost_hybrid(cab, s3(), W, 0.0, "C").linear(), 480);
    EXPECT_DOUBLE_EQ(cost_hybrid(cab, s3(), W, 1.0, "C").linear(), 480 + 30);
    Plan tree = ac_b();
    EXPECT_DOUBLE_EQ(cost_hybrid(tree, s3(), W, 0.5, "B").linear(), 510 + 0.5 * 40);
}

TEST(Hybrid, AlphaSweepMovesTheArgmin) {
    // C is rare and forced last; throughput wants it first, latency wants it last.
    auto stats = catalog({{"A", 5}, {"B", 5}, {"C", 0.5}}, {{"A", "B", 0.01}, {"A", "C", 0.01}, {"B", "C", 0.01}});
    auto best = [&](double alpha) {
        std::vector<std::string> arg;
        double low = 0;
        for (const auto& o : all_orders({"A", "B", "C"})) {
            double c = cost_hybrid(Plan(order(o)), stats, W, alpha, "C").linear();
            if (arg.empty() || c < low) arg = o, low = c;
        }
        return arg;
    };
    EXPECT_EQ(best(0.0).front(), "C");
    EXPECT_EQ(best(1.0).back(), "C");
}

TEST(NextMatch, OrderFormulaAsPrinted) {
    auto b = cost_ord_next(order({"A", "C", "B"}), s3(), W);
    EXPECT_EQ(linear(b.components), (std::vector<double>{100, 10, 5}));  // W * m[k], m = [10, 1, 0.5]
    EXPECT_DOUBLE_EQ(b.throughput.linear(), 115);
    EXPECT_DOUBLE_EQ(cost_ord_next(order({"B"}), s3(), W).throughput.linear(), W * (W * 2));
    auto flat = cost_ord_next(order({"A", "B", "C"}), catalog({{"A", 3}, {"B", 3}, {"C", 3}}), W);
    EXPECT_EQ(linear(flat.components), (std::vector<double>{300, 300, 300}));
}

TEST(NextMatch, TreeFormula) {
    EXPECT_DOUBLE_EQ(cost_tree_next(ac_b(), s3(), W).throughput.linear(), 71.5);
    EXPECT_DOUBLE_EQ(cost_tree_next(L("C"), s3(), W).throughput.linear(), 40);
}

TEST(NextMatch, TreeNeverExceedsAnyMatchWhenWindowCountsAreAtLeastOne) {
    std::mt19937_64 rng(12);
    for (int c = 0; c < 60; ++c) {
        auto types = type_names(2 + static_cast<std::size_t>(c % 4));
        auto stats = random_catalog(rng, types);
        for (const auto& t : types)
            if (stats.rate(t).linear() * W < 1) stats.set_rate(t, Magnitude(1.0 / W));
        for (const auto& t : all_trees(types))
            ASSERT_LE(cost_tree_next(t, stats, W).throughput.linear(),
                      cost_tree(t, stats, W).throughput.linear() * (1 + 1e-12))
                << t.str();
    }
}

TEST(Rank, SingletonAndEmpty) {
    auto stats = catalog({{"A", 1}});
    auto r = rank_trpt({"A"}, {"A"}, stats, W, "A");
    EXPECT_DOUBLE_EQ(r.t.linear(), 10);
    EXPECT_DOUBLE_EQ(r.c.linear(), 10);
    EXPECT_DOUBLE_EQ(r.rank, 0.9);
    EXPECT_THROW((void)rank_trpt({}, {"A"}, stats, W, "A"), ContractError);
}

TEST(Rank, CyclicPredicateGraphIsUnsupported) {
    auto stats = catalog({{"A", 1}, {"B", 1}, {"C", 1}}, {{"A", "B", 0.5}, {"B", "C", 0.5}, {"A", "C", 0.5}});
    EXPECT_THROW((void)rank_trpt({"A"}, {"A", "B", "C"}, stats, W, "A"), UnsupportedPatternError);
}

TEST(Rank, ConcatenationLaw) {
    // C(s1 s2) = C(s1) + T(s1) C(s2) and T(s1 s2) = T(s1) T(s2)
    std::mt19937_64 rng(31);
    for (int c = 0; c < 200; ++c) {
        auto types = type_names(2 + static_cast<std::size_t>(c % 5));
        std::vector<int> parent;
        auto stats = random_acyclic_catalog(rng, types, parent);
        auto s = types;
        std::shuffle(s.begin(), s.end(), rng);
        auto f = rooted_factors(types, stats, W, s[0]);
        std::size_t cut = 1 + rng() % (s.size() - 1);
        std::vector<std::string> a(s.begin(), s.begin() + static_cast<long>(cut)), b(s.begin() + static_cast<long>(cut), s.end());
        auto whole = rank_components(s, f), ra = rank_components(a, f), rb = rank_components(b, f);
        ASSERT_LE(rel_err(whole.c.linear(), (ra.c + ra.t * rb.c).linear()), 1e-12);
        ASSERT_LE(rel_err(whole.t.linear(), (ra.t * rb.t).linear()), 1e-12);
    }
}

TEST(Rank, LatencyRank) {
    auto stats = catalog({{"N", 1}, {"X", 2}});
    EXPECT_DOUBLE_EQ(rank_lat({"X"}, stats, W, "N"), 0);
    EXPECT_DOUBLE_EQ(rank_lat({"N", "X"}, stats, W, "N"), 20);
    EXPECT_DOUBLE_EQ(rank_lat({"X", "N"}, stats, W, "N"), 0);
}

TEST(Properties, AddingAPredicateNeverRaisesCost) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> sel(0.01, 1.0);
    for (int c = 0; c < 100; ++c) {
        auto types = type_names(2 + static_cast<std::size_t>(c % 4));
        auto stats = random_catalog(rng, types);
        auto tighter = stats;
        auto a = types[rng() % types.size()], b = types[rng() % types.size()];
        tighter.multiply_selectivity(SelectivityKey::of(a, b), sel(rng));
        auto o = types;
        std::shuffle(o.begin(), o.end(), rng);
        EXPECT_LE(cost_ord(order(o), tighter, W).throughput, cost_ord(order(o), stats, W).throughput);
        auto t = all_trees(types)[rng() % all_trees(types).size()];
        EXPECT_LE(cost_tree(t, tighter, W).throughput, cost_tree(t, stats, W).throughput);
        EXPECT_GT(cost_ord(order(o), tighter, W).throughput, Magnitude(0.0));
        EXPECT_GT(cost_tree(t, tighter, W).throughput, Magnitude(0.0));
    }
}

TEST(Properties, MirroredTreesCostTheSameBitForBit) {
    std::mt19937_64 rng(14);
    for (int c = 0; c < 30; ++c) {
        auto types = type_names(3 + static_cast<std::size_t>(c % 3));
        auto stats = random_catalog(rng, types);
        for (const auto& t : all_trees(types)) {
            TreePlan m = t;
            for (auto& nd : m.nodes)
                if (!nd.is_leaf()) std::swap(nd.left, nd.right);
            ASSERT_EQ(cost_tree(t, stats, W).throughput, cost_tree(m, stats, W).throughput) << t.str();
        }
    }
}

TEST(Properties, LogSpaceComparisonsPromoteLinearValues) {
    auto huge = Magnitude::from_log2(2000.0);
    EXPECT_TRUE(huge.is_log());
    EXPECT_LT(Magnitude(1e300), huge);
    EXPECT_EQ((huge * Magnitude(0.5)).log2(), 1999.0);
    EXPECT_EQ((huge + huge).log2(), 2001.0);
    auto stats = catalog({{"A", 1}, {"B", 1}});
    stats.set_rate("B", Magnitude::from_log2(1200.0));
    auto b = cost_ord(order({"A", "B"}), stats, W);
    EXPECT_TRUE(b.throughput.is_log());
    EXPECT_NEAR(b.throughput.log2(), std::log2(100.0) + 1200.0, 1e-9);
}

TEST(Properties, JoinEquivalenceSmallScale) {
    auto t1 = check_order_join_equivalence(30, 6, 41);
    EXPECT_EQ(t1.failed, 0u) << t1.first_failure;
    auto t2 = check_tree_join_equivalence(20, 4, 42);
    EXPECT_EQ(t2.failed, 0u) << t2.first_failure;
}

TEST(Properties, AdjacentSequenceInterchangeSmallScale) {
    auto r = check_asi(40, 5, 43);
    EXPECT_EQ(r.trpt.failed, 0u) << r.trpt.first_failure;
    EXPECT_EQ(r.lat.failed, 0u) << r.lat.first_failure;
    EXPECT_EQ(r.rooted_cost.failed, 0u) << r.rooted_cost.first_failure;
    for (auto n : r.lat_cases) EXPECT_GT(n, 0u);
}
