#include <gtest/gtest.h>

#include "properties.hpp"

using namespace cep;
using namespace cep::testing;

namespace {

const std::vector<EngineKind> kEngines{EngineKind::nfa, EngineKind::tree};

MatchSet run_with(const Pattern& p, const Plan& plan, EngineKind kind, const EventStream& s) {
    auto np = normalize(p);
    return run_engine(np, {finalize_plan(plan, np.conjuncts.at(0))}, kind, s);
}

OrderPlan order(std::vector<std::string> o) {
    OrderPlan p;
    p.order = std::move(o);
    return p;
}

}  // namespace

TEST(Runtime, SingleSequenceMatch) {
    auto p = parse_pattern_or_throw("PATTERN SEQ(A a, B b, C c) WITHIN 10 seconds");
    auto s = make_stream({{"A", 1}, {"B", 2}, {"C", 3}});
    for (auto kind : kEngines)
        for (const auto& o : all_orders({"A", "B", "C"}))
            EXPECT_EQ(run_with(p, order(o), kind, s), (MatchSet{{0, 1, 2}})) << engine_name(kind) << " " << join(o);
}

TEST(Runtime, WindowExcludesStaleEvents) {
    auto p = parse_pattern_or_throw("PATTERN SEQ(A a, B b) WITHIN 5 seconds");
    auto s = make_stream({{"A", 0}, {"A", 4}, {"B", 8}});
    for (auto kind : kEngines) EXPECT_EQ(run_with(p, order({"A", "B"}), kind, s), (MatchSet{{1, 2}}));
}

TEST(Runtime, AnyMatchAndNextMatch) {
    auto any = parse_pattern_or_throw("PATTERN SEQ(A a, B b) WITHIN 10 seconds");
    auto next = parse_pattern_or_throw("PATTERN SEQ(A a, B b) WITHIN 10 seconds STRATEGY next-match");
    auto s = make_stream({{"A", 1}, {"A", 2}, {"B", 3}});
    for (auto kind : kEngines) {
        EXPECT_EQ(run_with(any, order({"A", "B"}), kind, s), (MatchSet{{0, 2}, {1, 2}}));
        EXPECT_EQ(run_with(next, order({"B", "A"}), kind, s), (MatchSet{{0, 2}}));
    }
}

TEST(Runtime, StrictContiguityRejectsInterleavedEvents) {
    auto p = parse_pattern_or_throw("PATTERN SEQ(A a, B b) WITHIN 10 seconds STRATEGY strict-contiguity");
    for (auto kind : kEngines) {
        EXPECT_TRUE(run_with(p, order({"A", "B"}), kind, make_stream({{"A", 1}, {"X", 2}, {"B", 3}})).empty());
        EXPECT_EQ(run_with(p, order({"B", "A"}), kind, make_stream({{"A", 1}, {"B", 2}})), (MatchSet{{0, 1}}));
    }
}

TEST(Runtime, PartitionContiguityIgnoresOtherPartitions) {
    auto p = parse_pattern_or_throw("PATTERN SEQ(A a, B b) WITHIN 10 seconds STRATEGY partition-contiguity(key)");
    auto s = make_stream({{"A", 1, {{"key", std::string("p")}}},
                          {"A", 2, {{"key", std::string("q")}}},
                          {"B", 3, {{"key", std::string("p")}}}});
    for (auto kind : kEngines) EXPECT_EQ(run_with(p, order({"A", "B"}), kind, s), (MatchSet{{0, 2}}));
}

TEST(Runtime, EmptyStreamLeavesZeroMetrics) {
    auto p = parse_pattern_or_throw("PATTERN SEQ(A a, B b) WITHIN 10 seconds");
    auto np = normalize(p);
    for (auto kind : kEngines) {
        Engine e(np, trivial_plans(np), kind);
        EXPECT_TRUE(e.run({}).empty());
        const auto& m = e.metrics();
        EXPECT_EQ(m.events_processed, 0u);
        EXPECT_EQ(m.matches_emitted, 0u);
        EXPECT_EQ(m.peak_partial_matches, 0u);
        EXPECT_EQ(m.peak_memory, 0u);
        EXPECT_EQ(m.mean_latency_us(), 0.0);
        EXPECT_EQ(m.throughput(), 0.0);
    }
}

TEST(Runtime, NfaHasOneStatePerPrefix) {
    for (std::size_t n = 1; n <= 6; ++n) {
        Pattern p;
        p.window = 1;
        std::vector<PatternNode> kids;
        for (const auto& t : type_names(n)) kids.push_back(PatternNode::leaf(t, "e" + t));
        p.root = PatternNode::op(NodeKind::conj, kids);
        auto np = normalize(p);
        Engine e(np, trivial_plans(np), EngineKind::nfa);
        EXPECT_EQ(e.state_counts(), (std::vector<std::size_t>{n + 1}));
        Engine t(np, trivial_plans(np), EngineKind::tree);
        EXPECT_TRUE(t.state_counts().empty());
        EXPECT_EQ(t.metrics().peak_per_unit.size(), 2 * n - 1);
    }
}

TEST(Runtime, KleeneBindsEveryNonEmptySubset) {
    auto p = parse_pattern_or_throw("PATTERN SEQ(A a, KL(B b), C c) WITHIN 10 seconds");
    auto s = make_stream({{"A", 1}, {"B", 2}, {"B", 3}, {"B", 4}, {"C", 5}});
    auto truth = oracle::match(normalize(p), s);
    EXPECT_EQ(truth.size(), 7u);
    for (auto kind : kEngines)
        for (const auto& o : all_orders({"A", "B", "C"})) EXPECT_EQ(run_with(p, order(o), kind, s), truth) << join(o);
}

TEST(Runtime, NegationBlocksOnlyBetweenItsNeighbours) {
    auto p = parse_pattern_or_throw("PATTERN SEQ(A a, NOT(B b), C c) WITHIN 10 seconds");
    auto s = make_stream({{"A", 1}, {"B", 2}, {"A", 3}, {"C", 4}});
    for (auto kind : kEngines)
        for (const auto& o : all_orders({"A", "C"})) EXPECT_EQ(run_with(p, order(o), kind, s), (MatchSet{{2, 3}}));
}

TEST(Runtime, TreeJoinsTheSelectivePairFirst) {
    // ((A,C),B): A and C combine at the inner node, B joins at the root.
    auto p = parse_pattern_or_throw("PATTERN SEQ(A a, B b, C c) WHERE (a.x = c.x) WITHIN 10 seconds");
    auto tree = TreePlan::join(TreePlan::join(TreePlan::leaf("A"), TreePlan::leaf("C")), TreePlan::leaf("B"));
    auto s = make_stream({{"A", 1, {{"x", 1.0}}}, {"A", 2, {{"x", 2.0}}}, {"B", 3}, {"C", 4, {{"x", 2.0}}}});
    auto np = normalize(p);
    Engine e(np, {finalize_plan(tree, np.conjuncts[0])}, EngineKind::tree);
    EXPECT_EQ(match_set(e.run(s)), (MatchSet{{1, 2, 3}}));
    EXPECT_GE(e.metrics().instances_created, 1u);
    EXPECT_EQ(e.metrics().events_processed, 4u);
}

TEST(Runtime, PlacingTheLastTypeLastCutsDetectionWork) {
    // Many A and B events, then C: with C last in the plan, C only extends existing partial matches.
    auto p = parse_pattern_or_throw("PATTERN SEQ(A a, B b, C c) WITHIN 100 seconds");
    std::vector<Ev> evs;
    for (int i = 0; i < 30; ++i) evs.push_back({i % 2 ? "B" : "A", static_cast<double>(i)});
    evs.push_back({"C", 40});
    auto s = make_stream(evs);
    auto np = normalize(p);
    auto work = [&](const OrderPlan& o) {
        Engine e(np, {finalize_plan(o, np.conjuncts[0])}, EngineKind::nfa);
        e.run(s);
        return e.metrics().mean_latency_work();
    };
    EXPECT_LT(work(order({"A", "B", "C"})), work(order({"C", "A", "B"})));
}

TEST(Runtime, EveryMatchFitsTheWindow) {
    std::mt19937_64 rng(31);
    auto p = parse_pattern_or_throw("PATTERN AND(A a, B b, C c) WITHIN 2 seconds");
    for (int round = 0; round < 20; ++round) {
        auto s = random_stream(rng, {"A", "B", "C"}, 40, 0.4);
        for (auto kind : kEngines) {
            auto got = run_with(p, order({"C", "B", "A"}), kind, s);
            for (const auto& m : got) {
                double lo = s[m.front()]->timestamp, hi = lo;
                for (auto id : m) lo = std::min(lo, s[id]->timestamp), hi = std::max(hi, s[id]->timestamp);
                EXPECT_LE(hi - lo, 2.0);
            }
            EXPECT_EQ(got, oracle::match(normalize(p), s));
        }
    }
}

TEST(Runtime, NextMatchNeverReusesAnEvent) {
    std::mt19937_64 rng(32);
    auto p = parse_pattern_or_throw("PATTERN SEQ(A a, B b, C c) WHERE (a.x <= c.x) WITHIN 3 seconds STRATEGY next-match");
    for (int round = 0; round < 20; ++round) {
        auto s = random_stream(rng, {"A", "B", "C"}, 40, 0.8);
        for (auto kind : kEngines) {
            auto got = run_with(p, order({"B", "C", "A"}), kind, s);
            std::set<std::uint64_t> seen;
            for (const auto& m : got)
                for (auto id : m) EXPECT_TRUE(seen.insert(id).second) << id;
            EXPECT_EQ(got, oracle::match(normalize(p), s));
        }
    }
}

TEST(Runtime, PlansAgreeOnASmallCorpus) {
    auto r = check_engine_corpus(9, 1, 1);
    EXPECT_EQ(r.cells.failed, 0u) << r.cells.first_failure;
    EXPECT_GT(r.oracle_matches, 0u);
}

TEST(Runtime, RejectsMismatchedPlanCount) {
    auto np = normalize(parse_pattern_or_throw("PATTERN SEQ(A a, B b) WITHIN 1 seconds"));
    EXPECT_THROW(Engine(np, {}, EngineKind::nfa), ContractError);
    EXPECT_THROW((void)parse_engine("petri"), ContractError);
}
