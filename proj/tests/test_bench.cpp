#include <gtest/gtest.h>

#include <cmath>

#include "support.hpp"

using namespace cep;
using namespace cep::testing;

TEST(Workload, FamiliesSizesAndCounts) {
    WorkloadSpec spec;
    spec.families = {Family::sequence};
    auto w = generate_workload(spec);
    ASSERT_EQ(w.size(), 15u);
    for (const auto& wp : w) {
        EXPECT_GE(wp.size, 3u);
        EXPECT_LE(wp.size, 5u);
        EXPECT_EQ(wp.pattern.positive_types().size(), wp.size);
        EXPECT_EQ(wp.pattern.predicates.size(), wp.size / 2);
        EXPECT_TRUE(validate_pattern(wp.pattern).empty());
    }
    spec.families = {};
    EXPECT_TRUE(generate_workload(spec).empty());
}

TEST(Workload, EveryFamilyHasItsShape) {
    WorkloadSpec spec;
    spec.families = all_families();
    spec.per_size = 2;
    for (const auto& wp : generate_workload(spec)) {
        auto leaves = wp.pattern.leaves();
        auto count = [&](Unary u) {
            return std::count_if(leaves.begin(), leaves.end(), [&](const auto& l) { return l.unary == u; });
        };
        switch (wp.family) {
            case Family::negation: EXPECT_EQ(count(Unary::negation), 1) << wp.id; break;
            case Family::kleene: EXPECT_EQ(count(Unary::kleene), 1) << wp.id; break;
            case Family::conjunction: EXPECT_EQ(wp.pattern.root.kind, NodeKind::conj); break;
            case Family::disjunction:
                EXPECT_EQ(wp.pattern.root.kind, NodeKind::disj);
                EXPECT_EQ(wp.pattern.root.children.size(), 3u);
                EXPECT_EQ(leaves.size(), 3 * wp.size);
                break;
            case Family::sequence: EXPECT_EQ(wp.pattern.root.kind, NodeKind::seq); break;
        }
    }
}

TEST(Workload, DeterministicPerSeedAndChecked) {
    WorkloadSpec spec;
    spec.families = all_families();
    auto a = generate_workload(spec), b = generate_workload(spec);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].pattern, b[i].pattern);
    spec.min_size = 6;
    EXPECT_THROW((void)generate_workload(spec), ContractError);
    spec.min_size = 3;
    spec.type_pool = 4;
    EXPECT_THROW((void)generate_workload(spec), ContractError);
}

TEST(Corpus, StreamsRespectTheOracleBound) {
    for (const auto& c : builtin_corpus(3, 1)) {
        for (const auto& s : c.streams) {
            EXPECT_NO_THROW((void)oracle::match(c.pattern, s)) << c.id;
            for (std::size_t i = 1; i < s.size(); ++i) EXPECT_LE(s[i - 1]->timestamp, s[i]->timestamp);
        }
    }
}

TEST(Verify, PassesOnACorpusCase) {
    auto corpus = builtin_corpus(5, 1);
    auto rep = verify(corpus.front().pattern, corpus.front().streams.front());
    EXPECT_EQ(rep.cells.size(), 2 * all_algorithms().size());
    EXPECT_TRUE(rep.pass());
    EXPECT_FALSE(rep.oracle.empty());
}

TEST(Verify, DetectsAnEngineRunningTheWrongPredicate) {
    auto p = parse_pattern_or_throw("PATTERN SEQ(A a, B b) WHERE (a.x < b.x) WITHIN 10 seconds");
    auto swapped = parse_pattern_or_throw("PATTERN SEQ(A a, B b) WHERE (a.x > b.x) WITHIN 10 seconds");
    auto s = make_stream({{"A", 1, {{"x", 1.0}}}, {"B", 2, {{"x", 2.0}}}, {"A", 3, {{"x", 5.0}}}, {"B", 4, {{"x", 0.0}}}});
    auto truth = oracle::match(p, s);
    auto np = normalize(swapped);
    auto cell = detail::compare_cell(truth, run_engine(np, trivial_plans(np), EngineKind::nfa, s));
    EXPECT_FALSE(cell.pass);
    EXPECT_EQ(cell.missing, (std::vector<std::vector<std::uint64_t>>{{0, 1}}));
    EXPECT_EQ(cell.extra, (std::vector<std::vector<std::uint64_t>>{{0, 3}, {2, 3}}));
}

TEST(Verify, EmptyStreamAndOversizedStream) {
    auto p = parse_pattern_or_throw("PATTERN SEQ(A a, B b) WITHIN 10 seconds");
    auto rep = verify(p, {});
    EXPECT_TRUE(rep.pass());
    EXPECT_TRUE(rep.oracle.empty());
    std::vector<Ev> dense;
    for (int i = 0; i < 20; ++i) dense.push_back({i % 2 ? "A" : "B", 0.1 * i});
    EXPECT_THROW((void)verify(p, make_stream(dense)), ResourceError);
    OracleOptions wide;
    wide.bound = 20;
    EXPECT_TRUE(verify(p, make_stream(dense), {Algorithm::greedy}, {}, wide).pass());
}

TEST(Benchmark, RowsMemoizationAndAggregation) {
    WorkloadSpec spec;
    spec.min_size = spec.max_size = 3;
    spec.per_size = 2;
    auto w = generate_workload(spec);
    auto stream = generate_synthetic(workload_stream_config(spec, 3.0, 4));
    std::vector<Pattern> ps;
    for (const auto& wp : w) ps.push_back(wp.pattern);
    auto stats = estimate_statistics(stream, ps);
    BenchOptions opt;
    opt.algorithms = {Algorithm::trivial, Algorithm::greedy, Algorithm::dp_ld, Algorithm::dp_b};
    auto rows = run_benchmark(w, stats, stream, opt);
    ASSERT_EQ(rows.size(), w.size() * 4 * 2);
    for (const auto& r : rows) {
        EXPECT_TRUE(r.error.empty()) << r.error;
        EXPECT_GT(r.plan_cost, 0.0);
        EXPECT_GT(r.normalized_cost, 0.0);
    }
    // Cells with equal plans on one engine share a single measurement.
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < i; ++j)
            if (rows[i].memoized && rows[j].pattern_id == rows[i].pattern_id && rows[j].engine == rows[i].engine &&
                rows[j].plan_cost == rows[i].plan_cost) {
                EXPECT_EQ(rows[i].peak_memory, rows[j].peak_memory);
                EXPECT_EQ(rows[i].matches, rows[j].matches);
            }
    opt.threads = 3;
    auto again = run_benchmark(w, stats, stream, opt);
    ASSERT_EQ(again.size(), rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        EXPECT_EQ(again[i].pattern_id, rows[i].pattern_id);
        EXPECT_EQ(again[i].matches, rows[i].matches);
    }
    auto agg = aggregate(rows);
    std::size_t cells = 0;
    for (const auto& a : agg)
        if (a.size == 0) cells += a.cells;
    EXPECT_EQ(cells, rows.size());
    EXPECT_NE(aggregate_table(agg).find("DP-B"), std::string::npos);
    auto csv = aggregate_csv(agg);
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), static_cast<long>(agg.size()) + 1);
    EXPECT_EQ(benchmark_csv_row(rows[0]).find('\n'), std::string::npos);
}

TEST(Benchmark, NativeEnginesOnly) {
    WorkloadSpec spec;
    spec.min_size = spec.max_size = 3;
    spec.per_size = 1;
    auto w = generate_workload(spec);
    auto stream = generate_synthetic(workload_stream_config(spec, 2.0, 4));
    auto stats = estimate_statistics(stream, {w[0].pattern});
    BenchOptions opt;
    opt.native_engine_only = true;
    auto rows = bench_pattern(w[0], stats, stream, opt);
    ASSERT_EQ(rows.size(), all_algorithms().size());
    for (const auto& r : rows) EXPECT_EQ(r.engine == "tree", produces_tree(parse_algorithm(r.algorithm)));
}

TEST(Spearman, HandComputedValues) {
    EXPECT_DOUBLE_EQ(spearman({1, 2, 3, 4}, {10, 20, 30, 40}), 1.0);
    EXPECT_DOUBLE_EQ(spearman({1, 2, 3, 4}, {4, 3, 2, 1}), -1.0);
    // Ranks of y: 1, 2, 3.5, 5, 3.5; sum dx dy = 8, sum dx^2 = 10, sum dy^2 = 9.5.
    EXPECT_NEAR(spearman({1, 2, 3, 4, 5}, {5, 6, 7, 8, 7}), 8.0 / std::sqrt(95.0), 1e-12);
    EXPECT_EQ(spearman({1, 1, 1}, {1, 2, 3}), 0.0);
    EXPECT_EQ(average_ranks({3, 1, 3}), (std::vector<double>{2.5, 1, 2.5}));
    EXPECT_THROW((void)spearman({1, 2}, {1}), ContractError);
}
