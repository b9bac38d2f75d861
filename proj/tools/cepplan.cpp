// Command-line front end: optimize, run, bench, stats, verify, generate.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "cep/cep.hpp"

using namespace cep;
using nlohmann::json;

namespace {

struct Common {
    std::string strategy;
    double window = 0.0;
    std::uint64_t seed = 1;
    std::string out;
};

unsigned env_threads() {
    if (const char* v = std::getenv("CEP_PLANNER_THREADS")) {
        char* end = nullptr;
        long n = std::strtol(v, &end, 10);
        if (end != v && *end == '\0' && n >= 1) return static_cast<unsigned>(n);
        throw ContractError("CEP_PLANNER_THREADS must be a positive integer, got '" + std::string(v) + "'");
    }
    return 1;
}

Pattern load_with_overrides(const std::string& path, const Common& c) {
    Pattern p = load_pattern(path);
    if (!c.strategy.empty()) p.strategy = parse_strategy_name(c.strategy);
    if (c.window > 0) p.window = c.window;
    require_valid(p);
    return p;
}

void write_output(const std::string& path, const std::string& text) {
    if (path.empty() || path == "-") {
        std::cout << text;
        return;
    }
    std::ofstream out(path);
    if (!out) throw DataError("cannot write '" + path + "'");
    out << text;
}

json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path + "'");
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw DataError("'" + path + "': " + e.what());
    }
}

PlannerConfig planner_config(double alpha, std::uint64_t seed) {
    PlannerConfig pc;
    pc.seed = seed;
    pc.threads = env_threads();
    if (alpha < 0) throw ContractError("--alpha must be non-negative");
    if (alpha > 0) pc.cost = CostModelConfig::hybrid(alpha);
    return pc;
}

std::string metrics_csv(const RuntimeMetrics& m, const std::string& engine) {
    std::ostringstream s;
    s.precision(10);
    s << "engine,events,matches,throughput_eps,peak_partial_matches,peak_buffered_events,peak_memory,"
         "instances_created,kleene_overflow,work,mean_latency_us,mean_latency_work\n";
    s << engine << ',' << m.events_processed << ',' << m.matches_emitted << ',' << m.throughput() << ','
      << m.peak_partial_matches << ',' << m.peak_buffered_events << ',' << m.peak_memory << ',' << m.instances_created
      << ',' << m.kleene_overflow << ',' << m.work << ',' << m.mean_latency_us() << ',' << m.mean_latency_work() << '\n';
    return s.str();
}

/// Plans stored by `optimize`, checked against the pattern's normalization.
std::vector<Plan> plans_for(const json& j, const NormalizedPattern& np) {
    if (!j.contains("conjuncts") || !j["conjuncts"].is_array()) throw DataError("plan file has no 'conjuncts' array");
    std::vector<Plan> plans;
    for (const auto& c : j["conjuncts"]) plans.push_back(plan_from_json(c));
    if (plans.size() != np.conjuncts.size())
        throw DataError("plan has " + std::to_string(plans.size()) + " conjunct plans, pattern normalizes to " +
                        std::to_string(np.conjuncts.size()));
    for (std::size_t i = 0; i < plans.size(); ++i) {
        auto want = np.conjuncts[i].pattern.positive_types();
        auto got = plan_types(plans[i]);
        std::sort(want.begin(), want.end());
        std::sort(got.begin(), got.end());
        if (want != got) throw DataError("plan for conjunct " + std::to_string(i) + " does not cover its event types");
    }
    return plans;
}

int cmd_optimize(const std::string& pattern_path, const std::string& stats_path, const std::string& algorithm,
                 double alpha, const Common& c) {
    Pattern p = load_with_overrides(pattern_path, c);
    auto stats = StatisticsCatalog::load(stats_path);
    auto plan = plan_pattern(p, stats, parse_algorithm(algorithm), planner_config(alpha, c.seed));
    json j = execution_plan_json(plan);
    j["pattern"] = render_pattern(p);
    if (alpha > 0) j["alpha"] = alpha;
    write_output(c.out, j.dump(2) + "\n");
    std::cerr << "plan search: " << plan.candidates() << " candidates, " << plan.wall_ms() << " ms\n";
    return 0;
}

int cmd_run(const std::string& plan_path, const std::string& pattern_path, const std::string& stream_path,
            const std::string& engine, const Common& c) {
    Pattern p = load_with_overrides(pattern_path, c);
    auto np = normalize(p);
    auto plans = plans_for(read_json(plan_path), np);
    auto stream = ingest_csv(stream_path);
    std::unique_ptr<Engine> eng;
    try {
        eng = std::make_unique<Engine>(np, plans, parse_engine(engine));
    } catch (const ContractError& e) {
        if (engine != "nfa" && engine != "tree") throw;
        throw DataError(std::string("plan does not match pattern: ") + e.what());
    }
    auto matches = eng->run(stream);
    std::ostringstream lines;
    for (const auto& m : matches) {
        for (std::size_t i = 0; i < m.serials.size(); ++i) lines << (i ? " " : "") << m.serials[i];
        lines << '\n';
    }
    if (!c.out.empty()) write_output(c.out, lines.str());
    std::cout << metrics_csv(eng->metrics(), engine);
    return 0;
}

int cmd_stats(const std::string& stream_path, const std::vector<std::string>& pattern_paths, std::size_t cap,
              const Common& c) {
    std::vector<Pattern> patterns;
    for (const auto& path : pattern_paths) patterns.push_back(load_with_overrides(path, c));
    EstimationOptions opt;
    opt.window = c.window;
    opt.seed = c.seed;
    opt.sample_cap = cap;
    auto stats = estimate_statistics(ingest_csv(stream_path), patterns, opt);
    write_output(c.out, stats.to_json().dump(2) + "\n");
    return 0;
}

int print_verify(const std::string& label, const VerifyReport& rep, bool quiet) {
    int failed = 0;
    for (const auto& cell : rep.cells) {
        if (!cell.pass) ++failed;
        if (quiet && cell.pass) continue;
        std::cout << label << ' ' << cell.algorithm << ' ' << cell.engine << ' ' << (cell.pass ? "PASS" : "FAIL")
                  << " oracle=" << cell.expected << " engine=" << cell.got;
        if (!cell.error.empty()) std::cout << " error: " << cell.error;
        std::cout << '\n';
        for (const auto& m : cell.missing) std::cout << "  - " << serials_str(m) << '\n';
        for (const auto& m : cell.extra) std::cout << "  + " << serials_str(m) << '\n';
    }
    return failed;
}

int cmd_verify(const std::string& pattern_path, const std::string& stream_path, bool corpus, std::size_t bound,
               const Common& c) {
    PlannerConfig pc = planner_config(0.0, c.seed);
    OracleOptions oo;
    oo.bound = bound;
    int failed = 0;
    if (corpus) {
        std::size_t cells = 0;
        for (const auto& cc : builtin_corpus(c.seed)) {
            for (const auto& strategy : applicable_strategies(cc.pattern)) {
                Pattern p = cc.pattern;
                p.strategy = strategy;
                for (std::size_t s = 0; s < cc.streams.size(); ++s) {
                    auto rep = verify(p, cc.streams[s], all_algorithms(), pc, oo);
                    cells += rep.cells.size();
                    failed += print_verify(cc.id + "/" + strategy_name(strategy) + "/stream" + std::to_string(s), rep, true);
                }
            }
        }
        std::cout << "corpus: " << cells << " cells, " << failed << " failed\n";
    } else {
        if (pattern_path.empty() || stream_path.empty())
            throw ContractError("verify needs --pattern and --stream, or --corpus");
        Pattern p = load_with_overrides(pattern_path, c);
        auto rep = verify(p, ingest_csv(stream_path), all_algorithms(), pc, oo);
        failed = print_verify("", rep, false);
        std::cout << (failed ? "FAIL" : "PASS") << ": " << rep.cells.size() - static_cast<std::size_t>(failed) << "/"
                  << rep.cells.size() << " cells agree with the oracle (" << rep.oracle.size() << " matches)\n";
    }
    return failed ? static_cast<int>(ExitCode::verification) : 0;
}

struct BenchArgs {
    std::vector<std::string> families{"sequence"};
    std::size_t min_size = 3, max_size = 5, per_size = 5;
    std::vector<std::string> algorithms;
    std::vector<std::string> engines;
    std::vector<double> alphas{0.0};
    std::string stream;
    std::string synthetic;
    double duration = 20.0;
    std::size_t repeats = 1;
    bool native = false;
    std::string aggregate;
};

int cmd_bench(const BenchArgs& a, const Common& c) {
    WorkloadSpec spec;
    spec.families.clear();
    for (const auto& f : a.families)
        if (!f.empty()) spec.families.push_back(parse_family(f));
    spec.min_size = a.min_size;
    spec.max_size = a.max_size;
    spec.per_size = a.per_size;
    spec.seed = c.seed;
    if (c.window > 0) spec.window = c.window;
    if (!c.strategy.empty()) spec.strategy = parse_strategy_name(c.strategy);
    auto workload = generate_workload(spec);

    EventStream stream;
    if (!a.stream.empty()) stream = ingest_csv(a.stream);
    else if (!a.synthetic.empty()) stream = generate_synthetic(SyntheticConfig::from_json(read_json(a.synthetic)));
    else stream = generate_synthetic(workload_stream_config(spec, a.duration, c.seed));

    std::vector<Pattern> patterns;
    for (const auto& w : workload) patterns.push_back(w.pattern);
    auto stats = patterns.empty() ? StatisticsCatalog{} : estimate_statistics(stream, patterns, {0.0, 100000, c.seed, 0.0});

    BenchOptions opt;
    if (!a.algorithms.empty()) {
        opt.algorithms.clear();
        for (const auto& s : a.algorithms) opt.algorithms.push_back(parse_algorithm(s));
    }
    if (!a.engines.empty()) {
        opt.engines.clear();
        for (const auto& s : a.engines) opt.engines.push_back(parse_engine(s));
    }
    opt.alphas = a.alphas;
    opt.repeats = a.repeats;
    opt.native_engine_only = a.native;
    opt.threads = env_threads();
    opt.planner.seed = c.seed;
    auto rows = run_benchmark(workload, stats, stream, opt);

    std::ostringstream csv;
    csv << benchmark_csv_header() << '\n';
    for (const auto& r : rows) csv << benchmark_csv_row(r) << '\n';
    write_output(c.out, csv.str());
    auto agg = aggregate(rows);
    if (!a.aggregate.empty()) write_output(a.aggregate, aggregate_csv(agg));
    (c.out.empty() ? std::cerr : std::cout) << aggregate_table(agg);
    return 0;
}

int cmd_generate(const std::string& config, const Common& c) {
    auto cfg = SyntheticConfig::from_json(read_json(config));
    std::ostringstream s;
    write_event_csv(s, generate_synthetic(cfg));
    write_output(c.out, s.str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Cost-based plan generation and evaluation for complex event patterns"};
    app.require_subcommand(1);
    Common common;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--strategy", common.strategy, "any-match | next-match | strict-contiguity | partition-contiguity(attr)");
        sub->add_option("--window", common.window, "Override the pattern window (seconds)");
        sub->add_option("--seed", common.seed, "Seed for randomized planners, sampling and workloads");
        sub->add_option("--out", common.out, "Output file (default: standard output)");
    };

    std::string pattern, stats, algorithm = "dp-ld", plan, stream, engine = "nfa", config;
    double alpha = 0.0;
    std::vector<std::string> patterns;
    std::size_t cap = 100000;
    bool corpus = false;
    std::size_t bound = 14;
    BenchArgs bench;

    auto* opt = app.add_subcommand("optimize", "Generate an evaluation plan for a pattern");
    opt->add_option("--pattern", pattern, "Pattern file")->required();
    opt->add_option("--stats", stats, "Statistics JSON")->required();
    opt->add_option("--algorithm", algorithm, "trivial, efreq, greedy, ii-random, ii-greedy, dp-ld, zstream, zstream-ord, dp-b");
    opt->add_option("--alpha", alpha, "Latency weight of the hybrid cost");
    add_common(opt);

    auto* run = app.add_subcommand("run", "Evaluate a plan over a stream");
    run->add_option("--plan", plan, "Plan JSON written by optimize")->required();
    run->add_option("--pattern", pattern, "Pattern file")->required();
    run->add_option("--stream", stream, "Stream CSV")->required();
    run->add_option("--engine", engine, "nfa | tree");
    add_common(run);

    auto* st = app.add_subcommand("stats", "Estimate rates and selectivities from a stream");
    st->add_option("--stream", stream, "Stream CSV")->required();
    st->add_option("--pattern", patterns, "Pattern file (repeatable)")->required();
    st->add_option("--sample-cap", cap, "Pairs sampled per predicate");
    add_common(st);

    auto* ver = app.add_subcommand("verify", "Compare every algorithm and engine with the brute-force oracle");
    ver->add_option("--pattern", pattern, "Pattern file");
    ver->add_option("--stream", stream, "Stream CSV");
    ver->add_flag("--corpus", corpus, "Verify the built-in corpus instead");
    ver->add_option("--oracle-bound", bound, "Most events the oracle accepts within one window");
    add_common(ver);

    auto* b = app.add_subcommand("bench", "Benchmark algorithms and engines on a generated workload");
    b->add_option("--families", bench.families, "sequence, negation, conjunction, kleene, disjunction")->delimiter(',');
    b->add_option("--min-size", bench.min_size);
    b->add_option("--max-size", bench.max_size);
    b->add_option("--per-size", bench.per_size);
    b->add_option("--algorithm", bench.algorithms, "Restrict algorithms (repeatable)");
    b->add_option("--engine", bench.engines, "Restrict engines (repeatable)");
    b->add_option("--alpha", bench.alphas, "Latency weights to sweep (repeatable)");
    b->add_option("--stream", bench.stream, "Stream CSV instead of a synthetic stream");
    b->add_option("--synthetic", bench.synthetic, "Synthetic stream config JSON");
    b->add_option("--duration", bench.duration, "Duration of the default synthetic stream (seconds)");
    b->add_option("--repeats", bench.repeats, "Runs per cell; medians are reported");
    b->add_flag("--native", bench.native, "Order plans on the NFA only, tree plans on the tree only");
    b->add_option("--aggregate", bench.aggregate, "Write the aggregate table as CSV");
    add_common(b);

    auto* gen = app.add_subcommand("generate", "Write a synthetic stream as CSV");
    gen->add_option("--synthetic", config, "Synthetic stream config JSON")->required();
    add_common(gen);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : static_cast<int>(ExitCode::usage);
    }

    try {
        if (*opt) return cmd_optimize(pattern, stats, algorithm, alpha, common);
        if (*run) return cmd_run(plan, pattern, stream, engine, common);
        if (*st) return cmd_stats(stream, patterns, cap, common);
        if (*ver) return cmd_verify(pattern, stream, corpus, bound, common);
        if (*b) return cmd_bench(bench, common);
        if (*gen) return cmd_generate(config, common);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return static_cast<int>(e.code());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return static_cast<int>(ExitCode::data);
    }
    return 0;
}
