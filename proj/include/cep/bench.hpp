#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <map>
#include <mutex>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "cep/error.hpp"
#include "cep/oracle.hpp"
#include "cep/parser.hpp"
#include "cep/plangen.hpp"
#include "cep/runtime/engine.hpp"
#include "cep/stream.hpp"

namespace cep {

// ---------------------------------------------------------------------------
// Workloads
// ---------------------------------------------------------------------------

enum class Family { sequence, negation, conjunction, kleene, disjunction };

[[nodiscard]] inline std::string family_name(Family f) {
    switch (f) {
        case Family::sequence: return "sequence";
        case Family::negation: return "negation";
        case Family::conjunction: return "conjunction";
        case Family::kleene: return "kleene";
        case Family::disjunction: return "disjunction";
    }
    return "sequence";
}

[[nodiscard]] inline Family parse_family(const std::string& s) {
    for (auto f : {Family::sequence, Family::negation, Family::conjunction, Family::kleene, Family::disjunction})
        if (family_name(f) == s) return f;
    throw ContractError("unknown pattern family '" + s + "'");
}

[[nodiscard]] inline const std::vector<Family>& all_families() {
    static const std::vector<Family> all{Family::sequence, Family::negation, Family::conjunction, Family::kleene,
                                         Family::disjunction};
    return all;
}

struct WorkloadSpec {
    std::vector<Family> families{Family::sequence};
    std::size_t min_size = 3;
    std::size_t max_size = 5;
    std::size_t per_size = 5;
    double window = 0.1;
    SelectionStrategy strategy;
    std::uint64_t seed = 1;
    /// Number of event types patterns draw from; 0 picks max(12, 3 * max_size).
    std::size_t type_pool = 0;
    std::string attribute = "difference";

    [[nodiscard]] std::size_t pool() const { return type_pool ? type_pool : std::max<std::size_t>(12, 3 * max_size); }
    void check() const {
        if (min_size < 1 || min_size > max_size) throw ContractError("workload: size range must satisfy 1 <= min <= max");
        if (!(window > 0)) throw ContractError("workload: window must be positive");
        for (auto f : families)
            if (f == Family::disjunction ? 3 * max_size > pool() : max_size > pool())
                throw ContractError("workload: type pool of " + std::to_string(pool()) + " is too small for size " +
                                    std::to_string(max_size));
    }
};

struct WorkloadPattern {
    std::string id;
    Family family = Family::sequence;
    std::size_t size = 0;
    Pattern pattern;
};

[[nodiscard]] inline std::string pool_type(std::size_t i) {
    std::ostringstream s;
    s << 'T' << std::setw(2) << std::setfill('0') << i;
    return s.str();
}

namespace detail {

inline std::string alias_of(const std::string& type) {
    std::string a = type;
    std::transform(a.begin(), a.end(), a.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return a;
}

/// `x.attr <cmp> y.attr + c` with a random direction and an offset in [-0.8, 0.8] on a 0.1 grid.
inline Predicate random_comparison(std::size_t x, std::size_t y, const std::string& attr, std::mt19937_64& rng) {
    Predicate p;
    p.lhs = Operand::attr(x, attr);
    p.cmp = rng() % 2 ? Comparator::lt : Comparator::gt;
    double offset = static_cast<double>(static_cast<int>(rng() % 17) - 8) / 10.0;
    p.rhs = Operand::attr(y, attr, offset);
    return p;
}

/// floor(n/2) comparisons between distinct positions drawn from `positions`.
inline void add_comparisons(Pattern& p, const std::vector<std::size_t>& positions, const std::string& attr,
                            std::mt19937_64& rng) {
    std::size_t count = positions.size() / 2;
    std::set<std::pair<std::size_t, std::size_t>> used;
    for (std::size_t k = 0; k < count && positions.size() >= 2; ++k) {
        for (int attempt = 0; attempt < 32; ++attempt) {
            std::size_t a = positions[rng() % positions.size()], b = positions[rng() % positions.size()];
            if (a == b || used.count({std::min(a, b), std::max(a, b)})) continue;
            used.insert({std::min(a, b), std::max(a, b)});
            p.predicates.push_back(random_comparison(a, b, attr, rng));
            break;
        }
    }
}

inline PatternNode sequence_of(const std::vector<std::string>& types, NodeKind kind) {
    std::vector<PatternNode> leaves;
    for (const auto& t : types) leaves.push_back(PatternNode::leaf(t, alias_of(t)));
    return PatternNode::op(kind, std::move(leaves));
}

inline PatternNode wrapped(PatternNode leaf, NodeKind wrapper) { return PatternNode::op(wrapper, {std::move(leaf)}); }

}  // namespace detail

/// One pattern of a family over `types` (3 * size types for disjunctions).
[[nodiscard]] inline Pattern make_family_pattern(Family f, const std::vector<std::string>& types, double window,
                                                 const SelectionStrategy& strategy, const std::string& attr,
                                                 std::mt19937_64& rng) {
    Pattern p;
    p.window = window;
    p.strategy = strategy;
    std::size_t n = f == Family::disjunction ? types.size() / 3 : types.size();
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), 0);
    switch (f) {
        case Family::sequence:
            p.root = detail::sequence_of(types, NodeKind::seq);
            detail::add_comparisons(p, all, attr, rng);
            break;
        case Family::conjunction:
            p.root = detail::sequence_of(types, NodeKind::conj);
            detail::add_comparisons(p, all, attr, rng);
            break;
        case Family::negation: {
            p.root = detail::sequence_of(types, NodeKind::seq);
            // Interior when possible, so both neighbours bound the forbidden interval.
            std::size_t k = n >= 3 ? 1 + rng() % (n - 2) : n - 1;
            p.root.children[k] = detail::wrapped(p.root.children[k], NodeKind::negation);
            detail::add_comparisons(p, all, attr, rng);
            break;
        }
        case Family::kleene: {
            p.root = detail::sequence_of(types, NodeKind::seq);
            std::size_t k = rng() % n;
            p.root.children[k] = detail::wrapped(p.root.children[k], NodeKind::kleene);
            detail::add_comparisons(p, all, attr, rng);
            break;
        }
        case Family::disjunction: {
            std::vector<PatternNode> seqs;
            for (std::size_t s = 0; s < 3; ++s) {
                std::vector<std::string> part(types.begin() + static_cast<long>(s * n),
                                              types.begin() + static_cast<long>((s + 1) * n));
                seqs.push_back(detail::sequence_of(part, NodeKind::seq));
                std::vector<std::size_t> pos(n);
                std::iota(pos.begin(), pos.end(), s * n);
                detail::add_comparisons(p, pos, attr, rng);
            }
            p.root = PatternNode::op(NodeKind::disj, std::move(seqs));
            break;
        }
    }
    require_valid(p);
    return p;
}

/**
 * Random patterns per family and size. Types are drawn without replacement
 * from a pool `T00..`; each pattern carries about size/2 comparisons of the
 * workload attribute (per sequence for disjunctions).
 */
[[nodiscard]] inline std::vector<WorkloadPattern> generate_workload(const WorkloadSpec& spec) {
    spec.check();
    std::vector<WorkloadPattern> out;
    std::mt19937_64 rng(spec.seed);
    std::vector<std::string> pool;
    for (std::size_t i = 0; i < spec.pool(); ++i) pool.push_back(pool_type(i));
    for (auto f : spec.families) {
        for (std::size_t n = spec.min_size; n <= spec.max_size; ++n) {
            for (std::size_t k = 0; k < spec.per_size; ++k) {
                auto types = pool;
                std::shuffle(types.begin(), types.end(), rng);
                types.resize(f == Family::disjunction ? 3 * n : n);
                WorkloadPattern wp;
                wp.family = f;
                wp.size = n;
                wp.id = family_name(f) + "-" + std::to_string(n) + "-" + std::to_string(k);
                wp.pattern = make_family_pattern(f, types, spec.window, spec.strategy, spec.attribute, rng);
                out.push_back(std::move(wp));
            }
        }
    }
    return out;
}

/// Stream over the whole type pool with rates drawn uniformly from [rate_lo, rate_hi].
[[nodiscard]] inline SyntheticConfig workload_stream_config(const WorkloadSpec& spec, double duration, std::uint64_t seed,
                                                           double rate_lo = 1.0, double rate_hi = 45.0) {
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
    std::uniform_real_distribution<double> rate(rate_lo, rate_hi);
    SyntheticConfig c;
    c.duration = duration;
    c.seed = seed;
    for (std::size_t i = 0; i < spec.pool(); ++i)
        c.types.push_back({pool_type(i), rate(rng), {{spec.attribute, -1.0, 1.0, {}}, {"key", 0, 0, {"p0", "p1"}}}});
    return c;
}

// ---------------------------------------------------------------------------
// Verification corpus
// ---------------------------------------------------------------------------

struct CorpusCase {
    std::string id;
    Family family = Family::sequence;
    Pattern pattern;
    std::vector<EventStream> streams;
};

/**
 * Random stream over `types` (plus one unrelated type) whose every window
 * holds at most `bound` events; ties in timestamp are deliberate. With
 * probability `run_rate` a step instead emits one of `runs` in order, on
 * consecutive serials with one partition key, so that sequences and
 * contiguity strategies see matches.
 */
[[nodiscard]] inline EventStream bounded_stream(const std::vector<std::string>& types, std::size_t events, double window,
                                                std::size_t bound, std::uint64_t seed,
                                                const std::vector<std::vector<std::string>>& runs = {},
                                                double run_rate = 0.0, const std::string& attr = "difference") {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    std::vector<std::string> all = types;
    all.push_back("NOISE");
    EventStream out;
    double ts = 0;
    std::size_t guard = 0;
    auto fits = [&](double t) {
        std::size_t co = 1;
        for (auto it = out.rbegin(); it != out.rend() && t - (*it)->timestamp <= window; ++it) ++co;
        return co <= bound;
    };
    auto push = [&](const std::string& type, double t, const std::string& key) {
        auto e = std::make_shared<Event>();
        e->type = type;
        e->timestamp = t;
        e->serial = out.size();
        e->set(attr, static_cast<double>(static_cast<int>(rng() % 21) - 10) / 10.0);
        e->set("key", key);
        out.push_back(std::move(e));
    };
    while (out.size() < events && guard++ < events * 20) {
        ts += static_cast<double>(rng() % 4) * window / 8.0;
        if (!runs.empty() && coin(rng) < run_rate) {
            const auto& run = runs[rng() % runs.size()];
            std::string key = rng() % 2 ? "p0" : "p1";
            for (const auto& t : run) {
                if (out.size() >= events || !fits(ts)) break;
                push(t, ts, key);
                ts += window / 10.0;
            }
            continue;
        }
        if (!fits(ts)) continue;
        push(all[rng() % all.size()], ts, rng() % 2 ? "p0" : "p1");
    }
    return out;
}

/// Positive leaf types of each SEQ/AND under the root (the root itself unless it is an OR), in order.
[[nodiscard]] inline std::vector<std::vector<std::string>> positive_runs(const Pattern& p) {
    std::vector<std::vector<std::string>> out;
    auto collect = [](const PatternNode& n) {
        std::vector<std::string> run;
        for (const auto& c : n.children) {
            if (c.kind == NodeKind::leaf) run.push_back(c.type);
            else if (c.kind == NodeKind::kleene) run.push_back(c.children.at(0).type);
        }
        return run;
    };
    if (p.root.kind == NodeKind::disj)
        for (const auto& c : p.root.children) out.push_back(collect(c));
    else
        out.push_back(collect(p.root));
    return out;
}

/// All five families at sizes 3..5, a few patterns each, with small oracle-sized streams.
[[nodiscard]] inline std::vector<CorpusCase> builtin_corpus(std::uint64_t seed = 1, std::size_t per_size = 1,
                                                            std::size_t streams = 2, std::size_t events = 100) {
    std::vector<CorpusCase> out;
    std::mt19937_64 rng(seed);
    for (auto f : all_families()) {
        for (std::size_t n = 3; n <= 5; ++n) {
            for (std::size_t k = 0; k < per_size; ++k) {
                std::size_t count = f == Family::disjunction ? 3 * n : n;
                std::vector<std::string> types;
                for (std::size_t i = 0; i < count; ++i) types.push_back(std::string(1, static_cast<char>('A' + i)));
                CorpusCase c;
                c.family = f;
                c.id = family_name(f) + "-" + std::to_string(n) + "-" + std::to_string(k);
                c.pattern = make_family_pattern(f, types, 1.0, {}, "difference", rng);
                auto runs = positive_runs(c.pattern);
                for (std::size_t s = 0; s < streams; ++s)
                    c.streams.push_back(
                        bounded_stream(types, events, 1.0, f == Family::kleene ? 10 : 14, rng(), runs, 0.25));
                out.push_back(std::move(c));
            }
        }
    }
    return out;
}

/// Strategies a pattern supports: contiguity needs a SEQ over plain events.
[[nodiscard]] inline std::vector<SelectionStrategy> applicable_strategies(const Pattern& p) {
    std::vector<SelectionStrategy> out{{SelectionKind::any_match, {}}, {SelectionKind::next_match, {}}};
    bool plain_seq = p.root.kind == NodeKind::seq &&
                     std::all_of(p.root.children.begin(), p.root.children.end(),
                                 [](const PatternNode& c) { return c.kind == NodeKind::leaf; });
    if (plain_seq) {
        out.push_back({SelectionKind::strict_contiguity, {}});
        out.push_back({SelectionKind::partition_contiguity, "key"});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Verification
// ---------------------------------------------------------------------------

struct VerifyCell {
    std::string algorithm;
    std::string engine;
    bool pass = false;
    std::size_t expected = 0;
    std::size_t got = 0;
    std::vector<std::vector<std::uint64_t>> missing;  // in oracle, not emitted
    std::vector<std::vector<std::uint64_t>> extra;    // emitted, not in oracle
    std::string error;
};

struct VerifyReport {
    MatchSet oracle;
    std::vector<VerifyCell> cells;
    [[nodiscard]] bool pass() const {
        return std::all_of(cells.begin(), cells.end(), [](const VerifyCell& c) { return c.pass; });
    }
};

[[nodiscard]] inline std::string serials_str(const std::vector<std::uint64_t>& s) {
    std::string out = "(";
    for (std::size_t i = 0; i < s.size(); ++i) out += (i ? " " : "") + std::to_string(s[i]);
    return out + ")";
}

namespace detail {

inline VerifyCell compare_cell(const MatchSet& want, const MatchSet& got) {
    VerifyCell c;
    c.expected = want.size();
    c.got = got.size();
    std::set_difference(want.begin(), want.end(), got.begin(), got.end(), std::back_inserter(c.missing));
    std::set_difference(got.begin(), got.end(), want.begin(), want.end(), std::back_inserter(c.extra));
    c.pass = c.missing.empty() && c.extra.empty();
    return c;
}

/// Statistics for planning small verification streams; every type gets a rate even if absent.
inline StatisticsCatalog verification_stats(const Pattern& p, const EventStream& stream) {
    EventStream padded = stream;
    double end = stream.empty() ? 1.0 : stream.back()->timestamp + 1.0;
    for (const auto& l : p.leaves()) {
        auto e = std::make_shared<Event>();
        e->type = l.type;
        e->timestamp = end;
        e->serial = padded.size();
        padded.push_back(std::move(e));
    }
    return estimate_statistics(padded, {p}, {});
}

}  // namespace detail

/// Runs every algorithm on both engines and compares each match set with the oracle.
[[nodiscard]] inline VerifyReport verify(const Pattern& p, const EventStream& stream,
                                         const std::vector<Algorithm>& algorithms = all_algorithms(),
                                         const PlannerConfig& cfg = {}, const OracleOptions& opt = {}) {
    VerifyReport rep;
    rep.oracle = oracle::match(p, stream, opt);
    auto stats = detail::verification_stats(p, stream);
    for (auto alg : algorithms) {
        ExecutionPlan plan;
        std::string plan_error;
        try {
            plan = plan_pattern(p, stats, alg, cfg);
        } catch (const Error& e) {
            plan_error = e.what();
        }
        for (auto kind : {EngineKind::nfa, EngineKind::tree}) {
            VerifyCell cell;
            if (plan_error.empty()) {
                Engine eng(plan, kind);
                cell = detail::compare_cell(rep.oracle, match_set(eng.run(stream)));
            } else {
                cell.error = plan_error;
            }
            cell.algorithm = algorithm_name(alg);
            cell.engine = engine_name(kind);
            rep.cells.push_back(std::move(cell));
        }
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Benchmark
// ---------------------------------------------------------------------------

struct BenchmarkRow {
    std::string pattern_id;
    std::string family;
    std::size_t size = 0;
    std::string algorithm;
    std::string engine;
    double alpha = 0.0;
    double throughput = 0.0;  // events per second
    std::size_t peak_memory = 0;
    std::size_t peak_partial_matches = 0;
    double mean_latency_us = 0.0;
    double mean_latency_work = 0.0;
    double plan_cost = 0.0;
    double normalized_cost = 0.0;
    double plan_ms = 0.0;
    std::uint64_t matches = 0;
    std::uint64_t work = 0;
    bool memoized = false;
    std::string error;
};

[[nodiscard]] inline std::string benchmark_csv_header() {
    return "pattern,family,size,algorithm,engine,alpha,throughput_eps,peak_memory,peak_partial_matches,"
           "mean_latency_us,mean_latency_work,plan_cost,normalized_cost,plan_ms,matches,work,memoized,error";
}

[[nodiscard]] inline std::string benchmark_csv_row(const BenchmarkRow& r) {
    std::ostringstream s;
    s.precision(10);
    std::string err = r.error;
    std::replace(err.begin(), err.end(), ',', ';');
    std::replace(err.begin(), err.end(), '\n', ' ');
    s << r.pattern_id << ',' << r.family << ',' << r.size << ',' << r.algorithm << ',' << r.engine << ',' << r.alpha
      << ',' << r.throughput << ',' << r.peak_memory << ',' << r.peak_partial_matches << ',' << r.mean_latency_us << ','
      << r.mean_latency_work << ',' << r.plan_cost << ',' << r.normalized_cost << ',' << r.plan_ms << ',' << r.matches
      << ',' << r.work << ',' << (r.memoized ? 1 : 0) << ',' << err;
    return s.str();
}

struct BenchOptions {
    std::vector<Algorithm> algorithms = all_algorithms();
    std::vector<EngineKind> engines{EngineKind::nfa, EngineKind::tree};
    /// Run order plans only on the NFA and tree plans only on the tree engine.
    bool native_engine_only = false;
    std::vector<double> alphas{0.0};
    PlannerConfig planner;
    /// Each cell runs this many times; the row keeps the median throughput and latency.
    std::size_t repeats = 1;
    /// Parallel patterns; cells of one pattern run sequentially.
    unsigned threads = 1;
};

namespace detail {

inline double magnitude_value(const Magnitude& m) { return m.is_log() ? std::exp2(std::min(m.log2(), 1023.0)) : m.linear(); }

inline double median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    std::size_t n = v.size();
    return n % 2 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2.0;
}

/// Identity of a run: engine plus every finalized conjunct plan.
inline std::string run_key(const ExecutionPlan& plan, EngineKind kind) {
    std::string key = engine_name(kind);
    for (std::size_t i = 0; i < plan.conjuncts.size(); ++i)
        key += "|" + plan_json(adapt_plan(plan.conjuncts[i].plan, plan.normalized.conjuncts[i], kind)).dump();
    return key;
}

struct RunResult {
    RuntimeMetrics metrics;
    double throughput = 0;
    double latency_us = 0;
};

inline RunResult execute(const ExecutionPlan& plan, EngineKind kind, const EventStream& stream, std::size_t repeats) {
    RunResult out;
    std::vector<double> thr, lat;
    for (std::size_t r = 0; r < std::max<std::size_t>(1, repeats); ++r) {
        Engine eng(plan, kind);
        auto t0 = std::chrono::steady_clock::now();
        (void)eng.run(stream);
        double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        thr.push_back(secs > 0 ? static_cast<double>(stream.size()) / secs : 0.0);
        lat.push_back(eng.metrics().mean_latency_us());
        out.metrics = eng.metrics();
    }
    out.throughput = median(thr);
    out.latency_us = median(lat);
    return out;
}

}  // namespace detail

/**
 * Every (algorithm, engine, alpha) cell for one pattern. Cells whose
 * finalized plans and engine coincide with an earlier cell reuse its
 * measurements. A failing cell records its error and the rest continue.
 */
[[nodiscard]] inline std::vector<BenchmarkRow> bench_pattern(const WorkloadPattern& wp, const StatisticsCatalog& stats,
                                                             const EventStream& stream, const BenchOptions& opt) {
    std::vector<BenchmarkRow> rows;
    std::map<std::string, detail::RunResult> memo;
    for (double alpha : opt.alphas) {
        PlannerConfig pc = opt.planner;
        if (alpha > 0) pc.cost = CostModelConfig::hybrid(alpha);
        std::optional<Magnitude> efreq_cost;
        try {
            efreq_cost = plan_pattern(wp.pattern, stats, Algorithm::efreq, pc).total_cost();
        } catch (const Error&) {
        }
        for (auto alg : opt.algorithms) {
            ExecutionPlan plan;
            std::string error;
            try {
                plan = plan_pattern(wp.pattern, stats, alg, pc);
            } catch (const Error& e) {
                error = e.what();
            }
            for (auto kind : opt.engines) {
                if (opt.native_engine_only && produces_tree(alg) != (kind == EngineKind::tree)) continue;
                BenchmarkRow row;
                row.pattern_id = wp.id;
                row.family = family_name(wp.family);
                row.size = wp.size;
                row.algorithm = algorithm_name(alg);
                row.engine = engine_name(kind);
                row.alpha = alpha;
                row.error = error;
                if (error.empty()) {
                    try {
                        row.plan_cost = detail::magnitude_value(plan.total_cost());
                        row.plan_ms = plan.wall_ms();
                        if (efreq_cost && !plan.total_cost().is_zero())
                            row.normalized_cost = detail::magnitude_value(*efreq_cost) / row.plan_cost;
                        auto key = detail::run_key(plan, kind);
                        auto it = memo.find(key);
                        row.memoized = it != memo.end();
                        if (!row.memoized) it = memo.emplace(key, detail::execute(plan, kind, stream, opt.repeats)).first;
                        const auto& m = it->second.metrics;
                        row.throughput = it->second.throughput;
                        row.mean_latency_us = it->second.latency_us;
                        row.mean_latency_work = m.mean_latency_work();
                        row.peak_memory = m.peak_memory;
                        row.peak_partial_matches = m.peak_partial_matches;
                        row.matches = m.matches_emitted;
                        row.work = m.work;
                    } catch (const Error& e) {
                        row.error = e.what();
                    }
                }
                rows.push_back(std::move(row));
            }
        }
    }
    return rows;
}

/// Runs a whole workload; rows come back in workload order whatever the thread count.
[[nodiscard]] inline std::vector<BenchmarkRow> run_benchmark(const std::vector<WorkloadPattern>& workload,
                                                             const StatisticsCatalog& stats, const EventStream& stream,
                                                             const BenchOptions& opt) {
    std::vector<std::vector<BenchmarkRow>> per(workload.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < workload.size(); i = next++) per[i] = bench_pattern(workload[i], stats, stream, opt);
    };
    unsigned threads = std::max(1U, std::min<unsigned>(opt.threads, static_cast<unsigned>(workload.size())));
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    std::vector<BenchmarkRow> rows;
    for (auto& p : per) rows.insert(rows.end(), std::make_move_iterator(p.begin()), std::make_move_iterator(p.end()));
    return rows;
}

struct AggregateRow {
    std::string family;
    std::size_t size = 0;  // 0: all sizes
    std::string algorithm;
    std::string engine;
    double alpha = 0.0;
    std::size_t cells = 0;
    double throughput = 0.0;
    double peak_memory = 0.0;
    double latency_us = 0.0;
    double normalized_cost = 0.0;
};

/// Means per (family, size, algorithm, engine, alpha) plus all-size rows; failed cells are skipped.
[[nodiscard]] inline std::vector<AggregateRow> aggregate(const std::vector<BenchmarkRow>& rows) {
    std::map<std::tuple<std::string, std::size_t, std::string, std::string, double>, std::vector<const BenchmarkRow*>> groups;
    for (const auto& r : rows) {
        if (!r.error.empty()) continue;
        groups[{r.family, r.size, r.algorithm, r.engine, r.alpha}].push_back(&r);
        groups[{r.family, 0, r.algorithm, r.engine, r.alpha}].push_back(&r);
    }
    std::vector<AggregateRow> out;
    for (const auto& [k, v] : groups) {
        AggregateRow a;
        std::tie(a.family, a.size, a.algorithm, a.engine, a.alpha) = k;
        a.cells = v.size();
        for (const auto* r : v) {
            a.throughput += r->throughput;
            a.peak_memory += static_cast<double>(r->peak_memory);
            a.latency_us += r->mean_latency_us;
            a.normalized_cost += r->normalized_cost;
        }
        double n = static_cast<double>(v.size());
        a.throughput /= n;
        a.peak_memory /= n;
        a.latency_us /= n;
        a.normalized_cost /= n;
        out.push_back(a);
    }
    return out;
}

[[nodiscard]] inline std::string aggregate_table(const std::vector<AggregateRow>& rows) {
    std::ostringstream s;
    s << std::left << std::setw(12) << "family" << std::setw(6) << "size" << std::setw(13) << "algorithm" << std::setw(7)
      << "engine" << std::setw(7) << "alpha" << std::right << std::setw(6) << "cells" << std::setw(14) << "throughput"
      << std::setw(12) << "peak_mem" << std::setw(13) << "latency_us" << std::setw(11) << "norm_cost" << '\n';
    s << std::fixed;
    for (const auto& r : rows) {
        s << std::left << std::setw(12) << r.family << std::setw(6) << (r.size ? std::to_string(r.size) : "all")
          << std::setw(13) << r.algorithm << std::setw(7) << r.engine << std::setw(7) << std::setprecision(2) << r.alpha
          << std::right << std::setw(6) << r.cells << std::setw(14) << std::setprecision(0) << r.throughput
          << std::setw(12) << std::setprecision(1) << r.peak_memory << std::setw(13) << std::setprecision(2)
          << r.latency_us << std::setw(11) << std::setprecision(3) << r.normalized_cost << '\n';
    }
    return s.str();
}

[[nodiscard]] inline std::string aggregate_csv(const std::vector<AggregateRow>& rows) {
    std::ostringstream s;
    s.precision(10);
    s << "family,size,algorithm,engine,alpha,cells,throughput_eps,peak_memory,latency_us,normalized_cost\n";
    for (const auto& r : rows)
        s << r.family << ',' << r.size << ',' << r.algorithm << ',' << r.engine << ',' << r.alpha << ',' << r.cells << ','
          << r.throughput << ',' << r.peak_memory << ',' << r.latency_us << ',' << r.normalized_cost << '\n';
    return s.str();
}

// ---------------------------------------------------------------------------
// Rank correlation
// ---------------------------------------------------------------------------

/// Ranks from 1, ties sharing their average rank.
[[nodiscard]] inline std::vector<double> average_ranks(const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> rank(v.size());
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
        double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) rank[idx[k]] = r;
        i = j + 1;
    }
    return rank;
}

/// Pearson correlation of average ranks; 0 when either side is constant.
[[nodiscard]] inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw ContractError("spearman: samples differ in length");
    if (x.size() < 2) return 0.0;
    auto rx = average_ranks(x), ry = average_ranks(y);
    double n = static_cast<double>(x.size());
    double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n, my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < rx.size(); ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    if (sxx == 0 || syy == 0) return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

}  // namespace cep
