#pragma once

#include <algorithm>
#include <chrono>
#include <deque>
#include <map>
#include <memory>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "cep/error.hpp"
#include "cep/plangen.hpp"
#include "cep/runtime/common.hpp"
#include "cep/runtime/nfa.hpp"
#include "cep/runtime/tree.hpp"

namespace cep {

enum class EngineKind { nfa, tree };

[[nodiscard]] inline std::string engine_name(EngineKind k) { return k == EngineKind::nfa ? "nfa" : "tree"; }

[[nodiscard]] inline EngineKind parse_engine(const std::string& s) {
    if (s == "nfa") return EngineKind::nfa;
    if (s == "tree") return EngineKind::tree;
    throw ContractError("unknown engine '" + s + "' (expected nfa or tree)");
}

struct MatchReport {
    std::size_t conjunct = 0;
    /// Sorted serials of every contributing event; the identity of the match.
    std::vector<std::uint64_t> serials;
    /// Serial of the event whose processing emitted the match; max value at end of stream.
    std::uint64_t detected_at = 0;
    double latency_us = 0.0;
    std::uint64_t latency_work = 0;
};

struct RuntimeMetrics {
    std::uint64_t events_processed = 0;
    std::uint64_t matches_emitted = 0;
    std::size_t partial_matches = 0;
    std::size_t peak_partial_matches = 0;
    std::size_t buffered_events = 0;
    std::size_t peak_buffered_events = 0;
    /// Peak of live partial matches plus buffered events, sampled after each event.
    std::size_t peak_memory = 0;
    std::uint64_t instances_created = 0;
    std::uint64_t kleene_overflow = 0;
    std::uint64_t work = 0;
    /// Per NFA state or tree node, concatenated over conjuncts.
    std::vector<std::size_t> peak_per_unit;
    std::vector<double> latency_us;
    std::vector<std::uint64_t> latency_work;
    double elapsed_s = 0.0;

    [[nodiscard]] double mean_latency_us() const {
        return latency_us.empty() ? 0.0
                                  : std::accumulate(latency_us.begin(), latency_us.end(), 0.0) /
                                        static_cast<double>(latency_us.size());
    }
    [[nodiscard]] double mean_latency_work() const {
        if (latency_work.empty()) return 0.0;
        double s = 0;
        for (auto w : latency_work) s += static_cast<double>(w);
        return s / static_cast<double>(latency_work.size());
    }
    [[nodiscard]] double throughput() const {
        return elapsed_s > 0 ? static_cast<double>(events_processed) / elapsed_s : 0.0;
    }
};

struct EngineOptions {
    runtime::KleeneOptions kleene;
};

/// Converts a finalized plan to the shape an engine executes and re-places checkpoints.
[[nodiscard]] inline Plan adapt_plan(const Plan& plan, const Conjunct& c, EngineKind kind) {
    bool is_order = std::holds_alternative<OrderPlan>(plan);
    if (is_order == (kind == EngineKind::nfa)) return plan;
    if (is_order) {
        const auto& o = std::get<OrderPlan>(plan);
        Plan t = TreePlan::left_deep(o.order);
        return finalize_plan(t, c);
    }
    OrderPlan o;
    o.order = std::get<TreePlan>(plan).leaves();
    return finalize_plan(o, c);
}

/**
 * Runs every conjunct of a normalized pattern, annotates partition serials,
 * and applies the selection strategy across conjuncts. Under next-match the
 * candidates of one step are decided in order of their sorted serials; a
 * candidate that shares an event with an accepted match is dropped.
 */
class Engine {
public:
    Engine(const NormalizedPattern& np, const std::vector<Plan>& plans, EngineKind kind, EngineOptions opt = {})
        : strategy_(np.source.strategy), window_(np.source.window) {
        if (plans.size() != np.conjuncts.size())
            throw ContractError("engine: " + std::to_string(plans.size()) + " plans for " +
                                std::to_string(np.conjuncts.size()) + " conjuncts");
        for (std::size_t i = 0; i < plans.size(); ++i) {
            auto cc = std::make_shared<const runtime::CompiledConjunct>(np.conjuncts[i]);
            Plan p = adapt_plan(plans[i], np.conjuncts[i], kind);
            if (kind == EngineKind::nfa)
                engines_.push_back(std::make_unique<runtime::NfaEngine>(cc, std::get<OrderPlan>(p), i, opt.kleene));
            else
                engines_.push_back(std::make_unique<runtime::TreeEngine>(cc, std::get<TreePlan>(p), i, opt.kleene));
        }
        for (const auto& e : engines_) metrics_.peak_per_unit.resize(metrics_.peak_per_unit.size() + e->per_unit_live().size());
    }

    Engine(const ExecutionPlan& plan, EngineKind kind, EngineOptions opt = {})
        : Engine(plan.normalized, plans_of(plan), kind, opt) {}

    std::vector<MatchReport> process(const EventPtr& input) {
        auto start = std::chrono::steady_clock::now();
        EventPtr e = annotate(input);
        arrivals_.push_back({e->serial, e->timestamp, start, total_work()});
        while (!arrivals_.empty() && arrivals_.front().ts < e->timestamp - 3 * window_) arrivals_.pop_front();

        std::vector<runtime::Candidate> cands;
        for (auto& eng : engines_) eng->on_event(e, cands);
        auto out = decide(std::move(cands), e->serial);
        ++metrics_.events_processed;
        snapshot();
        metrics_.elapsed_s += std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        return out;
    }

    std::vector<MatchReport> flush() {
        auto start = std::chrono::steady_clock::now();
        std::vector<runtime::Candidate> cands;
        for (auto& eng : engines_) eng->flush(cands);
        auto out = decide(std::move(cands), std::numeric_limits<std::uint64_t>::max());
        snapshot();
        metrics_.elapsed_s += std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        return out;
    }

    /// Processes a whole stream and flushes.
    std::vector<MatchReport> run(const EventStream& stream) {
        std::vector<MatchReport> all;
        for (const auto& e : stream) {
            auto r = process(e);
            all.insert(all.end(), std::make_move_iterator(r.begin()), std::make_move_iterator(r.end()));
        }
        auto r = flush();
        all.insert(all.end(), std::make_move_iterator(r.begin()), std::make_move_iterator(r.end()));
        return all;
    }

    [[nodiscard]] const RuntimeMetrics& metrics() const { return metrics_; }

    /// NFA chain lengths (n+1 per conjunct); empty for tree engines.
    [[nodiscard]] std::vector<std::size_t> state_counts() const {
        std::vector<std::size_t> out;
        for (const auto& e : engines_)
            if (const auto* n = dynamic_cast<const runtime::NfaEngine*>(e.get())) out.push_back(n->state_count());
        return out;
    }

private:
    struct Arrival {
        std::uint64_t serial;
        double ts;
        std::chrono::steady_clock::time_point at;
        std::uint64_t work;
    };

    static std::vector<Plan> plans_of(const ExecutionPlan& p) {
        std::vector<Plan> out;
        for (const auto& c : p.conjuncts) out.push_back(c.plan);
        return out;
    }

    EventPtr annotate(const EventPtr& e) {
        if (strategy_.kind != SelectionKind::partition_contiguity) return e;
        auto key = e->value(strategy_.partition_key);
        if (!key) return e;
        auto copy = std::make_shared<Event>(*e);
        copy->set(kPartitionSerialAttr, static_cast<double>(partition_next_[runtime::partition_id(*key)]++));
        return copy;
    }

    std::uint64_t total_work() const {
        std::uint64_t w = 0;
        for (const auto& e : engines_) w += e->counters().work;
        return w;
    }

    std::vector<MatchReport> decide(std::vector<runtime::Candidate> cands, std::uint64_t at) {
        std::sort(cands.begin(), cands.end(), [](const runtime::Candidate& a, const runtime::Candidate& b) {
            return a.serials != b.serials ? a.serials < b.serials : a.conjunct < b.conjunct;
        });
        std::vector<MatchReport> out;
        std::set<std::uint64_t> newly;
        const std::vector<std::uint64_t>* prev = nullptr;
        for (const auto& c : cands) {
            if (prev && *prev == c.serials) continue;  // same event set from another disjunct
            prev = &c.serials;
            if (strategy_.kind == SelectionKind::next_match) {
                bool clash = std::any_of(c.serials.begin(), c.serials.end(),
                                         [&](std::uint64_t s) { return consumed_.count(s) != 0; });
                if (clash) continue;
                consumed_.insert(c.serials.begin(), c.serials.end());
                newly.insert(c.serials.begin(), c.serials.end());
            }
            MatchReport r;
            r.conjunct = c.conjunct;
            r.serials = c.serials;
            r.detected_at = at;
            out.push_back(std::move(r));
        }
        if (!newly.empty())
            for (auto& eng : engines_) eng->consume(newly);
        auto now = std::chrono::steady_clock::now();
        std::uint64_t work = total_work();
        for (auto& r : out) {
            // Latency runs from the arrival of the newest contributing event.
            std::uint64_t last = r.serials.back();
            auto it = std::lower_bound(arrivals_.begin(), arrivals_.end(), last,
                                       [](const Arrival& a, std::uint64_t s) { return a.serial < s; });
            if (it != arrivals_.end() && it->serial == last) {
                r.latency_us = std::chrono::duration<double, std::micro>(now - it->at).count();
                r.latency_work = work - it->work;
            }
            metrics_.latency_us.push_back(r.latency_us);
            metrics_.latency_work.push_back(r.latency_work);
        }
        metrics_.matches_emitted += out.size();
        return out;
    }

    void snapshot() {
        std::size_t pm = 0, buf = 0, unit = 0;
        std::uint64_t created = 0, overflow = 0, work = 0;
        for (const auto& e : engines_) {
            pm += e->live_partials();
            buf += e->buffered_events();
            for (auto n : e->per_unit_live()) {
                metrics_.peak_per_unit[unit] = std::max(metrics_.peak_per_unit[unit], n);
                ++unit;
            }
            created += e->counters().instances_created;
            overflow += e->counters().kleene_overflow;
            work += e->counters().work;
        }
        metrics_.partial_matches = pm;
        metrics_.buffered_events = buf;
        metrics_.peak_partial_matches = std::max(metrics_.peak_partial_matches, pm);
        metrics_.peak_buffered_events = std::max(metrics_.peak_buffered_events, buf);
        metrics_.peak_memory = std::max(metrics_.peak_memory, pm + buf);
        metrics_.instances_created = created;
        metrics_.kleene_overflow = overflow;
        metrics_.work = work;
    }

    SelectionStrategy strategy_;
    double window_;
    std::vector<std::unique_ptr<runtime::ConjunctEngine>> engines_;
    std::map<std::string, std::uint64_t> partition_next_;
    std::set<std::uint64_t> consumed_;
    std::deque<Arrival> arrivals_;
    RuntimeMetrics metrics_;
};

/// Distinct match identities, sorted.
[[nodiscard]] inline std::set<std::vector<std::uint64_t>> match_set(const std::vector<MatchReport>& reports) {
    std::set<std::vector<std::uint64_t>> out;
    for (const auto& r : reports) out.insert(r.serials);
    return out;
}

}  // namespace cep
