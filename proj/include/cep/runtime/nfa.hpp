#pragma once

#include <deque>
#include <map>
#include <memory>
#include <set>
#include <vector>

#include "cep/error.hpp"
#include "cep/plan.hpp"
#include "cep/runtime/common.hpp"

namespace cep::runtime {

/**
 * Lazy chain automaton for one conjunct. States q_1..q_{n+1} follow the
 * plan order; events of every type are buffered on arrival and a partial
 * match reads the next type's buffer when it reaches that state, so
 * out-of-order arrivals are handled without reordering the stream.
 */
class NfaEngine final : public ConjunctEngine {
    auto blockers_fn() {
        return [this](const std::string& type) -> const std::deque<EventPtr>& { return blockers_[type].events(); };
    }

public:
    NfaEngine(std::shared_ptr<const CompiledConjunct> cc, const OrderPlan& plan, std::size_t index,
              KleeneOptions kleene = {})
        : cc_(std::move(cc)), completer_(*cc_, index), kleene_(kleene) {
        std::set<std::size_t> seen;
        for (const auto& t : plan.order) {
            auto pos = cc_->position_of(t);
            if (!pos || cc_->is_negated(*pos) || !seen.insert(*pos).second)
                throw ContractError("nfa: plan type '" + t + "' is not a distinct positive type of the pattern");
            order_.push_back(*pos);
        }
        if (order_.size() != cc_->positives().size()) throw ContractError("nfa: plan does not cover every positive type");
        std::size_t n = order_.size();
        step_of_.assign(cc_->size(), n);
        for (std::size_t k = 0; k < n; ++k) step_of_[order_[k]] = k;

        step_preds_.resize(n);
        for (const auto* pr : cc_->positive_predicates()) {
            std::size_t last = 0;
            for (auto pos : pr->positions()) last = std::max(last, step_of_[pos]);
            step_preds_[last].push_back(pr);
        }
        step_negs_.resize(n);
        for (const auto& rule : cc_->negations()) {
            std::size_t step = 0;
            if (auto it = plan.negation_checkpoints.find(rule.type); it != plan.negation_checkpoints.end()) {
                step = it->second;
            } else {
                for (auto d : rule.dependencies) step = std::max(step, step_of_[d] + 1);
            }
            step = std::clamp<std::size_t>(step, 1, n);
            for (auto d : rule.dependencies)
                if (step_of_[d] >= step) throw ContractError("nfa: checkpoint of '" + rule.type + "' precedes a dependency");
            step_negs_[step - 1].push_back(&rule);
        }
        buffers_.resize(n);
        states_.resize(n > 0 ? n - 1 : 0);
    }

    /// Chain length including the accepting state.
    [[nodiscard]] std::size_t state_count() const { return order_.size() + 1; }
    [[nodiscard]] const std::vector<std::size_t>& order() const { return order_; }

    void on_event(const EventPtr& e, std::vector<Candidate>& out) override {
        out_ = &out;
        double now = e->timestamp;
        completer_.release(now, blockers_fn(), out, ctr_);
        evict(now);
        next_serial_ = e->serial + 1;
        track_partition(*e);

        auto pos = cc_->position_of(e->type);
        if (!pos) return finish_event();
        if (cc_->is_negated(*pos)) {
            blockers_[e->type].push(e);
            return finish_event();
        }
        std::size_t j = step_of_[*pos];
        std::vector<ItemPtr> items;
        if (cc_->is_kleene(*pos)) {
            auto& pool = pools_[*pos];
            std::vector<EventPtr> within;
            for (const auto& x : pool)
                if (now - x->timestamp <= cc_->window()) within.push_back(x);
            items = kleene_subsets(e, within, kleene_, ctr_.kleene_overflow);
            pool.push_back(e);
        } else {
            items.push_back(Item::of({e}));
        }
        for (const auto& it : items) buffers_[j].push_back(it);
        for (const auto& it : items) {
            if (j == 0) {
                Partial base;
                base.slots.assign(cc_->size(), nullptr);
                extend(base, 0, it);
            } else {
                auto& prev = states_[j - 1];
                std::size_t count = prev.size();
                for (std::size_t i = 0; i < count; ++i) extend(prev[i], j, it);
            }
        }
        finish_event();
    }

    void flush(std::vector<Candidate>& out) override {
        completer_.release(std::numeric_limits<double>::infinity(), blockers_fn(), out, ctr_);
    }

    void consume(const std::set<std::uint64_t>& consumed) override {
        for (auto& s : states_) std::erase_if(s, [&](const Partial& p) { return p.contains_any(consumed); });
        for (auto& b : buffers_) std::erase_if(b, [&](const ItemPtr& i) { return i->contains_any(consumed); });
        for (auto& [pos, pool] : pools_)
            std::erase_if(pool, [&](const EventPtr& e) { return consumed.count(e->serial) != 0; });
        completer_.drop_consumed(consumed);
    }

    [[nodiscard]] std::size_t live_partials() const override {
        std::size_t n = completer_.pending();
        for (const auto& s : states_) n += s.size();
        return n;
    }

    [[nodiscard]] std::size_t buffered_events() const override {
        std::size_t n = 0;
        for (const auto& b : buffers_) n += b.size();
        for (const auto& [t, b] : blockers_) n += b.size();
        return n;
    }

    [[nodiscard]] std::vector<std::size_t> per_unit_live() const override {
        std::vector<std::size_t> out;
        for (const auto& s : states_) out.push_back(s.size());
        return out;
    }

    [[nodiscard]] const EngineCounters& counters() const override { return ctr_; }

private:
    void extend(const Partial& base, std::size_t j, const ItemPtr& item) {
        ++ctr_.work;
        Partial pm = base;
        pm.add(order_[j], item);
        if (pm.max_ts - pm.min_ts > cc_->window()) return;
        for (const auto* pr : step_preds_[j]) {
            ++ctr_.work;
            if (evaluate(*pr, pm) != Truth::yes) return;
        }
        for (const auto* rule : step_negs_[j])
            if (!negation_holds(*rule, pm, blockers_[rule->type].events(), cc_->window(), CheckMode::partial,
                                ctr_.work))
                return;
        if (!cc_->adjacency().empty() && dead(pm)) return;
        ++ctr_.instances_created;
        if (j + 1 == order_.size()) {
            completer_.complete(std::move(pm), blockers_fn(), *out_, ctr_);
            return;
        }
        states_[j].push_back(pm);
        // The next state reads whatever its type's buffer already holds.
        const auto& next = buffers_[j + 1];
        for (std::size_t i = 0; i < next.size(); ++i) extend(pm, j + 1, next[i]);
    }

    bool dead(const Partial& pm) {
        return adjacency_dead(*cc_, pm, next_serial_, next_pserial_,
                              [&](std::size_t pos, const std::string& attr, const AttrValue& want, const AttrValue* key) {
                                  for (const auto& it : buffers_[step_of_[pos]])
                                      if (item_matches(*it, attr, want, key, cc_->strategy().partition_key))
                                          return true;
                                  return false;
                              });
    }

    void track_partition(const Event& e) {
        if (cc_->strategy().kind != SelectionKind::partition_contiguity) return;
        auto key = e.value(cc_->strategy().partition_key);
        auto ps = e.value(kPartitionSerialAttr);
        if (key && ps && std::holds_alternative<double>(*ps)) next_pserial_[partition_id(*key)] = std::get<double>(*ps) + 1;
    }

    void evict(double now) {
        // Same difference form as the match check, so rounding never evicts a live candidate.
        double W = cc_->window();
        for (auto& b : buffers_) std::erase_if(b, [&](const ItemPtr& i) { return now - i->min_ts > W; });
        for (auto& s : states_) std::erase_if(s, [&](const Partial& p) { return now - p.min_ts > W; });
        for (auto& [pos, pool] : pools_)
            while (!pool.empty() && now - pool.front()->timestamp > W) pool.pop_front();
        for (auto& [t, b] : blockers_) b.evict(now, cc_->window());
    }

    void finish_event() {
        if (cc_->adjacency().empty()) return;
        for (auto& s : states_) std::erase_if(s, [&](const Partial& p) { return dead(p); });
    }

    std::shared_ptr<const CompiledConjunct> cc_;
    Completer completer_;
    KleeneOptions kleene_;
    std::vector<std::size_t> order_;    // step -> position
    std::vector<std::size_t> step_of_;  // position -> step
    std::vector<std::vector<const Predicate*>> step_preds_;
    std::vector<std::vector<const NegationRule*>> step_negs_;
    std::vector<std::deque<ItemPtr>> buffers_;   // per step
    std::vector<std::vector<Partial>> states_;   // states_[k]: k+1 types accepted
    std::map<std::size_t, std::deque<EventPtr>> pools_;  // raw Kleene events per position
    std::map<std::string, BlockerBuffer> blockers_;
    std::map<std::string, double> next_pserial_;
    std::uint64_t next_serial_ = 0;
    EngineCounters ctr_;
    std::vector<Candidate>* out_ = nullptr;
};

}  // namespace cep::runtime
