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
 * Instance-propagation tree for one conjunct. Every plan node keeps a buffer
 * of live instances; a new instance is inserted into its node's buffer and
 * then joined with the sibling buffer, oldest first, up toward the root.
 */
class TreeEngine final : public ConjunctEngine {
    auto blockers_fn() {
        return [this](const std::string& type) -> const std::deque<EventPtr>& { return blockers_[type].events(); };
    }

public:
    TreeEngine(std::shared_ptr<const CompiledConjunct> cc, const TreePlan& plan, std::size_t index,
               KleeneOptions kleene = {})
        : cc_(std::move(cc)), plan_(plan), completer_(*cc_, index), kleene_(kleene) {
        plan_.check();
        std::size_t nodes = plan_.nodes.size();
        parent_ = plan_.parents();
        leaf_of_.assign(cc_->size(), -1);
        covers_.assign(nodes, {});
        for (int n : plan_.post_order()) {
            const auto& nd = plan_.nodes[static_cast<std::size_t>(n)];
            if (nd.is_leaf()) {
                auto pos = cc_->position_of(nd.type);
                if (!pos || cc_->is_negated(*pos))
                    throw ContractError("tree: leaf '" + nd.type + "' is not a positive type of the pattern");
                leaf_of_[*pos] = n;
                covers_[static_cast<std::size_t>(n)] = {*pos};
            } else {
                auto& c = covers_[static_cast<std::size_t>(n)];
                c = covers_[static_cast<std::size_t>(nd.left)];
                c.insert(covers_[static_cast<std::size_t>(nd.right)].begin(),
                         covers_[static_cast<std::size_t>(nd.right)].end());
            }
        }
        for (auto p : cc_->positives())
            if (leaf_of_[p] < 0) throw ContractError("tree: plan does not cover every positive type");

        node_preds_.resize(nodes);
        for (const auto* pr : cc_->positive_predicates()) node_preds_[smallest_cover(pr->positions())].push_back(pr);
        node_negs_.resize(nodes);
        for (const auto& rule : cc_->negations()) {
            std::size_t node = static_cast<std::size_t>(plan_.root);
            if (auto it = plan_.negation_checkpoints.find(rule.type); it != plan_.negation_checkpoints.end())
                node = it->second;
            else if (!rule.dependencies.empty())
                node = smallest_cover({rule.dependencies.begin(), rule.dependencies.end()});
            for (auto d : rule.dependencies)
                if (!covers_.at(node).count(d))
                    throw ContractError("tree: checkpoint of '" + rule.type + "' does not cover its dependencies");
            node_negs_[node].push_back(&rule);
        }
        buffers_.resize(nodes);
    }

    void on_event(const EventPtr& e, std::vector<Candidate>& out) override {
        out_ = &out;
        double now = e->timestamp;
        completer_.release(now, blockers_fn(), out, ctr_);
        evict(now);
        next_serial_ = e->serial + 1;
        track_partition(*e);

        auto pos = cc_->position_of(e->type);
        if (pos && cc_->is_negated(*pos)) blockers_[e->type].push(e);
        if (pos && !cc_->is_negated(*pos)) {
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
            auto leaf = static_cast<std::size_t>(leaf_of_[*pos]);
            for (const auto& it : items) {
                Partial inst;
                inst.slots.assign(cc_->size(), nullptr);
                inst.add(*pos, it);
                accept(std::move(inst), leaf);
            }
        }
        if (!cc_->adjacency().empty())
            for (std::size_t n = 0; n < buffers_.size(); ++n)
                if (static_cast<int>(n) != plan_.root)
                    std::erase_if(buffers_[n], [&](const Partial& p) { return dead(p); });
    }

    void flush(std::vector<Candidate>& out) override {
        completer_.release(std::numeric_limits<double>::infinity(), blockers_fn(), out, ctr_);
    }

    void consume(const std::set<std::uint64_t>& consumed) override {
        for (auto& b : buffers_) std::erase_if(b, [&](const Partial& p) { return p.contains_any(consumed); });
        for (auto& [pos, pool] : pools_)
            std::erase_if(pool, [&](const EventPtr& e) { return consumed.count(e->serial) != 0; });
        completer_.drop_consumed(consumed);
    }

    [[nodiscard]] std::size_t live_partials() const override {
        std::size_t n = completer_.pending();
        for (std::size_t i = 0; i < buffers_.size(); ++i)
            if (!plan_.nodes[i].is_leaf()) n += buffers_[i].size();
        return n;
    }

    [[nodiscard]] std::size_t buffered_events() const override {
        std::size_t n = 0;
        for (std::size_t i = 0; i < buffers_.size(); ++i)
            if (plan_.nodes[i].is_leaf()) n += buffers_[i].size();
        for (const auto& [t, b] : blockers_) n += b.size();
        return n;
    }

    [[nodiscard]] std::vector<std::size_t> per_unit_live() const override {
        std::vector<std::size_t> out;
        for (const auto& b : buffers_) out.push_back(b.size());
        return out;
    }

    [[nodiscard]] const EngineCounters& counters() const override { return ctr_; }
    [[nodiscard]] const TreePlan& plan() const { return plan_; }
    [[nodiscard]] const std::vector<const Predicate*>& node_predicates(std::size_t node) const {
        return node_preds_.at(node);
    }

private:
    /// Lowest node whose subtree holds every position.
    std::size_t smallest_cover(const std::vector<std::size_t>& positions) const {
        std::size_t best = static_cast<std::size_t>(plan_.root);
        for (std::size_t n = 0; n < covers_.size(); ++n) {
            bool all = std::all_of(positions.begin(), positions.end(), [&](std::size_t p) { return covers_[n].count(p); });
            if (all && covers_[n].size() < covers_[best].size()) best = n;
        }
        return best;
    }

    /// Checks node conditions for a fresh instance, stores it and joins it upward.
    void accept(Partial inst, std::size_t node) {
        for (const auto* pr : node_preds_[node]) {
            ++ctr_.work;
            if (evaluate(*pr, inst) != Truth::yes) return;
        }
        for (const auto* rule : node_negs_[node])
            if (!negation_holds(*rule, inst, blockers_[rule->type].events(), cc_->window(), CheckMode::partial,
                                ctr_.work))
                return;
        if (!cc_->adjacency().empty() && dead(inst)) return;
        ++ctr_.instances_created;
        if (static_cast<int>(node) == plan_.root) {
            completer_.complete(std::move(inst), blockers_fn(), *out_, ctr_);
            return;
        }
        buffers_[node].push_back(inst);
        auto parent = static_cast<std::size_t>(parent_[node]);
        const auto& pn = plan_.nodes[parent];
        auto sibling = static_cast<std::size_t>(pn.left == static_cast<int>(node) ? pn.right : pn.left);
        const auto& sib = buffers_[sibling];
        for (std::size_t i = 0; i < sib.size(); ++i) {
            ++ctr_.work;
            const Partial& other = sib[i];
            double lo = std::min(inst.min_ts, other.min_ts), hi = std::max(inst.max_ts, other.max_ts);
            if (hi - lo > cc_->window()) continue;
            accept(merge(inst, other), parent);
        }
    }

    bool dead(const Partial& pm) {
        return adjacency_dead(*cc_, pm, next_serial_, next_pserial_,
                              [&](std::size_t pos, const std::string& attr, const AttrValue& want, const AttrValue* key) {
                                  for (const auto& inst : buffers_[static_cast<std::size_t>(leaf_of_[pos])])
                                      if (item_matches(*inst.slots[pos], attr, want, key, cc_->strategy().partition_key))
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
        for (auto& b : buffers_) std::erase_if(b, [&](const Partial& p) { return now - p.min_ts > W; });
        for (auto& [pos, pool] : pools_)
            while (!pool.empty() && now - pool.front()->timestamp > W) pool.pop_front();
        for (auto& [t, b] : blockers_) b.evict(now, cc_->window());
    }

    std::shared_ptr<const CompiledConjunct> cc_;
    TreePlan plan_;
    Completer completer_;
    KleeneOptions kleene_;
    std::vector<int> parent_;
    std::vector<int> leaf_of_;  // position -> leaf node
    std::vector<std::set<std::size_t>> covers_;
    std::vector<std::vector<const Predicate*>> node_preds_;
    std::vector<std::vector<const NegationRule*>> node_negs_;
    std::vector<std::deque<Partial>> buffers_;
    std::map<std::size_t, std::deque<EventPtr>> pools_;
    std::map<std::string, BlockerBuffer> blockers_;
    std::map<std::string, double> next_pserial_;
    std::uint64_t next_serial_ = 0;
    EngineCounters ctr_;
    std::vector<Candidate>* out_ = nullptr;
};

}  // namespace cep::runtime
