#pragma once

#include <algorithm>
#include <cstdint>
#include <deque>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "cep/error.hpp"
#include "cep/pattern.hpp"
#include "cep/plan.hpp"
#include "cep/transform.hpp"

namespace cep::runtime {

/// Events bound to one pattern position: one event, or a Kleene subset.
struct Item {
    std::vector<EventPtr> events;  // arrival order; the last one is the newest
    double min_ts = 0.0;
    double max_ts = 0.0;
    std::uint64_t serial = 0;  // newest event

    [[nodiscard]] static std::shared_ptr<const Item> of(std::vector<EventPtr> evs) {
        auto it = std::make_shared<Item>();
        it->min_ts = std::numeric_limits<double>::infinity();
        it->max_ts = -std::numeric_limits<double>::infinity();
        for (const auto& e : evs) {
            it->min_ts = std::min(it->min_ts, e->timestamp);
            it->max_ts = std::max(it->max_ts, e->timestamp);
            it->serial = std::max(it->serial, e->serial);
        }
        it->events = std::move(evs);
        return it;
    }

    [[nodiscard]] bool contains_any(const std::set<std::uint64_t>& serials) const {
        return std::any_of(events.begin(), events.end(), [&](const EventPtr& e) { return serials.count(e->serial); });
    }
};
using ItemPtr = std::shared_ptr<const Item>;

/// A partial match (NFA) or an instance (tree): one slot per conjunct position.
struct Partial {
    std::vector<ItemPtr> slots;
    double min_ts = std::numeric_limits<double>::infinity();
    double max_ts = -std::numeric_limits<double>::infinity();

    [[nodiscard]] bool bound(std::size_t pos) const { return pos < slots.size() && slots[pos] != nullptr; }

    void add(std::size_t pos, const ItemPtr& item) {
        slots[pos] = item;
        min_ts = std::min(min_ts, item->min_ts);
        max_ts = std::max(max_ts, item->max_ts);
    }

    [[nodiscard]] bool contains_any(const std::set<std::uint64_t>& serials) const {
        return std::any_of(slots.begin(), slots.end(),
                           [&](const ItemPtr& s) { return s && s->contains_any(serials); });
    }

    /// Sorted serials of every bound event; the identity of a match.
    [[nodiscard]] std::vector<std::uint64_t> serials() const {
        std::vector<std::uint64_t> out;
        for (const auto& s : slots)
            if (s)
                for (const auto& e : s->events) out.push_back(e->serial);
        std::sort(out.begin(), out.end());
        return out;
    }
};

/// Merges two instances with disjoint bound positions.
[[nodiscard]] inline Partial merge(const Partial& a, const Partial& b) {
    Partial out = a;
    for (std::size_t i = 0; i < b.slots.size(); ++i)
        if (b.slots[i]) out.slots[i] = b.slots[i];
    out.min_ts = std::min(a.min_ts, b.min_ts);
    out.max_ts = std::max(a.max_ts, b.max_ts);
    return out;
}

// ---------------------------------------------------------------------------
// Predicate evaluation
// ---------------------------------------------------------------------------

[[nodiscard]] inline std::optional<AttrValue> operand_value(const Operand& o, const Event& e) {
    auto v = e.value(o.attribute);
    if (!v) return std::nullopt;
    if (o.offset != 0.0) {
        auto* d = std::get_if<double>(&*v);
        if (!d) return std::nullopt;
        *d += o.offset;
    }
    return v;
}

[[nodiscard]] inline bool compare_attr(const AttrValue& x, Comparator c, const AttrValue& y) {
    if (x.index() != y.index()) return false;
    if (const auto* dx = std::get_if<double>(&x)) return compare_values(*dx, c, std::get<double>(y));
    return compare_values(std::get<std::string>(x), c, std::get<std::string>(y));
}

enum class Truth { yes, no, unknown };

/**
 * Evaluates a predicate over bound slots; Kleene slots must satisfy it for
 * every element. `slot(pos)` returns the item bound at `pos` or nullptr.
 */
template <typename SlotFn>
[[nodiscard]] Truth evaluate_with(const Predicate& p, SlotFn&& slot) {
    auto side = [&](const Operand& o, std::vector<std::optional<AttrValue>>& vals) -> bool {
        if (o.is_literal()) {
            vals.emplace_back(o.literal);
            return true;
        }
        const Item* it = slot(*o.position);
        if (!it) return false;
        for (const auto& e : it->events) vals.push_back(operand_value(o, *e));
        return true;
    };
    // Same position on both sides compares element-wise, not across the set.
    if (p.lhs.position && p.rhs.position && *p.lhs.position == *p.rhs.position) {
        const Item* it = slot(*p.lhs.position);
        if (!it) return Truth::unknown;
        for (const auto& e : it->events) {
            auto l = operand_value(p.lhs, *e), r = operand_value(p.rhs, *e);
            if (!l || !r || !compare_attr(*l, p.cmp, *r)) return Truth::no;
        }
        return Truth::yes;
    }
    std::vector<std::optional<AttrValue>> ls, rs;
    if (!side(p.lhs, ls) || !side(p.rhs, rs)) return Truth::unknown;
    for (const auto& l : ls)
        for (const auto& r : rs)
            if (!l || !r || !compare_attr(*l, p.cmp, *r)) return Truth::no;
    return Truth::yes;
}

[[nodiscard]] inline Truth evaluate(const Predicate& p, const Partial& pm) {
    return evaluate_with(p, [&](std::size_t pos) -> const Item* { return pm.bound(pos) ? pm.slots[pos].get() : nullptr; });
}

// ---------------------------------------------------------------------------
// Compiled conjunct
// ---------------------------------------------------------------------------

struct NegationRule {
    std::size_t position = 0;
    std::string type;
    std::vector<std::size_t> lower;  // positive positions
    std::vector<std::size_t> upper;
    std::vector<const Predicate*> predicates;  // those referencing `position`
    std::set<std::size_t> dependencies;        // positive positions
};

/// Serial adjacency `later.attr = earlier.attr + 1`, used to drop partial matches early.
struct Adjacency {
    std::size_t earlier = 0;
    std::size_t later = 0;
    std::string attribute;  // serial or pserial
    std::string partition_key;
};

/**
 * Position-level view of one conjunct shared by both engines. Owns a copy
 * of the conjunct so predicate pointers stay valid.
 */
class CompiledConjunct {
public:
    explicit CompiledConjunct(const Conjunct& c) : conj_(std::make_shared<Conjunct>(c)) {
        const auto& p = conj_->pattern;
        leaves_ = p.leaves();
        window_ = p.window;
        strategy_ = p.strategy;
        for (std::size_t i = 0; i < leaves_.size(); ++i) {
            type_pos_[leaves_[i].type] = i;
            if (leaves_[i].unary != Unary::negation) positives_.push_back(i);
        }
        for (const auto& pr : p.predicates) {
            bool neg = false;
            for (auto pos : pr.positions()) neg = neg || leaves_[pos].unary == Unary::negation;
            if (!neg) positive_preds_.push_back(&pr);
            if (pr.origin == PredicateOrigin::contiguity && pr.lhs.position && pr.rhs.position &&
                pr.lhs.attribute == pr.rhs.attribute &&
                (pr.lhs.attribute == kSerialAttr || pr.lhs.attribute == kPartitionSerialAttr) && pr.rhs.offset == 1.0)
                adjacency_.push_back({*pr.rhs.position, *pr.lhs.position, pr.lhs.attribute, p.strategy.partition_key});
        }
        for (const auto& cp : conj_->annotations.negations) {
            NegationRule r;
            r.position = type_pos_.at(cp.type);
            r.type = cp.type;
            for (const auto& t : cp.lower) r.lower.push_back(type_pos_.at(t));
            for (const auto& t : cp.upper) r.upper.push_back(type_pos_.at(t));
            for (const auto& t : cp.dependencies) r.dependencies.insert(type_pos_.at(t));
            for (const auto& pr : p.predicates)
                if (pr.references(r.position)) r.predicates.push_back(&pr);
            if (r.upper.empty()) defers_ = true;
            negations_.push_back(std::move(r));
        }
    }

    [[nodiscard]] const Conjunct& conjunct() const { return *conj_; }
    [[nodiscard]] const std::vector<LeafInfo>& leaves() const { return leaves_; }
    [[nodiscard]] const std::vector<std::size_t>& positives() const { return positives_; }
    [[nodiscard]] const std::vector<const Predicate*>& positive_predicates() const { return positive_preds_; }
    [[nodiscard]] const std::vector<NegationRule>& negations() const { return negations_; }
    [[nodiscard]] const std::vector<Adjacency>& adjacency() const { return adjacency_; }
    [[nodiscard]] double window() const { return window_; }
    [[nodiscard]] const SelectionStrategy& strategy() const { return strategy_; }
    /// A full match waits for the window to close before it can be reported.
    [[nodiscard]] bool defers() const { return defers_; }
    [[nodiscard]] std::size_t size() const { return leaves_.size(); }

    [[nodiscard]] std::optional<std::size_t> position_of(const std::string& type) const {
        auto it = type_pos_.find(type);
        if (it == type_pos_.end()) return std::nullopt;
        return it->second;
    }
    [[nodiscard]] bool is_kleene(std::size_t pos) const { return leaves_[pos].unary == Unary::kleene; }
    [[nodiscard]] bool is_negated(std::size_t pos) const { return leaves_[pos].unary == Unary::negation; }
    [[nodiscard]] const NegationRule* negation_for(const std::string& type) const {
        for (const auto& n : negations_)
            if (n.type == type) return &n;
        return nullptr;
    }

private:
    std::shared_ptr<Conjunct> conj_;
    std::vector<LeafInfo> leaves_;
    std::vector<std::size_t> positives_;
    std::vector<const Predicate*> positive_preds_;
    std::vector<NegationRule> negations_;
    std::vector<Adjacency> adjacency_;
    std::map<std::string, std::size_t> type_pos_;
    double window_ = 0.0;
    SelectionStrategy strategy_;
    bool defers_ = false;
};

// ---------------------------------------------------------------------------
// Negation
// ---------------------------------------------------------------------------

enum class CheckMode {
    /// Only the part of the forbidden interval every completion shares.
    partial,
    /// The final interval of a full match.
    exact,
};

/**
 * True when no buffered event of the negated type lies in the forbidden
 * interval and satisfies every predicate linking it to bound positions.
 */
template <typename Buffer>
[[nodiscard]] bool negation_holds(const NegationRule& rule, const Partial& pm, const Buffer& blockers, double W,
                                  CheckMode mode, std::uint64_t& work) {
    auto bound_all = [&](const std::vector<std::size_t>& ps) {
        return std::all_of(ps.begin(), ps.end(), [&](std::size_t p) { return pm.bound(p); });
    };
    if (!rule.lower.empty() && !bound_all(rule.lower)) return true;
    if (!rule.upper.empty() && !bound_all(rule.upper)) return true;

    double lo = 0, hi = 0;
    bool lo_open = false, hi_open = false;
    if (!rule.lower.empty()) {
        lo = -std::numeric_limits<double>::infinity();
        for (auto p : rule.lower) lo = std::max(lo, pm.slots[p]->max_ts);
        lo_open = true;
    } else {
        lo = mode == CheckMode::exact ? pm.max_ts - W : pm.min_ts;
    }
    if (!rule.upper.empty()) {
        hi = std::numeric_limits<double>::infinity();
        for (auto p : rule.upper) hi = std::min(hi, pm.slots[p]->min_ts);
        hi_open = true;
    } else {
        hi = mode == CheckMode::exact ? pm.min_ts + W : pm.max_ts;
    }

    for (const auto& e : blockers) {
        ++work;
        double ts = e->timestamp;
        if (lo_open ? ts <= lo : ts < lo) continue;
        if (hi_open ? ts >= hi : ts > hi) continue;
        auto blocker = Item::of({e});
        bool blocks = true;
        for (const auto* pr : rule.predicates) {
            auto t = evaluate_with(*pr, [&](std::size_t pos) -> const Item* {
                if (pos == rule.position) return blocker.get();
                return pm.bound(pos) ? pm.slots[pos].get() : nullptr;
            });
            if (t != Truth::yes) {  // unknown predicates cannot prove a block
                blocks = false;
                break;
            }
        }
        if (blocks) return false;
    }
    return true;
}

// ---------------------------------------------------------------------------
// Kleene subsets
// ---------------------------------------------------------------------------

struct KleeneOptions {
    std::size_t max_subset_size = 8;
    std::size_t max_subsets_per_event = 4096;
};

/**
 * Subsets of `pool` (events within the window of `e`) that contain `e`, in
 * bitmask order over the pool. Each subset is produced exactly once, by its
 * newest element. Subsets beyond the caps are counted in `overflow`.
 */
[[nodiscard]] inline std::vector<ItemPtr> kleene_subsets(const EventPtr& e, const std::vector<EventPtr>& pool,
                                                         const KleeneOptions& opt, std::uint64_t& overflow) {
    std::vector<ItemPtr> out;
    std::size_t k = pool.size();
    std::size_t limit = opt.max_subset_size == 0 ? 0 : opt.max_subset_size - 1;
    if (k >= 63) {
        overflow += std::numeric_limits<std::uint32_t>::max();
        k = 62;
    }
    std::uint64_t total = std::uint64_t{1} << k;
    for (std::uint64_t m = 0; m < total; ++m) {
        if (static_cast<std::size_t>(__builtin_popcountll(m)) > limit || out.size() >= opt.max_subsets_per_event) {
            ++overflow;
            continue;
        }
        std::vector<EventPtr> evs;
        for (std::size_t i = 0; i < k; ++i)
            if (m >> i & 1U) evs.push_back(pool[i]);
        evs.push_back(e);
        out.push_back(Item::of(std::move(evs)));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Completion, deferral and candidates
// ---------------------------------------------------------------------------

/// A full match awaiting the selection decision.
struct Candidate {
    std::size_t conjunct = 0;
    Partial match;
    std::vector<std::uint64_t> serials;
};

/// Holds full matches until no later event can block them.
class Deferrals {
public:
    void add(Partial pm, double bound) { pending_.push_back({std::move(pm), bound}); }

    /// Matches whose bound is strictly below `ts` (all when ts is +inf).
    [[nodiscard]] std::vector<Partial> release(double ts) {
        std::vector<Partial> out;
        std::vector<Entry> keep;
        for (auto& p : pending_) {
            if (p.bound < ts)
                out.push_back(std::move(p.pm));
            else
                keep.push_back(std::move(p));
        }
        pending_ = std::move(keep);
        return out;
    }

    void drop_consumed(const std::set<std::uint64_t>& consumed) {
        std::erase_if(pending_, [&](const Entry& e) { return e.pm.contains_any(consumed); });
    }

    [[nodiscard]] std::size_t size() const { return pending_.size(); }

private:
    struct Entry {
        Partial pm;
        double bound;
    };
    std::vector<Entry> pending_;
};

/// Buffer of negated-type events, retained for 2W so deferred matches can still see blockers.
class BlockerBuffer {
public:
    void push(const EventPtr& e) { events_.push_back(e); }
    void evict(double now, double W) {
        while (!events_.empty() && now - events_.front()->timestamp > 2 * W) events_.pop_front();
    }
    [[nodiscard]] const std::deque<EventPtr>& events() const { return events_; }
    [[nodiscard]] std::size_t size() const { return events_.size(); }

private:
    std::deque<EventPtr> events_;
};

/// Counters every conjunct engine exposes to the wrapper.
struct EngineCounters {
    std::uint64_t instances_created = 0;
    std::uint64_t kleene_overflow = 0;
    std::uint64_t work = 0;  // predicate and buffer probes; a deterministic cost proxy
};

/// Interface both conjunct engines implement.
class ConjunctEngine {
public:
    virtual ~ConjunctEngine() = default;
    /// Feeds one event (every stream event, pattern type or not); appends completed candidates.
    virtual void on_event(const EventPtr& e, std::vector<Candidate>& out) = 0;
    /// End of stream: releases everything still deferred.
    virtual void flush(std::vector<Candidate>& out) = 0;
    /// Next-match: forget every partial state that contains a consumed event.
    virtual void consume(const std::set<std::uint64_t>& consumed) = 0;
    [[nodiscard]] virtual std::size_t live_partials() const = 0;
    [[nodiscard]] virtual std::size_t buffered_events() const = 0;
    /// Live instances per state (NFA) or per node (tree).
    [[nodiscard]] virtual std::vector<std::size_t> per_unit_live() const = 0;
    [[nodiscard]] virtual const EngineCounters& counters() const = 0;
};

/**
 * Shared completion path: exact negation check, or deferral when a negation
 * is bounded by the window edge after the match.
 */
class Completer {
public:
    Completer(const CompiledConjunct& cc, std::size_t index) : cc_(&cc), index_(index) {}

    template <typename BlockersFn>
    void complete(Partial pm, BlockersFn&& blockers, std::vector<Candidate>& out, EngineCounters& ctr) {
        if (cc_->defers()) {
            double bound = pm.min_ts + cc_->window();
            deferred_.add(std::move(pm), bound);
            return;
        }
        emit_if_clear(std::move(pm), blockers, out, ctr);
    }

    template <typename BlockersFn>
    void release(double ts, BlockersFn&& blockers, std::vector<Candidate>& out, EngineCounters& ctr) {
        if (deferred_.size() == 0) return;
        for (auto& pm : deferred_.release(ts)) emit_if_clear(std::move(pm), blockers, out, ctr);
    }

    void drop_consumed(const std::set<std::uint64_t>& consumed) { deferred_.drop_consumed(consumed); }
    [[nodiscard]] std::size_t pending() const { return deferred_.size(); }

private:
    template <typename BlockersFn>
    void emit_if_clear(Partial pm, BlockersFn&& blockers, std::vector<Candidate>& out, EngineCounters& ctr) {
        for (const auto& rule : cc_->negations())
            if (!negation_holds(rule, pm, blockers(rule.type), cc_->window(), CheckMode::exact, ctr.work)) return;
        Candidate c;
        c.conjunct = index_;
        c.serials = pm.serials();
        c.match = std::move(pm);
        out.push_back(std::move(c));
    }

    const CompiledConjunct* cc_;
    std::size_t index_;
    Deferrals deferred_;
};

/// Partition identity used by the partition-serial bookkeeping.
[[nodiscard]] inline std::string partition_id(const AttrValue& v) {
    return std::holds_alternative<double>(v) ? "n:" + std::to_string(std::get<double>(v))
                                             : "s:" + std::get<std::string>(v);
}

/**
 * Early drop under contiguity: a partial state is dead when an adjacency
 * names an unbound position whose required event has already passed without
 * being buffered for that position.
 */
template <typename HasFn>
[[nodiscard]] bool adjacency_dead(const CompiledConjunct& cc, const Partial& pm, std::uint64_t next_serial,
                                  const std::map<std::string, double>& next_pserial, HasFn&& buffered) {
    for (const auto& a : cc.adjacency()) {
        bool be = pm.bound(a.earlier), bl = pm.bound(a.later);
        if (be == bl) continue;
        std::size_t known = be ? a.earlier : a.later;
        std::size_t missing = be ? a.later : a.earlier;
        const auto& ev = *pm.slots[known]->events.front();
        if (a.attribute == kSerialAttr) {
            double want = static_cast<double>(ev.serial) + (be ? 1.0 : -1.0);
            if (want < 0) return true;
            if (want < static_cast<double>(next_serial) && !buffered(missing, a.attribute, AttrValue(want), nullptr))
                return true;
        } else {
            auto key = ev.value(a.partition_key);
            auto ps = ev.value(kPartitionSerialAttr);
            if (!key || !ps || !std::holds_alternative<double>(*ps)) return true;
            double want = std::get<double>(*ps) + (be ? 1.0 : -1.0);
            if (want < 0) return true;
            auto it = next_pserial.find(partition_id(*key));
            double next = it == next_pserial.end() ? 0.0 : it->second;
            if (want < next && !buffered(missing, a.attribute, AttrValue(want), &*key)) return true;
        }
    }
    return false;
}

/// Whether `item` binds an event with `attr == want` (and the given partition key value, if any).
[[nodiscard]] inline bool item_matches(const Item& item, const std::string& attr, const AttrValue& want,
                                       const AttrValue* key, const std::string& key_name) {
    for (const auto& e : item.events) {
        auto v = e->value(attr);
        if (!v || !compare_attr(*v, Comparator::eq, want)) continue;
        if (key) {
            auto k = e->value(key_name);
            if (!k || !compare_attr(*k, Comparator::eq, *key)) continue;
        }
        return true;
    }
    return false;
}

}  // namespace cep::runtime
