#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "cep/error.hpp"
#include "cep/pattern.hpp"
#include "cep/transform.hpp"

namespace cep {

/// Match identity: sorted serials of every contributing event.
using MatchSet = std::set<std::vector<std::uint64_t>>;

struct OracleOptions {
    /// Largest number of events allowed within any window of length W.
    std::size_t bound = 14;
    /// Synthetic type -> origin type; such a leaf binds non-empty subsets of origin events.
    std::map<std::string, std::string> synthetic;
};

/**
 * Brute-force ground truth. Enumerates every assignment of events to leaf
 * positions straight from the operator semantics, shares no code with the
 * engines, and is only meant for small streams.
 */
namespace oracle {

namespace detail {

using Events = std::vector<EventPtr>;

struct Obligation {
    std::size_t position;
    std::vector<std::size_t> lower, upper;
};

struct Binding {
    std::vector<Events> slots;  // empty = unbound
    double min_ts = std::numeric_limits<double>::infinity();
    double max_ts = -std::numeric_limits<double>::infinity();
    std::vector<Obligation> negations;

    [[nodiscard]] std::vector<std::size_t> bound() const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < slots.size(); ++i)
            if (!slots[i].empty()) out.push_back(i);
        return out;
    }
    [[nodiscard]] std::vector<std::uint64_t> serials() const {
        std::vector<std::uint64_t> out;
        for (const auto& s : slots)
            for (const auto& e : s) out.push_back(e->serial);
        std::sort(out.begin(), out.end());
        return out;
    }
};

inline Binding join(const Binding& a, const Binding& b) {
    Binding out = a;
    for (std::size_t i = 0; i < b.slots.size(); ++i)
        if (!b.slots[i].empty()) out.slots[i] = b.slots[i];
    out.min_ts = std::min(a.min_ts, b.min_ts);
    out.max_ts = std::max(a.max_ts, b.max_ts);
    out.negations.insert(out.negations.end(), b.negations.begin(), b.negations.end());
    return out;
}

inline std::optional<AttrValue> value_of(const Operand& o, const Event& e) {
    auto v = e.value(o.attribute);
    if (!v) return std::nullopt;
    if (o.offset != 0.0) {
        if (!std::holds_alternative<double>(*v)) return std::nullopt;
        return AttrValue(std::get<double>(*v) + o.offset);
    }
    return v;
}

inline bool holds(const std::optional<AttrValue>& l, Comparator c, const std::optional<AttrValue>& r) {
    if (!l || !r || l->index() != r->index()) return false;
    if (std::holds_alternative<double>(*l)) return compare_values(std::get<double>(*l), c, std::get<double>(*r));
    return compare_values(std::get<std::string>(*l), c, std::get<std::string>(*r));
}

/// Universal over set-valued positions; a position compared with itself is checked per element.
inline bool satisfied(const Predicate& p, const std::vector<Events>& slots) {
    if (p.lhs.position && p.rhs.position && *p.lhs.position == *p.rhs.position) {
        for (const auto& e : slots[*p.lhs.position])
            if (!holds(value_of(p.lhs, *e), p.cmp, value_of(p.rhs, *e))) return false;
        return true;
    }
    auto values = [&](const Operand& o) {
        std::vector<std::optional<AttrValue>> out;
        if (o.is_literal()) out.emplace_back(o.literal);
        else
            for (const auto& e : slots[*o.position]) out.push_back(value_of(o, *e));
        return out;
    };
    for (const auto& l : values(p.lhs))
        for (const auto& r : values(p.rhs))
            if (!holds(l, p.cmp, r)) return false;
    return true;
}

inline bool all_bound(const Predicate& p, const std::vector<Events>& slots) {
    for (auto pos : p.positions())
        if (slots[pos].empty()) return false;
    return true;
}

class Evaluator {
public:
    Evaluator(const Pattern& p, const EventStream& stream, const OracleOptions& opt)
        : p_(p), leaves_(p.leaves()), stream_(stream), opt_(opt) {
        for (std::size_t i = 0; i < leaves_.size(); ++i)
            if (leaves_[i].unary == Unary::negation) negated_.insert(i);
        for (const auto& e : stream_) by_type_[e->type].push_back(e);
    }

    /// Every binding of the whole pattern that satisfies window, predicates and ordering.
    std::vector<Binding> positive_bindings() {
        next_leaf_ = 0;
        auto all = visit(p_.root);
        std::vector<Binding> out;
        for (auto& b : all)
            if (b.max_ts - b.min_ts <= p_.window) out.push_back(std::move(b));
        return out;
    }

    /// Definitional absence test: no event of the negated type in the forbidden interval satisfies its predicates.
    [[nodiscard]] bool absent(const Binding& b, const Obligation& ob, const std::string& type) const {
        double lo = b.max_ts - p_.window, hi = b.min_ts + p_.window;
        bool lo_open = false, hi_open = false;
        if (!ob.lower.empty()) {
            lo = -std::numeric_limits<double>::infinity();
            for (auto pos : ob.lower)
                for (const auto& e : b.slots[pos]) lo = std::max(lo, e->timestamp);
            lo_open = true;
        }
        if (!ob.upper.empty()) {
            hi = std::numeric_limits<double>::infinity();
            for (auto pos : ob.upper)
                for (const auto& e : b.slots[pos]) hi = std::min(hi, e->timestamp);
            hi_open = true;
        }
        auto it = by_type_.find(type);
        if (it == by_type_.end()) return true;
        for (const auto& x : it->second) {
            double t = x->timestamp;
            if (lo_open ? t <= lo : t < lo) continue;
            if (hi_open ? t >= hi : t > hi) continue;
            auto slots = b.slots;
            slots[ob.position] = {x};
            bool blocks = true;
            for (const auto& pr : p_.predicates) {
                if (!pr.references(ob.position)) continue;
                bool other_negated = false;
                for (auto pos : pr.positions()) other_negated = other_negated || (pos != ob.position && negated_.count(pos));
                if (other_negated || !all_bound(pr, slots)) continue;
                if (!satisfied(pr, slots)) {
                    blocks = false;
                    break;
                }
            }
            if (blocks) return false;
        }
        return true;
    }

    [[nodiscard]] const std::vector<LeafInfo>& leaves() const { return leaves_; }
    [[nodiscard]] const std::set<std::size_t>& negated() const { return negated_; }

private:
    std::vector<Binding> visit(const PatternNode& n) {
        switch (n.kind) {
            case NodeKind::leaf: return leaf(next_leaf_++, n.type, false);
            case NodeKind::kleene: return leaf(next_leaf_++, n.children.at(0).type, true);
            case NodeKind::negation: ++next_leaf_; return {};
            case NodeKind::disj: {
                std::vector<Binding> out;
                for (const auto& c : n.children) {
                    auto alts = visit(c);
                    out.insert(out.end(), std::make_move_iterator(alts.begin()), std::make_move_iterator(alts.end()));
                }
                return out;
            }
            case NodeKind::conj:
            case NodeKind::seq: return product(n);
        }
        return {};
    }

    std::vector<Binding> leaf(std::size_t pos, const std::string& type, bool kleene) {
        std::string source = type;
        if (auto it = opt_.synthetic.find(type); it != opt_.synthetic.end()) {
            source = it->second;
            kleene = true;
        }
        std::vector<Binding> out;
        auto it = by_type_.find(source);
        if (it == by_type_.end()) return out;
        const auto& evs = it->second;
        auto emit = [&](Events set) {
            Binding b;
            b.slots.assign(leaves_.size(), {});
            for (const auto& e : set) {
                b.min_ts = std::min(b.min_ts, e->timestamp);
                b.max_ts = std::max(b.max_ts, e->timestamp);
            }
            b.slots[pos] = std::move(set);
            if (local_ok(b)) out.push_back(std::move(b));
        };
        for (std::size_t i = 0; i < evs.size(); ++i) {
            if (!kleene) {
                emit({evs[i]});
                continue;
            }
            // Each subset is generated once, from its newest element.
            Events earlier;
            for (std::size_t j = 0; j < i; ++j)
                if (evs[i]->timestamp - evs[j]->timestamp <= p_.window) earlier.push_back(evs[j]);
            if (earlier.size() + 1 > opt_.bound)
                throw ResourceError("oracle_bound", opt_.bound, earlier.size() + 1);
            for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << earlier.size()); ++mask) {
                Events set;
                for (std::size_t j = 0; j < earlier.size(); ++j)
                    if (mask >> j & 1U) set.push_back(earlier[j]);
                set.push_back(evs[i]);
                emit(std::move(set));
            }
        }
        return out;
    }

    std::vector<Binding> product(const PatternNode& n) {
        bool ordered = n.kind == NodeKind::seq;
        std::vector<std::vector<Binding>> parts;
        std::vector<bool> neg;
        std::vector<std::size_t> neg_pos;
        for (const auto& c : n.children) {
            neg.push_back(c.kind == NodeKind::negation);
            neg_pos.push_back(next_leaf_);
            parts.push_back(visit(c));
        }
        std::vector<Binding> out;
        std::vector<const Binding*> chosen(parts.size(), nullptr);
        Binding empty;
        empty.slots.assign(leaves_.size(), {});
        std::function<void(std::size_t, const Binding&, double)> rec = [&](std::size_t k, const Binding& acc,
                                                                           double prev_max) {
            if (k == parts.size()) {
                Binding b = acc;
                for (std::size_t i = 0; i < parts.size(); ++i) {
                    if (!neg[i]) continue;
                    Obligation ob{neg_pos[i], {}, {}};
                    if (ordered) {
                        for (std::size_t j = i; j-- > 0;)
                            if (!neg[j]) {
                                ob.lower = chosen[j]->bound();
                                break;
                            }
                        for (std::size_t j = i + 1; j < parts.size(); ++j)
                            if (!neg[j]) {
                                ob.upper = chosen[j]->bound();
                                break;
                            }
                    }
                    b.negations.push_back(std::move(ob));
                }
                out.push_back(std::move(b));
                return;
            }
            if (neg[k]) return rec(k + 1, acc, prev_max);
            for (const auto& cand : parts[k]) {
                if (ordered && !(prev_max < cand.min_ts)) continue;
                Binding b = join(acc, cand);
                if (b.max_ts - b.min_ts > p_.window || !local_ok(b)) continue;
                chosen[k] = &cand;
                rec(k + 1, b, cand.max_ts);
            }
        };
        rec(0, empty, -std::numeric_limits<double>::infinity());
        return out;
    }

    /// Predicates over positive positions that are fully bound must already hold.
    bool local_ok(const Binding& b) const {
        for (const auto& pr : p_.predicates) {
            bool touches_negated = false;
            for (auto pos : pr.positions()) touches_negated = touches_negated || negated_.count(pos);
            if (touches_negated || !all_bound(pr, b.slots)) continue;
            if (!satisfied(pr, b.slots)) return false;
        }
        return true;
    }

    const Pattern& p_;
    std::vector<LeafInfo> leaves_;
    const EventStream& stream_;
    OracleOptions opt_;
    std::set<std::size_t> negated_;
    std::map<std::string, Events> by_type_;
    std::size_t next_leaf_ = 0;
};

inline void check_bound(const EventStream& stream, double window, std::size_t bound) {
    std::size_t lo = 0;
    for (std::size_t i = 0; i < stream.size(); ++i) {
        while (stream[i]->timestamp - stream[lo]->timestamp > window) ++lo;
        if (i - lo + 1 > bound)
            throw ResourceError("oracle_bound", bound, i - lo + 1);
    }
}

/// Copy of the stream with `pserial` = number of earlier events sharing the partition key.
inline EventStream with_partition_serials(const EventStream& stream, const SelectionStrategy& s) {
    if (s.kind != SelectionKind::partition_contiguity) return stream;
    EventStream out;
    std::map<AttrValue, std::uint64_t> seen;
    for (const auto& e : stream) {
        auto key = e->value(s.partition_key);
        if (!key) {
            out.push_back(e);
            continue;
        }
        auto copy = std::make_shared<Event>(*e);
        copy->set(kPartitionSerialAttr, static_cast<double>(seen[*key]++));
        out.push_back(std::move(copy));
    }
    return out;
}

struct Candidate {
    std::uint64_t release;
    std::vector<std::uint64_t> serials;
    bool operator<(const Candidate& o) const {
        return release != o.release ? release < o.release : serials < o.serials;
    }
};

/// Deferred matches surface with the first event past min_ts + W, or at end of stream.
inline std::uint64_t release_serial(const Binding& b, bool deferred, const EventStream& stream, double window) {
    if (!deferred) return b.serials().back();
    for (const auto& e : stream)
        if (e->timestamp > b.min_ts + window) return e->serial;
    return std::numeric_limits<std::uint64_t>::max();
}

/// Greedy consumption in (release, serials) order.
inline MatchSet select(std::vector<Candidate> cands, const SelectionStrategy& s) {
    MatchSet out;
    if (s.kind != SelectionKind::next_match) {
        for (auto& c : cands) out.insert(std::move(c.serials));
        return out;
    }
    std::sort(cands.begin(), cands.end());
    std::set<std::uint64_t> consumed;
    for (const auto& c : cands) {
        if (std::any_of(c.serials.begin(), c.serials.end(), [&](std::uint64_t x) { return consumed.count(x); }))
            continue;
        consumed.insert(c.serials.begin(), c.serials.end());
        out.insert(c.serials);
    }
    return out;
}

}  // namespace detail

/**
 * Match set of `p` over `stream`, evaluated from the operator tree. SEQ
 * orders its operands strictly by timestamp, NOT forbids a qualifying event
 * between its neighbours (window edges when a side is missing), KL binds
 * every non-empty subset within W, OR is a union.
 */
[[nodiscard]] inline MatchSet match(const Pattern& p, const EventStream& input, const OracleOptions& opt = {}) {
    require_valid(p);
    detail::check_bound(input, p.window, opt.bound);
    if (p.strategy.is_contiguity()) cep::detail::require_contiguity_shape(p);
    auto stream = detail::with_partition_serials(input, p.strategy);
    detail::Evaluator ev(p, stream, opt);
    const auto& leaves = ev.leaves();

    std::vector<std::size_t> sequence;
    for (std::size_t i = 0; i < leaves.size(); ++i)
        if (leaves[i].unary == Unary::none) sequence.push_back(i);
    auto adjacent = [&](const detail::Binding& b) {
        const auto& s = p.strategy;
        for (std::size_t k = 0; k + 1 < sequence.size(); ++k) {
            const auto& a = *b.slots[sequence[k]].front();
            const auto& c = *b.slots[sequence[k + 1]].front();
            if (s.kind == SelectionKind::strict_contiguity) {
                if (c.serial != a.serial + 1) return false;
            } else {
                auto ka = a.value(s.partition_key), kc = c.value(s.partition_key);
                auto pa = a.value(kPartitionSerialAttr), pc = c.value(kPartitionSerialAttr);
                if (!ka || !kc || *ka != *kc || !pa || !pc) return false;
                if (std::get<double>(*pc) != std::get<double>(*pa) + 1) return false;
            }
        }
        return true;
    };

    std::vector<detail::Candidate> cands;
    for (const auto& b : ev.positive_bindings()) {
        if (p.strategy.is_contiguity() && !adjacent(b)) continue;
        bool ok = true, deferred = false;
        for (const auto& ob : b.negations) {
            deferred = deferred || ob.upper.empty();
            ok = ok && ev.absent(b, ob, leaves[ob.position].type);
        }
        if (!ok) continue;
        cands.push_back({detail::release_serial(b, deferred, stream, p.window), b.serials()});
    }
    return detail::select(std::move(cands), p.strategy);
}

/**
 * Match set of a pattern whose root is AND or SEQ over leaves, with the
 * negated leaves governed by explicit checkpoints instead of their position.
 */
[[nodiscard]] inline MatchSet match_checkpointed(const Pattern& p, const std::vector<NegationCheckpoint>& checkpoints,
                                                 const EventStream& input, const OracleOptions& opt = {}) {
    detail::check_bound(input, p.window, opt.bound);
    auto stream = detail::with_partition_serials(input, p.strategy);
    detail::Evaluator ev(p, stream, opt);
    const auto& leaves = ev.leaves();
    auto pos_of = [&](const std::string& type) {
        for (std::size_t i = 0; i < leaves.size(); ++i)
            if (leaves[i].type == type) return i;
        throw ContractError("oracle: checkpoint type '" + type + "' is not a leaf of the pattern");
    };
    std::vector<std::pair<detail::Obligation, std::string>> obligations;
    bool deferred = false;
    for (const auto& cp : checkpoints) {
        detail::Obligation ob{pos_of(cp.type), {}, {}};
        for (const auto& t : cp.lower) ob.lower.push_back(pos_of(t));
        for (const auto& t : cp.upper) ob.upper.push_back(pos_of(t));
        deferred = deferred || ob.upper.empty();
        obligations.emplace_back(std::move(ob), cp.type);
    }
    std::vector<detail::Candidate> cands;
    for (const auto& b : ev.positive_bindings()) {
        bool ok = std::all_of(obligations.begin(), obligations.end(),
                              [&](const auto& o) { return ev.absent(b, o.first, o.second); });
        if (ok) cands.push_back({detail::release_serial(b, deferred, stream, p.window), b.serials()});
    }
    return detail::select(std::move(cands), p.strategy);
}

/// Union over the conjuncts of a normalized pattern, with selection applied across all of them.
[[nodiscard]] inline MatchSet match(const NormalizedPattern& np, const EventStream& input,
                                    const OracleOptions& opt = {}) {
    detail::check_bound(input, np.source.window, opt.bound);
    auto stream = detail::with_partition_serials(input, np.source.strategy);
    SelectionStrategy any;
    std::vector<detail::Candidate> cands;
    for (const auto& c : np.conjuncts) {
        Pattern conj = c.pattern;
        conj.strategy = any;
        bool deferred = std::any_of(c.annotations.negations.begin(), c.annotations.negations.end(),
                                    [](const NegationCheckpoint& n) { return n.upper.empty(); });
        // Checkpointed evaluation of one conjunct yields its any-match set; release keys need the bindings.
        for (const auto& serials : match_checkpointed(conj, c.annotations.negations, stream, opt)) {
            std::uint64_t release = serials.back();
            if (deferred) {
                double min_ts = std::numeric_limits<double>::infinity();
                for (const auto& e : stream)
                    if (std::binary_search(serials.begin(), serials.end(), e->serial))
                        min_ts = std::min(min_ts, e->timestamp);
                release = std::numeric_limits<std::uint64_t>::max();
                for (const auto& e : stream)
                    if (e->timestamp > min_ts + np.source.window) {
                        release = e->serial;
                        break;
                    }
            }
            cands.push_back({release, serials});
        }
    }
    return detail::select(std::move(cands), np.source.strategy);
}

}  // namespace oracle
}  // namespace cep
