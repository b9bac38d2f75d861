#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "cep/error.hpp"
#include "cep/magnitude.hpp"
#include "cep/pattern.hpp"
#include "cep/statistics.hpp"

namespace cep {

/// Power-set stand-in for KL(origin): one synthetic event per non-empty subset within a window.
struct SyntheticType {
    std::string name;
    std::string origin;
    double base_rate = 0.0;
    double window = 0.0;
    /// log2(rate * W); equals base_rate * W by construction.
    double log2_window_count = 0.0;

    [[nodiscard]] static SyntheticType of(std::string origin, std::string name, double base_rate, double window) {
        SyntheticType s;
        s.origin = std::move(origin);
        s.name = std::move(name);
        s.base_rate = base_rate;
        s.window = window;
        s.log2_window_count = base_rate * window;
        return s;
    }

    /// r' = 2^(rW) / W.
    [[nodiscard]] Magnitude rate() const { return Magnitude::from_log2(log2_window_count - std::log2(window)); }
    /// r' * W held exactly in log space.
    [[nodiscard]] Magnitude window_count() const { return Magnitude::from_log2(log2_window_count); }

    bool operator==(const SyntheticType&) const = default;
};

/**
 * Where the absence of a negated type is checked.
 *
 * `lower`/`upper` are the positive types whose events bound the forbidden
 * interval (max timestamp of `lower`, min timestamp of `upper`, both open).
 * An empty side means the window edge: max match ts - W, or min match ts + W,
 * both closed.
 */
struct NegationCheckpoint {
    std::string type;
    std::vector<std::string> lower;
    std::vector<std::string> upper;
    std::set<std::string> dependencies;

    bool operator==(const NegationCheckpoint&) const = default;
};

struct ConjunctAnnotations {
    std::vector<std::pair<std::string, std::string>> temporal;  // (earlier, later)
    std::vector<SyntheticType> kleene;
    std::vector<NegationCheckpoint> negations;
    std::vector<std::pair<std::string, std::string>> contiguity;  // adjacent (earlier, later)
    /// Positive type every other positive type must precede, when the temporal edges force one.
    std::string last_type;
};

/**
 * One disjunct of a normalized pattern.
 *
 * `pattern` is what the engines execute: an AND over this disjunct's leaves
 * (NOT and KL kept) with user, temporal and contiguity predicates.
 * `core` is what the planners see: positive leaves only, KL leaves renamed
 * to their synthetic types, no negated-type predicates.
 */
struct Conjunct {
    Pattern pattern;
    Pattern core;
    ConjunctAnnotations annotations;
    std::vector<std::size_t> origin_leaf;  // position in `pattern` -> leaf position in the source

    [[nodiscard]] const NegationCheckpoint* negation(const std::string& type) const {
        for (const auto& n : annotations.negations)
            if (n.type == type) return &n;
        return nullptr;
    }
    [[nodiscard]] const SyntheticType* synthetic_for(const std::string& origin) const {
        for (const auto& s : annotations.kleene)
            if (s.origin == origin) return &s;
        return nullptr;
    }
};

struct NormalizedPattern {
    Pattern source;
    std::vector<Conjunct> conjuncts;
};

namespace detail {

inline std::string synthetic_name(const std::string& origin, const std::set<std::string>& taken) {
    std::string name = origin + "_kl";
    while (taken.count(name)) name += "_";
    return name;
}

inline Predicate temporal_predicate(std::size_t before, std::size_t after) {
    Predicate p;
    p.lhs = Operand::attr(before, std::string(kTimestampAttr));
    p.cmp = Comparator::lt;
    p.rhs = Operand::attr(after, std::string(kTimestampAttr));
    p.origin = PredicateOrigin::temporal;
    return p;
}

/// Adjacent-pair serial predicates for a sequence of positions.
inline std::vector<Predicate> contiguity_predicates(const std::vector<std::size_t>& seq, const SelectionStrategy& s) {
    std::vector<Predicate> out;
    if (!s.is_contiguity()) return out;
    for (std::size_t i = 0; i + 1 < seq.size(); ++i) {
        std::size_t a = seq[i], b = seq[i + 1];
        if (s.kind == SelectionKind::strict_contiguity) {
            Predicate p;
            p.lhs = Operand::attr(b, std::string(kSerialAttr));
            p.cmp = Comparator::eq;
            p.rhs = Operand::attr(a, std::string(kSerialAttr), 1.0);
            p.origin = PredicateOrigin::contiguity;
            out.push_back(p);
        } else {
            Predicate same;
            same.lhs = Operand::attr(a, s.partition_key);
            same.cmp = Comparator::eq;
            same.rhs = Operand::attr(b, s.partition_key);
            same.origin = PredicateOrigin::contiguity;
            out.push_back(same);
            Predicate adj;
            adj.lhs = Operand::attr(b, std::string(kPartitionSerialAttr));
            adj.cmp = Comparator::eq;
            adj.rhs = Operand::attr(a, std::string(kPartitionSerialAttr), 1.0);
            adj.origin = PredicateOrigin::contiguity;
            out.push_back(adj);
        }
    }
    return out;
}

inline void require_contiguity_shape(const Pattern& p) {
    if (p.root.kind != NodeKind::seq) throw UnsupportedPatternError("contiguity strategies require a SEQ pattern");
    for (const auto& c : p.root.children)
        if (c.kind != NodeKind::leaf)
            throw UnsupportedPatternError("contiguity strategies require a SEQ over plain events");
}

/// One disjunct under construction; positions are source leaf positions.
struct Fragment {
    std::vector<std::size_t> leaves;
    std::vector<std::pair<std::size_t, std::size_t>> temporal;
    struct Neg {
        std::size_t position;
        std::vector<std::size_t> lower, upper;
    };
    std::vector<Neg> negations;

    [[nodiscard]] std::vector<std::size_t> positives(const std::vector<LeafInfo>& info) const {
        std::vector<std::size_t> out;
        for (auto l : leaves)
            if (info[l].unary != Unary::negation) out.push_back(l);
        return out;
    }
};

inline Fragment merge(const Fragment& a, const Fragment& b) {
    Fragment f = a;
    f.leaves.insert(f.leaves.end(), b.leaves.begin(), b.leaves.end());
    f.temporal.insert(f.temporal.end(), b.temporal.begin(), b.temporal.end());
    f.negations.insert(f.negations.end(), b.negations.begin(), b.negations.end());
    return f;
}

class DnfBuilder {
public:
    explicit DnfBuilder(const Pattern& p) : info_(p.leaves()) {}

    std::vector<Fragment> build(const PatternNode& root) {
        next_leaf_ = 0;
        return visit(root);
    }

private:
    std::vector<Fragment> visit(const PatternNode& n) {
        switch (n.kind) {
            case NodeKind::leaf: {
                Fragment f;
                f.leaves.push_back(next_leaf_++);
                return {f};
            }
            case NodeKind::negation:
            case NodeKind::kleene:
                return visit(n.children.at(0));
            case NodeKind::disj: {
                std::vector<Fragment> out;
                for (const auto& c : n.children) {
                    auto alts = visit(c);
                    out.insert(out.end(), alts.begin(), alts.end());
                }
                return out;
            }
            case NodeKind::conj:
            case NodeKind::seq:
                return combine(n);
        }
        return {};
    }

    std::vector<Fragment> combine(const PatternNode& n) {
        std::vector<std::vector<Fragment>> parts;
        std::vector<bool> negated;
        for (const auto& c : n.children) {
            negated.push_back(c.kind == NodeKind::negation);
            parts.push_back(visit(c));
        }
        std::vector<std::vector<std::size_t>> choice{{}};
        for (const auto& alts : parts) {
            std::vector<std::vector<std::size_t>> next;
            for (const auto& prefix : choice)
                for (std::size_t i = 0; i < alts.size(); ++i) {
                    auto c = prefix;
                    c.push_back(i);
                    next.push_back(std::move(c));
                }
            choice = std::move(next);
        }
        std::vector<Fragment> out;
        for (const auto& pick : choice) {
            Fragment f;
            std::vector<const Fragment*> chosen;
            for (std::size_t i = 0; i < parts.size(); ++i) {
                chosen.push_back(&parts[i][pick[i]]);
                f = merge(f, *chosen.back());
            }
            if (n.kind == NodeKind::seq) order_sequence(chosen, negated, f);
            else
                for (std::size_t i = 0; i < chosen.size(); ++i)
                    if (negated[i]) f.negations.push_back({chosen[i]->leaves.at(0), {}, {}});
            out.push_back(std::move(f));
        }
        return out;
    }

    void order_sequence(const std::vector<const Fragment*>& chosen, const std::vector<bool>& negated, Fragment& f) {
        std::vector<std::size_t> positive_children;
        for (std::size_t i = 0; i < chosen.size(); ++i)
            if (!negated[i]) positive_children.push_back(i);
        for (std::size_t k = 0; k + 1 < positive_children.size(); ++k) {
            auto before = chosen[positive_children[k]]->positives(info_);
            auto after = chosen[positive_children[k + 1]]->positives(info_);
            for (auto x : before)
                for (auto y : after) f.temporal.emplace_back(x, y);
        }
        for (std::size_t i = 0; i < chosen.size(); ++i) {
            if (!negated[i]) continue;
            Fragment::Neg neg{chosen[i]->leaves.at(0), {}, {}};
            for (std::size_t j = i; j-- > 0;)
                if (!negated[j]) {
                    neg.lower = chosen[j]->positives(info_);
                    break;
                }
            for (std::size_t j = i + 1; j < chosen.size(); ++j)
                if (!negated[j]) {
                    neg.upper = chosen[j]->positives(info_);
                    break;
                }
            f.negations.push_back(std::move(neg));
        }
    }

    std::vector<LeafInfo> info_;
    std::size_t next_leaf_ = 0;
};

inline PatternNode wrap_leaf(const LeafInfo& l, const std::string& type) {
    PatternNode leaf = PatternNode::leaf(type, l.alias);
    if (l.unary == Unary::negation) return PatternNode::op(NodeKind::negation, {leaf});
    if (l.unary == Unary::kleene) return PatternNode::op(NodeKind::kleene, {leaf});
    return leaf;
}

inline Predicate remap(Predicate p, const std::map<std::size_t, std::size_t>& to) {
    if (p.lhs.position) p.lhs.position = to.at(*p.lhs.position);
    if (p.rhs.position) p.rhs.position = to.at(*p.rhs.position);
    return p;
}

inline bool covered(const Predicate& p, const std::map<std::size_t, std::size_t>& to) {
    for (auto pos : p.positions())
        if (!to.count(pos)) return false;
    return true;
}

/// The positive type every other positive type reaches through temporal edges, if unique.
inline std::string forced_last(const std::vector<std::string>& positives,
                               const std::vector<std::pair<std::string, std::string>>& edges) {
    for (const auto& cand : positives) {
        std::set<std::string> reach{cand};
        bool grew = true;
        while (grew) {
            grew = false;
            for (const auto& [a, b] : edges)
                if (reach.count(b) && !reach.count(a)) {
                    reach.insert(a);
                    grew = true;
                }
        }
        if (reach.size() == positives.size()) return cand;
    }
    return {};
}

}  // namespace detail

/**
 * AND over the same leaves with e_i.ts < e_{i+1}.ts added for each adjacent
 * pair. Negated children are not supported here; split them first.
 */
[[nodiscard]] inline Pattern seq_to_and(const Pattern& p) {
    if (p.root.kind != NodeKind::seq) throw ContractError("seq_to_and: root operator is not SEQ");
    for (const auto& c : p.root.children)
        if (c.kind == NodeKind::negation)
            throw UnsupportedPatternError("seq_to_and: split negated events before converting");
    Pattern out = p;
    out.root.kind = NodeKind::conj;
    std::vector<std::size_t> order;
    std::size_t pos = 0;
    for (const auto& c : p.root.children) {
        std::size_t count = Pattern{c, {}, 1.0, {}}.leaves().size();
        if (count != 1) throw UnsupportedPatternError("seq_to_and: nested operands require to_dnf");
        order.push_back(pos++);
    }
    for (std::size_t i = 0; i + 1 < order.size(); ++i)
        out.predicates.push_back(detail::temporal_predicate(order[i], order[i + 1]));
    return out;
}

/// Same pattern plus serial-adjacency predicates; unchanged for other strategies.
[[nodiscard]] inline Pattern add_contiguity_predicates(const Pattern& p) {
    if (!p.strategy.is_contiguity()) return p;
    detail::require_contiguity_shape(p);
    Pattern out = p;
    std::vector<std::size_t> seq(p.leaves().size());
    for (std::size_t i = 0; i < seq.size(); ++i) seq[i] = i;
    for (auto& pr : detail::contiguity_predicates(seq, p.strategy)) out.predicates.push_back(std::move(pr));
    return out;
}

struct KleeneRewriteResult {
    Pattern pattern;
    StatisticsCatalog stats;
    std::vector<SyntheticType> rewrites;
};

/// Replaces each KL(T) leaf by a synthetic type with rate 2^(r_T W)/W; selectivities are copied per key.
[[nodiscard]] inline KleeneRewriteResult rewrite_kleene(const Pattern& p, const StatisticsCatalog& stats) {
    KleeneRewriteResult out{p, stats, {}};
    std::set<std::string> taken;
    for (const auto& l : p.leaves()) taken.insert(l.type);
    for (const auto& [t, r] : stats.rates()) taken.insert(t);

    std::map<std::string, std::string> renamed;
    std::function<void(PatternNode&)> walk = [&](PatternNode& n) {
        if (n.kind == NodeKind::kleene && n.children.size() == 1 && n.children[0].kind == NodeKind::leaf) {
            const std::string origin = n.children[0].type;
            std::string name = detail::synthetic_name(origin, taken);
            taken.insert(name);
            double r = stats.rate(origin).linear();
            auto syn = SyntheticType::of(origin, name, r, p.window);
            out.stats.set_rate(name, syn.rate());
            out.stats.set_window_count(name, p.window, syn.window_count());
            out.rewrites.push_back(syn);
            renamed[origin] = name;
            n = PatternNode::leaf(name, n.children[0].alias);
            return;
        }
        for (auto& c : n.children) walk(c);
    };
    walk(out.pattern.root);

    for (const auto& [key, sel] : stats.selectivities()) {
        auto a = renamed.count(key.first) ? renamed[key.first] : key.first;
        auto b = key.is_filter() ? a : (renamed.count(key.second) ? renamed[key.second] : key.second);
        if (a != key.first || b != (key.is_filter() ? key.first : key.second)) out.stats.set_selectivity(a, b, sel);
    }
    return out;
}

struct NegationSplit {
    Pattern core;
    std::vector<NegationCheckpoint> checkpoints;
};

/// Positive core (negated leaves and their predicates removed) plus one checkpoint per negated type.
[[nodiscard]] inline NegationSplit split_negation(const Pattern& p) {
    if (!p.is_simple()) throw UnsupportedPatternError("split_negation: expects a simple pattern");
    auto info = p.leaves();
    if (std::all_of(info.begin(), info.end(), [](const LeafInfo& l) { return l.unary == Unary::negation; }))
        throw UnsupportedPatternError("pattern consists only of negated events");

    NegationSplit out;
    out.core = p;
    out.core.root.children.clear();
    std::map<std::size_t, std::size_t> to_core;
    for (std::size_t i = 0; i < p.root.children.size(); ++i) {
        if (info[i].unary == Unary::negation) continue;
        to_core[i] = out.core.root.children.size();
        out.core.root.children.push_back(p.root.children[i]);
    }
    out.core.predicates.clear();
    for (const auto& pr : p.predicates)
        if (detail::covered(pr, to_core)) out.core.predicates.push_back(detail::remap(pr, to_core));

    for (std::size_t i = 0; i < info.size(); ++i) {
        if (info[i].unary != Unary::negation) continue;
        NegationCheckpoint cp;
        cp.type = info[i].type;
        if (p.root.kind == NodeKind::seq) {
            for (std::size_t j = i; j-- > 0;)
                if (info[j].unary != Unary::negation) {
                    cp.lower.push_back(info[j].type);
                    break;
                }
            for (std::size_t j = i + 1; j < info.size(); ++j)
                if (info[j].unary != Unary::negation) {
                    cp.upper.push_back(info[j].type);
                    break;
                }
        }
        cp.dependencies.insert(cp.lower.begin(), cp.lower.end());
        cp.dependencies.insert(cp.upper.begin(), cp.upper.end());
        for (const auto& pr : p.predicates) {
            if (!pr.references(i)) continue;
            for (auto pos : pr.positions())
                if (pos != i && info[pos].unary != Unary::negation) cp.dependencies.insert(info[pos].type);
        }
        out.checkpoints.push_back(std::move(cp));
    }
    return out;
}

/**
 * Splits any supported pattern into conjuncts: OR is distributed, SEQ becomes
 * AND plus temporal predicates, negations become checkpoints, KL leaves get
 * synthetic names in the plannable core, and contiguity adds serial predicates.
 */
[[nodiscard]] inline NormalizedPattern to_dnf(const Pattern& p) {
    require_valid(p);
    if (p.strategy.is_contiguity()) detail::require_contiguity_shape(p);
    auto info = p.leaves();
    NormalizedPattern out;
    out.source = p;

    std::set<std::string> taken;
    for (const auto& l : info) taken.insert(l.type);

    auto fragments = detail::DnfBuilder(p).build(p.root);
    for (auto& frag : fragments) {
        std::sort(frag.leaves.begin(), frag.leaves.end());
        auto positives = frag.positives(info);
        if (positives.empty()) throw UnsupportedPatternError("a disjunct consists only of negated events");

        Conjunct c;
        std::map<std::size_t, std::size_t> to_conj, to_core;
        std::vector<PatternNode> leaves, core_leaves;
        for (auto l : frag.leaves) {
            to_conj[l] = leaves.size();
            c.origin_leaf.push_back(l);
            leaves.push_back(detail::wrap_leaf(info[l], info[l].type));
            if (info[l].unary == Unary::negation) continue;
            to_core[l] = core_leaves.size();
            std::string type = info[l].type;
            if (info[l].unary == Unary::kleene) {
                SyntheticType syn;
                syn.origin = type;
                syn.name = detail::synthetic_name(type, taken);
                syn.window = p.window;
                taken.insert(syn.name);
                c.annotations.kleene.push_back(syn);
                type = syn.name;
            }
            core_leaves.push_back(PatternNode::leaf(type, info[l].alias));
        }

        c.pattern.root = PatternNode::op(NodeKind::conj, std::move(leaves));
        c.pattern.window = p.window;
        c.pattern.strategy = p.strategy;
        c.core.root = PatternNode::op(NodeKind::conj, std::move(core_leaves));
        c.core.window = p.window;
        c.core.strategy = p.strategy;

        std::vector<Predicate> extra;
        for (const auto& [a, b] : frag.temporal) {
            extra.push_back(detail::temporal_predicate(a, b));
            c.annotations.temporal.emplace_back(info[a].type, info[b].type);
        }
        if (p.strategy.is_contiguity()) {
            for (auto& pr : detail::contiguity_predicates(positives, p.strategy)) extra.push_back(std::move(pr));
            for (std::size_t i = 0; i + 1 < positives.size(); ++i)
                c.annotations.contiguity.emplace_back(info[positives[i]].type, info[positives[i + 1]].type);
        }
        for (const std::vector<Predicate>* list : std::array<const std::vector<Predicate>*, 2>{&p.predicates, &extra}) {
            for (const auto& pr : *list) {
                if (!detail::covered(pr, to_conj)) continue;
                c.pattern.predicates.push_back(detail::remap(pr, to_conj));
                if (detail::covered(pr, to_core)) c.core.predicates.push_back(detail::remap(pr, to_core));
            }
        }

        for (const auto& neg : frag.negations) {
            NegationCheckpoint cp;
            cp.type = info[neg.position].type;
            for (auto l : neg.lower) cp.lower.push_back(info[l].type);
            for (auto l : neg.upper) cp.upper.push_back(info[l].type);
            cp.dependencies.insert(cp.lower.begin(), cp.lower.end());
            cp.dependencies.insert(cp.upper.begin(), cp.upper.end());
            for (const auto& pr : p.predicates) {
                if (!pr.references(neg.position) || !detail::covered(pr, to_conj)) continue;
                for (auto pos : pr.positions())
                    if (pos != neg.position && info[pos].unary != Unary::negation) cp.dependencies.insert(info[pos].type);
            }
            c.annotations.negations.push_back(std::move(cp));
        }

        std::vector<std::string> pos_types;
        for (auto l : positives) pos_types.push_back(info[l].type);
        c.annotations.last_type = detail::forced_last(pos_types, c.annotations.temporal);
        out.conjuncts.push_back(std::move(c));
    }
    return out;
}

/// Full normalization pipeline; alias of to_dnf, which handles simple patterns as one conjunct.
[[nodiscard]] inline NormalizedPattern normalize(const Pattern& p) { return to_dnf(p); }

struct PlanningOptions {
    double temporal_selectivity = 0.5;
    std::map<SelectivityKey, double> temporal_overrides;
};

/**
 * Catalog over a conjunct's core types. Copies user selectivities (KL types
 * take their origin's), folds in one temporal factor per ordering predicate,
 * and one serial-adjacency factor per contiguity pair.
 */
[[nodiscard]] inline StatisticsCatalog planning_catalog(const Conjunct& c, const StatisticsCatalog& stats,
                                                        const PlanningOptions& opt = {}) {
    StatisticsCatalog out;
    std::map<std::string, std::string> core_name;
    for (const auto& l : c.pattern.leaves()) {
        if (l.unary == Unary::negation) continue;
        core_name[l.type] = l.type;
        if (l.unary == Unary::kleene) {
            const auto* syn = c.synthetic_for(l.type);
            auto s = SyntheticType::of(syn->origin, syn->name, stats.rate(l.type).linear(), c.pattern.window);
            out.set_rate(s.name, s.rate());
            out.set_window_count(s.name, c.pattern.window, s.window_count());
            core_name[l.type] = s.name;
        } else {
            out.set_rate(l.type, stats.rate(l.type));
        }
    }
    for (const auto& [a, na] : core_name) {
        for (const auto& [b, nb] : core_name) {
            if (b < a) continue;
            double s = stats.selectivity(a, b);
            if (s != 1.0) out.set_selectivity(na, nb, s);
        }
    }
    for (const auto& [a, b] : c.annotations.temporal) {
        auto key = SelectivityKey::of(a, b);
        auto it = opt.temporal_overrides.find(key);
        double s = it == opt.temporal_overrides.end() ? opt.temporal_selectivity : it->second;
        out.multiply_selectivity(SelectivityKey::of(core_name.at(a), core_name.at(b)), s);
    }
    if (!c.annotations.contiguity.empty()) {
        // P(two co-windowed events are stream neighbours) ~ 1 / (events per window).
        Magnitude per_window(0.0);
        for (const auto& [t, r] : stats.rates()) per_window += r * Magnitude(c.pattern.window);
        double s = 1.0 / std::max(1.0, per_window.linear());
        for (const auto& [a, b] : c.annotations.contiguity)
            out.multiply_selectivity(SelectivityKey::of(core_name.at(a), core_name.at(b)), s);
    }
    return out;
}

}  // namespace cep
