#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cep/cost.hpp"
#include "cep/error.hpp"
#include "cep/pattern.hpp"
#include "cep/runtime/engine.hpp"
#include "cep/statistics.hpp"

namespace cep {

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in(line);
    while (std::getline(in, cur, ',')) {
        auto b = cur.find_first_not_of(" \t\r");
        auto e = cur.find_last_not_of(" \t\r");
        out.push_back(b == std::string::npos ? std::string() : cur.substr(b, e - b + 1));
    }
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

inline bool parse_double(const std::string& s, double& out) {
    if (s.empty()) return false;
    auto r = std::from_chars(s.data(), s.data() + s.size(), out);
    return r.ec == std::errc() && r.ptr == s.data() + s.size() && std::isfinite(out);
}

}  // namespace detail

/**
 * Reads `identifier,timestamp,price` rows. Each identifier becomes an event
 * type with attributes `price` and `difference` (price minus the previous
 * price of that identifier, 0 on its first row). Timestamps must not
 * decrease; serials are assigned from 0 in row order.
 */
[[nodiscard]] inline EventStream parse_stock_csv(std::istream& in, const std::string& name = "<input>") {
    EventStream out;
    std::string line;
    std::size_t lineno = 0;
    bool header = false;
    std::map<std::string, double> last_price;
    double last_ts = -std::numeric_limits<double>::infinity();
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        auto cols = detail::split_csv_line(line);
        if (!header) {
            if (cols != std::vector<std::string>{"identifier", "timestamp", "price"})
                throw DataError(name + ":" + std::to_string(lineno) +
                                ": header must be 'identifier,timestamp,price'");
            header = true;
            continue;
        }
        auto fail = [&](const std::string& why) { throw DataError(name + ":" + std::to_string(lineno) + ": " + why); };
        if (cols.size() != 3) fail("expected 3 columns, found " + std::to_string(cols.size()));
        if (cols[0].empty()) fail("empty identifier");
        double ts = 0, price = 0;
        if (!detail::parse_double(cols[1], ts)) fail("timestamp '" + cols[1] + "' is not a number");
        if (!detail::parse_double(cols[2], price)) fail("price '" + cols[2] + "' is not a number");
        if (ts < last_ts) fail("timestamp " + cols[1] + " is earlier than the previous row");
        last_ts = ts;
        auto e = std::make_shared<Event>();
        e->type = cols[0];
        e->timestamp = ts;
        e->serial = out.size();
        auto prev = last_price.find(cols[0]);
        e->set("price", price);
        e->set("difference", prev == last_price.end() ? 0.0 : price - prev->second);
        last_price[cols[0]] = price;
        out.push_back(std::move(e));
    }
    return out;
}

/**
 * Generic event CSV: header `type,timestamp,<attr>...`. Cells that parse as
 * numbers become numeric attributes, others text; empty cells are absent.
 */
[[nodiscard]] inline EventStream parse_event_csv(std::istream& in, const std::string& name = "<input>") {
    EventStream out;
    std::string line;
    std::size_t lineno = 0;
    std::vector<std::string> header;
    double last_ts = -std::numeric_limits<double>::infinity();
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        auto cols = detail::split_csv_line(line);
        auto fail = [&](const std::string& why) { throw DataError(name + ":" + std::to_string(lineno) + ": " + why); };
        if (header.empty()) {
            if (cols.size() < 2 || cols[0] != "type" || cols[1] != "timestamp")
                fail("header must start with 'type,timestamp'");
            header = cols;
            continue;
        }
        if (cols.size() != header.size())
            fail("expected " + std::to_string(header.size()) + " columns, found " + std::to_string(cols.size()));
        if (cols[0].empty()) fail("empty event type");
        double ts = 0;
        if (!detail::parse_double(cols[1], ts)) fail("timestamp '" + cols[1] + "' is not a number");
        if (ts < last_ts) fail("timestamp " + cols[1] + " is earlier than the previous row");
        last_ts = ts;
        auto e = std::make_shared<Event>();
        e->type = cols[0];
        e->timestamp = ts;
        e->serial = out.size();
        for (std::size_t i = 2; i < cols.size(); ++i) {
            if (cols[i].empty()) continue;
            double v = 0;
            if (detail::parse_double(cols[i], v)) e->set(header[i], v);
            else e->set(header[i], cols[i]);
        }
        out.push_back(std::move(e));
    }
    return out;
}

/// Dispatches on the header: stock rows or generic events. A file without rows is an empty stream.
[[nodiscard]] inline EventStream ingest_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open stream file '" + path + "'");
    std::string first;
    std::streampos start = in.tellg();
    while (std::getline(in, first))
        if (first.find_first_not_of(" \t\r") != std::string::npos) break;
    in.clear();
    in.seekg(start);
    if (first.rfind("identifier", 0) == 0) return parse_stock_csv(in, path);
    return parse_event_csv(in, path);
}

namespace detail {

inline std::string format_attr(const AttrValue& v) {
    if (const auto* d = std::get_if<double>(&v)) {
        std::ostringstream s;
        s.precision(17);
        s << *d;
        return s.str();
    }
    return std::get<std::string>(v);
}

}  // namespace detail

/// Writes the generic event format read by parse_event_csv.
inline void write_event_csv(std::ostream& out, const EventStream& stream) {
    std::vector<std::string> attrs;
    std::set<std::string> seen;
    for (const auto& e : stream)
        for (const auto& [k, v] : e->attributes)
            if (k != kPartitionSerialAttr && seen.insert(k).second) attrs.push_back(k);
    out << "type,timestamp";
    for (const auto& a : attrs) out << ',' << a;
    out << '\n';
    for (const auto& e : stream) {
        out << e->type << ',' << detail::format_attr(e->timestamp);
        for (const auto& a : attrs) {
            out << ',';
            if (const auto* v = e->find(a)) out << detail::format_attr(*v);
        }
        out << '\n';
    }
}

// ---------------------------------------------------------------------------
// Synthetic streams
// ---------------------------------------------------------------------------

struct AttributeSpec {
    std::string name;
    double lo = 0.0, hi = 1.0;         // numeric: uniform on [lo, hi)
    std::vector<std::string> choices;  // text: uniform choice; overrides the range
};

struct SyntheticTypeConfig {
    std::string name;
    double rate = 1.0;  // events per second
    std::vector<AttributeSpec> attributes;
};

struct SyntheticConfig {
    std::vector<SyntheticTypeConfig> types;
    double duration = 60.0;  // seconds
    std::uint64_t seed = 1;

    void check() const {
        if (!(duration > 0)) throw DataError("synthetic: duration must be positive");
        for (const auto& t : types)
            if (!(t.rate > 0)) throw DataError("synthetic: rate of '" + t.name + "' must be positive");
    }

    /// Every type gets the same numeric attributes.
    static SyntheticConfig uniform(const std::map<std::string, double>& rates, double duration, std::uint64_t seed,
                                   std::vector<AttributeSpec> attrs = {{"difference", -1.0, 1.0, {}}}) {
        SyntheticConfig c;
        c.duration = duration;
        c.seed = seed;
        for (const auto& [t, r] : rates) c.types.push_back({t, r, attrs});
        return c;
    }

    static SyntheticConfig from_json(const nlohmann::json& j) {
        SyntheticConfig c;
        try {
            c.duration = j.value("duration", 60.0);
            c.seed = j.value("seed", std::uint64_t{1});
            for (const auto& t : j.at("types")) {
                SyntheticTypeConfig tc;
                tc.name = t.at("name").get<std::string>();
                tc.rate = t.at("rate").get<double>();
                if (t.contains("attributes"))
                    for (const auto& [name, spec] : t["attributes"].items()) {
                        AttributeSpec a;
                        a.name = name;
                        if (spec.is_array() && spec.size() == 2 && spec[0].is_number()) {
                            a.lo = spec[0].get<double>();
                            a.hi = spec[1].get<double>();
                        } else if (spec.is_object() && spec.contains("choices")) {
                            a.choices = spec["choices"].get<std::vector<std::string>>();
                        } else {
                            throw DataError("synthetic: attribute '" + name + "' must be [lo, hi] or {\"choices\": [...]}");
                        }
                        tc.attributes.push_back(std::move(a));
                    }
                c.types.push_back(std::move(tc));
            }
        } catch (const nlohmann::json::exception& e) {
            throw DataError(std::string("synthetic config: ") + e.what());
        }
        c.check();
        return c;
    }
};

/// Independent Poisson arrivals per type, merged by timestamp (ties by type order). Deterministic per seed.
[[nodiscard]] inline EventStream generate_synthetic(const SyntheticConfig& cfg) {
    cfg.check();
    std::mt19937_64 rng(cfg.seed);
    struct Pending {
        double ts;
        std::size_t type;
        std::shared_ptr<Event> e;
    };
    std::vector<Pending> all;
    for (std::size_t ti = 0; ti < cfg.types.size(); ++ti) {
        const auto& t = cfg.types[ti];
        std::exponential_distribution<double> gap(t.rate);
        double ts = gap(rng);
        while (ts < cfg.duration) {
            auto e = std::make_shared<Event>();
            e->type = t.name;
            e->timestamp = ts;
            for (const auto& a : t.attributes) {
                if (!a.choices.empty()) {
                    std::uniform_int_distribution<std::size_t> pick(0, a.choices.size() - 1);
                    e->set(a.name, a.choices[pick(rng)]);
                } else {
                    std::uniform_real_distribution<double> u(a.lo, a.hi);
                    e->set(a.name, u(rng));
                }
            }
            all.push_back({ts, ti, std::move(e)});
            ts += gap(rng);
        }
    }
    std::stable_sort(all.begin(), all.end(), [](const Pending& a, const Pending& b) {
        return a.ts != b.ts ? a.ts < b.ts : a.type < b.type;
    });
    EventStream out;
    out.reserve(all.size());
    for (auto& p : all) {
        p.e->serial = out.size();
        out.push_back(std::move(p.e));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Statistics
// ---------------------------------------------------------------------------

struct EstimationOptions {
    double window = 0.0;  // 0: use each pattern's window
    std::size_t sample_cap = 100000;
    std::uint64_t seed = 1;
    /// Duration used for rates; 0 means last timestamp minus first.
    double duration = 0.0;
};

namespace detail {

/// Evaluates one predicate with `a` bound to position pa and `b` to pb (b ignored for filters).
inline bool predicate_on(const Predicate& p, std::size_t pa, const Event& a, const Event* b) {
    auto val = [&](const Operand& o) -> std::optional<AttrValue> {
        if (o.is_literal()) return o.literal;
        const Event& e = *o.position == pa ? a : *b;
        auto v = e.value(o.attribute);
        if (!v) return std::nullopt;
        if (o.offset != 0.0) {
            if (!std::holds_alternative<double>(*v)) return std::nullopt;
            return AttrValue(std::get<double>(*v) + o.offset);
        }
        return v;
    };
    auto l = val(p.lhs), r = val(p.rhs);
    if (!l || !r || l->index() != r->index()) return false;
    if (std::holds_alternative<double>(*l)) return compare_values(std::get<double>(*l), p.cmp, std::get<double>(*r));
    return compare_values(std::get<std::string>(*l), p.cmp, std::get<std::string>(*r));
}

/// Uniform sample (or all, when few enough) of cross-type pairs at most W apart.
inline std::vector<std::pair<const Event*, const Event*>> pairs_within(const std::vector<const Event*>& as,
                                                                       const std::vector<const Event*>& bs, double W,
                                                                       std::size_t cap, std::mt19937_64& rng) {
    // For each a, partners are the contiguous range of bs with |ts diff| <= W.
    std::vector<std::pair<std::size_t, std::size_t>> range(as.size());
    std::vector<std::uint64_t> prefix(as.size() + 1, 0);
    for (std::size_t i = 0; i < as.size(); ++i) {
        double t = as[i]->timestamp;
        auto lo = std::lower_bound(bs.begin(), bs.end(), t - W,
                                   [](const Event* e, double v) { return e->timestamp < v; });
        auto hi = std::upper_bound(bs.begin(), bs.end(), t + W,
                                   [](double v, const Event* e) { return v < e->timestamp; });
        range[i] = {static_cast<std::size_t>(lo - bs.begin()), static_cast<std::size_t>(hi - bs.begin())};
        prefix[i + 1] = prefix[i] + (range[i].second - range[i].first);
    }
    std::vector<std::pair<const Event*, const Event*>> out;
    std::uint64_t total = prefix.back();
    if (total <= cap) {
        for (std::size_t i = 0; i < as.size(); ++i)
            for (std::size_t j = range[i].first; j < range[i].second; ++j) out.emplace_back(as[i], bs[j]);
        return out;
    }
    std::uniform_int_distribution<std::uint64_t> pick(0, total - 1);
    for (std::size_t k = 0; k < cap; ++k) {
        std::uint64_t idx = pick(rng);
        auto i = static_cast<std::size_t>(std::upper_bound(prefix.begin(), prefix.end(), idx) - prefix.begin() - 1);
        out.emplace_back(as[i], bs[range[i].first + (idx - prefix[i])]);
    }
    return out;
}

}  // namespace detail

/**
 * Rates as count / duration for every type the patterns mention, and for
 * each user predicate the fraction of sampled pairs (events for filters)
 * that satisfy it. Pairs are drawn from events at most W apart.
 * Predicates sharing a key multiply, as independent conditions do.
 */
[[nodiscard]] inline StatisticsCatalog estimate_statistics(const EventStream& stream, const std::vector<Pattern>& patterns,
                                                           const EstimationOptions& opt = {}) {
    StatisticsCatalog out;
    std::map<std::string, std::vector<const Event*>> by_type;
    for (const auto& e : stream) by_type[e->type].push_back(e.get());
    double duration = opt.duration;
    if (duration <= 0 && !stream.empty()) duration = stream.back()->timestamp - stream.front()->timestamp;
    if (duration <= 0) duration = 1.0;

    std::set<std::string> types;
    for (const auto& p : patterns)
        for (const auto& l : p.leaves()) types.insert(l.type);
    for (const auto& t : types) {
        auto it = by_type.find(t);
        if (it == by_type.end() || it->second.empty())
            throw DataError("statistics: event type '" + t + "' has no events, so its rate cannot be estimated");
        out.set_rate(t, Magnitude(static_cast<double>(it->second.size()) / duration));
    }

    std::mt19937_64 rng(opt.seed);
    for (const auto& p : patterns) {
        auto leaves = p.leaves();
        double W = opt.window > 0 ? opt.window : p.window;
        for (const auto& pr : p.predicates) {
            if (pr.origin != PredicateOrigin::user) continue;
            auto pos = pr.positions();
            auto key = predicate_selectivity_key(pr, p);
            std::size_t hits = 0, n = 0;
            const auto& as = by_type[leaves[pos[0]].type];
            if (pos.size() == 1) {
                for (const auto* a : as) {
                    ++n;
                    hits += detail::predicate_on(pr, pos[0], *a, nullptr);
                }
            } else {
                const auto& bs = by_type[leaves[pos[1]].type];
                for (const auto& [a, b] : detail::pairs_within(as, bs, W, opt.sample_cap, rng)) {
                    ++n;
                    hits += detail::predicate_on(pr, pos[0], *a, b);
                }
            }
            double sel = n == 0 ? 1.0 : static_cast<double>(hits) / static_cast<double>(n);
            out.multiply_selectivity(key, sel);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Output profiler
// ---------------------------------------------------------------------------

/// Counts, per match, the order in which its types first occur (by timestamp, then serial).
[[nodiscard]] inline ArrivalOrderProfile profile_output(const std::vector<MatchReport>& matches, const EventStream& stream) {
    std::map<std::uint64_t, const Event*> by_serial;
    for (const auto& e : stream) by_serial[e->serial] = e.get();
    ArrivalOrderProfile prof;
    for (const auto& m : matches) {
        std::vector<const Event*> evs;
        for (auto s : m.serials) {
            auto it = by_serial.find(s);
            if (it == by_serial.end()) throw ContractError("profile: match references unknown serial " + std::to_string(s));
            evs.push_back(it->second);
        }
        std::sort(evs.begin(), evs.end(), [](const Event* a, const Event* b) {
            return a->timestamp != b->timestamp ? a->timestamp < b->timestamp : a->serial < b->serial;
        });
        std::vector<std::string> order;
        for (const auto* e : evs)
            if (std::find(order.begin(), order.end(), e->type) == order.end()) order.push_back(e->type);
        ++prof.counts[order];
        ++prof.total;
    }
    return prof;
}

}  // namespace cep
