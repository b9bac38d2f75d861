#pragma once

// Shared fixtures for the test executables.

#include <cmath>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "cep/cep.hpp"

namespace cep::testing {

struct Ev {
    std::string type;
    double ts;
    std::vector<std::pair<std::string, AttrValue>> attrs = {};
};

inline EventStream make_stream(const std::vector<Ev>& evs) {
    EventStream s;
    std::uint64_t serial = 0;
    for (const auto& v : evs) {
        auto e = std::make_shared<Event>();
        e->type = v.type;
        e->timestamp = v.ts;
        e->serial = serial++;
        for (const auto& [k, x] : v.attrs) e->set(k, x);
        s.push_back(e);
    }
    return s;
}

/// Random stream over `types`: gaps drawn from {0, step, 2 step}, attribute x in {0,1,2}, key in {p,q}.
inline EventStream random_stream(std::mt19937_64& rng, const std::vector<std::string>& types, std::size_t n,
                                 double step) {
    std::vector<Ev> evs;
    double t = 0;
    for (std::size_t i = 0; i < n; ++i) {
        t += static_cast<double>(rng() % 3) * step;
        evs.push_back({types[rng() % types.size()], t,
                       {{"x", static_cast<double>(rng() % 3)}, {"key", std::string(rng() % 2 ? "p" : "q")}}});
    }
    return make_stream(evs);
}

inline StatisticsCatalog catalog(const std::vector<std::pair<std::string, double>>& rates,
                                 const std::vector<std::tuple<std::string, std::string, double>>& sels = {}) {
    StatisticsCatalog c;
    for (const auto& [t, r] : rates) c.set_rate(t, Magnitude(r));
    for (const auto& [a, b, s] : sels) c.set_selectivity(a, b, s);
    return c;
}

/// S3: W=10, rates A=1 B=2 C=4, sel(A,B)=0.5, sel(A,C)=0.1.
inline StatisticsCatalog s3() { return catalog({{"A", 1}, {"B", 2}, {"C", 4}}, {{"A", "B", 0.5}, {"A", "C", 0.1}}); }

inline std::vector<std::string> type_names(std::size_t n) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(std::string(1, static_cast<char>('A' + i)));
    return out;
}

/// Random catalog: rates in [0.1, 5], each pair gets a selectivity with probability `density`.
inline StatisticsCatalog random_catalog(std::mt19937_64& rng, const std::vector<std::string>& types,
                                        double density = 0.6, bool filters = true) {
    std::uniform_real_distribution<double> rate(0.1, 5.0), sel(0.01, 1.0), coin(0.0, 1.0);
    StatisticsCatalog c;
    for (const auto& t : types) c.set_rate(t, Magnitude(rate(rng)));
    for (std::size_t i = 0; i < types.size(); ++i)
        for (std::size_t j = i; j < types.size(); ++j) {
            if (i == j && !filters) continue;
            if (coin(rng) < (i == j ? density / 3 : density)) c.set_selectivity(types[i], types[j], sel(rng));
        }
    return c;
}

inline std::vector<Plan> trivial_plans(const NormalizedPattern& np) {
    std::vector<Plan> out;
    for (const auto& c : np.conjuncts) {
        OrderPlan o;
        o.order = c.core.positive_types();
        out.push_back(finalize_plan(Plan(o), c));
    }
    return out;
}

inline MatchSet run_engine(const NormalizedPattern& np, const std::vector<Plan>& plans, EngineKind kind,
                           const EventStream& s) {
    Engine e(np, plans, kind);
    return match_set(e.run(s));
}

}  // namespace cep::testing
