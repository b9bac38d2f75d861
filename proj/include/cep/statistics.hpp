#pragma once

#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <utility>

#include <json.hpp>

#include "cep/error.hpp"
#include "cep/magnitude.hpp"
#include "cep/pattern.hpp"

namespace cep {

/**
 * Arrival rates per event type and selectivities per unordered type pair.
 *
 * A pair or filter without an entry has selectivity 1. Rates may be held
 * in log space (synthetic Kleene types).
 */
class StatisticsCatalog {
public:
    void set_rate(const std::string& type, Magnitude rate) {
        if (!(rate > Magnitude(0.0))) throw DataError("rate of '" + type + "' must be positive");
        rates_[type] = rate;
    }

    [[nodiscard]] bool has_rate(const std::string& type) const { return rates_.count(type) != 0; }

    /// Records rate * window exactly for one window; rate() alone would round it twice.
    void set_window_count(const std::string& type, double window, Magnitude count) {
        if (!(window > 0)) throw DataError("statistics: window of '" + type + "' must be positive");
        counts_[type] = {window, count};
    }

    /// Expected arrivals of `type` within `window`.
    [[nodiscard]] Magnitude window_count(const std::string& type, double window) const {
        auto it = counts_.find(type);
        if (it != counts_.end() && it->second.first == window) return it->second.second;
        return rate(type) * Magnitude(window);
    }

    [[nodiscard]] Magnitude rate(const std::string& type) const {
        auto it = rates_.find(type);
        if (it == rates_.end()) throw DataError("statistics: missing rate for event type '" + type + "'");
        return it->second;
    }

    void set_selectivity(const SelectivityKey& key, double sel) {
        if (!(sel >= 0.0 && sel <= 1.0))
            throw DataError("statistics: selectivity of '" + key.str() + "' outside [0,1]");
        sels_[key] = sel;
    }
    void set_selectivity(const std::string& a, const std::string& b, double sel) {
        set_selectivity(SelectivityKey::of(a, b), sel);
    }

    /// Folds another independent predicate on the same key into the stored product.
    void multiply_selectivity(const SelectivityKey& key, double sel) {
        set_selectivity(key, selectivity(key) * sel);
    }

    [[nodiscard]] double selectivity(const SelectivityKey& key) const {
        auto it = sels_.find(key);
        return it == sels_.end() ? 1.0 : it->second;
    }
    [[nodiscard]] double selectivity(const std::string& a, const std::string& b) const {
        return selectivity(SelectivityKey::of(a, b));
    }

    [[nodiscard]] const std::map<std::string, Magnitude>& rates() const { return rates_; }
    [[nodiscard]] const std::map<SelectivityKey, double>& selectivities() const { return sels_; }

    bool operator==(const StatisticsCatalog&) const = default;

    [[nodiscard]] nlohmann::json to_json() const {
        nlohmann::json j;
        j["rates"] = nlohmann::json::object();
        for (const auto& [t, r] : rates_) {
            if (r.is_log())
                j["rates"][t] = {{"log2", r.log2()}};
            else
                j["rates"][t] = r.linear();
        }
        j["selectivities"] = nlohmann::json::object();
        for (const auto& [k, s] : sels_) j["selectivities"][k.str()] = s;
        if (!counts_.empty()) {
            j["window_counts"] = nlohmann::json::object();
            for (const auto& [t, wc] : counts_)
                j["window_counts"][t] = {{"window", wc.first}, {"log2", wc.second.log2()}};
        }
        return j;
    }

    static StatisticsCatalog from_json(const nlohmann::json& j) {
        StatisticsCatalog c;
        if (!j.is_object()) throw DataError("statistics: top level must be an object");
        if (j.contains("rates")) {
            if (!j["rates"].is_object()) throw DataError("statistics: 'rates' must be an object");
            for (const auto& [t, v] : j["rates"].items()) {
                if (v.is_number())
                    c.set_rate(t, Magnitude(v.get<double>()));
                else if (v.is_object() && v.contains("log2") && v["log2"].is_number())
                    c.set_rate(t, Magnitude::from_log2(v["log2"].get<double>()));
                else
                    throw DataError("statistics: rate of '" + t + "' is not a number");
            }
        }
        if (j.contains("selectivities")) {
            if (!j["selectivities"].is_object()) throw DataError("statistics: 'selectivities' must be an object");
            for (const auto& [k, v] : j["selectivities"].items()) {
                if (!v.is_number()) throw DataError("statistics: selectivity '" + k + "' is not a number");
                auto comma = k.find(',');
                if (comma == std::string::npos)
                    c.set_selectivity(k, k, v.get<double>());
                else
                    c.set_selectivity(k.substr(0, comma), k.substr(comma + 1), v.get<double>());
            }
        }
        if (j.contains("window_counts")) {
            if (!j["window_counts"].is_object()) throw DataError("statistics: 'window_counts' must be an object");
            for (const auto& [t, v] : j["window_counts"].items()) {
                if (!v.is_object() || !v.contains("window") || !v.contains("log2") || !v["window"].is_number() ||
                    !v["log2"].is_number())
                    throw DataError("statistics: window count of '" + t + "' needs numeric 'window' and 'log2'");
                c.set_window_count(t, v["window"].get<double>(), Magnitude::from_log2(v["log2"].get<double>()));
            }
        }
        return c;
    }

    static StatisticsCatalog load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw DataError("cannot open statistics file '" + path + "'");
        try {
            return from_json(nlohmann::json::parse(in));
        } catch (const nlohmann::json::exception& e) {
            throw DataError("statistics file '" + path + "': " + e.what());
        }
    }

    void save(const std::string& path) const {
        std::ofstream out(path);
        if (!out) throw DataError("cannot write statistics file '" + path + "'");
        out << to_json().dump(2) << "\n";
    }

private:
    std::map<std::string, Magnitude> rates_;
    std::map<SelectivityKey, double> sels_;
    std::map<std::string, std::pair<double, Magnitude>> counts_;
};

/// Catalog selectivities for a pattern: product over its predicates of `sel` per key.
/// Used when a caller knows per-predicate selectivities and wants the pairwise product.
inline void add_pattern_selectivity(StatisticsCatalog& stats, const Pattern& p, const Predicate& pred, double sel) {
    stats.multiply_selectivity(predicate_selectivity_key(pred, p), sel);
}

}  // namespace cep
