#pragma once

// Problem instance: hidden Markov chain, sensor models (measurement, channel,
// channel features), costs and per-slot sample budgets. Loaded from a JSON
// document and immutable afterwards.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sensched/errors.hpp"

namespace sensched {

struct GaussianSpec {
    double mean = 0.0;
    double var = 1.0;
};

struct GammaSpec {
    double shape = 1.0;
    double scale = 1.0;
};

struct FeatureSpec {
    std::string name;
    std::vector<GaussianSpec> per_state; // base variance; effective var = var / N_s
};

struct SensorSpec {
    std::string name;
    double cost = 0.0;                          // per-sample reception cost
    std::vector<GaussianSpec> measurement;      // per hidden state
    std::vector<GammaSpec> channel;             // per hidden state; empty => ideal link
    std::vector<FeatureSpec> features;

    bool has_channel() const { return !channel.empty(); }
};

struct ScenarioConfig {
    std::vector<std::string> states;
    std::vector<std::vector<double>> transition; // row-stochastic, transition[from][to]
    std::vector<SensorSpec> sensors;
    int n_tot = 1;
    int min_samples = 1;
    double sigma_ch = 0.0;
    double sigma_noise = 0.0;
    std::string name;
    std::string description;

    // Sensors allowed to receive samples; defaults to all. Used by the
    // fixed-sensor policy variants, not part of the file schema.
    std::vector<int> active_sensors;

    int n() const { return static_cast<int>(states.size()); }
    int num_sensors() const { return static_cast<int>(sensors.size()); }

    bool sensor_active(int s) const {
        if (active_sensors.empty()) return true;
        for (int a : active_sensors)
            if (a == s) return true;
        return false;
    }
};

inline std::vector<std::string> validate(const ScenarioConfig& c) {
    std::vector<std::string> out;
    const auto add = [&](const std::string& m) { out.push_back(m); };

    const int n = c.n();
    if (n < 2) add("states: need at least 2 states, got " + std::to_string(n));
    if (static_cast<int>(c.transition.size()) != n) {
        add("transition: expected " + std::to_string(n) + " rows, got " +
            std::to_string(c.transition.size()));
    } else {
        for (int i = 0; i < n; ++i) {
            const auto& row = c.transition[i];
            if (static_cast<int>(row.size()) != n) {
                add("transition: row " + std::to_string(i) + " has " +
                    std::to_string(row.size()) + " entries, expected " + std::to_string(n));
                continue;
            }
            double sum = 0.0;
            for (double v : row) {
                if (v < 0.0) add("transition: negative entry in row " + std::to_string(i));
                sum += v;
            }
            if (std::abs(sum - 1.0) > 1e-12)
                add("transition: row " + std::to_string(i) + " sums to " + std::to_string(sum));
        }
    }

    if (c.sensors.empty()) add("sensors: need at least one sensor");
    if (c.n_tot < 1) add("n_tot: must be positive, got " + std::to_string(c.n_tot));
    if (c.min_samples < 0) add("min_samples: must be >= 0");
    if (c.n_tot < c.min_samples)
        add("n_tot: must be >= min_samples (" + std::to_string(c.n_tot) + " < " +
            std::to_string(c.min_samples) + ")");
    if (c.sigma_ch < 0.0) add("sigma_ch: must be >= 0");
    if (c.sigma_noise < 0.0) add("sigma_noise: must be >= 0");

    for (std::size_t s = 0; s < c.sensors.size(); ++s) {
        const auto& sensor = c.sensors[s];
        const std::string tag = "sensors[" + sensor.name + "]";
        if (sensor.cost < 0.0) add(tag + ".cost: must be >= 0");
        if (static_cast<int>(sensor.measurement.size()) != n) {
            add(tag + ".measurement: expected " + std::to_string(n) + " per-state entries");
        } else {
            for (int i = 0; i < n; ++i)
                if (!(sensor.measurement[i].var > 0.0))
                    add(tag + ".measurement: variance must be > 0 in state " + c.states[i]);
        }
        if (sensor.has_channel()) {
            if (static_cast<int>(sensor.channel.size()) != n) {
                add(tag + ".channel: expected " + std::to_string(n) + " per-state entries");
            } else {
                for (int i = 0; i < n; ++i) {
                    if (!(sensor.channel[i].shape > 0.0))
                        add(tag + ".channel: shape must be > 0 in state " + c.states[i]);
                    if (!(sensor.channel[i].scale > 0.0))
                        add(tag + ".channel: scale must be > 0 in state " + c.states[i]);
                }
            }
        }
        for (const auto& f : sensor.features) {
            if (static_cast<int>(f.per_state.size()) != n) {
                add(tag + ".features[" + f.name + "]: expected " + std::to_string(n) +
                    " per-state entries");
            } else {
                for (int i = 0; i < n; ++i)
                    if (!(f.per_state[i].var > 0.0))
                        add(tag + ".features[" + f.name + "]: variance must be > 0 in state " +
                            c.states[i]);
            }
        }
    }
    for (int a : c.active_sensors)
        if (a < 0 || a >= c.num_sensors()) add("active_sensors: index out of range");
    return out;
}

namespace detail {

inline nlohmann::json gaussians_to_json(const std::vector<GaussianSpec>& v) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& g : v) arr.push_back({{"mean", g.mean}, {"var", g.var}});
    return arr;
}

inline std::vector<GaussianSpec> gaussians_from_json(const nlohmann::json& j) {
    std::vector<GaussianSpec> v;
    for (const auto& e : j) v.push_back({e.at("mean").get<double>(), e.at("var").get<double>()});
    return v;
}

} // namespace detail

inline nlohmann::json to_json(const ScenarioConfig& c) {
    nlohmann::json j;
    j["schema_version"] = 1;
    if (!c.name.empty()) j["name"] = c.name;
    if (!c.description.empty()) j["description"] = c.description;
    j["states"] = c.states;
    j["transition"] = c.transition;
    j["n_tot"] = c.n_tot;
    j["min_samples"] = c.min_samples;
    j["sigma_ch"] = c.sigma_ch;
    j["sigma_noise"] = c.sigma_noise;
    nlohmann::json sensors = nlohmann::json::array();
    for (const auto& s : c.sensors) {
        nlohmann::json js;
        js["name"] = s.name;
        js["cost"] = s.cost;
        js["measurement"] = detail::gaussians_to_json(s.measurement);
        if (s.has_channel()) {
            nlohmann::json ch = nlohmann::json::array();
            for (const auto& g : s.channel) ch.push_back({{"shape", g.shape}, {"scale", g.scale}});
            js["channel"] = ch;
        }
        nlohmann::json feats = nlohmann::json::array();
        for (const auto& f : s.features)
            feats.push_back({{"name", f.name}, {"per_state", detail::gaussians_to_json(f.per_state)}});
        js["features"] = feats;
        sensors.push_back(js);
    }
    j["sensors"] = sensors;
    return j;
}

inline ScenarioConfig scenario_from_json(const nlohmann::json& j) {
    try {
        ScenarioConfig c;
        if (j.contains("schema_version") && j.at("schema_version").get<int>() != 1)
            throw ParseError("unsupported schema_version");
        c.name = j.value("name", "");
        c.description = j.value("description", "");
        c.states = j.at("states").get<std::vector<std::string>>();
        c.transition = j.at("transition").get<std::vector<std::vector<double>>>();
        c.n_tot = j.at("n_tot").get<int>();
        c.min_samples = j.value("min_samples", 1);
        c.sigma_ch = j.at("sigma_ch").get<double>();
        c.sigma_noise = j.at("sigma_noise").get<double>();
        for (const auto& js : j.at("sensors")) {
            SensorSpec s;
            s.name = js.at("name").get<std::string>();
            s.cost = js.at("cost").get<double>();
            s.measurement = detail::gaussians_from_json(js.at("measurement"));
            if (js.contains("channel") && !js.at("channel").is_null()) {
                for (const auto& e : js.at("channel"))
                    s.channel.push_back({e.at("shape").get<double>(), e.at("scale").get<double>()});
            }
            if (js.contains("features")) {
                for (const auto& e : js.at("features")) {
                    FeatureSpec f;
                    f.name = e.at("name").get<std::string>();
                    f.per_state = detail::gaussians_from_json(e.at("per_state"));
                    s.features.push_back(std::move(f));
                }
            }
            c.sensors.push_back(std::move(s));
        }
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("malformed scenario document: ") + e.what());
    }
}

inline ScenarioConfig load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open scenario file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("malformed scenario document: ") + e.what());
    }
    ScenarioConfig c = scenario_from_json(j);
    const auto violations = validate(c);
    if (!violations.empty()) {
        std::ostringstream msg;
        msg << "invalid scenario " << path << ":";
        for (const auto& v : violations) msg << "\n  " << v;
        throw ValidationError(msg.str());
    }
    return c;
}

inline void save_scenario(const ScenarioConfig& c, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot write scenario file: " + path);
    out << to_json(c).dump(2) << "\n";
}

// Stationary distribution of the transition matrix (power iteration).
inline std::vector<double> stationary_distribution(const ScenarioConfig& c, double tol = 1e-14) {
    const int n = c.n();
    std::vector<double> p(n, 1.0 / n), q(n);
    for (int iter = 0; iter < 200000; ++iter) {
        for (int i = 0; i < n; ++i) {
            double acc = 0.0;
            for (int j = 0; j < n; ++j) acc += c.transition[j][i] * p[j];
            q[i] = acc;
        }
        double diff = 0.0;
        for (int i = 0; i < n; ++i) diff = std::max(diff, std::abs(q[i] - p[i]));
        p = q;
        if (diff < tol) break;
    }
    return p;
}

} // namespace sensched
