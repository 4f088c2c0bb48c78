#pragma once

// Instantaneous cost pieces: soft estimation error of a belief, per-slot
// energy cost of an action, and their lambda-weighted combination. The
// combined quantity is treated as a cost and minimized throughout.

#include <numeric>
#include <string>
#include <vector>

#include "sensched/belief.hpp"
#include "sensched/errors.hpp"
#include "sensched/scenario.hpp"

namespace sensched {

// Per-sensor sample counts for one slot, u = [N_1, ..., N_S].
struct Action {
    std::vector<int> counts;

    Action() = default;
    explicit Action(std::vector<int> c) : counts(std::move(c)) {}

    int total() const { return std::accumulate(counts.begin(), counts.end(), 0); }
    int operator[](std::size_t s) const { return counts[s]; }

    bool operator==(const Action& o) const { return counts == o.counts; }
    bool operator<(const Action& o) const { return counts < o.counts; }

    std::string str() const {
        std::string s = "[";
        for (std::size_t i = 0; i < counts.size(); ++i) {
            if (i) s += ",";
            s += std::to_string(counts[i]);
        }
        return s + "]";
    }
};

inline bool feasible(const Action& a, const ScenarioConfig& c) {
    if (static_cast<int>(a.counts.size()) != c.num_sensors()) return false;
    int sum = 0;
    for (std::size_t s = 0; s < a.counts.size(); ++s) {
        const int v = a.counts[s];
        if (v < 0) return false;
        if (v > 0 && !c.sensor_active(static_cast<int>(s))) return false;
        sum += v;
    }
    return sum <= c.n_tot && sum >= c.min_samples;
}

// 1 - sum_i p(i)^2, the expected squared error of the belief used as a soft
// state estimate. Lies in [0, 1 - 1/n]; concave in the belief.
inline double estimation_error(const Belief& b) {
    double s = 0.0;
    for (double p : b.probs) s += p * p;
    return 1.0 - s;
}

inline double energy_cost(const Action& a, const ScenarioConfig& c) {
    if (!feasible(a, c)) throw InfeasibleAction("infeasible action " + a.str());
    double cost = 0.0;
    for (std::size_t s = 0; s < a.counts.size(); ++s) cost += c.sensors[s].cost * a.counts[s];
    return cost;
}

inline double instantaneous_reward(const Belief& b, const Action& a, double lambda,
                                   const ScenarioConfig& c) {
    return (1.0 - lambda) * estimation_error(b) + lambda * energy_cost(a, c);
}

} // namespace sensched
