#pragma once

// Executable policies over the whole belief space. The grid policy is only
// defined on grid points; off the grid, the bounds-based policy draws one of
// the enclosing simplex vertices with its barycentric weight and plays that
// vertex's action.

#include <cmath>
#include <memory>
#include <utility>
#include <vector>

#include "sensched/grid.hpp"
#include "sensched/reward.hpp"
#include "sensched/rng.hpp"
#include "sensched/solver.hpp"

namespace sensched {

// Exact-membership test: p is a grid point iff every R*p entry is an integer
// within 1e-12 slack.
inline bool is_grid_point(const Belief& p, const BeliefGrid& grid, std::vector<int>* coords_out = nullptr) {
    std::vector<int> c(grid.n);
    for (int i = 0; i < grid.n; ++i) {
        const double v = p[i] * grid.resolution;
        const double r = std::round(v);
        if (std::abs(v - r) > 1e-12 * grid.resolution) return false;
        c[i] = static_cast<int>(r);
    }
    if (coords_out) *coords_out = std::move(c);
    return true;
}

inline Action bbp_action(const Belief& p, const PolicyTable& table, const BeliefGrid& grid,
                         RngStream& rng) {
    std::vector<int> coords;
    if (is_grid_point(p, grid, &coords)) return table.actions[grid.index_of(coords)];
    const auto weights = barycentric_weights(p, grid);
    const double u = rng.uniform01();
    double acc = 0.0;
    for (const auto& [idx, w] : weights) {
        acc += w;
        if (u <= acc) return table.actions[idx];
    }
    return table.actions[weights.back().index];
}

// Scenario whose feasible actions draw samples from a single sensor only;
// solved per lambda like any other scenario.
inline ScenarioConfig restrict_to_sensor(const ScenarioConfig& config, int sensor) {
    if (sensor < 0 || sensor >= config.num_sensors())
        throw ValidationError("restrict_to_sensor: sensor index out of range");
    ScenarioConfig out = config;
    out.active_sensors = {sensor};
    return out;
}

// Solver/simulator inputs for the measurements-only and channel-only
// variants: the mask is applied inside every belief update on both sides.
inline SolverOptions masked_variant(SolverOptions options, LikelihoodMask mask) {
    options.mask = mask;
    return options;
}

// Runtime policy interface used by the simulator.
class PolicyRunner {
public:
    virtual ~PolicyRunner() = default;
    virtual Action act(const Belief& belief, RngStream& rng) const = 0;
};

class BbpPolicy final : public PolicyRunner {
public:
    BbpPolicy(PolicyTable table, BeliefGrid grid)
        : table_(std::move(table)), grid_(std::move(grid)) {}

    Action act(const Belief& belief, RngStream& rng) const override {
        return bbp_action(belief, table_, grid_, rng);
    }

    const PolicyTable& table() const { return table_; }
    const BeliefGrid& grid() const { return grid_; }

private:
    PolicyTable table_;
    BeliefGrid grid_;
};

// Re-runs the stagewise greedy improvement at execution time against the
// stored value table (continuation via the interpolated lower bound).
class GreedyOnlinePolicy final : public PolicyRunner {
public:
    GreedyOnlinePolicy(ValueTable table, std::shared_ptr<const ObservationModel> model,
                       SolverOptions options, RngStream quad_rng)
        : table_(std::move(table)), model_(std::move(model)), options_(std::move(options)),
          quad_rng_(quad_rng) {
        if (!options_.greedy()) {
            options_.greedy_schedule.assign(static_cast<std::size_t>(model_->config().n_tot), 1);
        }
    }

    Action act(const Belief& belief, RngStream&) const override {
        const ValueFn vf = [this](const Belief& b) {
            return lower_bound_value(b, table_, table_.lambda);
        };
        return policy_improvement(belief, vf, *model_, table_.lambda, options_, quad_rng_).action;
    }

private:
    ValueTable table_;
    std::shared_ptr<const ObservationModel> model_;
    SolverOptions options_;
    RngStream quad_rng_;
};

} // namespace sensched
