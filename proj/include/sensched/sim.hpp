#pragma once

// Seeded Monte Carlo policy evaluation: simulate the hidden chain, generate
// observations, run the filter loop, aggregate long-run metrics. Episodes are
// independent substreams, so results do not depend on execution order or
// thread count.

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "sensched/filter.hpp"
#include "sensched/parallel.hpp"
#include "sensched/policies.hpp"
#include "sensched/reward.hpp"

namespace sensched {

struct SlotRecord {
    int true_state = 0;
    Action action;
    Belief belief;           // after the slot update
    double delta = 0.0;      // estimation error of the updated belief
    double energy = 0.0;
    int map_state = 0;
    bool correct = false;
    bool degenerate = false; // likelihood vanished; prediction-only fallback used
};

struct EpisodeTrace {
    std::vector<SlotRecord> slots;
    std::uint64_t seed = 0;
    int horizon = 0;
};

struct Metrics {
    double mean_mse = 0.0;     // mean Delta
    double mean_energy = 0.0;
    double mean_cost = 0.0;    // (1-lambda)*mse + lambda*energy per slot, averaged
    double map_error = 0.0;
    std::vector<double> usage; // per-sensor share of drawn samples
    double se_mse = 0.0;
    double se_energy = 0.0;
    double se_cost = 0.0;
    double degenerate_fraction = 0.0;
    int episodes = 0;
    int horizon = 0;
    int burn_in = 0;
};

struct SimOptions {
    LikelihoodMask mask = LikelihoodMask::Full;
    ChannelDesign design = ChannelDesign::Intermediate;
    int threads = 1;
    int burn_in = -1; // negative: default to horizon/10
};

// lambda is unused here: traces record delta and energy separately and the
// weighted cost is recomposed by the aggregator.
inline EpisodeTrace run_episode(const ObservationModel& model, const PolicyRunner& policy,
                                [[maybe_unused]] double lambda, int horizon,
                                RngStream episode_rng, LikelihoodMask mask) {
    const auto& config = model.config();
    EpisodeTrace trace;
    trace.horizon = horizon;
    trace.seed = episode_rng.seed();
    trace.slots.reserve(horizon);

    const auto stationary = stationary_distribution(config);
    Belief belief{std::vector<double>(stationary)};
    int state = episode_rng.sub(role::init).categorical(stationary);

    for (int k = 0; k < horizon; ++k) {
        RngStream slot_rng = episode_rng.sub({role::slot, static_cast<std::uint64_t>(k)});
        RngStream policy_rng = slot_rng.sub(role::policy);
        const Action action = policy.act(belief, policy_rng);

        state = slot_rng.sub(role::state).categorical(config.transition[state]);
        const SlotObservation obs = sample_slot_observations(slot_rng, state, action, config);

        SlotRecord rec;
        rec.degenerate = false;
        try {
            belief = slot_update(belief, obs, model, mask);
        } catch (const DegenerateLikelihood&) {
            belief = predict(belief, config);
            rec.degenerate = true;
        }
        rec.true_state = state;
        rec.action = action;
        rec.belief = belief;
        rec.delta = estimation_error(belief);
        rec.energy = energy_cost(action, config);
        rec.map_state = map_estimate(belief);
        rec.correct = rec.map_state == state;
        trace.slots.push_back(std::move(rec));
    }
    return trace;
}

inline Metrics evaluate(const ObservationModel& model, const PolicyRunner& policy, double lambda,
                        int episodes, int horizon, std::uint64_t base_seed,
                        const SimOptions& options = {}) {
    const int burn_in = options.burn_in >= 0 ? options.burn_in : horizon / 10;
    const auto& config = model.config();
    const int S = config.num_sensors();

    struct EpisodeStats {
        double mse = 0.0, energy = 0.0, cost = 0.0, err = 0.0;
        std::vector<double> samples_per_sensor;
        long degenerate = 0;
        long slots = 0;
    };
    std::vector<EpisodeStats> stats(episodes);

    parallel_for(static_cast<std::size_t>(episodes), options.threads, [&](std::size_t e) {
        RngStream ep_rng =
            RngStream(base_seed).sub({role::episode, static_cast<std::uint64_t>(e)});
        const EpisodeTrace trace = run_episode(model, policy, lambda, horizon, ep_rng, options.mask);
        EpisodeStats st;
        st.samples_per_sensor.assign(S, 0.0);
        for (int k = burn_in; k < horizon; ++k) {
            const auto& rec = trace.slots[k];
            st.mse += rec.delta;
            st.energy += rec.energy;
            st.err += rec.correct ? 0.0 : 1.0;
            st.degenerate += rec.degenerate;
            for (int s = 0; s < S; ++s) st.samples_per_sensor[s] += rec.action.counts[s];
            ++st.slots;
        }
        if (st.slots > 0) {
            st.mse /= st.slots;
            st.energy /= st.slots;
            st.err /= st.slots;
            st.cost = (1.0 - lambda) * st.mse + lambda * st.energy;
        }
        stats[e] = std::move(st);
    });

    Metrics m;
    m.episodes = episodes;
    m.horizon = horizon;
    m.burn_in = burn_in;
    m.usage.assign(S, 0.0);
    double total_samples = 0.0;
    long total_slots = 0, total_degenerate = 0;
    for (const auto& st : stats) {
        m.mean_mse += st.mse;
        m.mean_energy += st.energy;
        m.map_error += st.err;
        total_degenerate += st.degenerate;
        total_slots += st.slots;
        for (int s = 0; s < S; ++s) {
            m.usage[s] += st.samples_per_sensor[s];
            total_samples += st.samples_per_sensor[s];
        }
    }
    m.mean_mse /= episodes;
    m.mean_energy /= episodes;
    m.map_error /= episodes;
    m.mean_cost = (1.0 - lambda) * m.mean_mse + lambda * m.mean_energy;
    if (total_samples > 0.0)
        for (double& u : m.usage) u /= total_samples;
    if (total_slots > 0) m.degenerate_fraction = static_cast<double>(total_degenerate) / total_slots;

    if (episodes > 1) {
        double var_mse = 0.0, var_energy = 0.0, var_cost = 0.0;
        for (const auto& st : stats) {
            var_mse += (st.mse - m.mean_mse) * (st.mse - m.mean_mse);
            var_energy += (st.energy - m.mean_energy) * (st.energy - m.mean_energy);
            const double c = st.cost - m.mean_cost;
            var_cost += c * c;
        }
        const double denom = static_cast<double>(episodes) * (episodes - 1);
        m.se_mse = std::sqrt(var_mse / denom);
        m.se_energy = std::sqrt(var_energy / denom);
        m.se_cost = std::sqrt(var_cost / denom);
    }
    return m;
}

// One row of a lambda sweep. `status` is "ok" or an error tag; failed cells
// keep NaN metrics and do not abort the sweep.
struct SweepRow {
    double lambda = 0.0;
    std::string mode;
    Metrics metrics;
    double reward_lb = std::numeric_limits<double>::quiet_NaN();
    double reward_ub = std::numeric_limits<double>::quiet_NaN();
    std::string status = "ok";
};

struct SweepOptions {
    SolverOptions solver;
    int episodes = 64;
    int horizon = 5000;
    int grid_resolution = 4;
    std::uint64_t seed = 1;
};

// Mode tags: "optimal" (exhaustive solve), "greedy" (stagewise all-ones
// schedule), "bbp" (alias of optimal; kept as a distinct row), "ms"/"ch"
// (masked variants), "fixed:<sensor>" (single-sensor restriction). Every mode
// is simulated by executing its bounds-based policy.
inline std::vector<SweepRow> pareto_sweep(const ScenarioConfig& config,
                                          const std::vector<double>& lambdas,
                                          const std::vector<std::string>& modes,
                                          const SweepOptions& sweep) {
    std::vector<SweepRow> rows;
    for (const auto& mode : modes) {
        for (double lambda : lambdas) {
            SweepRow row;
            row.lambda = lambda;
            row.mode = mode;
            try {
                ScenarioConfig cell_config = config;
                SolverOptions opt = sweep.solver;
                if (mode == "greedy") {
                    opt.greedy_schedule.assign(static_cast<std::size_t>(config.n_tot), 1);
                } else if (mode == "ms") {
                    opt.mask = LikelihoodMask::MeasurementsOnly;
                } else if (mode == "ch") {
                    opt.mask = LikelihoodMask::ChannelOnly;
                } else if (mode.rfind("fixed:", 0) == 0) {
                    const std::string name = mode.substr(6);
                    int idx = -1;
                    for (int s = 0; s < config.num_sensors(); ++s)
                        if (config.sensors[s].name == name) idx = s;
                    if (idx < 0) throw ValidationError("unknown sensor in mode " + mode);
                    cell_config = restrict_to_sensor(config, idx);
                } else if (mode != "optimal" && mode != "bbp") {
                    throw ValidationError("unknown sweep mode " + mode);
                }

                const BeliefGrid grid = build_grid(config.n(), sweep.grid_resolution);
                const RngStream solve_rng = RngStream(sweep.seed).sub(role::quadrature);
                const SolveResult solved =
                    value_iteration(cell_config, grid, lambda, opt, solve_rng);
                row.reward_lb = solved.lower_bound_reward;
                row.reward_ub = solved.upper_bound_reward;

                const ObservationModel model(cell_config, opt.design);
                const BbpPolicy policy(solved.policy, grid);
                SimOptions sim_opt;
                sim_opt.mask = opt.mask;
                sim_opt.design = opt.design;
                sim_opt.threads = opt.threads;
                row.metrics = evaluate(model, policy, lambda, sweep.episodes, sweep.horizon,
                                       sweep.seed, sim_opt);
            } catch (const std::exception& e) {
                row.status = std::string("failed: ") + e.what();
            }
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

} // namespace sensched
