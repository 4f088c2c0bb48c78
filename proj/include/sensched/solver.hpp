#pragma once

// Value iteration over the belief grid. Off-grid continuation values are
// approximated from the grid in two ways: a piecewise-linear interpolation of
// J - (1-lambda)*Delta (a lower bound, since that function is concave) and a
// tangent-hyperplane envelope of the same function (an upper bound). Running
// the iteration with each approximation brackets the long-run cost.
//
// Expectations over next observations use Monte Carlo with common random
// numbers: draws are content-addressed by (sample, sensor, sample-index,
// role), so every candidate action and every start belief sees the same
// underlying noise, and the sampled kernel is frozen across sweeps. That
// turns each solve into relative value iteration on a finite empirical MDP,
// which converges cleanly and is reproducible for any thread count.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sensched/filter.hpp"
#include "sensched/grid.hpp"
#include "sensched/parallel.hpp"
#include "sensched/quadrature.hpp"
#include "sensched/reward.hpp"

namespace sensched {

enum class SolveMode { AverageCost, Discounted };
enum class QuadratureKind { MonteCarlo, SigmaPoint };

struct SolverOptions {
    SolveMode mode = SolveMode::AverageCost;
    double discount = 0.95;                 // used in Discounted mode
    QuadratureKind quadrature = QuadratureKind::MonteCarlo;
    int mc_samples = 256;
    int sigma_nodes = 5;                    // nodes per axis for SigmaPoint
    double tolerance = 1e-5;
    int max_iterations = 600;
    std::vector<int> greedy_schedule;       // empty => exhaustive improvement
    ChannelDesign design = ChannelDesign::Intermediate;
    LikelihoodMask mask = LikelihoodMask::Full;
    int threads = 1;
    bool compute_upper = true;

    bool greedy() const { return !greedy_schedule.empty(); }

    void check(const ScenarioConfig& config) const {
        if (mode == SolveMode::Discounted && !(discount > 0.0 && discount < 1.0))
            throw ValidationError("solver: discount must lie in (0,1)");
        if (greedy()) {
            int sum = 0;
            for (int v : greedy_schedule) {
                if (v < 1) throw ValidationError("solver: greedy schedule entries must be >= 1");
                sum += v;
            }
            if (sum != config.n_tot)
                throw ValidationError("solver: greedy schedule must sum to n_tot");
        }
        if (mc_samples < 1) throw ValidationError("solver: mc_samples must be >= 1");
    }
};

struct Tangent {
    std::vector<double> slope;
    double intercept = 0.0;
};

struct ValueTable {
    BeliefGrid grid;
    double lambda = 0.0;
    SolveMode mode = SolveMode::AverageCost;
    double discount = 0.95;
    std::vector<double> values;   // J at grid points (relative values in avg mode)
    double gain = 0.0;            // long-run cost estimate (avg mode)
    std::vector<Tangent> tangents;
    int iterations = 0;
    double span = 0.0;
};

struct PolicyTable {
    std::vector<Action> actions;
    std::vector<double> k_values;
};

struct SolveResult {
    ValueTable table;
    PolicyTable policy;
    double lower_bound_reward = 0.0;
    double upper_bound_reward = std::numeric_limits<double>::quiet_NaN();
    std::vector<double> upper_values;  // grid values of the tangent-envelope VI
    long degenerate_samples = 0;
};

// All feasible actions (min_samples <= sum <= n_tot, inactive sensors forced
// to zero) in lexicographic order on the count vectors.
inline std::vector<Action> enumerate_actions(const ScenarioConfig& config) {
    std::vector<Action> out;
    std::vector<int> counts(config.num_sensors(), 0);
    const auto rec = [&](auto&& self, int s, int used) -> void {
        if (s == config.num_sensors()) {
            if (used >= config.min_samples) out.emplace_back(counts);
            return;
        }
        const int cap = config.sensor_active(s) ? config.n_tot - used : 0;
        for (int v = 0; v <= cap; ++v) {
            counts[s] = v;
            self(self, s + 1, used + v);
        }
        counts[s] = 0;
    };
    rec(rec, 0, 0);
    return out;
}

namespace detail {

// Count vectors with total in [0, n_tot]; superset of the feasible actions
// that the greedy stages walk through.
inline std::vector<Action> enumerate_partial_actions(const ScenarioConfig& config) {
    ScenarioConfig relaxed = config;
    relaxed.min_samples = 0;
    return enumerate_actions(relaxed);
}

// Extensions of `base` adding between 0 and `budget` samples across active
// sensors, capped by n_tot; lexicographic on the resulting count vectors.
inline std::vector<Action> enumerate_extensions(const Action& base, int budget,
                                                const ScenarioConfig& config) {
    std::vector<Action> out;
    std::vector<int> add(config.num_sensors(), 0);
    const int room = config.n_tot - base.total();
    const auto rec = [&](auto&& self, int s, int used) -> void {
        if (s == config.num_sensors()) {
            Action a = base;
            for (std::size_t i = 0; i < add.size(); ++i) a.counts[i] += add[i];
            out.push_back(std::move(a));
            return;
        }
        const int cap = config.sensor_active(s) ? std::min(budget, room) - used : 0;
        for (int v = 0; v <= cap; ++v) {
            add[s] = v;
            self(self, s + 1, used + v);
        }
        add[s] = 0;
    };
    rec(rec, 0, 0);
    std::sort(out.begin(), out.end());
    return out;
}

} // namespace detail

struct QuadratureStats {
    double mean = 0.0;
    double se = 0.0;
    int degenerate = 0;
    std::vector<double> samples; // filled only when keep_samples was set
};

using ValueFn = std::function<double(const Belief&)>;

namespace detail {

template <typename PostFn>
void monte_carlo_posteriors(const Belief& belief, const Action& action,
                            const ObservationModel& model, LikelihoodMask mask, int samples,
                            RngStream quad_rng, PostFn&& on_posterior) {
    const Belief pred = predict(belief, model.config());
    for (int m = 0; m < samples; ++m) {
        RngStream ms = quad_rng.sub({role::quadrature, static_cast<std::uint64_t>(m)});
        const int x = ms.sub(role::state).categorical(pred.probs);
        const SlotObservation obs = sample_slot_unchecked(ms, x, action, model.config());
        bool degenerate = false;
        Belief post;
        try {
            post = slot_update(belief, obs, model, mask);
        } catch (const DegenerateLikelihood&) {
            post = pred;
            degenerate = true;
        }
        on_posterior(post, degenerate);
    }
}

// Deterministic tensor quadrature. Conditions on the hidden state, then walks
// a tensor product of per-sample axes: channel-estimate nodes (Gauss-Legendre
// against the tabulated density, weights normalized), received-signal and
// feature nodes (Gauss-Hermite). The sequential filter keeps every axis
// one-dimensional.
template <typename PostFn>
void sigma_point_posteriors(const Belief& belief, const Action& action,
                            const ObservationModel& model, LikelihoodMask mask, int nodes_per_axis,
                            PostFn&& on_posterior) {
    const auto& config = model.config();
    const Belief pred = predict(belief, config);
    const auto hermite = gauss_hermite(nodes_per_axis);
    constexpr double inv_sqrt_pi = 0.5641895835477563;

    for (int i = 0; i < config.n(); ++i) {
        if (pred[i] == 0.0) continue;
        SlotObservation obs;
        obs.action = action;
        obs.sensors.resize(config.sensors.size());
        for (std::size_t s = 0; s < config.sensors.size(); ++s) {
            obs.sensors[s].samples.resize(static_cast<std::size_t>(action.counts[s]), {0.0, 1.0});
            if (action.counts[s] > 0)
                obs.sensors[s].features.resize(config.sensors[s].features.size(), 0.0);
        }

        // Flatten the axes: (sensor, sample, kind) triples in canonical order.
        struct Axis {
            int sensor, index;
            enum Kind { Chan, Meas, Feat } kind;
        };
        std::vector<Axis> axes;
        for (int s = 0; s < config.num_sensors(); ++s)
            for (int u = 0; u < action.counts[s]; ++u) {
                if (config.sensors[s].has_channel()) axes.push_back({s, u, Axis::Chan});
                axes.push_back({s, u, Axis::Meas});
            }
        for (int s = 0; s < config.num_sensors(); ++s)
            if (action.counts[s] > 0)
                for (std::size_t f = 0; f < config.sensors[s].features.size(); ++f)
                    axes.push_back({s, static_cast<int>(f), Axis::Feat});

        const auto rec = [&](auto&& self, std::size_t d, double weight) -> void {
            if (d == axes.size()) {
                Belief post;
                bool degenerate = false;
                try {
                    post = slot_update(belief, obs, model, mask);
                } catch (const DegenerateLikelihood&) {
                    post = pred;
                    degenerate = true;
                }
                on_posterior(post, degenerate, pred[i] * weight);
                return;
            }
            const Axis& ax = axes[d];
            auto& rec_s = obs.sensors[ax.sensor];
            if (ax.kind == Axis::Chan) {
                const auto& table = model.channel_table(ax.sensor, i);
                auto gl = gauss_legendre(nodes_per_axis, table.lo(), table.hi());
                double total = 0.0;
                for (auto& nd : gl) {
                    nd.w *= table.pdf(nd.x);
                    total += nd.w;
                }
                for (const auto& nd : gl) {
                    if (nd.w <= 0.0) continue;
                    rec_s.samples[ax.index].second = nd.x;
                    self(self, d + 1, weight * nd.w / total);
                }
            } else if (ax.kind == Axis::Meas) {
                const auto& g = config.sensors[ax.sensor].measurement[i];
                double mean, var;
                if (config.sensors[ax.sensor].has_channel()) {
                    const double h_hat = rec_s.samples[ax.index].second;
                    mean = h_hat * g.mean;
                    var = received_variance(h_hat, g.mean, g.var, model.design(), config.sigma_ch,
                                            config.sigma_noise);
                } else {
                    mean = g.mean;
                    var = g.var;
                }
                const double sd = std::sqrt(2.0 * var);
                for (const auto& nd : hermite) {
                    rec_s.samples[ax.index].first = mean + sd * nd.x;
                    self(self, d + 1, weight * nd.w * inv_sqrt_pi);
                }
            } else {
                const auto& g = config.sensors[ax.sensor].features[ax.index].per_state[i];
                const double sd = std::sqrt(2.0 * g.var / action.counts[ax.sensor]);
                for (const auto& nd : hermite) {
                    rec_s.features[ax.index] = g.mean + sd * nd.x;
                    self(self, d + 1, weight * nd.w * inv_sqrt_pi);
                }
            }
        };
        rec(rec, 0, 1.0);
    }
}

} // namespace detail

// E[value_fn(p')] where p' is the posterior after acting and observing.
// Monte Carlo reuses identical substreams for every candidate action at a
// given improvement step (common random numbers).
inline double expected_future_value(const Belief& belief, const Action& action,
                                    const ValueFn& value_fn, const ObservationModel& model,
                                    const SolverOptions& options, RngStream quad_rng,
                                    QuadratureStats* stats = nullptr, bool keep_samples = false) {
    double sum = 0.0, sumsq = 0.0;
    int count = 0, degenerate = 0;
    if (options.quadrature == QuadratureKind::MonteCarlo) {
        detail::monte_carlo_posteriors(belief, action, model, options.mask, options.mc_samples,
                                       quad_rng, [&](const Belief& post, bool degen) {
                                           const double v = value_fn(post);
                                           sum += v;
                                           sumsq += v * v;
                                           ++count;
                                           degenerate += degen;
                                           if (stats && keep_samples) stats->samples.push_back(v);
                                       });
        const double mean = sum / count;
        if (stats) {
            stats->mean = mean;
            const double var = std::max(0.0, sumsq / count - mean * mean);
            stats->se = std::sqrt(var / count);
            stats->degenerate = degenerate;
        }
        return mean;
    }
    double wsum = 0.0;
    detail::sigma_point_posteriors(belief, action, model, options.mask, options.sigma_nodes,
                                   [&](const Belief& post, bool degen, double w) {
                                       sum += w * value_fn(post);
                                       wsum += w;
                                       degenerate += degen;
                                   });
    const double mean = sum / wsum;
    if (stats) {
        stats->mean = mean;
        stats->se = 0.0;
        stats->degenerate = degenerate;
    }
    return mean;
}

// Interpolated lower bound of the cost-to-go at an off-grid belief:
// (1-lambda)*Delta(p) + sum_i alpha_i (J(b_i) - (1-lambda)*Delta(b_i)).
inline double lower_bound_value(const Belief& p, const ValueTable& table, double lambda) {
    double acc = (1.0 - lambda) * estimation_error(p);
    for (const auto& [idx, w] : barycentric_weights(p, table.grid)) {
        acc += w * (table.values[idx] -
                    (1.0 - lambda) * estimation_error(table.grid.points[idx]));
    }
    return acc;
}

namespace detail {

// Supergradient estimates of grid values by finite differences along
// in-simplex directions e_j - e_pivot (full grid-spacing stencils; central
// where both neighbours exist, one-sided three-point toward the interior at
// the boundary). Intercepts are raised, if needed, until the tangent
// dominates every grid value, which keeps the envelope above the
// piecewise-linear interpolant by construction. The raise is zero whenever
// the values are concave on the grid.
inline std::vector<Tangent> tangents_from_grid_values(const BeliefGrid& grid,
                                                      const std::vector<double>& g_values) {
    const int n = grid.n;
    const int R = grid.resolution;
    const std::size_t count = grid.size();
    std::vector<Tangent> tangents(count);

    std::vector<int> c(n);
    const auto value_at = [&](const std::vector<int>& coord) {
        return g_values[grid.index_of(coord)];
    };

    for (std::size_t idx = 0; idx < count; ++idx) {
        c = grid.coords[idx];
        int pivot = 0;
        for (int j = 1; j < n; ++j)
            if (c[j] > c[pivot]) pivot = j;

        std::vector<double> slope(n, 0.0);
        const double g0 = g_values[idx];
        for (int j = 0; j < n; ++j) {
            if (j == pivot) continue;
            std::vector<int> plus = c, minus = c;
            plus[j] += 1;
            plus[pivot] -= 1;
            minus[j] -= 1;
            minus[pivot] += 1;
            double s;
            if (c[j] >= 1) {
                s = 0.5 * R * (value_at(plus) - value_at(minus));
            } else if (c[pivot] >= 2) {
                std::vector<int> plus2 = plus;
                plus2[j] += 1;
                plus2[pivot] -= 1;
                s = 0.5 * R * (-3.0 * g0 + 4.0 * value_at(plus) - value_at(plus2));
            } else {
                s = R * (value_at(plus) - g0);
            }
            slope[j] = s;
        }

        // Raise the intercept so the tangent dominates all grid values.
        const Belief& b0 = grid.points[idx];
        double raise = 0.0;
        for (std::size_t k = 0; k < count; ++k) {
            double lin = g0;
            for (int j = 0; j < n; ++j) lin += slope[j] * (grid.points[k][j] - b0[j]);
            raise = std::max(raise, g_values[k] - lin);
        }
        tangents[idx] = {std::move(slope), g0 + raise};
    }
    return tangents;
}

} // namespace detail

// Tangent data of G = J - (1-lambda)*Delta at every grid point, stored in the
// table for upper_bound_value.
inline ValueTable compute_tangents(ValueTable table, double lambda) {
    std::vector<double> g(table.grid.size());
    for (std::size_t i = 0; i < g.size(); ++i)
        g[i] = table.values[i] - (1.0 - lambda) * estimation_error(table.grid.points[i]);
    table.tangents = detail::tangents_from_grid_values(table.grid, g);
    return table;
}

// Tangent-envelope upper bound at an off-grid belief.
inline double upper_bound_value(const Belief& p, const ValueTable& table, double lambda) {
    if (table.tangents.empty())
        throw MissingTangents("upper_bound_value: call compute_tangents first");
    const int n = table.grid.n;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < table.tangents.size(); ++i) {
        const auto& t = table.tangents[i];
        double v = t.intercept;
        const Belief& b = table.grid.points[i];
        for (int j = 0; j < n; ++j) v += t.slope[j] * (p[j] - b[j]);
        best = std::min(best, v);
    }
    return (1.0 - lambda) * estimation_error(p) + best;
}

struct ImprovementResult {
    Action action;
    double k_value = 0.0;
};

namespace detail {

struct CandidateEval {
    std::function<double(const Action&)> k_of; // full K (reward + continuation)
};

// Greedy stagewise allocation: at each stage extend the committed counts by
// up to the stage budget, committing the K-best extension (the empty
// extension acts as the stopping rule once the committed action is feasible).
inline ImprovementResult greedy_minimize(const ScenarioConfig& config,
                                         const std::vector<int>& schedule,
                                         const std::function<double(const Action&)>& k_of) {
    Action committed(std::vector<int>(config.num_sensors(), 0));
    double committed_k = std::numeric_limits<double>::infinity();
    for (std::size_t stage = 0; stage < schedule.size(); ++stage) {
        const bool last = stage + 1 == schedule.size();
        bool found = false;
        Action best;
        double best_k = std::numeric_limits<double>::infinity();
        for (const auto& cand : enumerate_extensions(committed, schedule[stage], config)) {
            if (cand.total() < config.min_samples) {
                // Not yet feasible: may only pass through, never terminate here.
                if (last) continue;
                if (cand.total() == committed.total() && committed.total() < config.min_samples)
                    continue; // force growth until feasible
            }
            const double k = k_of(cand);
            if (!found || k < best_k) { // first hit wins ties (lex order)
                found = true;
                best = cand;
                best_k = k;
            }
        }
        if (!found) throw InfeasibleAction("greedy improvement: no feasible candidate");
        committed = best;
        committed_k = best_k;
    }
    if (committed.total() < config.min_samples)
        throw InfeasibleAction("greedy improvement: schedule cannot reach min_samples");
    return {committed, committed_k};
}

inline ImprovementResult exhaustive_minimize(const std::vector<Action>& actions,
                                             const std::function<double(const Action&)>& k_of) {
    ImprovementResult best;
    double best_k = std::numeric_limits<double>::infinity();
    bool found = false;
    for (const auto& a : actions) {
        const double k = k_of(a);
        if (!found || k < best_k) {
            found = true;
            best = {a, k};
            best_k = k;
        }
    }
    if (!found) throw InfeasibleAction("policy improvement: empty action set");
    return best;
}

} // namespace detail

// One policy-improvement step at a single belief: minimize
// (1-lambda)*Delta(p) + lambda*c(u) + beta*E[value_fn(p')] over feasible
// actions (all of them, or the greedy stage walk). Ties resolve to the
// lexicographically smallest action.
inline ImprovementResult policy_improvement(const Belief& p, const ValueFn& value_fn,
                                            const ObservationModel& model, double lambda,
                                            const SolverOptions& options, RngStream quad_rng) {
    const auto& config = model.config();
    const double beta = options.mode == SolveMode::Discounted ? options.discount : 1.0;
    const double base = (1.0 - lambda) * estimation_error(p);
    const auto k_of = [&](const Action& a) {
        double cost = 0.0;
        for (std::size_t s = 0; s < a.counts.size(); ++s)
            cost += config.sensors[s].cost * a.counts[s];
        return base + lambda * cost +
               beta * expected_future_value(p, a, value_fn, model, options, quad_rng);
    };
    if (options.greedy())
        return detail::greedy_minimize(config, options.greedy_schedule, k_of);
    return detail::exhaustive_minimize(enumerate_actions(config), k_of);
}

namespace detail {

// Frozen sampled kernel for one (grid point, action) cell: averaged
// barycentric weights of the sampled posteriors plus the Delta corrections,
// so one lb Bellman application is an O(|B|) dot product. Posterior beliefs
// are kept for the tangent-envelope (upper bound) iteration.
struct KernelCell {
    std::vector<double> w;            // averaged barycentric weights over grid
    double dbar = 0.0;                // mean of Delta(p') - sum alpha Delta(b)
    std::vector<Belief> posteriors;
    std::vector<double> post_delta;
    int degenerate = 0;
};

struct Kernel {
    std::vector<Action> actions;              // partial-action universe (lex)
    std::map<std::vector<int>, std::size_t> action_index;
    std::vector<std::vector<KernelCell>> cells; // [grid point][action]
    long degenerate_total = 0;
};

inline Kernel build_kernel(const ScenarioConfig& config, const ObservationModel& model,
                           const BeliefGrid& grid, const SolverOptions& options,
                           RngStream solve_rng, bool keep_posteriors) {
    Kernel k;
    k.actions = options.greedy() ? enumerate_partial_actions(config) : enumerate_actions(config);
    for (std::size_t a = 0; a < k.actions.size(); ++a)
        k.action_index[k.actions[a].counts] = a;
    k.cells.assign(grid.size(), {});
    const RngStream quad_rng = solve_rng.sub(role::quadrature);
    const int M = options.mc_samples;
    std::vector<long> degenerate(grid.size(), 0);

    parallel_for(grid.size(), options.threads, [&](std::size_t psi) {
        auto& row = k.cells[psi];
        row.resize(k.actions.size());
        const Belief& point = grid.points[psi];
        const std::vector<double> grid_delta = [&] {
            std::vector<double> d(grid.size());
            for (std::size_t i = 0; i < grid.size(); ++i)
                d[i] = estimation_error(grid.points[i]);
            return d;
        }();
        for (std::size_t a = 0; a < k.actions.size(); ++a) {
            KernelCell& cell = row[a];
            cell.w.assign(grid.size(), 0.0);
            if (keep_posteriors) {
                cell.posteriors.reserve(M);
                cell.post_delta.reserve(M);
            }
            const auto on_post = [&](const Belief& post, bool degen) {
                const double delta = estimation_error(post);
                double interp_delta = 0.0;
                for (const auto& [idx, wt] : barycentric_weights(post, grid)) {
                    cell.w[idx] += wt;
                    interp_delta += wt * grid_delta[idx];
                }
                cell.dbar += delta - interp_delta;
                cell.degenerate += degen;
                if (keep_posteriors) {
                    cell.posteriors.push_back(post);
                    cell.post_delta.push_back(delta);
                }
            };
            monte_carlo_posteriors(point, k.actions[a], model, options.mask, M, quad_rng, on_post);
            for (double& w : cell.w) w /= M;
            cell.dbar /= M;
            degenerate[psi] += cell.degenerate;
        }
    });
    for (long d : degenerate) k.degenerate_total += d;
    return k;
}

// One Bellman application over the grid given per-cell continuation values.
// `continuation(psi, a)` must return E[approx J(p')] for that cell.
template <typename ContFn>
void bellman_sweep(const ScenarioConfig& config, const Kernel& kernel, const BeliefGrid& grid,
                   double lambda, const SolverOptions& options, const ContFn& continuation,
                   std::vector<double>& out_values, std::vector<Action>* out_actions,
                   std::vector<double>* out_k) {
    const double beta = options.mode == SolveMode::Discounted ? options.discount : 1.0;
    parallel_for(grid.size(), options.threads, [&](std::size_t psi) {
        const double base = (1.0 - lambda) * estimation_error(grid.points[psi]);
        const auto k_of = [&](const Action& a) {
            const auto it = kernel.action_index.find(a.counts);
            double cost = 0.0;
            for (std::size_t s = 0; s < a.counts.size(); ++s)
                cost += config.sensors[s].cost * a.counts[s];
            return base + lambda * cost + beta * continuation(psi, it->second);
        };
        ImprovementResult best;
        if (options.greedy()) {
            best = greedy_minimize(config, options.greedy_schedule, k_of);
        } else {
            // Feasible actions are a prefix-filtered subset of the kernel
            // universe; evaluate them in lex order.
            ImprovementResult r;
            double best_k = std::numeric_limits<double>::infinity();
            bool found = false;
            for (std::size_t a = 0; a < kernel.actions.size(); ++a) {
                if (kernel.actions[a].total() < config.min_samples) continue;
                const double k = k_of(kernel.actions[a]);
                if (!found || k < best_k) {
                    found = true;
                    best_k = k;
                    r = {kernel.actions[a], k};
                }
            }
            best = r;
        }
        out_values[psi] = best.k_value;
        if (out_actions) (*out_actions)[psi] = best.action;
        if (out_k) (*out_k)[psi] = best.k_value;
    });
}

struct IterationOutcome {
    std::vector<double> values;
    double gain = 0.0;
    int iterations = 0;
    double span = 0.0;
    std::vector<Action> actions;
    std::vector<double> k_values;
};

// Relative value iteration (average cost) or plain VI (discounted) to
// convergence, with the continuation functional supplied by the caller.
template <typename MakeCont>
IterationOutcome iterate_values(const ScenarioConfig& config, const Kernel& kernel,
                                const BeliefGrid& grid, double lambda,
                                const SolverOptions& options, const MakeCont& make_continuation,
                                const std::vector<double>& stationary) {
    IterationOutcome out;
    std::vector<double> J(grid.size(), 0.0), U(grid.size(), 0.0);
    double gain_lo = 0.0, gain_hi = 0.0;
    int iter = 0;
    double span = std::numeric_limits<double>::infinity();
    for (iter = 1; iter <= options.max_iterations; ++iter) {
        const auto continuation = make_continuation(J);
        bellman_sweep(config, kernel, grid, lambda, options, continuation, U, nullptr, nullptr);
        if (options.mode == SolveMode::AverageCost) {
            gain_lo = std::numeric_limits<double>::infinity();
            gain_hi = -std::numeric_limits<double>::infinity();
            for (std::size_t i = 0; i < J.size(); ++i) {
                const double d = U[i] - J[i];
                gain_lo = std::min(gain_lo, d);
                gain_hi = std::max(gain_hi, d);
            }
            span = gain_hi - gain_lo;
            const double offset = U[0];
            for (std::size_t i = 0; i < J.size(); ++i) J[i] = U[i] - offset;
        } else {
            span = 0.0;
            for (std::size_t i = 0; i < J.size(); ++i)
                span = std::max(span, std::abs(U[i] - J[i]));
            J = U;
        }
        if (span <= options.tolerance) break;
    }
    if (span > options.tolerance)
        throw NonConvergence("value iteration did not converge (span " + std::to_string(span) +
                                 " after " + std::to_string(options.max_iterations) + " sweeps)",
                             options.max_iterations, span);

    out.values = J;
    out.iterations = std::min(iter, options.max_iterations);
    out.span = span;
    if (options.mode == SolveMode::AverageCost) {
        out.gain = 0.5 * (gain_lo + gain_hi);
    } else {
        Belief pi{std::vector<double>(stationary)};
        out.gain = (1.0 - options.discount) * [&] {
            double acc = 0.0;
            for (const auto& [idx, w] : barycentric_weights(pi, grid)) acc += w * J[idx];
            return acc;
        }();
    }
    // Final improvement pass to extract the policy.
    const auto continuation = make_continuation(J);
    out.actions.resize(grid.size());
    out.k_values.resize(grid.size());
    std::vector<double> scratch(grid.size());
    bellman_sweep(config, kernel, grid, lambda, options, continuation, scratch, &out.actions,
                  &out.k_values);
    return out;
}

} // namespace detail

// Solve the grid MDP: lower-bound iteration always, tangent-envelope upper
// bound when requested. Returns the converged tables, the extracted policy
// and the headline long-run cost bounds.
inline SolveResult value_iteration(const ScenarioConfig& config, const BeliefGrid& grid,
                                   double lambda, const SolverOptions& options, RngStream rng) {
    options.check(config);
    if (grid.n != config.n())
        throw TableMismatch("value_iteration: grid dimension does not match scenario");
    const ObservationModel model(config, options.design);
    const bool want_upper = options.compute_upper;
    const auto kernel =
        detail::build_kernel(config, model, grid, options, rng, /*keep_posteriors=*/want_upper);
    const auto stationary = stationary_distribution(config);

    std::vector<double> grid_delta(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i)
        grid_delta[i] = estimation_error(grid.points[i]);

    // Lower bound: E[lower_bound_value(p')] per cell reduces to
    // (1-lambda)*dbar + sum_i w_i J_i, linear in the grid values.
    const auto make_lb_cont = [&](const std::vector<double>& J) {
        return [&kernel, lambda, &J](std::size_t psi, std::size_t a) {
            const auto& cell = kernel.cells[psi][a];
            double acc = (1.0 - lambda) * cell.dbar;
            for (std::size_t i = 0; i < J.size(); ++i)
                if (cell.w[i] != 0.0) acc += cell.w[i] * J[i];
            return acc;
        };
    };
    const auto lb =
        detail::iterate_values(config, kernel, grid, lambda, options, make_lb_cont, stationary);

    SolveResult result;
    result.table.grid = grid;
    result.table.lambda = lambda;
    result.table.mode = options.mode;
    result.table.discount = options.discount;
    result.table.values = lb.values;
    result.table.gain = lb.gain;
    result.table.iterations = lb.iterations;
    result.table.span = lb.span;
    result.policy.actions = lb.actions;
    result.policy.k_values = lb.k_values;
    result.lower_bound_reward = lb.gain;
    result.degenerate_samples = kernel.degenerate_total;
    result.table = compute_tangents(std::move(result.table), lambda);

    if (want_upper) {
        const auto make_cont = [&](const std::vector<double>& J) {
            std::vector<double> g(grid.size());
            for (std::size_t i = 0; i < grid.size(); ++i)
                g[i] = J[i] - (1.0 - lambda) * grid_delta[i];
            auto tangents = detail::tangents_from_grid_values(grid, g);
            // Precompute intercept - slope.b per tangent for fast evaluation.
            const int n = grid.n;
            std::vector<double> base(tangents.size());
            for (std::size_t i = 0; i < tangents.size(); ++i) {
                double dot = 0.0;
                for (int j = 0; j < n; ++j) dot += tangents[i].slope[j] * grid.points[i][j];
                base[i] = tangents[i].intercept - dot;
            }
            return [&kernel, lambda, n, tangents = std::move(tangents),
                    base = std::move(base)](std::size_t psi, std::size_t a) {
                const auto& cell = kernel.cells[psi][a];
                double acc = 0.0;
                for (std::size_t m = 0; m < cell.posteriors.size(); ++m) {
                    const Belief& p = cell.posteriors[m];
                    double best = std::numeric_limits<double>::infinity();
                    for (std::size_t i = 0; i < tangents.size(); ++i) {
                        double v = base[i];
                        for (int j = 0; j < n; ++j) v += tangents[i].slope[j] * p[j];
                        if (v < best) best = v;
                    }
                    acc += (1.0 - lambda) * cell.post_delta[m] + best;
                }
                return acc / static_cast<double>(cell.posteriors.size());
            };
        };
        const auto ub =
            detail::iterate_values(config, kernel, grid, lambda, options, make_cont, stationary);
        result.upper_values = ub.values;
        result.upper_bound_reward = ub.gain;
    }
    return result;
}

// ---------------------------------------------------------------------------
// Table serialization

inline nlohmann::json to_json(const ValueTable& t) {
    nlohmann::json j;
    j["n"] = t.grid.n;
    j["resolution"] = t.grid.resolution;
    j["lambda"] = t.lambda;
    j["mode"] = t.mode == SolveMode::AverageCost ? "avg" : "disc";
    j["discount"] = t.discount;
    j["values"] = t.values;
    j["gain"] = t.gain;
    j["iterations"] = t.iterations;
    j["span"] = t.span;
    nlohmann::json tang = nlohmann::json::array();
    for (const auto& tg : t.tangents)
        tang.push_back({{"slope", tg.slope}, {"intercept", tg.intercept}});
    j["tangents"] = tang;
    return j;
}

inline ValueTable value_table_from_json(const nlohmann::json& j) {
    ValueTable t;
    t.grid = build_grid(j.at("n").get<int>(), j.at("resolution").get<int>());
    t.lambda = j.at("lambda").get<double>();
    t.mode = j.at("mode").get<std::string>() == "disc" ? SolveMode::Discounted
                                                       : SolveMode::AverageCost;
    t.discount = j.value("discount", 0.95);
    t.values = j.at("values").get<std::vector<double>>();
    t.gain = j.at("gain").get<double>();
    t.iterations = j.value("iterations", 0);
    t.span = j.value("span", 0.0);
    for (const auto& e : j.at("tangents"))
        t.tangents.push_back({e.at("slope").get<std::vector<double>>(),
                              e.at("intercept").get<double>()});
    if (t.values.size() != t.grid.size())
        throw TableMismatch("value table: size does not match grid");
    return t;
}

inline nlohmann::json to_json(const PolicyTable& p) {
    nlohmann::json j;
    nlohmann::json actions = nlohmann::json::array();
    for (const auto& a : p.actions) actions.push_back(a.counts);
    j["actions"] = actions;
    j["k_values"] = p.k_values;
    return j;
}

inline PolicyTable policy_table_from_json(const nlohmann::json& j) {
    PolicyTable p;
    for (const auto& e : j.at("actions")) p.actions.emplace_back(e.get<std::vector<int>>());
    p.k_values = j.at("k_values").get<std::vector<double>>();
    return p;
}

} // namespace sensched
