#pragma once

// Probability kernels for measurements, channels, channel estimates and
// channel features, plus the slot observation sampler. All densities are
// pure; the sampler is driven entirely by counter-based substreams.

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <vector>

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "sensched/errors.hpp"
#include "sensched/reward.hpp"
#include "sensched/rng.hpp"
#include "sensched/scenario.hpp"

namespace sensched {

// How the receiver models the channel estimation error inside the received
// signal density. Intermediate keeps the m*W_ch term; NonRobust drops it.
enum class ChannelDesign { NonRobust, Intermediate };

inline constexpr double two_pi = 6.283185307179586;

inline double gaussian_pdf(double x, double mean, double var) {
    if (!(var > 0.0)) throw DomainError("gaussian_pdf: variance must be > 0");
    const double d = x - mean;
    return std::exp(-0.5 * d * d / var) / std::sqrt(two_pi * var);
}

inline double gaussian_logpdf(double x, double mean, double var) {
    const double d = x - mean;
    return -0.5 * d * d / var - 0.5 * std::log(two_pi * var);
}

inline double gamma_pdf(double x, double shape, double scale) {
    if (!(shape > 0.0) || !(scale > 0.0))
        throw DomainError("gamma_pdf: shape and scale must be > 0");
    if (x <= 0.0) return 0.0;
    const double t = x / scale;
    return std::exp((shape - 1.0) * std::log(t) - t - std::lgamma(shape)) / scale;
}

// Received-signal density f_Z(z | e_i, h_hat): Gaussian with mean h_hat*m and
// variance h_hat^2 Q (+ m^2 sigma_ch^2 under the intermediate design)
// + sigma_noise^2. Ideal-link sensors receive the measurement unchanged.
inline double received_variance(double h_hat, double mean, double var, ChannelDesign design,
                                double sigma_ch, double sigma_noise) {
    double v = h_hat * h_hat * var + sigma_noise * sigma_noise;
    if (design == ChannelDesign::Intermediate) v += mean * mean * sigma_ch * sigma_ch;
    return v;
}

inline double received_pdf(double z, int state, double h_hat, const SensorSpec& sensor,
                           ChannelDesign design, double sigma_ch, double sigma_noise) {
    const auto& g = sensor.measurement.at(state);
    if (!sensor.has_channel()) return gaussian_pdf(z, g.mean, g.var);
    const double v = received_variance(h_hat, g.mean, g.var, design, sigma_ch, sigma_noise);
    if (!(v > 0.0)) throw DomainError("received_pdf: non-positive variance");
    return gaussian_pdf(z, h_hat * g.mean, v);
}

inline double received_logpdf(double z, int state, double h_hat, const SensorSpec& sensor,
                              ChannelDesign design, double sigma_ch, double sigma_noise) {
    const auto& g = sensor.measurement[state];
    if (!sensor.has_channel()) return gaussian_logpdf(z, g.mean, g.var);
    const double v = received_variance(h_hat, g.mean, g.var, design, sigma_ch, sigma_noise);
    if (!(v > 0.0)) throw DomainError("received_pdf: non-positive variance");
    return gaussian_logpdf(z, h_hat * g.mean, v);
}

// Density of the channel estimate H_hat = H - W_ch, H ~ Gamma(shape, scale),
// W_ch ~ N(0, sigma_ch^2). No closed form exists, so the convolution is
// tabulated on a uniform grid and interpolated linearly. The grid spans
// [-6 sigma, q_Gamma(1 - 1e-9) + 6 sigma] with 8192 points; the (1 - 1e-9)
// quantile keeps the truncated tail mass below the 1e-6 integral tolerance.
class ChannelEstimateTable {
public:
    ChannelEstimateTable() = default;

    ChannelEstimateTable(GammaSpec gamma, double sigma_ch, int points = 8192)
        : gamma_(gamma), sigma_(sigma_ch) {
        if (!(gamma.shape > 0.0) || !(gamma.scale > 0.0))
            throw DomainError("channel estimate: gamma parameters must be > 0");
        if (sigma_ch < 0.0) throw DomainError("channel estimate: sigma_ch must be >= 0");
        if (sigma_ch == 0.0) return; // degenerate: exact gamma density
        lo_ = -6.0 * sigma_;
        hi_ = gamma.scale * boost::math::gamma_p_inv(gamma.shape, 1.0 - 1e-9) + 6.0 * sigma_;
        step_ = (hi_ - lo_) / (points - 1);
        values_.resize(points);
        for (int i = 0; i < points; ++i) values_[i] = convolve(lo_ + i * step_);
    }

    bool degenerate() const { return values_.empty(); }
    double lo() const { return degenerate() ? 0.0 : lo_; }
    double hi() const {
        return degenerate() ? gamma_.scale * boost::math::gamma_p_inv(gamma_.shape, 1.0 - 1e-9)
                            : hi_;
    }

    double pdf(double x) const {
        if (degenerate()) return gamma_pdf(x, gamma_.shape, gamma_.scale);
        if (x <= lo_ || x >= hi_) return 0.0;
        const double t = (x - lo_) / step_;
        const auto i = static_cast<std::size_t>(t);
        const double f = t - static_cast<double>(i);
        return values_[i] * (1.0 - f) + values_[i + 1] * f;
    }

    double logpdf(double x) const {
        const double v = pdf(x);
        return v > 0.0 ? std::log(v) : -std::numeric_limits<double>::infinity();
    }

private:
    // f(x) = E_W[f_Gamma(x + w)], integrated over the Gaussian kernel support
    // and split at the gamma support boundary w = -x.
    double convolve(double x) const {
        const double a = std::max(-8.0 * sigma_, -x);
        const double b = 8.0 * sigma_;
        if (a >= b) return 0.0;
        const auto f = [&](double w) {
            return gamma_pdf(x + w, gamma_.shape, gamma_.scale) * gaussian_pdf(w, 0.0, sigma_ * sigma_);
        };
        using quad = boost::math::quadrature::gauss<double, 32>;
        double total = 0.0;
        if (a < 0.0 && b > 0.0 && -x > a) {
            total += quad::integrate(f, a, -x > b ? b : -x);
            if (-x < b) total += quad::integrate(f, -x, b);
        } else {
            total = quad::integrate(f, a, b);
        }
        return total;
    }

    GammaSpec gamma_;
    double sigma_ = 0.0;
    double lo_ = 0.0, hi_ = 0.0, step_ = 0.0;
    std::vector<double> values_;
};

// Feature density f_C(c | e_i, N_s): base Gaussian with variance shrunk by
// the number of samples taken from the sensor.
inline double feature_pdf(double c, const FeatureSpec& feature, int state, int n_s) {
    if (n_s < 1) throw DomainError("feature_pdf: n_s must be >= 1");
    const auto& g = feature.per_state.at(state);
    return gaussian_pdf(c, g.mean, g.var / n_s);
}

inline double feature_logpdf(double c, const FeatureSpec& feature, int state, int n_s) {
    if (n_s < 1) throw DomainError("feature_pdf: n_s must be >= 1");
    const auto& g = feature.per_state[state];
    return gaussian_logpdf(c, g.mean, g.var / n_s);
}

// Everything one sensor reported in a slot: received samples (z, h_hat) and
// the per-feature values. Ideal-link sensors carry h_hat = 1.
struct SensorObservation {
    std::vector<std::pair<double, double>> samples; // (z, h_hat)
    std::vector<double> features;
};

struct SlotObservation {
    std::vector<SensorObservation> sensors;
    Action action;

    bool empty() const {
        for (const auto& s : sensors)
            if (!s.samples.empty()) return false;
        return true;
    }
};

// Bundles a scenario with its channel design and the precomputed channel
// estimate tables. Immutable after construction; shared across threads.
class ObservationModel {
public:
    ObservationModel(ScenarioConfig config, ChannelDesign design)
        : config_(std::move(config)), design_(design) {
        tables_.resize(config_.sensors.size());
        for (std::size_t s = 0; s < config_.sensors.size(); ++s) {
            const auto& sensor = config_.sensors[s];
            if (!sensor.has_channel()) continue;
            tables_[s].reserve(sensor.channel.size());
            for (const auto& g : sensor.channel)
                tables_[s].emplace_back(g, config_.sigma_ch);
        }
    }

    const ScenarioConfig& config() const { return config_; }
    ChannelDesign design() const { return design_; }

    double channel_estimate_pdf(double h_hat, int state, int sensor) const {
        if (!config_.sensors.at(sensor).has_channel())
            throw DomainError("channel_estimate_pdf: sensor " + config_.sensors[sensor].name +
                              " has an ideal link");
        return tables_[sensor][state].pdf(h_hat);
    }

    double channel_estimate_logpdf(double h_hat, int state, int sensor) const {
        return tables_[sensor][state].logpdf(h_hat);
    }

    const ChannelEstimateTable& channel_table(int sensor, int state) const {
        return tables_.at(sensor).at(state);
    }

    double received_pdf(double z, int state, double h_hat, int sensor) const {
        return sensched::received_pdf(z, state, h_hat, config_.sensors.at(sensor), design_,
                                      config_.sigma_ch, config_.sigma_noise);
    }

    double received_logpdf(double z, int state, double h_hat, int sensor) const {
        return sensched::received_logpdf(z, state, h_hat, config_.sensors[sensor], design_,
                                         config_.sigma_ch, config_.sigma_noise);
    }

private:
    ScenarioConfig config_;
    ChannelDesign design_;
    std::vector<std::vector<ChannelEstimateTable>> tables_;
};

namespace detail {

// Sampling core without the feasibility gate; the solver's quadrature also
// walks partial allocations below min_samples while building greedy stages.
SlotObservation sample_slot_unchecked(RngStream slot_rng, int state, const Action& action,
                                      const ScenarioConfig& config);

} // namespace detail

// Generate one slot of observations given the true hidden state. Draws are
// content-addressed per (sensor, role, sample index) below the given stream,
// so common random numbers couple any two actions that share coordinates.
// Channel sensors: y ~ N(m, Q), h ~ Gamma, w_ch ~ N(0, sigma_ch^2),
// w_noise ~ N(0, sigma_noise^2), z = h*y + w_noise, h_hat = h - w_ch.
// Ideal links deliver the measurement unchanged (z = y, h_hat = 1).
inline SlotObservation sample_slot_observations(RngStream slot_rng, int state, const Action& action,
                                                const ScenarioConfig& config) {
    if (!feasible(action, config))
        throw InfeasibleAction("sample_slot_observations: infeasible action " + action.str());
    return detail::sample_slot_unchecked(slot_rng, state, action, config);
}

inline SlotObservation detail::sample_slot_unchecked(RngStream slot_rng, int state,
                                                     const Action& action,
                                                     const ScenarioConfig& config) {
    SlotObservation obs;
    obs.action = action;
    obs.sensors.resize(config.sensors.size());
    for (std::size_t s = 0; s < config.sensors.size(); ++s) {
        const auto& sensor = config.sensors[s];
        const int n_s = action.counts[s];
        if (n_s == 0) continue;
        auto& rec = obs.sensors[s];
        rec.samples.reserve(n_s);
        const auto& g = sensor.measurement[state];
        for (int u = 0; u < n_s; ++u) {
            const auto us = static_cast<std::uint64_t>(u);
            const double y = slot_rng.sub({s, role::measurement, us}).normal(g.mean, std::sqrt(g.var));
            if (!sensor.has_channel()) {
                rec.samples.emplace_back(y, 1.0);
                continue;
            }
            const auto& ch = sensor.channel[state];
            const double h = slot_rng.sub({s, role::channel, us}).gamma(ch.shape, ch.scale);
            const double w_ch = slot_rng.sub({s, role::channel_error, us}).normal(0.0, config.sigma_ch);
            const double w_noise = slot_rng.sub({s, role::noise, us}).normal(0.0, config.sigma_noise);
            rec.samples.emplace_back(h * y + w_noise, h - w_ch);
        }
        rec.features.reserve(sensor.features.size());
        for (std::size_t f = 0; f < sensor.features.size(); ++f) {
            const auto& fg = sensor.features[f].per_state[state];
            rec.features.push_back(
                slot_rng.sub({s, role::feature, f}).normal(fg.mean, std::sqrt(fg.var / n_s)));
        }
    }
    return obs;
}

} // namespace sensched
