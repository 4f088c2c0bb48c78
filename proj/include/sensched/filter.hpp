#pragma once

// Causal Bayesian belief tracking: prediction through the transition matrix
// followed by sequential one-sample updates. The sequential route and the
// single joint Bayes application are algebraically identical; the joint form
// is kept as a reference oracle for tests.

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "sensched/belief.hpp"
#include "sensched/stochastics.hpp"

namespace sensched {

// Which likelihood factors enter the belief update. MeasurementsOnly drops
// channel-estimate and feature factors; ChannelOnly drops the received
// measurements (ideal-link sensors then contribute nothing).
enum class LikelihoodMask { Full, MeasurementsOnly, ChannelOnly };

inline Belief predict(const Belief& b, const std::vector<std::vector<double>>& transition) {
    const std::size_t n = b.size();
    Belief out(std::vector<double>(n, 0.0));
    for (std::size_t j = 0; j < n; ++j) {
        const double pj = b[j];
        if (pj == 0.0) continue;
        for (std::size_t i = 0; i < n; ++i) out[i] += transition[j][i] * pj;
    }
    return out;
}

inline Belief predict(const Belief& b, const ScenarioConfig& c) { return predict(b, c.transition); }

// One Bayes step from per-state log-likelihoods, computed in log space with a
// single exponentiation and normalization.
inline Belief apply_log_likelihood(const Belief& partial, std::span<const double> loglik) {
    const std::size_t n = partial.size();
    constexpr double neg_inf = -std::numeric_limits<double>::infinity();
    double max_w = neg_inf;
    std::vector<double> w(n, neg_inf);
    for (std::size_t i = 0; i < n; ++i) {
        if (partial[i] > 0.0 && loglik[i] > neg_inf) {
            w[i] = std::log(partial[i]) + loglik[i];
            max_w = std::max(max_w, w[i]);
        }
    }
    if (max_w == neg_inf)
        throw DegenerateLikelihood("all posterior weights vanished");
    Belief out(std::vector<double>(n, 0.0));
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (w[i] > neg_inf) {
            out[i] = std::exp(w[i] - max_w);
            sum += out[i];
        }
    }
    for (std::size_t i = 0; i < n; ++i) out[i] /= sum;
    return out;
}

// Per-state log-likelihood of a single received sample under the mask.
inline void sample_loglik(std::span<double> loglik, double z, double h_hat, int sensor,
                          const ObservationModel& model, LikelihoodMask mask) {
    const auto& spec = model.config().sensors[sensor];
    const int n = model.config().n();
    for (int i = 0; i < n; ++i) {
        double l = 0.0;
        if (spec.has_channel() && mask != LikelihoodMask::MeasurementsOnly)
            l += model.channel_estimate_logpdf(h_hat, i, sensor);
        if (mask != LikelihoodMask::ChannelOnly)
            l += model.received_logpdf(z, i, h_hat, sensor);
        loglik[i] = l;
    }
}

inline Belief update_measurement(const Belief& partial, double z, double h_hat, int sensor,
                                 const ObservationModel& model, LikelihoodMask mask) {
    std::vector<double> loglik(partial.size());
    sample_loglik(loglik, z, h_hat, sensor, model, mask);
    return apply_log_likelihood(partial, loglik);
}

inline Belief update_features(const Belief& partial, int sensor, std::span<const double> values,
                              int n_s, const ObservationModel& model, LikelihoodMask mask) {
    const auto& spec = model.config().sensors[sensor];
    if (values.empty() || mask == LikelihoodMask::MeasurementsOnly) return partial;
    const int n = model.config().n();
    std::vector<double> loglik(n, 0.0);
    for (std::size_t f = 0; f < values.size(); ++f)
        for (int i = 0; i < n; ++i)
            loglik[i] += feature_logpdf(values[f], spec.features[f], i, n_s);
    return apply_log_likelihood(partial, loglik);
}

// Full slot update: predict through T, then fold the one-sample updates in
// canonical order (sensors in config order, samples in index order), then the
// feature updates of every sampled sensor.
inline Belief slot_update(const Belief& belief, const SlotObservation& obs,
                          const ObservationModel& model, LikelihoodMask mask) {
    Belief b = predict(belief, model.config());
    for (std::size_t s = 0; s < obs.sensors.size(); ++s)
        for (const auto& [z, h_hat] : obs.sensors[s].samples)
            b = update_measurement(b, z, h_hat, static_cast<int>(s), model, mask);
    for (std::size_t s = 0; s < obs.sensors.size(); ++s) {
        const auto& rec = obs.sensors[s];
        if (!rec.samples.empty() && !rec.features.empty())
            b = update_features(b, static_cast<int>(s), rec.features,
                                static_cast<int>(rec.samples.size()), model, mask);
    }
    return b;
}

// Reference implementation: accumulate the joint log-likelihood of the whole
// slot per state and apply Bayes once after prediction. Used in tests to
// check the sequential route.
inline Belief joint_bayes_oracle(const Belief& belief, const SlotObservation& obs,
                                 const ObservationModel& model, LikelihoodMask mask) {
    const Belief pred = predict(belief, model.config());
    const int n = model.config().n();
    std::vector<double> total(n, 0.0), one(n);
    for (std::size_t s = 0; s < obs.sensors.size(); ++s) {
        const auto& rec = obs.sensors[s];
        for (const auto& [z, h_hat] : rec.samples) {
            sample_loglik(one, z, h_hat, static_cast<int>(s), model, mask);
            for (int i = 0; i < n; ++i) total[i] += one[i];
        }
        if (!rec.samples.empty() && mask != LikelihoodMask::MeasurementsOnly) {
            const auto& spec = model.config().sensors[s];
            for (std::size_t f = 0; f < rec.features.size(); ++f)
                for (int i = 0; i < n; ++i)
                    total[i] += feature_logpdf(rec.features[f], spec.features[f], i,
                                               static_cast<int>(rec.samples.size()));
        }
    }
    return apply_log_likelihood(pred, total);
}

// MAP state estimate; ties resolved toward the lowest state index.
inline int map_estimate(const Belief& b) {
    int best = 0;
    for (std::size_t i = 1; i < b.size(); ++i)
        if (b[i] > b[best]) best = static_cast<int>(i);
    return best;
}

} // namespace sensched
