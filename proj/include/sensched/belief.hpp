#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

namespace sensched {

// Posterior probability vector over the hidden states; the state of the
// converted MDP. Entries >= 0 and sum to 1 (within 1e-12).
struct Belief {
    std::vector<double> probs;

    Belief() = default;
    explicit Belief(std::vector<double> p) : probs(std::move(p)) {}
    explicit Belief(std::size_t n) : probs(n, 1.0 / static_cast<double>(n)) {}

    std::size_t size() const { return probs.size(); }
    double operator[](std::size_t i) const { return probs[i]; }
    double& operator[](std::size_t i) { return probs[i]; }

    bool valid(double tol = 1e-12) const {
        double sum = 0.0;
        for (double p : probs) {
            if (p < 0.0 || !std::isfinite(p)) return false;
            sum += p;
        }
        return std::abs(sum - 1.0) <= tol;
    }

    void normalize() {
        double sum = 0.0;
        for (double p : probs) sum += p;
        if (sum > 0.0)
            for (double& p : probs) p /= sum;
    }
};

inline Belief point_mass(std::size_t n, std::size_t state) {
    Belief b(std::vector<double>(n, 0.0));
    b[state] = 1.0;
    return b;
}

inline double linf_distance(const Belief& a, const Belief& b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
    return d;
}

} // namespace sensched
