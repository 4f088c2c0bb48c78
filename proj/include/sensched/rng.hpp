#pragma once

// Counter-based random streams (Philox4x32-10). Every draw is addressed by
// (seed, stream, index), so substreams can be replayed independently of the
// order in which other streams are consumed. This is what makes common random
// numbers across candidate actions and thread-count-independent output work.

#include <array>
#include <cstdint>
#include <cmath>
#include <initializer_list>
#include <span>
#include <stdexcept>

#include <boost/math/special_functions/erf.hpp>
#include <boost/math/special_functions/gamma.hpp>

namespace sensched {

namespace detail {

inline void mulhilo32(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
    const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
    hi = static_cast<std::uint32_t>(p >> 32);
    lo = static_cast<std::uint32_t>(p);
}

// One block of Philox4x32 with 10 rounds (Salmon et al. constants).
inline std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> ctr,
                                                  std::array<std::uint32_t, 2> key) {
    constexpr std::uint32_t M0 = 0xD2511F53u, M1 = 0xCD9E8D57u;
    constexpr std::uint32_t W0 = 0x9E3779B9u, W1 = 0xBB67AE85u;
    for (int r = 0; r < 10; ++r) {
        if (r) { key[0] += W0; key[1] += W1; }
        std::uint32_t hi0, lo0, hi1, lo1;
        mulhilo32(M0, ctr[0], hi0, lo0);
        mulhilo32(M1, ctr[2], hi1, lo1);
        ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    }
    return ctr;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

inline std::uint64_t mix_label(std::uint64_t stream, std::uint64_t label) {
    return splitmix64(stream ^ (label + 0x9E3779B97F4A7C15ull + (stream << 6) + (stream >> 2)));
}

} // namespace detail

// Substream labels used throughout the solver and simulator. Streams are
// content-addressed: the same (seed, labels..., index) always yields the same
// draw, no matter what else has been sampled.
namespace role {
inline constexpr std::uint64_t state = 0x01;
inline constexpr std::uint64_t measurement = 0x02;
inline constexpr std::uint64_t channel = 0x03;
inline constexpr std::uint64_t channel_error = 0x04;
inline constexpr std::uint64_t noise = 0x05;
inline constexpr std::uint64_t feature = 0x06;
inline constexpr std::uint64_t policy = 0x07;
inline constexpr std::uint64_t init = 0x08;
inline constexpr std::uint64_t quadrature = 0x09;
inline constexpr std::uint64_t episode = 0x0a;
inline constexpr std::uint64_t slot = 0x0b;
} // namespace role

class RngStream {
public:
    RngStream() : RngStream(0) {}
    explicit RngStream(std::uint64_t seed, std::uint64_t stream = 0)
        : seed_(seed), stream_(stream) {}

    std::uint64_t seed() const { return seed_; }
    std::uint64_t stream() const { return stream_; }

    // Derive an independent substream; the child starts at draw index 0.
    RngStream sub(std::uint64_t label) const {
        return RngStream(seed_, detail::mix_label(stream_, label));
    }
    RngStream sub(std::initializer_list<std::uint64_t> labels) const {
        RngStream s = *this;
        for (auto l : labels) s = s.sub(l);
        return s;
    }

    std::uint64_t next_u64() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const std::array<std::uint32_t, 4> ctr = {
            static_cast<std::uint32_t>(index_), static_cast<std::uint32_t>(index_ >> 32),
            static_cast<std::uint32_t>(stream_), static_cast<std::uint32_t>(stream_ >> 32)};
        const std::array<std::uint32_t, 2> key = {
            static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32)};
        const auto out = detail::philox4x32_10(ctr, key);
        ++index_;
        spare_ = (static_cast<std::uint64_t>(out[2]) << 32) | out[3];
        have_spare_ = true;
        return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
    }

    // Uniform in the open interval (0, 1); never returns an endpoint, so
    // inverse-CDF transforms below are always finite.
    double uniform01() {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    double normal(double mean = 0.0, double stddev = 1.0) {
        const double u = uniform01();
        return mean + stddev * 1.4142135623730951 * boost::math::erf_inv(2.0 * u - 1.0);
    }

    // Gamma(shape, scale) by inverse CDF: monotone in the underlying uniform,
    // which keeps draws comonotone under common random numbers.
    double gamma(double shape, double scale) {
        const double u = uniform01();
        return scale * boost::math::gamma_p_inv(shape, u);
    }

    // Inverse-CDF draw from a discrete distribution (probabilities >= 0,
    // summing to ~1). Comonotone across distributions given the same stream.
    int categorical(std::span<const double> probs) {
        const double u = uniform01();
        double acc = 0.0;
        for (std::size_t i = 0; i < probs.size(); ++i) {
            acc += probs[i];
            if (u <= acc) return static_cast<int>(i);
        }
        return static_cast<int>(probs.size()) - 1;
    }

private:
    std::uint64_t seed_ = 0;
    std::uint64_t stream_ = 0;
    std::uint64_t index_ = 0;
    std::uint64_t spare_ = 0;
    bool have_spare_ = false;
};

} // namespace sensched
