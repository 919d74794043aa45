#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace lambo {

/// Deterministic RNG used everywhere randomness is needed.
///
/// Distributions are implemented by hand on top of mt19937_64 because the
/// std::*_distribution classes are implementation-defined and would break
/// bit-reproducibility of seeded runs across standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1) with 53 bits of mantissa.
    double uniform01() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    /// Uniform in [lo, hi).
    double uniform(double lo, double hi) {
        return lo + (hi - lo) * uniform01();
    }

    /// Uniform in (0, 1]; never returns exactly zero.
    double uniform_open0() { return 1.0 - uniform01(); }

    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        // Rejection sampling to avoid modulo bias.
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return x % n;
    }

    /// Standard normal via Box-Muller (fresh pair each call, spare cached).
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = uniform_open0();
        const double u2 = uniform01();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    double normal(double mu, double sigma) { return mu + sigma * normal(); }

    /// Log-normal parameterized by the mean of the distribution itself and
    /// the sigma of the underlying normal.
    double lognormal_with_mean(double mean, double log_sigma) {
        const double mu = std::log(mean) - 0.5 * log_sigma * log_sigma;
        return std::exp(normal(mu, log_sigma));
    }

    /// Exponential with mean 1 (Rayleigh fading power factor).
    double exponential1() { return -std::log(uniform_open0()); }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

/// Splitmix64-style hash for deriving independent seed streams.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
    return derive_seed(derive_seed(seed, a), b);
}

}  // namespace lambo
