// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

#include "mudkit/matrix.hpp"

namespace mudkit {

/// SplitMix64 counter stream (Vigna's mixer). Fixed here, rather than
/// std::mt19937, so the same seed produces the same stream in every build
/// and traces stay reproducible.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    /// Uniform in [0, 1) with 53 random bits.
    double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform in [lo, hi).
    double next_in(double lo, double hi) { return lo + (hi - lo) * next_unit(); }

    /// Uniform integer in [0, n).
    std::uint64_t next_below(std::uint64_t n) { return next_u64() % n; }

private:
    std::uint64_t state_;
};

/// Standard normals via Box-Muller on a SplitMix64 stream.
class GaussianStream {
public:
    explicit GaussianStream(std::uint64_t seed) : rng_(seed) {}

    double next() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = rng_.next_unit();
        if (u1 <= 0.0) u1 = 0x1.0p-53;  // keep log() finite
        const double u2 = rng_.next_unit();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    /// rows x cols matrix of iid standard normals.
    Matrix matrix(std::size_t rows, std::size_t cols) {
        Matrix m(rows, cols);
        for (double& x : m.data()) x = next();
        return m;
    }

    SplitMix64& raw() { return rng_; }

private:
    SplitMix64 rng_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace mudkit
