// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mudkit/whitening.hpp"

namespace mudkit::analysis {

/// Recipe for a random k x d matrix with a controlled spectrum. Exactly one
/// of singular_values (descending, positive, length k) or condition_number
/// must be set. With condition_number, sigma_1 = 1 and sigma_k = 1/cond are
/// pinned and the interior is filled log-uniformly.
struct SpectrumSpec {
    std::size_t k = 0;
    std::size_t d = 0;
    std::vector<double> singular_values;
    std::optional<double> condition_number;
};

/// k x d matrix with orthonormal rows (k <= d), built by twice-iterated
/// Gram-Schmidt on Gaussian rows.
Matrix random_row_orthonormal(std::size_t k, std::size_t d, std::uint64_t seed);

/// U diag(sigma) V^T from random orthonormal factors; svd_thin of the
/// result recovers the requested spectrum.
Matrix random_with_spectrum(const SpectrumSpec& spec, std::uint64_t seed);

/// G = I + E with E symmetric, zero diagonal, entries uniform in
/// [-offdiag_scale, offdiag_scale]. Requires offdiag_scale < 1/(k-1) so G is
/// diagonally dominant; SPD is verified by Cholesky with up to 10 retries.
Matrix random_unit_diag_spd(std::size_t k, double offdiag_scale, std::uint64_t seed);

/// Iterates the Gram-space decorrelation map from G0, recording
/// ||G_t - I|| in the induced inf/1 norms and Frobenius norm per pass.
/// Pass 0 is always recorded; iteration stops at max_passes or once the
/// inf-norm deviation drops below 1e-14 (the sub-threshold pass is the last
/// row recorded).
GramTrace trace_convergence(const Matrix& g0, int max_passes);

enum class TraceNorm { kLinf, kL1, kFro };

/// Least-squares slope of log(dev_{t+1}) against log(dev_t) over consecutive
/// trace pairs whose deviations both lie in [1e-12, 1e-1] (inside the local
/// convergence regime, above rounding noise). Needs at least two such
/// pairs; returns nullopt otherwise.
std::optional<double> convergence_slope(const GramTrace& trace, TraceNorm norm);

struct BenchRow {
    std::string op_name;
    std::size_t k = 0;
    std::size_t d = 0;
    std::uint64_t flops = 0;  // cost-model FLOPs from one call
    double wall_seconds = 0.0;
    double flops_per_second = 0.0;
};

/// Times one whitening operator on a random_with_spectrum input: one warmup
/// call is discarded, wall_seconds is the median of `repeats` calls
/// (repeats >= 3), and the ledger comes from a single call. Recognized
/// names: mud<p> ("mud" = mud1), muon<s> ("muon" = muon5), polar, cholqr.
BenchRow bench(const std::string& op_name, const SpectrumSpec& spec, int repeats,
               std::uint64_t seed);

}  // namespace mudkit::analysis
