// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <utility>
#include <vector>

#include "mudkit/linalg.hpp"

namespace mudkit {

/// Settings shared by the whitening operators.
struct WhitenConfig {
    int passes = 1;     // triangular-decorrelation passes
    int ns_iters = 5;   // Newton-Schulz iterations
    double eps = 1e-8;  // stability clamp for normalizations
    std::array<double, 3> ns_coeffs{3.4445, -4.7750, 2.0315};
};

/// Result of one whitening call. The ledger and wall time cover the
/// operator itself; the orthogonality residual is computed afterwards,
/// outside both, so reports stay comparable with the cost model.
struct WhitenReport {
    Matrix output;
    double ortho_residual = 0.0;  // ||Q Q^T - I||_F along the small dimension
    FlopLedger ledger;
    double wall_seconds = 0.0;
};

/// Per-pass deviation of an iterated Gram matrix from the identity.
struct GramDeviation {
    int pass = 0;
    double linf = 0.0;  // induced inf-norm (max absolute row sum)
    double l1 = 0.0;    // induced 1-norm (max absolute column sum)
    double fro = 0.0;
};

struct GramTrace {
    std::vector<GramDeviation> deviations;
};

/// Transposes so the result has rows <= cols; square inputs pass through.
struct ShapeNormalized {
    Matrix m;
    bool was_transposed = false;
};
ShapeNormalized shape_normalize(const Matrix& m);

/// Triangular decorrelation. Per pass: row-normalize (dividing by
/// max(norm, eps), so unit rows pass through unchanged and zero rows stay
/// zero), form the row Gram, take its lower triangle, forward-solve, and
/// row-normalize again. Diagonal entries of the triangle below eps mark
/// collapsed rows and are replaced by 1 so the solve is a no-op for them.
WhitenReport mud_whiten(const Matrix& m, const WhitenConfig& cfg = {});

/// Newton-Schulz polar approximation: X0 = M / (||M||_F + eps), then
/// ns_iters quintic steps X <- aX + b(AX) + c(A(AX)) with A = X X^T.
/// Runs a fixed iteration count; no final renormalization or residual check.
WhitenReport muon_ns(const Matrix& m, const WhitenConfig& cfg = {});

/// Exact polar factor U V^T from a thin SVD. Requires full row rank after
/// shape normalization (sigma_min > 1e-10 * sigma_max), else throws
/// RankDeficientError. The SVD itself is outside the FLOP model; the
/// report ledger counts only the final compose GEMM.
WhitenReport polar_exact(const Matrix& m);

/// Triangular whitening through the exact Cholesky factor of the row Gram:
/// Q = L^{-1} M. Propagates NotSpdError when the Gram is not numerically
/// SPD, which is the expected failure mode for ill-conditioned input.
WhitenReport cholqr_whiten(const Matrix& m);

/// Symmetric scaling D^{-1/2} G D^{-1/2} to unit diagonal, D = diag(G).
/// Requires symmetric G with strictly positive diagonal.
Matrix corr_normalize(const Matrix& g);

/// One pass of the decorrelation map in Gram space:
/// G -> Corr(tril(G)^{-1} G tril(G)^{-T}). Requires symmetric unit-diagonal
/// input; the output is symmetric with unit diagonal.
Matrix gram_map(const Matrix& g);

/// For symmetric unit-diagonal SPD G with T = tril(G): returns the spectrum
/// of B = T^{-1} G T^{-T} alongside the spectrum of M^{-1} G for the
/// Gauss-Seidel-style preconditioner M = T T^T. The second spectrum is
/// computed independently, as the generalized eigenproblem G x = lambda M x
/// reduced by a fresh Cholesky factorization of the explicitly formed M.
std::pair<SymSpectrum, SymSpectrum> sgs_preconditioned_spectrum(const Matrix& g);

/// ||Q Q^T - I||_F measured along the small dimension (after shape
/// normalization), so values are comparable across transposed shapes.
double ortho_residual(const Matrix& q);

}  // namespace mudkit
