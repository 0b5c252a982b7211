// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "mudkit/errors.hpp"
#include "mudkit/flops.hpp"
#include "mudkit/matrix.hpp"

namespace mudkit {

// Dense kernels sized for matrices up to ~2048 x 8192, all in 64-bit
// arithmetic. Every counted kernel takes an optional FlopLedger*.

/// Triangular solves reject diagonal entries below this absolute floor.
inline constexpr double kTrsmDiagFloor = 1e-12;

/// Cholesky rejects pivots at or below 1e-12 times the largest diagonal entry.
inline constexpr double kCholPivotFloorScale = 1e-12;

/// C = A * B. Ledger: 2 * A.rows * A.cols * B.cols GEMM FLOPs.
Matrix matmul(const Matrix& a, const Matrix& b, FlopLedger* ledger = nullptr);

/// Row Gram matrix M * M^T, k x k for a k x d input. Each row-pair dot is
/// computed once and written to both (i,j) and (j,i), which is the exact
/// form of the (G + G^T)/2 symmetrization. Ledger: 2 k^2 d GEMM FLOPs.
Matrix gram(const Matrix& m, FlopLedger* ledger = nullptr);

/// Solves T X = B by forward substitution for square lower-triangular T
/// (strictly-upper entries of T are ignored). Throws
/// SingularTriangularError if any |T(i,i)| < kTrsmDiagFloor.
/// Ledger: 2 * ceil(k^2 d / 2) TRSM FLOPs, i.e. ~k^2 d / 2 multiply-adds.
Matrix forward_trsm(const Matrix& t, const Matrix& b, FlopLedger* ledger = nullptr);

/// Lower Cholesky factor L with L L^T = G. Throws NotSpdError with the
/// pivot index when G is not numerically SPD.
Matrix cholesky(const Matrix& g);

/// Eigenvalues of a symmetric matrix, ascending.
struct SymSpectrum {
    std::vector<double> eigenvalues;
};

/// Cyclic Jacobi eigensolver for symmetric G (dimension <= 1024). Sweeps
/// until the off-diagonal Frobenius mass is <= tol * ||G||_F; throws
/// IterationLimitError after 50 sweeps.
SymSpectrum jacobi_eig_sym(const Matrix& g, double tol = 1e-12);

/// Thin SVD M = U diag(s) V^T with U k x k, V d x k (k = rows <= cols = d),
/// singular values descending.
struct ThinSvd {
    Matrix u;
    std::vector<double> singular_values;
    Matrix v;
};

/// One-sided Jacobi thin SVD for k <= d, dimension <= 1024. Rotates row
/// pairs until every pair has |<x_p,x_q>| <= tol * ||x_p|| ||x_q||; throws
/// IterationLimitError after 50 sweeps.
ThinSvd svd_thin(const Matrix& m, double tol = 1e-12);

/// Euclidean norm of each row. Ledger: 2 * rows * cols reduction FLOPs.
std::vector<double> row_norms(const Matrix& m, FlopLedger* ledger = nullptr);

/// Frobenius norm. Ledger: 2 * rows * cols reduction FLOPs.
double frob_norm(const Matrix& m, FlopLedger* ledger = nullptr);

Matrix transpose(const Matrix& m);

/// Lower-triangular part including the diagonal; strictly-upper entries zeroed.
Matrix tril(const Matrix& g);

}  // namespace mudkit
