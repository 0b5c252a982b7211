// SPDX-License-Identifier: Apache-2.0
#include "mudkit/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace mudkit {

namespace {

std::string shape_of(const Matrix& m) {
    return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void require_square(const Matrix& m, const char* what) {
    if (m.rows() != m.cols()) {
        throw DimensionError(std::string(what) + ": expected square matrix, got " + shape_of(m));
    }
}

void require_symmetric(const Matrix& m, const char* what) {
    double scale = 0.0;
    for (double x : m.data()) scale = std::max(scale, std::abs(x));
    const double tol = 1e-10 * std::max(scale, 1.0);
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = i + 1; j < m.cols(); ++j) {
            if (std::abs(m(i, j) - m(j, i)) > tol) {
                throw DimensionError(std::string(what) + ": input is not symmetric at (" +
                                     std::to_string(i) + "," + std::to_string(j) + ")");
            }
        }
    }
}

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

constexpr std::size_t kBlock = 64;

}  // namespace

Matrix matmul(const Matrix& a, const Matrix& b, FlopLedger* ledger) {
    if (a.cols() != b.rows()) {
        throw DimensionError("matmul: inner dimensions differ, " + shape_of(a) + " * " +
                             shape_of(b));
    }
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    Matrix c(m, n);
    // ikj order with a k-panel of B kept hot; the inner loop is a contiguous axpy.
    for (std::size_t k0 = 0; k0 < k; k0 += kBlock) {
        const std::size_t k1 = std::min(k, k0 + kBlock);
        for (std::size_t i = 0; i < m; ++i) {
            double* ci = c.row(i).data();
            for (std::size_t kk = k0; kk < k1; ++kk) {
                const double aik = a(i, kk);
                const double* bk = b.row(kk).data();
                for (std::size_t j = 0; j < n; ++j) ci[j] += aik * bk[j];
            }
        }
    }
    if (ledger) {
        ledger->gemm_flops += 2ULL * m * k * n;
    }
    return c;
}

Matrix gram(const Matrix& m, FlopLedger* ledger) {
    const std::size_t k = m.rows(), d = m.cols();
    Matrix g(k, k);
    // Each row-pair dot is computed once and mirrored, the exact form of the
    // (G + G^T)/2 symmetrization. Tiled so a block of rows stays cached.
    for (std::size_t i0 = 0; i0 < k; i0 += kBlock) {
        const std::size_t i1 = std::min(k, i0 + kBlock);
        for (std::size_t j0 = 0; j0 <= i0; j0 += kBlock) {
            const std::size_t j1 = std::min(k, j0 + kBlock);
            for (std::size_t i = i0; i < i1; ++i) {
                const auto ri = m.row(i);
                for (std::size_t j = j0; j < std::min(j1, i + 1); ++j) {
                    const double v = dot(ri, m.row(j));
                    g(i, j) = v;
                    g(j, i) = v;
                }
            }
        }
    }
    if (ledger) {
        // Model count: one k x d by d x k GEMM, not the halved symmetric work.
        ledger->gemm_flops += 2ULL * k * k * d;
    }
    return g;
}

Matrix forward_trsm(const Matrix& t, const Matrix& b, FlopLedger* ledger) {
    require_square(t, "forward_trsm");
    if (t.rows() != b.rows()) {
        throw DimensionError("forward_trsm: factor is " + shape_of(t) + " but rhs is " +
                             shape_of(b));
    }
    const std::size_t k = t.rows(), d = b.cols();
    for (std::size_t i = 0; i < k; ++i) {
        if (std::abs(t(i, i)) < kTrsmDiagFloor) {
            throw SingularTriangularError(i, t(i, i));
        }
    }
    Matrix x = b;
    for (std::size_t i = 0; i < k; ++i) {
        double* xi = x.row(i).data();
        for (std::size_t l = 0; l < i; ++l) {
            const double til = t(i, l);
            if (til == 0.0) continue;
            const double* xl = x.row(l).data();
            for (std::size_t j = 0; j < d; ++j) xi[j] -= til * xl[j];
        }
        const double inv = 1.0 / t(i, i);
        for (std::size_t j = 0; j < d; ++j) xi[j] *= inv;
    }
    if (ledger) {
        const std::uint64_t madds = (static_cast<std::uint64_t>(k) * k * d + 1) / 2;
        ledger->trsm_flops += 2ULL * madds;
    }
    return x;
}

Matrix cholesky(const Matrix& g) {
    require_square(g, "cholesky");
    require_symmetric(g, "cholesky");
    const std::size_t n = g.rows();
    double max_diag = 0.0;
    for (std::size_t i = 0; i < n; ++i) max_diag = std::max(max_diag, g(i, i));
    const double floor = kCholPivotFloorScale * max_diag;

    Matrix l(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        double pivot = g(j, j);
        for (std::size_t p = 0; p < j; ++p) pivot -= l(j, p) * l(j, p);
        if (!(pivot > floor)) {
            throw NotSpdError(j, pivot);
        }
        const double ljj = std::sqrt(pivot);
        l(j, j) = ljj;
        const double inv = 1.0 / ljj;
        for (std::size_t i = j + 1; i < n; ++i) {
            double s = g(i, j);
            for (std::size_t p = 0; p < j; ++p) s -= l(i, p) * l(j, p);
            l(i, j) = s * inv;
        }
    }
    return l;
}

SymSpectrum jacobi_eig_sym(const Matrix& g, double tol) {
    require_square(g, "jacobi_eig_sym");
    require_symmetric(g, "jacobi_eig_sym");
    const std::size_t n = g.rows();
    if (n > 1024) {
        throw DimensionError("jacobi_eig_sym: dimension " + std::to_string(n) + " exceeds 1024");
    }
    Matrix a = g;
    // exact symmetry so the sweep sees one consistent off-diagonal
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const double v = 0.5 * (a(i, j) + a(j, i));
            a(i, j) = v;
            a(j, i) = v;
        }

    const double fro = frob_norm(a);
    constexpr int kMaxSweeps = 50;
    bool converged = false;
    for (int sweep = 0; sweep < kMaxSweeps && !converged; ++sweep) {
        double off2 = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) off2 += 2.0 * a(i, j) * a(i, j);
        if (std::sqrt(off2) <= tol * fro) {
            converged = true;
            break;
        }
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (apq == 0.0) continue;
                const double app = a(p, p);
                const double aqq = a(q, q);
                const double tau = (aqq - app) / (2.0 * apq);
                const double sign = tau >= 0.0 ? 1.0 : -1.0;
                const double t = sign / (std::abs(tau) + std::sqrt(1.0 + tau * tau));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = t * c;
                a(p, p) = app - t * apq;
                a(q, q) = aqq + t * apq;
                a(p, q) = 0.0;
                a(q, p) = 0.0;
                for (std::size_t r = 0; r < n; ++r) {
                    if (r == p || r == q) continue;
                    const double arp = a(r, p);
                    const double arq = a(r, q);
                    a(r, p) = c * arp - s * arq;
                    a(p, r) = a(r, p);
                    a(r, q) = s * arp + c * arq;
                    a(q, r) = a(r, q);
                }
            }
        }
    }
    if (!converged) {
        // final check after the last sweep
        double off2 = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) off2 += 2.0 * a(i, j) * a(i, j);
        if (std::sqrt(off2) > tol * fro) {
            throw IterationLimitError("jacobi_eig_sym: no convergence within 50 sweeps");
        }
    }

    SymSpectrum spec;
    spec.eigenvalues.resize(n);
    for (std::size_t i = 0; i < n; ++i) spec.eigenvalues[i] = a(i, i);
    std::sort(spec.eigenvalues.begin(), spec.eigenvalues.end());
    return spec;
}

ThinSvd svd_thin(const Matrix& m, double tol) {
    const std::size_t k = m.rows(), d = m.cols();
    if (k > d) {
        throw DimensionError("svd_thin: expected rows <= cols, got " + shape_of(m));
    }
    if (k > 1024) {
        throw DimensionError("svd_thin: dimension " + std::to_string(k) + " exceeds 1024");
    }

    // One-sided Jacobi on the rows of X (the columns of M^T), accumulating
    // the left rotations so that M = U X throughout.
    Matrix x = m;
    Matrix ut = Matrix::identity(k);  // rows are the columns of U
    std::vector<double> sq(k);        // cached squared row norms
    constexpr int kMaxSweeps = 50;
    bool converged = false;
    for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
        for (std::size_t i = 0; i < k; ++i) sq[i] = dot(x.row(i), x.row(i));
        bool rotated = false;
        for (std::size_t p = 0; p < k; ++p) {
            for (std::size_t q = p + 1; q < k; ++q) {
                const double alpha = sq[p];
                const double beta = sq[q];
                if (alpha == 0.0 || beta == 0.0) continue;
                const double gamma = dot(x.row(p), x.row(q));
                if (std::abs(gamma) <= tol * std::sqrt(alpha * beta)) continue;
                rotated = true;
                const double tau = (beta - alpha) / (2.0 * gamma);
                const double sign = tau >= 0.0 ? 1.0 : -1.0;
                const double t = sign / (std::abs(tau) + std::sqrt(1.0 + tau * tau));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                double* xp = x.row(p).data();
                double* xq = x.row(q).data();
                for (std::size_t j = 0; j < d; ++j) {
                    const double vp = xp[j];
                    const double vq = xq[j];
                    xp[j] = c * vp - s * vq;
                    xq[j] = s * vp + c * vq;
                }
                double* up = ut.row(p).data();
                double* uq = ut.row(q).data();
                for (std::size_t j = 0; j < k; ++j) {
                    const double vp = up[j];
                    const double vq = uq[j];
                    up[j] = c * vp - s * vq;
                    uq[j] = s * vp + c * vq;
                }
                sq[p] = alpha * c * c - 2.0 * c * s * gamma + beta * s * s;
                sq[q] = alpha * s * s + 2.0 * c * s * gamma + beta * c * c;
            }
        }
        if (!rotated) {
            converged = true;
            break;
        }
    }
    if (!converged) {
        throw IterationLimitError("svd_thin: no convergence within 50 sweeps");
    }

    std::vector<double> sigma(k);
    for (std::size_t i = 0; i < k; ++i) sigma[i] = std::sqrt(dot(x.row(i), x.row(i)));
    std::vector<std::size_t> order(k);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return sigma[a] > sigma[b]; });

    ThinSvd out;
    out.singular_values.resize(k);
    out.u = Matrix(k, k);
    out.v = Matrix(d, k);
    const double sigma_max = sigma[order[0]];
    const auto normalizable = [&](std::size_t src) {
        return sigma_max > 0.0 && sigma[src] > sigma_max * 1e-290;
    };
    for (std::size_t c = 0; c < k; ++c) {
        const std::size_t src = order[c];
        out.singular_values[c] = sigma[src];
        for (std::size_t r = 0; r < k; ++r) out.u(r, c) = ut(src, r);
        if (normalizable(src)) {
            const double inv = 1.0 / sigma[src];
            for (std::size_t r = 0; r < d; ++r) out.v(r, c) = x(src, r) * inv;
        }
        // vanished rows are filled below from the canonical basis
    }
    for (std::size_t c = 0; c < k; ++c) {
        if (normalizable(order[c])) continue;
        // complete an orthonormal column against everything already placed
        for (std::size_t cand = 0; cand < d; ++cand) {
            std::vector<double> e(d, 0.0);
            e[cand] = 1.0;
            for (std::size_t c2 = 0; c2 < k; ++c2) {
                if (c2 == c) continue;
                double proj = 0.0;
                for (std::size_t r = 0; r < d; ++r) proj += e[r] * out.v(r, c2);
                for (std::size_t r = 0; r < d; ++r) e[r] -= proj * out.v(r, c2);
            }
            double nrm = 0.0;
            for (double vv : e) nrm += vv * vv;
            nrm = std::sqrt(nrm);
            if (nrm > 0.5) {
                for (std::size_t r = 0; r < d; ++r) out.v(r, c) = e[r] / nrm;
                break;
            }
        }
    }
    return out;
}

std::vector<double> row_norms(const Matrix& m, FlopLedger* ledger) {
    std::vector<double> out(m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        out[i] = std::sqrt(dot(m.row(i), m.row(i)));
    }
    if (ledger) {
        ledger->reduction_flops += 2ULL * m.rows() * m.cols();
    }
    return out;
}

double frob_norm(const Matrix& m, FlopLedger* ledger) {
    double s = 0.0;
    for (double x : m.data()) s += x * x;
    if (ledger) {
        ledger->reduction_flops += 2ULL * m.rows() * m.cols();
    }
    return std::sqrt(s);
}

Matrix transpose(const Matrix& m) {
    Matrix t(m.cols(), m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) t(j, i) = m(i, j);
    return t;
}

Matrix tril(const Matrix& g) {
    Matrix t(g.rows(), g.cols());
    for (std::size_t i = 0; i < g.rows(); ++i) {
        const std::size_t jmax = std::min(i + 1, g.cols());
        for (std::size_t j = 0; j < jmax; ++j) t(i, j) = g(i, j);
    }
    return t;
}

}  // namespace mudkit
