// SPDX-License-Identifier: Apache-2.0
#include "mudkit/whitening.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>
#include <string>

namespace mudkit {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

void validate(const WhitenConfig& cfg) {
    if (cfg.passes < 1) throw std::invalid_argument("WhitenConfig: passes must be >= 1");
    if (cfg.ns_iters < 1) throw std::invalid_argument("WhitenConfig: ns_iters must be >= 1");
    if (!(cfg.eps > 0.0)) throw std::invalid_argument("WhitenConfig: eps must be > 0");
}

// Divides row i by max(norms[i], eps): unit rows pass through, zero rows stay zero.
void scale_rows_clamped(Matrix& m, const std::vector<double>& norms, double eps) {
    for (std::size_t i = 0; i < m.rows(); ++i) {
        const double inv = 1.0 / std::max(norms[i], eps);
        for (double& x : m.row(i)) x *= inv;
    }
}

// ||Q Q^T - I||_F without touching the caller's ledger.
double residual_small(const Matrix& q) {
    const Matrix g = gram(q);
    double s = 0.0;
    for (std::size_t i = 0; i < g.rows(); ++i) {
        for (std::size_t j = 0; j < g.cols(); ++j) {
            const double e = g(i, j) - (i == j ? 1.0 : 0.0);
            s += e * e;
        }
    }
    return std::sqrt(s);
}

WhitenReport finish(Matrix q, bool was_transposed, FlopLedger ledger, double wall) {
    WhitenReport report;
    report.ortho_residual = residual_small(q);
    report.output = was_transposed ? transpose(q) : std::move(q);
    report.ledger = ledger;
    report.wall_seconds = wall;
    return report;
}

void check_unit_diag(const Matrix& g, const char* what) {
    for (std::size_t i = 0; i < g.rows(); ++i) {
        if (std::abs(g(i, i) - 1.0) > 1e-8) {
            throw std::invalid_argument(std::string(what) + ": diagonal entry " +
                                        std::to_string(i) + " is not 1");
        }
    }
}

void check_symmetric(const Matrix& g, const char* what) {
    if (g.rows() != g.cols()) {
        throw DimensionError(std::string(what) + ": expected square input");
    }
    const double tol = 1e-10 * std::max(max_abs(g), 1.0);
    for (std::size_t i = 0; i < g.rows(); ++i) {
        for (std::size_t j = i + 1; j < g.cols(); ++j) {
            if (std::abs(g(i, j) - g(j, i)) > tol) {
                throw DimensionError(std::string(what) + ": input is not symmetric");
            }
        }
    }
}

// B = T^{-1} G T^{-T} via two forward solves, symmetrized.
Matrix congruence_by_tril_inverse(const Matrix& t, const Matrix& g, FlopLedger* ledger) {
    const Matrix y = forward_trsm(t, g, ledger);            // T^{-1} G
    Matrix b = transpose(forward_trsm(t, transpose(y), ledger));  // Y T^{-T}
    for (std::size_t i = 0; i < b.rows(); ++i) {
        for (std::size_t j = i + 1; j < b.cols(); ++j) {
            const double v = 0.5 * (b(i, j) + b(j, i));
            b(i, j) = v;
            b(j, i) = v;
        }
    }
    return b;
}

}  // namespace

ShapeNormalized shape_normalize(const Matrix& m) {
    if (m.rows() > m.cols()) {
        return {transpose(m), true};
    }
    return {m, false};
}

WhitenReport mud_whiten(const Matrix& m, const WhitenConfig& cfg) {
    validate(cfg);
    auto [q, transposed] = shape_normalize(m);
    FlopLedger ledger;
    const auto t0 = Clock::now();
    for (int pass = 0; pass < cfg.passes; ++pass) {
        scale_rows_clamped(q, row_norms(q, &ledger), cfg.eps);
        Matrix t = tril(gram(q, &ledger));
        for (std::size_t i = 0; i < t.rows(); ++i) {
            if (t(i, i) < cfg.eps) t(i, i) = 1.0;  // collapsed row: solve becomes a no-op
        }
        q = forward_trsm(t, q, &ledger);
        scale_rows_clamped(q, row_norms(q, &ledger), cfg.eps);
    }
    const double wall = seconds_since(t0);
    return finish(std::move(q), transposed, ledger, wall);
}

WhitenReport muon_ns(const Matrix& m, const WhitenConfig& cfg) {
    validate(cfg);
    auto [x, transposed] = shape_normalize(m);
    FlopLedger ledger;
    const auto t0 = Clock::now();
    const double scale = 1.0 / (frob_norm(x, &ledger) + cfg.eps);
    for (double& v : x.data()) v *= scale;
    const auto [a, b, c] = cfg.ns_coeffs;
    for (int j = 0; j < cfg.ns_iters; ++j) {
        const Matrix g = gram(x, &ledger);
        const Matrix gx = matmul(g, x, &ledger);
        const Matrix ggx = matmul(g, gx, &ledger);
        auto xd = x.data();
        auto gxd = gx.data();
        auto ggxd = ggx.data();
        for (std::size_t i = 0; i < xd.size(); ++i) {
            xd[i] = a * xd[i] + b * gxd[i] + c * ggxd[i];
        }
    }
    const double wall = seconds_since(t0);
    return finish(std::move(x), transposed, ledger, wall);
}

WhitenReport polar_exact(const Matrix& m) {
    auto [x, transposed] = shape_normalize(m);
    FlopLedger ledger;
    const auto t0 = Clock::now();
    const ThinSvd svd = svd_thin(x, 1e-12);
    const double smax = svd.singular_values.front();
    const double smin = svd.singular_values.back();
    if (!(smin > 1e-10 * smax)) {
        throw RankDeficientError(smax > 0.0 ? smin / smax : 0.0);
    }
    Matrix q = matmul(svd.u, transpose(svd.v), &ledger);
    const double wall = seconds_since(t0);
    return finish(std::move(q), transposed, ledger, wall);
}

WhitenReport cholqr_whiten(const Matrix& m) {
    FlopLedger ledger;
    const auto t0 = Clock::now();
    const Matrix g = gram(m, &ledger);
    const Matrix l = cholesky(g);
    Matrix q = forward_trsm(l, m, &ledger);
    const double wall = seconds_since(t0);
    // the Gram here is over rows, so rows(m) <= cols(m) whenever cholesky succeeded
    return finish(std::move(q), false, ledger, wall);
}

Matrix corr_normalize(const Matrix& g) {
    check_symmetric(g, "corr_normalize");
    const std::size_t n = g.rows();
    std::vector<double> inv_sqrt(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (!(g(i, i) > 0.0)) {
            throw NotSpdError(i, g(i, i));
        }
        inv_sqrt[i] = 1.0 / std::sqrt(g(i, i));
    }
    Matrix out(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        out(i, i) = 1.0;  // g_ii / g_ii, exactly
        for (std::size_t j = i + 1; j < n; ++j) {
            const double v = g(i, j) * (inv_sqrt[i] * inv_sqrt[j]);
            out(i, j) = v;  // mirrored so the output is exactly symmetric
            out(j, i) = v;
        }
    }
    return out;
}

Matrix gram_map(const Matrix& g) {
    check_symmetric(g, "gram_map");
    check_unit_diag(g, "gram_map");
    const Matrix t = tril(g);
    const Matrix b = congruence_by_tril_inverse(t, g, nullptr);
    return corr_normalize(b);
}

std::pair<SymSpectrum, SymSpectrum> sgs_preconditioned_spectrum(const Matrix& g) {
    check_symmetric(g, "sgs_preconditioned_spectrum");
    check_unit_diag(g, "sgs_preconditioned_spectrum");
    const Matrix t = tril(g);
    const Matrix b = congruence_by_tril_inverse(t, g, nullptr);
    SymSpectrum direct = jacobi_eig_sym(b, 1e-13);

    // independent route: G x = lambda (T T^T) x reduced by a fresh Cholesky
    // of the explicitly formed preconditioner
    const Matrix precond = matmul(t, transpose(t));
    const Matrix l = cholesky(precond);
    const Matrix reduced = congruence_by_tril_inverse(l, g, nullptr);
    SymSpectrum generalized = jacobi_eig_sym(reduced, 1e-13);

    return {std::move(direct), std::move(generalized)};
}

double ortho_residual(const Matrix& q) {
    auto [s, transposed] = shape_normalize(q);
    (void)transposed;
    return residual_small(s);
}

}  // namespace mudkit
