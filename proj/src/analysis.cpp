// SPDX-License-Identifier: Apache-2.0
#include "mudkit/analysis.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <stdexcept>

#include "mudkit/rng.hpp"

namespace mudkit::analysis {

namespace {

using Clock = std::chrono::steady_clock;

Matrix gaussian_rows_orthonormalized(std::size_t k, std::size_t d, GaussianStream& stream) {
    Matrix q = stream.matrix(k, d);
    // modified Gram-Schmidt, run twice per row
    for (std::size_t i = 0; i < k; ++i) {
        for (int attempt = 0;; ++attempt) {
            for (int round = 0; round < 2; ++round) {
                for (std::size_t p = 0; p < i; ++p) {
                    double proj = 0.0;
                    for (std::size_t j = 0; j < d; ++j) proj += q(i, j) * q(p, j);
                    for (std::size_t j = 0; j < d; ++j) q(i, j) -= proj * q(p, j);
                }
            }
            double nrm = 0.0;
            for (std::size_t j = 0; j < d; ++j) nrm += q(i, j) * q(i, j);
            nrm = std::sqrt(nrm);
            if (nrm > 1e-8) {
                for (std::size_t j = 0; j < d; ++j) q(i, j) /= nrm;
                break;
            }
            if (attempt >= 10) {
                throw NumericalError("random_row_orthonormal: degenerate draw");
            }
            for (std::size_t j = 0; j < d; ++j) q(i, j) = stream.next();
        }
    }
    return q;
}

struct Deviations {
    double linf;
    double l1;
    double fro;
};

Deviations deviation_from_identity(const Matrix& g) {
    const std::size_t n = g.rows();
    Deviations dev{0.0, 0.0, 0.0};
    std::vector<double> col_sums(n, 0.0);
    double fro2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double row_sum = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double e = std::abs(g(i, j) - (i == j ? 1.0 : 0.0));
            row_sum += e;
            col_sums[j] += e;
            fro2 += e * e;
        }
        dev.linf = std::max(dev.linf, row_sum);
    }
    dev.l1 = *std::max_element(col_sums.begin(), col_sums.end());
    dev.fro = std::sqrt(fro2);
    return dev;
}

double pick(const GramDeviation& row, TraceNorm norm) {
    switch (norm) {
        case TraceNorm::kLinf: return row.linf;
        case TraceNorm::kL1: return row.l1;
        case TraceNorm::kFro: return row.fro;
    }
    return row.linf;
}

}  // namespace

Matrix random_row_orthonormal(std::size_t k, std::size_t d, std::uint64_t seed) {
    if (k > d) throw DimensionError("random_row_orthonormal: need k <= d");
    GaussianStream stream(seed);
    return gaussian_rows_orthonormalized(k, d, stream);
}

Matrix random_with_spectrum(const SpectrumSpec& spec, std::uint64_t seed) {
    if (spec.k == 0 || spec.d == 0 || spec.k > spec.d) {
        throw std::invalid_argument("SpectrumSpec: need 1 <= k <= d");
    }
    const bool has_values = !spec.singular_values.empty();
    if (has_values == spec.condition_number.has_value()) {
        throw std::invalid_argument(
            "SpectrumSpec: provide exactly one of singular_values / condition_number");
    }

    GaussianStream stream(seed);
    std::vector<double> sigma;
    if (has_values) {
        if (spec.singular_values.size() != spec.k) {
            throw std::invalid_argument("SpectrumSpec: need k singular values");
        }
        sigma = spec.singular_values;
        for (std::size_t i = 0; i < sigma.size(); ++i) {
            if (!(sigma[i] > 0.0) || (i > 0 && sigma[i] > sigma[i - 1])) {
                throw std::invalid_argument(
                    "SpectrumSpec: singular values must be positive and descending");
            }
        }
    } else {
        const double cond = *spec.condition_number;
        if (!(cond >= 1.0)) throw std::invalid_argument("SpectrumSpec: condition_number < 1");
        sigma.assign(spec.k, 1.0);
        if (spec.k >= 2) {
            sigma.back() = 1.0 / cond;
            // pin the extremes, fill the interior log-uniformly
            for (std::size_t i = 1; i + 1 < spec.k; ++i) {
                sigma[i] = std::exp(stream.raw().next_in(std::log(1.0 / cond), 0.0));
            }
            std::sort(sigma.begin(), sigma.end(), std::greater<>());
        }
    }

    const Matrix u = gaussian_rows_orthonormalized(spec.k, spec.k, stream);
    Matrix vt = gaussian_rows_orthonormalized(spec.k, spec.d, stream);
    for (std::size_t i = 0; i < spec.k; ++i) {
        for (double& x : vt.row(i)) x *= sigma[i];
    }
    return matmul(u, vt);
}

Matrix random_unit_diag_spd(std::size_t k, double offdiag_scale, std::uint64_t seed) {
    if (k == 0) throw std::invalid_argument("random_unit_diag_spd: k must be >= 1");
    if (offdiag_scale < 0.0 ||
        (k > 1 && !(offdiag_scale < 1.0 / static_cast<double>(k - 1)))) {
        throw std::invalid_argument(
            "random_unit_diag_spd: need 0 <= offdiag_scale < 1/(k-1) for diagonal dominance");
    }
    SplitMix64 rng(seed);
    for (int attempt = 0; attempt < 10; ++attempt) {
        Matrix g = Matrix::identity(k);
        for (std::size_t i = 0; i < k; ++i) {
            for (std::size_t j = i + 1; j < k; ++j) {
                const double e = rng.next_in(-offdiag_scale, offdiag_scale);
                g(i, j) = e;
                g(j, i) = e;
            }
        }
        try {
            cholesky(g);  // SPD check
            return g;
        } catch (const NotSpdError&) {
            continue;
        }
    }
    throw NotSpdError(0, 0.0);
}

GramTrace trace_convergence(const Matrix& g0, int max_passes) {
    if (max_passes < 0) throw std::invalid_argument("trace_convergence: max_passes < 0");
    GramTrace trace;
    Matrix g = g0;
    Deviations dev = deviation_from_identity(g);
    trace.deviations.push_back({0, dev.linf, dev.l1, dev.fro});
    for (int pass = 1; pass <= max_passes; ++pass) {
        if (trace.deviations.back().linf < 1e-14) break;
        g = gram_map(g);
        dev = deviation_from_identity(g);
        trace.deviations.push_back({pass, dev.linf, dev.l1, dev.fro});
    }
    return trace;
}

std::optional<double> convergence_slope(const GramTrace& trace, TraceNorm norm) {
    constexpr double kLo = 1e-12;
    constexpr double kHi = 1e-1;
    std::vector<std::pair<double, double>> pts;
    for (std::size_t i = 0; i + 1 < trace.deviations.size(); ++i) {
        const double e0 = pick(trace.deviations[i], norm);
        const double e1 = pick(trace.deviations[i + 1], norm);
        if (e0 < kLo || e0 > kHi || e1 < kLo || e1 > kHi) continue;
        pts.emplace_back(std::log(e0), std::log(e1));
    }
    if (pts.size() < 2) return std::nullopt;
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    for (const auto& [x, y] : pts) {
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    const double n = static_cast<double>(pts.size());
    const double denom = n * sxx - sx * sx;
    if (denom == 0.0) return std::nullopt;
    return (n * sxy - sx * sy) / denom;
}

BenchRow bench(const std::string& op_name, const SpectrumSpec& spec, int repeats,
               std::uint64_t seed) {
    if (repeats < 3) throw std::invalid_argument("bench: repeats must be >= 3");

    std::function<WhitenReport(const Matrix&)> op;
    if (op_name == "polar") {
        op = [](const Matrix& m) { return polar_exact(m); };
    } else if (op_name == "cholqr") {
        op = [](const Matrix& m) { return cholqr_whiten(m); };
    } else if (op_name.rfind("mud", 0) == 0) {
        WhitenConfig cfg;
        cfg.passes = op_name.size() > 3 ? std::stoi(op_name.substr(3)) : 1;
        op = [cfg](const Matrix& m) { return mud_whiten(m, cfg); };
    } else if (op_name.rfind("muon", 0) == 0) {
        WhitenConfig cfg;
        cfg.ns_iters = op_name.size() > 4 ? std::stoi(op_name.substr(4)) : 5;
        op = [cfg](const Matrix& m) { return muon_ns(m, cfg); };
    } else {
        throw std::invalid_argument("bench: unknown op '" + op_name + "'");
    }

    const Matrix input = random_with_spectrum(spec, seed);
    WhitenReport report = op(input);  // warmup; also supplies the ledger
    std::vector<double> walls(static_cast<std::size_t>(repeats));
    for (double& w : walls) {
        const auto t0 = Clock::now();
        const WhitenReport r = op(input);
        w = std::chrono::duration<double>(Clock::now() - t0).count();
        (void)r;
    }
    std::sort(walls.begin(), walls.end());
    const double median = walls[walls.size() / 2];

    BenchRow row;
    row.op_name = op_name;
    row.k = std::min(spec.k, spec.d);
    row.d = std::max(spec.k, spec.d);
    row.flops = report.ledger.model_flops();
    row.wall_seconds = median;
    row.flops_per_second = median > 0.0 ? static_cast<double>(row.flops) / median : 0.0;
    return row;
}

}  // namespace mudkit::analysis
