// SPDX-License-Identifier: Apache-2.0
#include "mudkit/optim.hpp"

#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace mudkit::optim {

namespace {

Matrix& ensure_like(Matrix& buffer, const Matrix& ref) {
    if (!buffer.same_shape(ref)) {
        buffer = Matrix(ref.rows(), ref.cols());
    }
    return buffer;
}

double update_scale(const Matrix& w) {
    return 0.2 * std::sqrt(static_cast<double>(std::max(w.rows(), w.cols())));
}

void require_grads_match(const std::vector<Tensor>& params, const std::vector<Matrix>& grads,
                         const ParamGroup& group) {
    for (std::size_t idx : group.param_indices) {
        if (idx >= params.size() || idx >= grads.size()) {
            throw std::invalid_argument("optimizer step: parameter index out of range");
        }
        if (!params[idx].value.same_shape(grads[idx])) {
            throw std::invalid_argument("optimizer step: gradient shape mismatch for '" +
                                        params[idx].name + "'");
        }
    }
}

}  // namespace

void Schedule::validate() const {
    if (!(peak_lr > 0.0)) throw std::invalid_argument("Schedule: peak_lr must be > 0");
    if (min_lr < 0.0) throw std::invalid_argument("Schedule: min_lr must be >= 0");
    if (min_lr > peak_lr) throw std::invalid_argument("Schedule: min_lr must be <= peak_lr");
    if (warmup_steps < 0) throw std::invalid_argument("Schedule: warmup_steps must be >= 0");
    if (total_steps <= 0) throw std::invalid_argument("Schedule: total_steps must be > 0");
    if (warmup_steps >= total_steps) {
        throw std::invalid_argument("Schedule: warmup_steps must be < total_steps");
    }
}

double lr_at(const Schedule& s, std::int64_t step) {
    s.validate();
    if (step < 0 || step > s.total_steps) {
        throw std::out_of_range("lr_at: step " + std::to_string(step) + " outside [0, " +
                                std::to_string(s.total_steps) + "]");
    }
    if (step < s.warmup_steps) {
        return s.peak_lr * static_cast<double>(step + 1) / static_cast<double>(s.warmup_steps);
    }
    const double progress = static_cast<double>(step - s.warmup_steps) /
                            static_cast<double>(s.total_steps - s.warmup_steps);
    return s.min_lr + 0.5 * (s.peak_lr - s.min_lr) * (1.0 + std::cos(std::numbers::pi * progress));
}

double clip_global_norm(std::vector<Matrix>& grads, double max_norm) {
    if (!(max_norm > 0.0)) throw std::invalid_argument("clip_global_norm: max_norm must be > 0");
    double sumsq = 0.0;
    for (const Matrix& g : grads) {
        for (double x : g.data()) sumsq += x * x;
    }
    const double norm = std::sqrt(sumsq);
    if (norm > max_norm) {
        const double scale = max_norm / norm;
        for (Matrix& g : grads) {
            for (double& x : g.data()) x *= scale;
        }
    }
    return norm;
}

Matrix matrix_direction(const Matrix& grad, Matrix& momentum, double beta) {
    ensure_like(momentum, grad);
    auto vd = momentum.data();
    auto gd = grad.data();
    for (std::size_t i = 0; i < vd.size(); ++i) vd[i] = beta * vd[i] + gd[i];
    Matrix dir = grad;
    auto dd = dir.data();
    for (std::size_t i = 0; i < dd.size(); ++i) dd[i] += beta * vd[i];
    return dir;
}

void adamw_step(const ParamGroup& group, std::vector<Tensor>& params,
                const std::vector<Matrix>& grads, OptimizerState& state, double lr_t) {
    require_grads_match(params, grads, group);
    const GroupConfig& c = group.config;
    const double lr = lr_t * c.lr_scale;
    const auto t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(c.beta1, t);
    const double bc2 = 1.0 - std::pow(c.beta2, t);
    for (std::size_t idx : group.param_indices) {
        Matrix& theta = params[idx].value;
        const Matrix& g = grads[idx];
        ParamState& ps = state.per_param[idx];
        ensure_like(ps.m, theta);
        ensure_like(ps.v, theta);
        auto th = theta.data();
        auto gd = g.data();
        auto md = ps.m.data();
        auto vd = ps.v.data();
        for (std::size_t i = 0; i < th.size(); ++i) {
            md[i] = c.beta1 * md[i] + (1.0 - c.beta1) * gd[i];
            vd[i] = c.beta2 * vd[i] + (1.0 - c.beta2) * gd[i] * gd[i];
            const double m_hat = md[i] / bc1;
            const double v_hat = vd[i] / bc2;
            th[i] = (1.0 - lr * c.weight_decay) * th[i] - lr * m_hat / (std::sqrt(v_hat) + c.eps);
        }
    }
}

void muon_step(const ParamGroup& group, std::vector<Tensor>& params,
               const std::vector<Matrix>& grads, OptimizerState& state, double lr_t,
               const WhitenConfig& cfg) {
    require_grads_match(params, grads, group);
    const GroupConfig& c = group.config;
    const double lr = lr_t * c.lr_scale;
    for (std::size_t idx : group.param_indices) {
        if (params[idx].ndim != 2) {
            throw std::invalid_argument("muon_step: parameter '" + params[idx].name +
                                        "' is not rank 2");
        }
        Matrix& w = params[idx].value;
        ParamState& ps = state.per_param[idx];
        ensure_like(ps.momentum, w);
        const Matrix dir = matrix_direction(grads[idx], ps.momentum, c.beta_momentum);
        const Matrix q = muon_ns(dir, cfg).output;
        const double s = update_scale(w);
        auto wd = w.data();
        auto qd = q.data();
        for (std::size_t i = 0; i < wd.size(); ++i) {
            wd[i] = (1.0 - lr * c.weight_decay) * wd[i] - lr * s * qd[i];
        }
    }
}

void mud_step(const ParamGroup& group, std::vector<Tensor>& params,
              const std::vector<Matrix>& grads, OptimizerState& state, double lr_t, int passes,
              double eps) {
    require_grads_match(params, grads, group);
    const GroupConfig& c = group.config;
    const double lr = lr_t * c.lr_scale;
    WhitenConfig cfg;
    cfg.passes = passes;
    cfg.eps = eps;
    for (std::size_t idx : group.param_indices) {
        Tensor& p = params[idx];
        ParamState& ps = state.per_param[idx];
        ensure_like(ps.momentum, p.value);
        const Matrix dir = matrix_direction(grads[idx], ps.momentum, c.beta_momentum);
        auto wd = p.value.data();
        const double decay = 1.0 - lr * c.weight_decay;
        if (p.ndim == 2) {
            const Matrix q = mud_whiten(dir, cfg).output;
            const double s = update_scale(p.value);
            auto qd = q.data();
            for (std::size_t i = 0; i < wd.size(); ++i) wd[i] = decay * wd[i] - lr * s * qd[i];
        } else {
            // non-matrix fallback: plain lookahead-momentum step
            auto dd = dir.data();
            for (std::size_t i = 0; i < wd.size(); ++i) wd[i] = decay * wd[i] - lr * dd[i];
        }
    }
}

std::pair<ParamGroup, ParamGroup> partition_params(const std::vector<Tensor>& params,
                                                   const std::vector<std::string>& deny_prefixes) {
    std::unordered_set<std::string> seen;
    ParamGroup matrix_group;
    matrix_group.kind = UpdateRule::kMatrix;
    ParamGroup elementwise_group;
    elementwise_group.kind = UpdateRule::kElementwise;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const Tensor& p = params[i];
        if (!seen.insert(p.name).second) {
            throw std::invalid_argument("partition_params: duplicate parameter name '" + p.name +
                                        "'");
        }
        bool denied = false;
        for (const std::string& prefix : deny_prefixes) {
            if (p.name.rfind(prefix, 0) == 0) {
                denied = true;
                break;
            }
        }
        if (p.ndim == 2 && !denied) {
            matrix_group.param_indices.push_back(i);
        } else {
            elementwise_group.param_indices.push_back(i);
        }
    }
    return {std::move(matrix_group), std::move(elementwise_group)};
}

Optimizer::Optimizer(Kind kind, std::vector<ParamGroup> groups, std::size_t n_params,
                     int mud_passes)
    : kind_(kind), groups_(std::move(groups)), state_(n_params), mud_passes_(mud_passes) {
    if (mud_passes_ < 1) throw std::invalid_argument("Optimizer: mud_passes must be >= 1");
}

void Optimizer::step(std::vector<Tensor>& params, const std::vector<Matrix>& grads,
                     double lr_t) {
    state_.step += 1;
    for (const ParamGroup& group : groups_) {
        if (kind_ == Kind::kAdamW || group.kind == UpdateRule::kElementwise) {
            adamw_step(group, params, grads, state_, lr_t);
        } else if (kind_ == Kind::kMuon) {
            muon_step(group, params, grads, state_, lr_t);
        } else {
            mud_step(group, params, grads, state_, lr_t, mud_passes_);
        }
    }
}

}  // namespace mudkit::optim
