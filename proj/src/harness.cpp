// SPDX-License-Identifier: Apache-2.0
#include "mudkit/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "mudkit/linalg.hpp"

namespace mudkit::harness {

namespace {

using Clock = std::chrono::steady_clock;

// Keeps the target reachable by bounded-update optimizers within a few
// thousand steps at the default learning rate.
constexpr double kMatRegTargetScale = 0.05;

Matrix row_sums(const Matrix& m) {
    Matrix out(m.rows(), 1);
    for (std::size_t i = 0; i < m.rows(); ++i) {
        double s = 0.0;
        for (double x : m.row(i)) s += x;
        out(i, 0) = s;
    }
    return out;
}

}  // namespace

MatRegTask::MatRegTask(std::uint64_t seed, std::size_t n, std::size_t m, std::size_t batch)
    : n_(n), m_(m), batch_(batch), stream_(seed) {
    if (n < 2 || m < 2) throw std::invalid_argument("MatRegTask: n and m must be >= 2");
    if (batch == 0) throw std::invalid_argument("MatRegTask: batch must be >= 1");
    target_ = stream_.matrix(n, m);
    for (double& x : target_.data()) x *= kMatRegTargetScale;
    params_.push_back({"w", 2, Matrix(n, m)});
    next_batch();
}

void MatRegTask::next_batch() { batch_x_ = stream_.matrix(m_, batch_); }

double MatRegTask::loss_and_grads(std::vector<Matrix>* grads) const {
    const Matrix& w = params_[0].value;
    const Matrix delta = w - target_;
    const Matrix r = matmul(delta, batch_x_);  // (W - W*) X, n x batch
    double sumsq = 0.0;
    for (double x : r.data()) sumsq += x * x;
    const double inv_batch = 1.0 / static_cast<double>(batch_);
    if (grads) {
        grads->clear();
        grads->push_back(inv_batch * matmul(r, transpose(batch_x_)));
    }
    return 0.5 * inv_batch * sumsq;
}

MlpTask::MlpTask(std::uint64_t seed, std::size_t in_dim, std::size_t hidden,
                 std::size_t classes, std::size_t batch)
    : in_dim_(in_dim), hidden_(hidden), classes_(classes), batch_(batch), stream_(seed) {
    if (classes < 2) throw std::invalid_argument("MlpTask: classes must be >= 2");
    if (batch == 0) throw std::invalid_argument("MlpTask: batch must be >= 1");
    class_means_ = stream_.matrix(classes, in_dim);
    for (double& x : class_means_.data()) x *= 2.0;

    Matrix w1 = stream_.matrix(hidden, in_dim);
    const double s1 = 1.0 / std::sqrt(static_cast<double>(in_dim));
    for (double& x : w1.data()) x *= s1;
    Matrix w2 = stream_.matrix(classes, hidden);
    const double s2 = 1.0 / std::sqrt(static_cast<double>(hidden));
    for (double& x : w2.data()) x *= s2;

    params_.push_back({"w1", 2, std::move(w1)});
    params_.push_back({"b1", 1, Matrix(1, hidden)});
    params_.push_back({"w2", 2, std::move(w2)});
    params_.push_back({"b2", 1, Matrix(1, classes)});
    next_batch();
}

void MlpTask::next_batch() {
    batch_x_ = Matrix(in_dim_, batch_);
    batch_y_.resize(batch_);
    for (std::size_t j = 0; j < batch_; ++j) {
        const auto cls = static_cast<std::size_t>(stream_.raw().next_below(classes_));
        batch_y_[j] = cls;
        for (std::size_t i = 0; i < in_dim_; ++i) {
            batch_x_(i, j) = class_means_(cls, i) + stream_.next();
        }
    }
}

double MlpTask::loss_and_grads(std::vector<Matrix>* grads) const {
    const Matrix& w1 = params_[0].value;
    const Matrix& b1 = params_[1].value;
    const Matrix& w2 = params_[2].value;
    const Matrix& b2 = params_[3].value;

    Matrix z1 = matmul(w1, batch_x_);  // hidden x batch
    for (std::size_t i = 0; i < hidden_; ++i)
        for (std::size_t j = 0; j < batch_; ++j) z1(i, j) += b1(0, i);
    Matrix a1 = z1;
    for (double& x : a1.data()) x = std::tanh(x);

    Matrix logits = matmul(w2, a1);  // classes x batch
    for (std::size_t i = 0; i < classes_; ++i)
        for (std::size_t j = 0; j < batch_; ++j) logits(i, j) += b2(0, i);

    // column-wise softmax cross-entropy, max-shifted
    const double inv_batch = 1.0 / static_cast<double>(batch_);
    Matrix dlogits(classes_, batch_);
    double loss = 0.0;
    for (std::size_t j = 0; j < batch_; ++j) {
        double mx = logits(0, j);
        for (std::size_t i = 1; i < classes_; ++i) mx = std::max(mx, logits(i, j));
        double z = 0.0;
        for (std::size_t i = 0; i < classes_; ++i) z += std::exp(logits(i, j) - mx);
        const double log_z = std::log(z) + mx;
        const auto y = batch_y_[j];
        loss += (log_z - logits(y, j)) * inv_batch;
        for (std::size_t i = 0; i < classes_; ++i) {
            const double p = std::exp(logits(i, j) - log_z);
            dlogits(i, j) = (p - (i == y ? 1.0 : 0.0)) * inv_batch;
        }
    }
    if (grads) {
        Matrix gw2 = matmul(dlogits, transpose(a1));
        Matrix gb2 = transpose(row_sums(dlogits));
        Matrix da1 = matmul(transpose(w2), dlogits);
        Matrix dz1 = da1;
        for (std::size_t i = 0; i < hidden_; ++i)
            for (std::size_t j = 0; j < batch_; ++j) dz1(i, j) *= 1.0 - a1(i, j) * a1(i, j);
        Matrix gw1 = matmul(dz1, transpose(batch_x_));
        Matrix gb1 = transpose(row_sums(dz1));
        grads->clear();
        grads->push_back(std::move(gw1));
        grads->push_back(std::move(gb1));
        grads->push_back(std::move(gw2));
        grads->push_back(std::move(gb2));
    }
    return loss;
}

double fd_gradient_check(Task& task, double h, std::size_t min_coords, std::uint64_t seed) {
    if (h < 1e-7 || h > 1e-3) {
        throw std::invalid_argument("fd_gradient_check: h must lie in [1e-7, 1e-3]");
    }
    std::vector<Matrix> analytic;
    task.loss_and_grads(&analytic);

    double grad_scale = 0.0;
    std::size_t total = 0;
    for (const Matrix& g : analytic) {
        grad_scale = std::max(grad_scale, max_abs(g));
        total += g.size();
    }
    const double denom = std::max(grad_scale, 1e-12);

    // flat coordinate list over all params
    std::vector<std::pair<std::size_t, std::size_t>> coords;
    coords.reserve(total);
    for (std::size_t p = 0; p < analytic.size(); ++p) {
        for (std::size_t i = 0; i < analytic[p].size(); ++i) coords.emplace_back(p, i);
    }
    SplitMix64 rng(seed);
    if (coords.size() > min_coords) {
        for (std::size_t i = 0; i < min_coords; ++i) {
            const std::size_t j = i + rng.next_below(coords.size() - i);
            std::swap(coords[i], coords[j]);
        }
        coords.resize(min_coords);
    }

    double worst = 0.0;
    auto& params = task.params();
    for (const auto& [p, i] : coords) {
        double& x = params[p].value.data()[i];
        const double saved = x;
        x = saved + h;
        const double f_plus = task.loss_and_grads(nullptr);
        x = saved - h;
        const double f_minus = task.loss_and_grads(nullptr);
        x = saved;
        const double fd = (f_plus - f_minus) / (2.0 * h);
        worst = std::max(worst, std::abs(fd - analytic[p].data()[i]) / denom);
    }
    return worst;
}

std::unique_ptr<Task> make_task(const TrainConfig& cfg) {
    if (cfg.task == TrainConfig::TaskKind::kMatReg) {
        return std::make_unique<MatRegTask>(cfg.seed, cfg.matreg_n, cfg.matreg_m, cfg.batch);
    }
    return std::make_unique<MlpTask>(cfg.seed, cfg.mlp_in, cfg.mlp_hidden, cfg.mlp_classes,
                                     cfg.batch);
}

TrainResult train(const TrainConfig& cfg) {
    TrainResult result;
    if (cfg.steps <= 0) return result;

    optim::Schedule schedule{cfg.lr, cfg.min_lr, cfg.warmup_steps, cfg.steps};
    schedule.validate();

    auto task = make_task(cfg);
    auto [matrix_group, elementwise_group] = optim::partition_params(task->params());
    for (optim::ParamGroup* g : {&matrix_group, &elementwise_group}) {
        g->config.weight_decay = cfg.weight_decay;
        g->config.beta1 = cfg.beta1;
        g->config.beta2 = cfg.beta2;
        g->config.beta_momentum = cfg.beta_momentum;
    }
    std::vector<optim::ParamGroup> groups{std::move(matrix_group), std::move(elementwise_group)};
    optim::Optimizer opt(cfg.optimizer, std::move(groups), task->params().size(),
                         cfg.mud_passes);

    result.records.reserve(static_cast<std::size_t>(cfg.steps));
    std::vector<Matrix> grads;
    const auto t0 = Clock::now();
    for (std::int64_t step = 0; step < cfg.steps; ++step) {
        if (step > 0) task->next_batch();  // constructor sampled the first batch
        const double loss = task->loss_and_grads(&grads);
        if (!std::isfinite(loss)) {
            result.diverged = true;
            result.diverged_step = step;
            break;
        }
        const double grad_norm = optim::clip_global_norm(grads, cfg.clip_norm);
        const double lr_t = optim::lr_at(schedule, step);
        opt.step(task->params(), grads, lr_t);
        const double elapsed = std::chrono::duration<double>(Clock::now() - t0).count();
        result.records.push_back({step, loss, lr_t, grad_norm, elapsed});
    }
    return result;
}

}  // namespace mudkit::harness
