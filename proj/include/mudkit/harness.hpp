// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "mudkit/optim.hpp"
#include "mudkit/rng.hpp"

namespace mudkit::harness {

/// One log row per training step. elapsed_seconds is wall-clock time since
/// the start of the run and is the only non-deterministic field.
struct TrainRecord {
    std::int64_t step = 0;
    double loss = 0.0;
    double lr = 0.0;
    double grad_norm_preclip = 0.0;
    double elapsed_seconds = 0.0;
};

/// A training task with analytic gradients. next_batch() advances the data
/// stream; loss_and_grads() is a pure function of (params, current batch)
/// and fills per-parameter gradients in parameter order when grads != null.
class Task {
public:
    virtual ~Task() = default;
    virtual void next_batch() = 0;
    virtual double loss_and_grads(std::vector<Matrix>* grads) const = 0;

    std::vector<optim::Tensor>& params() { return params_; }
    const std::vector<optim::Tensor>& params() const { return params_; }

protected:
    std::vector<optim::Tensor> params_;
};

/// Matrix regression: hidden target W* (n x m, entries 0.05 * N(0,1)),
/// parameter W initialized to zero. Each batch draws X (m x batch) of
/// standard normals; loss = ||W X - W* X||_F^2 / (2 batch) and
/// grad = (W - W*) X X^T / batch. Convex in W; loss is zero iff W = W*
/// on full-rank batches.
class MatRegTask final : public Task {
public:
    MatRegTask(std::uint64_t seed, std::size_t n, std::size_t m, std::size_t batch);

    void next_batch() override;
    double loss_and_grads(std::vector<Matrix>* grads) const override;

    const Matrix& target() const { return target_; }
    const Matrix& batch_x() const { return batch_x_; }

private:
    std::size_t n_, m_, batch_;
    Matrix target_;
    Matrix batch_x_;
    GaussianStream stream_;
};

/// Two-layer tanh MLP with softmax cross-entropy on Gaussian-blob class
/// data. Parameters: w1 (hidden x in), b1, w2 (classes x hidden), b2, so
/// both weights are matrix-rule and both biases elementwise-rule.
class MlpTask final : public Task {
public:
    MlpTask(std::uint64_t seed, std::size_t in_dim, std::size_t hidden,
            std::size_t classes, std::size_t batch);

    void next_batch() override;
    double loss_and_grads(std::vector<Matrix>* grads) const override;

    std::size_t classes() const { return classes_; }

private:
    std::size_t in_dim_, hidden_, classes_, batch_;
    Matrix class_means_;  // classes x in
    Matrix batch_x_;      // in x batch
    std::vector<std::size_t> batch_y_;
    GaussianStream stream_;
};

/// Central-difference check of the task's analytic gradient at its current
/// parameters and batch, over a random subset of at least min_coords
/// coordinates (all coordinates when there are fewer). Returns the largest
/// |fd - analytic| scaled by the gradient's max magnitude. Requires h in
/// [1e-7, 1e-3].
double fd_gradient_check(Task& task, double h, std::size_t min_coords = 64,
                         std::uint64_t seed = 0x5eed);

struct TrainConfig {
    enum class TaskKind { kMatReg, kMlp };

    TaskKind task = TaskKind::kMatReg;
    optim::Optimizer::Kind optimizer = optim::Optimizer::Kind::kAdamW;
    int mud_passes = 1;
    std::int64_t steps = 2000;
    std::size_t batch = 32;
    std::uint64_t seed = 0;

    double lr = 1e-3;
    double min_lr = 1e-4;  // 0.1 * lr under the defaults
    std::int64_t warmup_steps = 500;
    double weight_decay = 1e-2;
    double beta1 = 0.9;
    double beta2 = 0.95;
    double beta_momentum = 0.95;
    double clip_norm = 1.0;

    std::size_t matreg_n = 32;
    std::size_t matreg_m = 32;
    std::size_t mlp_in = 16;
    std::size_t mlp_hidden = 32;
    std::size_t mlp_classes = 4;
};

/// A non-finite loss aborts the run with diverged status; the records up to
/// the offending step are kept.
struct TrainResult {
    std::vector<TrainRecord> records;
    bool diverged = false;
    std::int64_t diverged_step = -1;
};

std::unique_ptr<Task> make_task(const TrainConfig& cfg);

/// Runs the training loop: sample batch, evaluate loss/grads, clip the
/// global gradient norm, look up the scheduled lr, apply the optimizer,
/// append a record. Deterministic for a fixed config and seed (except
/// elapsed_seconds, which is wall-clock).
TrainResult train(const TrainConfig& cfg);

}  // namespace mudkit::harness
