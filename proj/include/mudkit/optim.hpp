// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mudkit/matrix.hpp"
#include "mudkit/whitening.hpp"

namespace mudkit::optim {

/// Named parameter tensor. Rank-2 tensors are matrix-rule candidates;
/// rank-1 tensors are stored as 1 x n matrices.
struct Tensor {
    std::string name;
    int ndim = 2;  // 1 or 2
    Matrix value;
};

enum class UpdateRule { kMatrix, kElementwise };

/// Hyperparameters attached to one parameter group. lr_scale multiplies the
/// schedule's lr_t, so groups share one schedule but may be rescaled.
struct GroupConfig {
    double lr_scale = 1.0;
    double weight_decay = 1e-2;
    double beta_momentum = 0.95;  // heavy-ball beta for matrix rules
    double beta1 = 0.9;           // Adam betas
    double beta2 = 0.95;
    double eps = 1e-8;
};

/// A disjoint set of parameters sharing one update rule and config.
/// Indices refer to the run's shared parameter vector.
struct ParamGroup {
    UpdateRule kind = UpdateRule::kElementwise;
    std::vector<std::size_t> param_indices;
    GroupConfig config;
};

/// Per-parameter buffers, allocated lazily at first use with the
/// parameter's shape, initialized to zero.
struct ParamState {
    Matrix momentum;  // heavy-ball buffer V
    Matrix m;         // Adam first moment
    Matrix v;         // Adam second moment
};

/// State for one training run. `step` is advanced exactly once per
/// optimizer step, before the group updates for that step run; the update
/// functions read it as the 1-based step index t.
struct OptimizerState {
    std::vector<ParamState> per_param;
    std::int64_t step = 0;

    explicit OptimizerState(std::size_t n_params = 0) : per_param(n_params) {}
};

/// Linear warmup to peak_lr followed by cosine decay to min_lr.
struct Schedule {
    double peak_lr = 1e-3;
    double min_lr = 1e-4;
    std::int64_t warmup_steps = 500;
    std::int64_t total_steps = 1;

    void validate() const;  // throws std::invalid_argument
};

/// lr at `step`: peak_lr*(step+1)/warmup during warmup (so step 0 is
/// nonzero), then min + (peak-min)*(1+cos(pi*progress))/2. Requires
/// 0 <= step <= total_steps.
double lr_at(const Schedule& s, std::int64_t step);

/// Scales all gradients by max_norm/g when the global l2 norm g exceeds
/// max_norm. Returns the pre-clip global norm.
double clip_global_norm(std::vector<Matrix>& grads, double max_norm);

/// Heavy-ball update V <- beta V + G in place, returning the lookahead
/// direction G + beta V.
Matrix matrix_direction(const Matrix& grad, Matrix& momentum, double beta);

/// Decoupled-weight-decay Adam over one group: updates moments, applies
/// bias correction with t = state.step, then
/// theta <- (1 - lr*wd) theta - lr * m_hat / (sqrt(v_hat) + eps).
void adamw_step(const ParamGroup& group, std::vector<Tensor>& params,
                const std::vector<Matrix>& grads, OptimizerState& state, double lr_t);

/// Matrix-rule step: lookahead direction, Newton-Schulz orthogonalization,
/// then W <- (1 - lr*wd) W - lr * s(W) * Q with s(W) = 0.2 sqrt(max(n,m)).
/// All params in the group must be rank 2.
void muon_step(const ParamGroup& group, std::vector<Tensor>& params,
               const std::vector<Matrix>& grads, OptimizerState& state, double lr_t,
               const WhitenConfig& cfg = {});

/// Matrix-rule step using triangular decorrelation with `passes` passes.
/// Rank-1 params fall back to a plain lookahead-momentum step (with the
/// same decoupled decay).
void mud_step(const ParamGroup& group, std::vector<Tensor>& params,
              const std::vector<Matrix>& grads, OptimizerState& state, double lr_t,
              int passes, double eps = 1e-8);

/// Splits named parameters into (matrix-rule, elementwise-rule) groups:
/// rank-2 tensors not matching any deny-list name prefix go to the matrix
/// group, everything else to the elementwise group. Throws on duplicate
/// names.
std::pair<ParamGroup, ParamGroup> partition_params(
    const std::vector<Tensor>& params, const std::vector<std::string>& deny_prefixes = {});

/// Driver owning groups and state for one run. kAdamW applies the
/// elementwise rule to every group; kMuon/kMud apply their matrix rule to
/// matrix groups and Adam to the rest. Must be stepped from one thread;
/// distinct runs are independent.
class Optimizer {
public:
    enum class Kind { kAdamW, kMuon, kMud };

    Optimizer(Kind kind, std::vector<ParamGroup> groups, std::size_t n_params,
              int mud_passes = 1);

    void step(std::vector<Tensor>& params, const std::vector<Matrix>& grads, double lr_t);

    const OptimizerState& state() const { return state_; }
    OptimizerState& state() { return state_; }

private:
    Kind kind_;
    std::vector<ParamGroup> groups_;
    OptimizerState state_;
    int mud_passes_;
};

}  // namespace mudkit::optim
