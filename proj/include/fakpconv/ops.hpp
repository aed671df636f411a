#pragma once

#include <span>
#include <vector>

#include "fakpconv/tensor.hpp"

namespace fakp {

// Differentiable ops. Each op computes its outputs eagerly and, when any
// input requires grad, records one backward node on the tape. Outputs of
// such ops have requires_grad set so downstream ops keep recording.
//
// There is no general broadcasting; the only broadcast-like pattern is
// add_rowvec (one vector added to every row), everything else wants exact
// shapes and explicit reshape.

// [m x k] * [k x p] -> [m x p]
Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);

// [m x n] -> [n x m]
Tensor transpose(Tape& tape, const Tensor& a);

// Elementwise; shapes must match exactly.
Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor scale(Tape& tape, const Tensor& a, double s);

// [n x c] + [c] broadcast over rows.
Tensor add_rowvec(Tape& tape, const Tensor& a, const Tensor& v);

Tensor reshape(Tape& tape, const Tensor& a, std::vector<std::size_t> new_shape);

// max(x, slope*x) elementwise; gradient at exactly 0 is defined as slope.
Tensor leaky_relu(Tape& tape, const Tensor& x, double slope);

// Per-channel running statistics for batch_norm. Fresh state normalizes
// with mean 0 / var 1 in eval mode. Running buffers hold the biased batch
// moments blended with `momentum`.
struct BatchNormState {
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double momentum = 0.1;

  void ensure(std::size_t channels);
};

// x:[n x c], gamma/beta:[c]. Training mode standardizes with batch moments
// (biased variance) and updates the running state; eval mode uses the
// running state. Throws DegenerateBatch for n == 1 in training mode.
Tensor batch_norm(Tape& tape, const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps, BatchNormState& state, bool training);

enum class ReduceKind { Sum, Mean, Max };

// Collapses one axis. Max routes the gradient to the lowest index among
// tied maxima.
Tensor reduce(Tape& tape, const Tensor& x, std::size_t axis, ReduceKind kind);

// Scalar sum of all entries.
Tensor sum_all(Tape& tape, const Tensor& x);

// Row selection from [n x c]; backward scatter-adds, so duplicate indices
// accumulate.
Tensor gather_rows(Tape& tape, const Tensor& x, std::span<const std::size_t> idx);

// Stacks [n_i x c] blocks (or [c] rows) vertically.
Tensor concat_rows(Tape& tape, std::span<const Tensor> parts);

// logits:[b x C]; mean negative log-likelihood with max-shifted log-sum-exp.
Tensor softmax_cross_entropy(Tape& tape, const Tensor& logits, std::span<const int> labels);

// SGD with momentum: v <- momentum*v + grad; p <- p - lr*v. Grads are
// zeroed after the step. Velocity buffers live in the state, aligned with
// the parameter order, and are created on first use.
struct SgdState {
  std::vector<std::vector<double>> velocity;
};

void sgd_step(std::span<Tensor> params, double lr, double momentum, SgdState& state);

}  // namespace fakp
