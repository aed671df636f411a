#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "fakpconv/errors.hpp"

namespace fakp {

// Dense row-major array of f64 with an optional gradient buffer.
//
// A Tensor is a cheap shared handle. Values are fixed once an op has
// produced them; the grad buffer is the only part mutated afterwards
// (by Tape::backward and the optimizer). Everything runs in 64-bit
// floats: the symmetry checks this library exists for need ~1e-9
// agreement through deep compositions.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<std::size_t> shape, bool requires_grad = false);
  static Tensor full(std::vector<std::size_t> shape, double value, bool requires_grad = false);
  static Tensor from_values(std::vector<std::size_t> shape, std::vector<double> values,
                            bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const std::vector<std::size_t>& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t size() const { return impl_->values.size(); }
  std::size_t dim(std::size_t axis) const;

  std::span<const double> values() const { return impl_->values; }
  // Mutable access is for leaf initialization and optimizer updates only;
  // never write to a tensor already recorded on a live tape.
  std::span<double> values_mut() { return impl_->values; }

  double at(std::size_t flat) const { return impl_->values[flat]; }
  double at(std::size_t row, std::size_t col) const;

  bool requires_grad() const { return impl_->requires_grad; }
  bool has_grad() const { return impl_ && !impl_->grad.empty(); }
  std::span<const double> grad() const;
  // Allocates a zeroed buffer on first use. Only meaningful on tensors
  // with requires_grad.
  std::span<double> grad_mut();
  void zero_grad();

  // Handle identity (same underlying storage).
  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  struct Impl {
    std::vector<std::size_t> shape;
    std::vector<double> values;
    bool requires_grad = false;
    std::vector<double> grad;
  };
  std::shared_ptr<Impl> impl_;
};

// Reverse-mode tape. Ops append one node per call during the forward pass;
// backward() replays the nodes exactly once in reverse insertion order.
// The graph is acyclic by construction (parents are recorded before
// children). A tape is single-owner and single-threaded; independent tapes
// share nothing except parameter tensors, whose grad buffers they may both
// accumulate into.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Registers the backward step of one recorded op.
  void record(std::function<void()> backprop) { nodes_.push_back(std::move(backprop)); }

  // Seeds d(loss)/d(loss) = 1 and propagates through the tape in reverse.
  // The loss must be a scalar recorded on this tape. A tape may be run
  // backward once; a second call throws TapeConsumed.
  void backward(const Tensor& loss);

  std::size_t node_count() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }

 private:
  std::vector<std::function<void()>> nodes_;
  bool consumed_ = false;
};

std::size_t shape_size(const std::vector<std::size_t>& shape);

}  // namespace fakp
