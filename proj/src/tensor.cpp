#include "fakpconv/tensor.hpp"

#include <cmath>
#include <string>
#include <utility>

namespace fakp {

std::size_t shape_size(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t s : shape) n *= s;
  return n;
}

Tensor Tensor::zeros(std::vector<std::size_t> shape, bool requires_grad) {
  Tensor t;
  t.impl_ = std::make_shared<Impl>();
  t.impl_->values.assign(shape_size(shape), 0.0);
  t.impl_->shape = std::move(shape);
  t.impl_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::full(std::vector<std::size_t> shape, double value, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  for (double& v : t.impl_->values) v = value;
  return t;
}

Tensor Tensor::from_values(std::vector<std::size_t> shape, std::vector<double> values,
                           bool requires_grad) {
  if (shape_size(shape) != values.size())
    throw ShapeMismatch("from_values: shape product " + std::to_string(shape_size(shape)) +
                        " != value count " + std::to_string(values.size()));
  Tensor t;
  t.impl_ = std::make_shared<Impl>();
  t.impl_->shape = std::move(shape);
  t.impl_->values = std::move(values);
  t.impl_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_values({}, {value}, requires_grad);
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= rank()) throw ShapeMismatch("dim: axis out of range");
  return impl_->shape[axis];
}

double Tensor::at(std::size_t row, std::size_t col) const {
  return impl_->values[row * impl_->shape[1] + col];
}

std::span<const double> Tensor::grad() const {
  if (!impl_ || impl_->grad.empty())
    throw MissingGrad("grad requested but never populated");
  return impl_->grad;
}

std::span<double> Tensor::grad_mut() {
  if (impl_->grad.empty()) impl_->grad.assign(impl_->values.size(), 0.0);
  return impl_->grad;
}

void Tensor::zero_grad() {
  if (impl_) for (double& g : impl_->grad) g = 0.0;
}

void Tape::backward(const Tensor& loss) {
  if (consumed_) throw TapeConsumed("backward already ran on this tape");
  if (!loss.defined() || loss.size() != 1 || !loss.shape().empty())
    throw NotScalar("backward requires a scalar loss");
  consumed_ = true;
  Tensor seed = loss;
  seed.grad_mut()[0] = 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
}

}  // namespace fakp
