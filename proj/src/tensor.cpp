// SPDX-License-Identifier: Apache-2.0
#include "frameattn/tensor.hpp"

#include <algorithm>
#include <mutex>
#include <sstream>

#include "frameattn/error.hpp"

namespace frameattn {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad)
    : impl_(std::make_shared<Impl>()) {
  if (shape.empty()) throw DimensionError("tensor shape must have rank >= 1");
  for (std::size_t e : shape) {
    if (e == 0) throw DimensionError("tensor extents must be positive, got " + shape_str(shape));
  }
  if (frameattn::numel(shape) != data.size()) {
    throw DimensionError("shape " + shape_str(shape) + " needs " + std::to_string(frameattn::numel(shape)) +
                         " values, got " + std::to_string(data.size()));
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
  impl_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = frameattn::numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) { return Tensor({1}, {value}, requires_grad); }

double Tensor::item() const {
  if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
  return impl_->data[0];
}

void Tensor::set_requires_grad(bool on) {
  impl_->requires_grad = on;
  if (!on) impl_->grad.clear();
}

std::span<double> Tensor::grad() const {
  if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0);
  return impl_->grad;
}

void Tensor::zero_grad() {
  if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

Tensor Tensor::clone() const { return Tensor(impl_->shape, impl_->data, impl_->requires_grad); }

namespace {

struct Corruption {
  std::mutex mu;
  std::string op;
  double factor = 1.0;
};

Corruption& corruption() {
  static Corruption c;
  return c;
}

}  // namespace

namespace testing {

void corrupt_backward(std::string op, double factor) {
  auto& c = corruption();
  std::lock_guard lock(c.mu);
  c.op = std::move(op);
  c.factor = factor;
}

void clear_corruption() { corrupt_backward("", 1.0); }

}  // namespace testing

bool Tape::wants(std::initializer_list<const Tensor*> inputs) const {
  if (!enabled_) return false;
  return std::any_of(inputs.begin(), inputs.end(),
                     [](const Tensor* t) { return t->defined() && t->requires_grad(); });
}

bool Tape::wants(std::span<const Tensor> inputs) const {
  if (!enabled_) return false;
  return std::any_of(inputs.begin(), inputs.end(),
                     [](const Tensor& t) { return t.defined() && t.requires_grad(); });
}

void Tape::record(std::string_view op, Tensor output, BackwardFn backward) {
  if (!enabled_) return;
  if (consumed_) throw ContractError("tape already consumed by backward()");
  nodes_.push_back(Node{std::string(op), std::move(output), std::move(backward)});
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " +
                        (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
  }
  if (consumed_) throw ContractError("backward() called twice on the same tape");
  consumed_ = true;
  if (!loss.requires_grad()) return;

  std::string corrupt_op;
  double factor = 1.0;
  {
    auto& c = corruption();
    std::lock_guard lock(c.mu);
    corrupt_op = c.op;
    factor = c.factor;
  }

  Tensor seed = loss;
  seed.grad()[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    Node& node = *it;
    if (!node.output.has_grad()) continue;  // not on a path to the loss
    if (!corrupt_op.empty() && node.op == corrupt_op) {
      for (double& g : node.output.grad()) g *= factor;
    }
    node.backward();
  }
}

std::vector<std::string> Tape::op_names() const {
  std::vector<std::string> names;
  names.reserve(nodes_.size());
  for (const auto& n : nodes_) names.push_back(n.op);
  return names;
}

}  // namespace frameattn
