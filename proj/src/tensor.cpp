#include "sit/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "sit/errors.hpp"

namespace sit {

struct Tensor::Impl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Impl>> parents;
  BackwardFn backward;
};

struct TapeAccess {
  static Tensor wrap(std::shared_ptr<Tensor::Impl> impl) {
    Tensor t;
    t.impl_ = std::move(impl);
    return t;
  }
  static const std::shared_ptr<Tensor::Impl>& impl(const Tensor& t) { return t.impl_; }
};

namespace {
thread_local bool g_grad_enabled = true;

Tensor::Impl& require(const std::shared_ptr<Tensor::Impl>& impl) {
  if (!impl) throw ContractError("operation on an undefined tensor");
  return *impl;
}
}  // namespace

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

Tensor::Tensor(Shape shape, double fill) : impl_(std::make_shared<Impl>()) {
  impl_->data.assign(shape_size(shape), fill);
  impl_->shape = std::move(shape);
}

Tensor::Tensor(Shape shape, std::vector<double> values) : impl_(std::make_shared<Impl>()) {
  if (values.size() != shape_size(shape)) {
    throw DimensionError("tensor data length " + std::to_string(values.size()) +
                         " does not match shape " + shape_string(shape));
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(values);
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{}, std::vector<double>{value}); }

const Shape& Tensor::shape() const { return require(impl_).shape; }
std::size_t Tensor::size() const { return require(impl_).data.size(); }

std::size_t Tensor::dim(std::size_t axis) const {
  const Shape& s = shape();
  if (axis >= s.size()) throw DimensionError("axis out of range");
  return s[axis];
}

std::size_t Tensor::rows() const {
  const Shape& s = shape();
  return s.empty() ? 1 : s.front();
}

std::size_t Tensor::cols() const {
  const Shape& s = shape();
  if (s.empty()) return 1;
  std::size_t n = 1;
  for (std::size_t i = 1; i < s.size(); ++i) n *= s[i];
  return n;
}

std::span<const double> Tensor::data() const { return require(impl_).data; }
std::span<double> Tensor::data() { return require(impl_).data; }

double Tensor::item() const {
  if (size() != 1) throw DimensionError("item() on tensor of shape " + shape_string(shape()));
  return impl_->data[0];
}

double Tensor::at(std::size_t row, std::size_t col) const {
  if (row >= rows() || col >= cols()) {
    throw DimensionError("index (" + std::to_string(row) + ", " + std::to_string(col) +
                         ") outside " + shape_string(shape()));
  }
  return data()[row * cols() + col];
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }
void Tensor::set_requires_grad(bool flag) { require(impl_).requires_grad = flag; }

std::span<const double> Tensor::grad() const { return require(impl_).grad; }

std::span<double> Tensor::grad_buffer() const {
  Impl& impl = require(impl_);
  if (impl.grad.size() != impl.data.size()) impl.grad.assign(impl.data.size(), 0.0);
  return impl.grad;
}

void Tensor::zero_grad() {
  Impl& impl = require(impl_);
  std::fill(impl.grad.begin(), impl.grad.end(), 0.0);
}

Tensor Tensor::detach() const {
  const Impl& impl = require(impl_);
  return Tensor(impl.shape, impl.data);
}

Tensor Tensor::from_op(Shape shape, std::vector<double> values, std::vector<Tensor> inputs,
                       BackwardFn backward) {
  Tensor out(std::move(shape), std::move(values));
  if (!g_grad_enabled) return out;
  bool any = false;
  for (const Tensor& in : inputs) any = any || in.requires_grad();
  if (!any) return out;
  out.impl_->requires_grad = true;
  out.impl_->parents.reserve(inputs.size());
  for (const Tensor& in : inputs) out.impl_->parents.push_back(in.impl_);
  out.impl_->backward = std::move(backward);
  return out;
}

void Tensor::backward() const {
  Impl& root = require(impl_);
  if (root.data.size() != 1) {
    throw ContractError("backward() requires a scalar loss, got shape " + shape_string(root.shape));
  }
  if (!root.requires_grad) return;

  // Iterative post-order DFS gives a deterministic topological order.
  std::vector<Impl*> order;
  std::unordered_set<Impl*> visited;
  std::vector<std::pair<Impl*, std::size_t>> stack;
  stack.emplace_back(&root, 0);
  visited.insert(&root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Impl* parent = node->parents[next++].get();
      if (parent->requires_grad && !visited.contains(parent)) {
        visited.insert(parent);
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.grad.assign(1, 1.0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Impl* node = *it;
    if (!node->backward) continue;
    if (node->grad.size() != node->data.size()) node->grad.assign(node->data.size(), 0.0);
    // Non-owning handle: the node is kept alive by the root's graph.
    Tensor handle = TapeAccess::wrap(std::shared_ptr<Impl>(std::shared_ptr<Impl>{}, node));
    node->backward(handle);
  }
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

}  // namespace sit
