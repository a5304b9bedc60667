#pragma once

// Dense row-major tensors of doubles with a define-by-run reverse-mode tape.
//
// A Tensor is a shared handle: copies alias the same storage. Operations that
// receive at least one input requiring gradients record a backward closure on
// the result unless a NoGradGuard is alive on the current thread.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace sit {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

class Tensor;

// Called once during backward with the result whose grad is complete.
using BackwardFn = std::function<void(const Tensor& result)>;

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double value);

  bool defined() const noexcept { return impl_ != nullptr; }

  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t size() const;
  std::size_t dim(std::size_t axis) const;
  // First extent and product of the remaining extents.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> data() const;
  std::span<double> data();
  double item() const;
  double at(std::size_t row, std::size_t col) const;

  bool requires_grad() const;
  void set_requires_grad(bool flag);

  // Empty span until a gradient has been accumulated.
  std::span<const double> grad() const;
  // Allocates a zero gradient buffer on first use.
  std::span<double> grad_buffer() const;
  void zero_grad();

  // Reverse-mode sweep from a scalar. Throws ContractError otherwise.
  void backward() const;

  // Copy of the values with no graph history.
  Tensor detach() const;

  // Identity of the underlying storage, used to verify weight tying.
  const void* storage_id() const noexcept { return impl_.get(); }

  // Result of an op: stores values and, when gradients are being recorded,
  // the inputs and backward rule. Inputs that do not require gradients are
  // still kept so the closure may read them.
  static Tensor from_op(Shape shape, std::vector<double> values, std::vector<Tensor> inputs,
                        BackwardFn backward);

  // Opaque storage; defined in the implementation file.
  struct Impl;

 private:
  std::shared_ptr<Impl> impl_;

  friend struct TapeAccess;
};

// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

struct Parameter {
  std::string name;
  Tensor tensor;
  bool trainable = true;
};

}  // namespace sit
