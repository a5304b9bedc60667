#pragma once

#include <random>
#include <string>
#include <vector>

#include "sit/tensor.hpp"

namespace sit {

// Ordered, uniquely named trainable tensors of one model.
class ParameterSet {
 public:
  // Uniform(-bound, bound); bound 0 means 1/sqrt(shape[0]) (fan-in).
  Tensor add_uniform(const std::string& name, Shape shape, std::mt19937_64& rng,
                     double bound = 0.0);
  Tensor add_constant(const std::string& name, Shape shape, double value);
  // Registers an existing tensor (must not already be registered).
  Tensor add(const std::string& name, Tensor tensor);

  const std::vector<Parameter>& all() const noexcept { return params_; }
  const Parameter* find(const std::string& name) const;
  std::vector<std::string> names() const;
  std::size_t scalar_count() const;
  void zero_grad();

 private:
  std::vector<Parameter> params_;
};

}  // namespace sit
