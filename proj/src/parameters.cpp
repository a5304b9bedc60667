#include "sit/parameters.hpp"

#include <cmath>

#include "sit/errors.hpp"
#include "sit/vocabulary.hpp"

namespace sit {

Tensor ParameterSet::add(const std::string& name, Tensor tensor) {
  if (find(name) != nullptr) throw ContractError("duplicate parameter name '" + name + "'");
  tensor.set_requires_grad(true);
  params_.push_back({name, tensor, true});
  return tensor;
}

Tensor ParameterSet::add_uniform(const std::string& name, Shape shape, std::mt19937_64& rng,
                                 double bound) {
  if (shape.empty() || shape[0] == 0) throw DimensionError("parameter needs a non-empty shape");
  if (bound <= 0.0) bound = 1.0 / std::sqrt(static_cast<double>(shape[0]));
  std::vector<double> values(shape_size(shape));
  for (double& v : values) v = (2.0 * uniform_unit(rng) - 1.0) * bound;
  return add(name, Tensor(std::move(shape), std::move(values)));
}

Tensor ParameterSet::add_constant(const std::string& name, Shape shape, double value) {
  return add(name, Tensor(std::move(shape), value));
}

const Parameter* ParameterSet::find(const std::string& name) const {
  for (const auto& p : params_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

std::vector<std::string> ParameterSet::names() const {
  std::vector<std::string> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p.name);
  return out;
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.tensor.size();
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

}  // namespace sit
