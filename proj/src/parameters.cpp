#include "deeper/autodiff/parameters.hpp"

#include "deeper/error.hpp"

namespace deeper::ad {

ParamId ParameterSet::add(std::string name, Tensor value, bool trainable) {
  if (find(name)) throw ConfigError("duplicate parameter name '" + name + "'");
  value.set_requires_grad(trainable);
  params_.push_back(Parameter{std::move(name), std::move(value), trainable});
  return ParamId{params_.size() - 1};
}

std::optional<ParamId> ParameterSet::find(std::string_view name) const {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].name == name) return ParamId{i};
  }
  return std::nullopt;
}

ParamId ParameterSet::require(std::string_view name) const {
  auto id = find(name);
  if (!id) throw ConfigError("unknown parameter '" + std::string(name) + "'");
  return *id;
}

bool ParameterSet::all_finite() const {
  for (const auto& p : params_) {
    if (!p.value.all_finite()) return false;
  }
  return true;
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

Gradients::Gradients(const ParameterSet& params) {
  grads_.reserve(params.size());
  for (const auto& p : params.all()) grads_.push_back(Tensor::zeros_like(p.value));
}

void Gradients::scale(double factor) {
  for (auto& g : grads_) {
    for (double& v : g.values()) v *= factor;
  }
}

void Gradients::accumulate(const Gradients& other) {
  if (other.grads_.size() != grads_.size()) {
    throw ShapeError("gradient sets cover different parameter sets");
  }
  for (std::size_t i = 0; i < grads_.size(); ++i) grads_[i].accumulate(other.grads_[i]);
}

}  // namespace deeper::ad
