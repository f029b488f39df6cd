#include "deeper/autodiff/adam.hpp"

#include <cmath>

#include "deeper/error.hpp"

namespace deeper::ad {

AdamState::AdamState(const ParameterSet& params, AdamConfig config) : config_(config) {
  m_.reserve(params.size());
  v_.reserve(params.size());
  for (const auto& p : params.all()) {
    m_.push_back(Tensor::zeros_like(p.value));
    v_.push_back(Tensor::zeros_like(p.value));
  }
}

void adam_step(ParameterSet& params, const Gradients& grads, AdamState& state) {
  if (grads.size() != params.size() || state.m_.size() != params.size()) {
    throw ShapeError("adam_step: parameter, gradient and state sets differ in size");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const ParamId id{i};
    const Parameter& p = params[id];
    if (!(grads[id].shape() == p.value.shape()) || !(state.m_[i].shape() == p.value.shape())) {
      throw ShapeError("adam_step: shape mismatch for parameter '" + p.name + "'");
    }
    if (p.trainable && !grads[id].all_finite()) {
      throw NumericError("adam_step: non-finite gradient for parameter '" + p.name + "'");
    }
  }

  const AdamConfig& c = state.config_;
  state.t_ += 1;
  const double t = static_cast<double>(state.t_);
  const double correction1 = 1.0 - std::pow(c.beta1, t);
  const double correction2 = 1.0 - std::pow(c.beta2, t);

  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = params[ParamId{i}];
    if (!p.trainable) continue;
    const Tensor& g = grads[ParamId{i}];
    Tensor& m = state.m_[i];
    Tensor& v = state.v_[i];
    for (std::size_t j = 0; j < g.size(); ++j) {
      m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * g[j];
      v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * g[j] * g[j];
      const double m_hat = m[j] / correction1;
      const double v_hat = v[j] / correction2;
      p.value[j] -= c.lr * m_hat / (std::sqrt(v_hat) + c.eps);
    }
  }
}

}  // namespace deeper::ad
