#pragma once

#include <cstdint>
#include <vector>

#include "deeper/autodiff/parameters.hpp"

namespace deeper::ad {

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// First/second moment estimates for every parameter of one ParameterSet.
class AdamState {
 public:
  AdamState(const ParameterSet& params, AdamConfig config = {});

  const AdamConfig& config() const { return config_; }
  std::uint64_t step() const { return t_; }
  const Tensor& first_moment(ParamId id) const { return m_.at(id.index); }
  const Tensor& second_moment(ParamId id) const { return v_.at(id.index); }

 private:
  friend void adam_step(ParameterSet&, const Gradients&, AdamState&);

  AdamConfig config_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  std::uint64_t t_ = 0;
};

// Bias-corrected Adam update of every trainable parameter, in place.
// Throws NumericError (naming the parameter) on a non-finite gradient; the
// parameters and state are untouched in that case.
void adam_step(ParameterSet& params, const Gradients& grads, AdamState& state);

}  // namespace deeper::ad
