#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "deeper/autodiff/tensor.hpp"

namespace deeper::ad {

struct ParamId {
  std::size_t index = 0;
  friend bool operator==(ParamId, ParamId) = default;
};

struct Parameter {
  std::string name;
  Tensor value;
  bool trainable = true;
};

// Named, ordered collection of model weights. Ids are stable for the
// lifetime of the set and are the identity used by tapes and optimizers.
class ParameterSet {
 public:
  ParamId add(std::string name, Tensor value, bool trainable = true);

  std::size_t size() const { return params_.size(); }
  const Parameter& operator[](ParamId id) const { return params_.at(id.index); }
  Parameter& operator[](ParamId id) { return params_.at(id.index); }
  std::optional<ParamId> find(std::string_view name) const;
  ParamId require(std::string_view name) const;

  const std::vector<Parameter>& all() const { return params_; }
  std::vector<Parameter>& all() { return params_; }

  bool all_finite() const;
  std::size_t scalar_count() const;

 private:
  std::vector<Parameter> params_;
};

// One gradient tensor per parameter of a set, zero where no path exists.
class Gradients {
 public:
  Gradients() = default;
  explicit Gradients(const ParameterSet& params);

  const Tensor& operator[](ParamId id) const { return grads_.at(id.index); }
  Tensor& operator[](ParamId id) { return grads_.at(id.index); }
  std::size_t size() const { return grads_.size(); }

  void scale(double factor);
  void accumulate(const Gradients& other);

 private:
  std::vector<Tensor> grads_;
};

}  // namespace deeper::ad
