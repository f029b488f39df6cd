#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "deeper/autodiff/parameters.hpp"
#include "deeper/autodiff/tensor.hpp"

namespace deeper::ad {

enum class OpKind {
  kConstant,
  kParameter,
  kGatherRow,
  kMatMul,
  kAdd,
  kSub,
  kMul,
  kScale,
  kSigmoid,
  kTanh,
  kRelu,
  kConcat,
  kSum,
  kAbsDiff,
  kSoftmaxNll,
  kGradientReversal,
};

std::string_view to_string(OpKind kind);

// Handle to a node on a tape.
struct Var {
  std::size_t index = 0;
};

// Records a forward computation and replays it in reverse for gradients.
// Nodes are appended in execution order, so the node list is topologically
// sorted by construction. A tape borrows parameter values from the
// ParameterSet it was created with; the set must outlive the tape and must
// not be modified while the tape is in use.
class Tape {
 public:
  explicit Tape(const ParameterSet& params);

  Var constant(Tensor value);
  Var parameter(ParamId id);
  // Row `row` of a rank-2 parameter, as a vector.
  Var gather_row(ParamId id, std::size_t row);

  // [m x k] * [k] -> [m]  or  [m x k] * [k x n] -> [m x n]
  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double factor);
  Var sigmoid(Var a);
  Var tanh(Var a);
  Var relu(Var a);
  Var concat(std::span<const Var> parts);
  Var sum(std::span<const Var> terms);
  Var abs_diff(Var a, Var b);
  // -log softmax(logits)[gold], fused with a log-sum-exp shift. Scalar output.
  Var softmax_nll(Var logits, std::size_t gold);
  // Identity forward; backward multiplies the upstream gradient by -lambda.
  Var gradient_reversal(Var a, double lambda);

  const Tensor& value(Var v) const;
  OpKind kind(Var v) const { return nodes_[v.index].kind; }
  std::span<const std::size_t> inputs(Var v) const;
  std::size_t node_count() const { return nodes_.size(); }
  const ParameterSet& parameters() const { return *params_; }

  // Gradients of a scalar `loss` with respect to every parameter of the set.
  Gradients backward(Var loss) const;

 private:
  struct Node {
    OpKind kind;
    std::size_t input_offset = 0;
    std::size_t input_count = 0;
    Tensor value;
    const Tensor* borrowed = nullptr;
    Tensor cache;
    double scalar = 0.0;
    std::size_t index = 0;
  };

  Var push(OpKind kind, std::initializer_list<Var> inputs, Tensor value);
  Var push(OpKind kind, std::span<const Var> inputs, Tensor value);
  const Node& node(Var v) const;
  void check_finite(OpKind kind, const Tensor& t) const;

  const ParameterSet* params_;
  std::vector<Node> nodes_;
  std::vector<std::size_t> input_ids_;
  std::vector<std::ptrdiff_t> param_nodes_;
};

// Softmax of a logit vector, computed with the max-shift.
std::vector<double> softmax(std::span<const double> logits);

}  // namespace deeper::ad
