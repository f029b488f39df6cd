#include "deeper/autodiff/tape.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "deeper/error.hpp"

namespace deeper::ad {
namespace {

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

[[noreturn]] void shape_mismatch(OpKind kind, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(to_string(kind)) + ": incompatible shapes " +
                   a.to_string() + " and " + b.to_string());
}

}  // namespace

std::string_view to_string(OpKind kind) {
  switch (kind) {
    case OpKind::kConstant: return "constant";
    case OpKind::kParameter: return "parameter";
    case OpKind::kGatherRow: return "gather_row";
    case OpKind::kMatMul: return "matmul";
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kMul: return "mul";
    case OpKind::kScale: return "scale";
    case OpKind::kSigmoid: return "sigmoid";
    case OpKind::kTanh: return "tanh";
    case OpKind::kRelu: return "relu";
    case OpKind::kConcat: return "concat";
    case OpKind::kSum: return "sum";
    case OpKind::kAbsDiff: return "abs_diff";
    case OpKind::kSoftmaxNll: return "softmax_nll";
    case OpKind::kGradientReversal: return "gradient_reversal";
  }
  return "unknown";
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> out(logits.size());
  if (logits.empty()) return out;
  const double shift = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - shift);
    z += out[i];
  }
  for (double& v : out) v /= z;
  return out;
}

Tape::Tape(const ParameterSet& params)
    : params_(&params), param_nodes_(params.size(), -1) {
  nodes_.reserve(256);
}

const Tape::Node& Tape::node(Var v) const {
  if (v.index >= nodes_.size()) throw Error("variable does not belong to this tape");
  return nodes_[v.index];
}

const Tensor& Tape::value(Var v) const {
  const Node& n = node(v);
  return n.borrowed ? *n.borrowed : n.value;
}

std::span<const std::size_t> Tape::inputs(Var v) const {
  const Node& n = node(v);
  return {input_ids_.data() + n.input_offset, n.input_count};
}

void Tape::check_finite(OpKind kind, const Tensor& t) const {
  if (!t.all_finite()) {
    throw NumericError(std::string(to_string(kind)) + ": non-finite output");
  }
}

Var Tape::push(OpKind kind, std::initializer_list<Var> inputs, Tensor value) {
  return push(kind, std::span<const Var>(inputs.begin(), inputs.size()), std::move(value));
}

Var Tape::push(OpKind kind, std::span<const Var> inputs, Tensor value) {
  check_finite(kind, value);
  Node n;
  n.kind = kind;
  n.input_offset = input_ids_.size();
  n.input_count = inputs.size();
  for (Var v : inputs) input_ids_.push_back(v.index);
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Var Tape::constant(Tensor value) { return push(OpKind::kConstant, {}, std::move(value)); }

Var Tape::parameter(ParamId id) {
  if (id.index >= params_->size()) throw Error("unknown parameter id");
  if (param_nodes_[id.index] >= 0) {
    return Var{static_cast<std::size_t>(param_nodes_[id.index])};
  }
  Node n;
  n.kind = OpKind::kParameter;
  n.borrowed = &(*params_)[id].value;
  n.index = id.index;
  check_finite(OpKind::kParameter, *n.borrowed);
  nodes_.push_back(std::move(n));
  param_nodes_[id.index] = static_cast<std::ptrdiff_t>(nodes_.size() - 1);
  return Var{nodes_.size() - 1};
}

Var Tape::gather_row(ParamId id, std::size_t row) {
  const Tensor& table = (*params_)[id].value;
  if (table.shape().rank() != 2 || row >= table.shape()[0]) {
    throw ShapeError("gather_row: row " + std::to_string(row) + " out of range for " +
                     table.shape().to_string());
  }
  const std::size_t width = table.shape()[1];
  Tensor out(Shape::vector(width));
  std::copy_n(table.values().begin() + static_cast<std::ptrdiff_t>(row * width), width,
              out.values().begin());
  Var v = push(OpKind::kGatherRow, {}, std::move(out));
  nodes_[v.index].index = id.index;
  nodes_[v.index].scalar = static_cast<double>(row);
  return v;
}

Var Tape::matmul(Var a, Var b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  const Shape& sa = A.shape();
  const Shape& sb = B.shape();
  if (sa.rank() != 2 || sb.rank() == 0 || sa[1] != sb[0]) {
    shape_mismatch(OpKind::kMatMul, sa, sb);
  }
  const std::size_t m = sa[0];
  const std::size_t k = sa[1];
  const double* pa = A.values().data();
  const double* pb = B.values().data();
  if (sb.rank() == 1) {
    Tensor out(Shape::vector(m));
    double* po = out.values().data();
    for (std::size_t i = 0; i < m; ++i) {
      const double* row = pa + i * k;
      double acc = 0.0;
      for (std::size_t j = 0; j < k; ++j) acc += row[j] * pb[j];
      po[i] = acc;
    }
    return push(OpKind::kMatMul, {a, b}, std::move(out));
  }
  const std::size_t n = sb[1];
  Tensor out(Shape::matrix(m, n));
  double* po = out.values().data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      const double aij = pa[i * k + j];
      for (std::size_t c = 0; c < n; ++c) po[i * n + c] += aij * pb[j * n + c];
    }
  }
  return push(OpKind::kMatMul, {a, b}, std::move(out));
}

Var Tape::add(Var a, Var b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  if (!(A.shape() == B.shape())) shape_mismatch(OpKind::kAdd, A.shape(), B.shape());
  Tensor out(A.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = A[i] + B[i];
  return push(OpKind::kAdd, {a, b}, std::move(out));
}

Var Tape::sub(Var a, Var b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  if (!(A.shape() == B.shape())) shape_mismatch(OpKind::kSub, A.shape(), B.shape());
  Tensor out(A.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = A[i] - B[i];
  return push(OpKind::kSub, {a, b}, std::move(out));
}

Var Tape::mul(Var a, Var b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  if (!(A.shape() == B.shape())) shape_mismatch(OpKind::kMul, A.shape(), B.shape());
  Tensor out(A.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = A[i] * B[i];
  return push(OpKind::kMul, {a, b}, std::move(out));
}

Var Tape::scale(Var a, double factor) {
  const Tensor& A = value(a);
  Tensor out(A.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = A[i] * factor;
  Var v = push(OpKind::kScale, {a}, std::move(out));
  nodes_[v.index].scalar = factor;
  return v;
}

Var Tape::sigmoid(Var a) {
  const Tensor& A = value(a);
  Tensor out(A.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = stable_sigmoid(A[i]);
  return push(OpKind::kSigmoid, {a}, std::move(out));
}

Var Tape::tanh(Var a) {
  const Tensor& A = value(a);
  Tensor out(A.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(A[i]);
  return push(OpKind::kTanh, {a}, std::move(out));
}

Var Tape::relu(Var a) {
  const Tensor& A = value(a);
  Tensor out(A.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = A[i] > 0.0 ? A[i] : 0.0;
  return push(OpKind::kRelu, {a}, std::move(out));
}

Var Tape::concat(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  std::size_t total = 0;
  for (Var p : parts) {
    const Shape& s = value(p).shape();
    if (s.rank() != 1) shape_mismatch(OpKind::kConcat, s, value(parts[0]).shape());
    total += s[0];
  }
  Tensor out(Shape::vector(total));
  std::size_t offset = 0;
  for (Var p : parts) {
    const Tensor& t = value(p);
    std::copy(t.values().begin(), t.values().end(),
              out.values().begin() + static_cast<std::ptrdiff_t>(offset));
    offset += t.size();
  }
  return push(OpKind::kConcat, parts, std::move(out));
}

Var Tape::sum(std::span<const Var> terms) {
  if (terms.empty()) throw ShapeError("sum: no inputs");
  Tensor out(value(terms[0]).shape());
  for (Var t : terms) {
    const Tensor& x = value(t);
    if (!(x.shape() == out.shape())) shape_mismatch(OpKind::kSum, out.shape(), x.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += x[i];
  }
  return push(OpKind::kSum, terms, std::move(out));
}

Var Tape::abs_diff(Var a, Var b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  if (!(A.shape() == B.shape())) shape_mismatch(OpKind::kAbsDiff, A.shape(), B.shape());
  Tensor out(A.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::fabs(A[i] - B[i]);
  return push(OpKind::kAbsDiff, {a, b}, std::move(out));
}

Var Tape::softmax_nll(Var logits, std::size_t gold) {
  const Tensor& L = value(logits);
  if (L.shape().rank() != 1 || L.size() < 2) {
    shape_mismatch(OpKind::kSoftmaxNll, L.shape(), Shape::vector(2));
  }
  if (gold >= L.size()) {
    throw ShapeError("softmax_nll: gold class " + std::to_string(gold) + " out of range for " +
                     L.shape().to_string());
  }
  const double shift = *std::max_element(L.values().begin(), L.values().end());
  double z = 0.0;
  for (double x : L.values()) z += std::exp(x - shift);
  const double log_z = shift + std::log(z);
  Tensor probs(L.shape());
  for (std::size_t i = 0; i < L.size(); ++i) probs[i] = std::exp(L[i] - log_z);
  // log_z >= L[gold] mathematically; clamp rounding noise so NLL >= 0.
  const double loss = std::max(0.0, log_z - L[gold]);
  Var v = push(OpKind::kSoftmaxNll, {logits}, Tensor::scalar(loss));
  nodes_[v.index].cache = std::move(probs);
  nodes_[v.index].index = gold;
  return v;
}

Var Tape::gradient_reversal(Var a, double lambda) {
  Var v = push(OpKind::kGradientReversal, {a}, value(a));
  nodes_[v.index].scalar = lambda;
  return v;
}

Gradients Tape::backward(Var loss) const {
  const Tensor& out = value(loss);
  if (out.size() != 1) {
    throw ShapeError("backward: loss must be scalar, got shape " + out.shape().to_string());
  }
  Gradients grads(*params_);
  std::vector<Tensor> adj(loss.index + 1);
  std::vector<char> live(loss.index + 1, 0);
  adj[loss.index] = Tensor(out.shape(), std::vector<double>{1.0});
  live[loss.index] = 1;

  auto grad_of = [&](std::size_t id) -> Tensor& {
    if (!live[id]) {
      adj[id] = Tensor::zeros_like(nodes_[id].borrowed ? *nodes_[id].borrowed : nodes_[id].value);
      live[id] = 1;
    }
    return adj[id];
  };

  for (std::size_t idx = loss.index + 1; idx-- > 0;) {
    if (!live[idx]) continue;
    const Node& n = nodes_[idx];
    const Tensor& g = adj[idx];
    const std::size_t* in = input_ids_.data() + n.input_offset;
    switch (n.kind) {
      case OpKind::kConstant:
        break;
      case OpKind::kParameter:
        grads[ParamId{n.index}].accumulate(g);
        break;
      case OpKind::kGatherRow: {
        Tensor& table_grad = grads[ParamId{n.index}];
        const std::size_t row = static_cast<std::size_t>(n.scalar);
        const std::size_t width = g.size();
        for (std::size_t j = 0; j < width; ++j) table_grad[row * width + j] += g[j];
        break;
      }
      case OpKind::kMatMul: {
        const Tensor& A = value(Var{in[0]});
        const Tensor& B = value(Var{in[1]});
        const std::size_t m = A.shape()[0];
        const std::size_t k = A.shape()[1];
        Tensor& gA = grad_of(in[0]);
        Tensor& gB = grad_of(in[1]);
        if (B.shape().rank() == 1) {
          for (std::size_t i = 0; i < m; ++i) {
            const double gi = g[i];
            if (gi == 0.0) continue;
            double* ga_row = gA.values().data() + i * k;
            const double* a_row = A.values().data() + i * k;
            for (std::size_t j = 0; j < k; ++j) {
              ga_row[j] += gi * B[j];
              gB[j] += a_row[j] * gi;
            }
          }
        } else {
          const std::size_t ncol = B.shape()[1];
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < k; ++j) {
              double acc_a = 0.0;
              const double aij = A[i * k + j];
              for (std::size_t c = 0; c < ncol; ++c) {
                acc_a += g[i * ncol + c] * B[j * ncol + c];
                gB[j * ncol + c] += aij * g[i * ncol + c];
              }
              gA[i * k + j] += acc_a;
            }
          }
        }
        break;
      }
      case OpKind::kAdd:
        grad_of(in[0]).accumulate(g);
        grad_of(in[1]).accumulate(g);
        break;
      case OpKind::kSub: {
        grad_of(in[0]).accumulate(g);
        Tensor& gb = grad_of(in[1]);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
        break;
      }
      case OpKind::kMul: {
        const Tensor& A = value(Var{in[0]});
        const Tensor& B = value(Var{in[1]});
        Tensor& ga = grad_of(in[0]);
        Tensor& gb = grad_of(in[1]);
        for (std::size_t i = 0; i < g.size(); ++i) {
          ga[i] += g[i] * B[i];
          gb[i] += g[i] * A[i];
        }
        break;
      }
      case OpKind::kScale: {
        Tensor& ga = grad_of(in[0]);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * n.scalar;
        break;
      }
      case OpKind::kSigmoid: {
        Tensor& ga = grad_of(in[0]);
        for (std::size_t i = 0; i < g.size(); ++i) {
          const double s = n.value[i];
          ga[i] += g[i] * s * (1.0 - s);
        }
        break;
      }
      case OpKind::kTanh: {
        Tensor& ga = grad_of(in[0]);
        for (std::size_t i = 0; i < g.size(); ++i) {
          const double t = n.value[i];
          ga[i] += g[i] * (1.0 - t * t);
        }
        break;
      }
      case OpKind::kRelu: {
        const Tensor& A = value(Var{in[0]});
        Tensor& ga = grad_of(in[0]);
        for (std::size_t i = 0; i < g.size(); ++i) {
          if (A[i] > 0.0) ga[i] += g[i];
        }
        break;
      }
      case OpKind::kConcat: {
        std::size_t offset = 0;
        for (std::size_t p = 0; p < n.input_count; ++p) {
          Tensor& gp = grad_of(in[p]);
          for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += g[offset + i];
          offset += gp.size();
        }
        break;
      }
      case OpKind::kSum:
        for (std::size_t p = 0; p < n.input_count; ++p) grad_of(in[p]).accumulate(g);
        break;
      case OpKind::kAbsDiff: {
        const Tensor& A = value(Var{in[0]});
        const Tensor& B = value(Var{in[1]});
        Tensor& ga = grad_of(in[0]);
        Tensor& gb = grad_of(in[1]);
        for (std::size_t i = 0; i < g.size(); ++i) {
          const double d = A[i] - B[i];
          const double sign = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
          ga[i] += sign * g[i];
          gb[i] -= sign * g[i];
        }
        break;
      }
      case OpKind::kSoftmaxNll: {
        Tensor& gl = grad_of(in[0]);
        const double up = g[0];
        for (std::size_t i = 0; i < gl.size(); ++i) {
          const double target = i == n.index ? 1.0 : 0.0;
          gl[i] += up * (n.cache[i] - target);
        }
        break;
      }
      case OpKind::kGradientReversal: {
        Tensor& ga = grad_of(in[0]);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += -n.scalar * g[i];
        break;
      }
    }
  }
  return grads;
}

}  // namespace deeper::ad
