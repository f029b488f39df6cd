#include "deeper/autodiff/tensor.hpp"

#include <cmath>
#include <sstream>

#include "deeper/error.hpp"

namespace deeper::ad {

Shape::Shape(std::initializer_list<std::size_t> dims) {
  if (dims.size() > 2) throw ShapeError("tensors of rank > 2 are not supported");
  rank_ = dims.size();
  std::size_t i = 0;
  for (auto d : dims) dims_[i++] = d;
}

std::size_t Shape::element_count() const {
  std::size_t n = 1;
  for (std::size_t i = 0; i < rank_; ++i) n *= dims_[i];
  return n;
}

std::string Shape::to_string() const {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < rank_; ++i) {
    if (i) os << 'x';
    os << dims_[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape) : shape_(shape), values_(shape.element_count(), 0.0) {}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad)
    : shape_(shape), values_(std::move(values)), requires_grad_(requires_grad) {
  if (values_.size() != shape_.element_count()) {
    throw ShapeError("tensor of shape " + shape_.to_string() + " given " +
                     std::to_string(values_.size()) + " values");
  }
}

Tensor Tensor::vector(std::vector<double> values) {
  const auto n = values.size();
  return Tensor(Shape::vector(n), std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
  return Tensor(Shape::matrix(rows, cols), std::move(values));
}

double Tensor::item() const {
  if (values_.size() != 1) {
    throw ShapeError("item() on tensor of shape " + shape_.to_string());
  }
  return values_[0];
}

bool Tensor::all_finite() const {
  for (double v : values_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void Tensor::fill(double v) {
  for (double& x : values_) x = v;
}

void Tensor::accumulate(const Tensor& other) {
  if (!(shape_ == other.shape_)) {
    throw ShapeError("accumulate " + other.shape_.to_string() + " into " +
                     shape_.to_string());
  }
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += other.values_[i];
}

}  // namespace deeper::ad
