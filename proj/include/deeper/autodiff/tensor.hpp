#pragma once

#include <array>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace deeper::ad {

// Rank 0 (scalar), 1 (vector) or 2 (row-major matrix).
class Shape {
 public:
  Shape() = default;
  Shape(std::initializer_list<std::size_t> dims);

  static Shape scalar() { return {}; }
  static Shape vector(std::size_t n) { return {n}; }
  static Shape matrix(std::size_t rows, std::size_t cols) { return {rows, cols}; }

  std::size_t rank() const { return rank_; }
  std::size_t operator[](std::size_t axis) const { return dims_[axis]; }
  std::size_t element_count() const;

  friend bool operator==(const Shape& a, const Shape& b) {
    return a.rank_ == b.rank_ && a.dims_ == b.dims_;
  }

  std::string to_string() const;

 private:
  std::array<std::size_t, 2> dims_{0, 0};
  std::size_t rank_ = 0;
};

class Tensor {
 public:
  Tensor() : Tensor(Shape::scalar()) {}
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor scalar(double v) { return Tensor(Shape::scalar(), std::vector<double>{v}); }
  static Tensor vector(std::vector<double> values);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);
  static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape()); }

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return values_.size(); }
  bool requires_grad() const { return requires_grad_; }
  void set_requires_grad(bool flag) { requires_grad_ = flag; }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  const std::vector<double>& storage() const { return values_; }

  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }
  double& at(std::size_t r, std::size_t c) { return values_[r * shape_[1] + c]; }
  double at(std::size_t r, std::size_t c) const { return values_[r * shape_[1] + c]; }

  double item() const;
  bool all_finite() const;
  void fill(double v);
  // this += other, shapes must match.
  void accumulate(const Tensor& other);

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.values_ == b.values_;
  }

 private:
  Shape shape_;
  std::vector<double> values_;
  bool requires_grad_ = false;
};

}  // namespace deeper::ad
