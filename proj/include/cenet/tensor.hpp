#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace cenet {

/// Dense row-major f64 tensor. Small value type; copy is a deep copy.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape);
  Tensor(std::vector<std::size_t> shape, std::vector<double> values);

  static Tensor zeros(std::vector<std::size_t> shape) {
    return Tensor(std::move(shape));
  }
  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t ndim() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_[i]; }
  std::size_t numel() const { return values_.size(); }

  double* data() { return values_.data(); }
  const double* data() const { return values_.data(); }
  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }

  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  // 2-d access; no bounds check
  double& at(std::size_t r, std::size_t c) {
    return values_[r * shape_[1] + c];
  }
  double at(std::size_t r, std::size_t c) const {
    return values_[r * shape_[1] + c];
  }
  std::span<double> row(std::size_t r) {
    return {values_.data() + r * shape_[1], shape_[1]};
  }
  std::span<const double> row(std::size_t r) const {
    return {values_.data() + r * shape_[1], shape_[1]};
  }

  void fill(double v);
  bool all_finite() const;
  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  std::string shape_str() const;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> values_;
};

/// Trainable array with its gradient accumulator. Frozen parameters never
/// receive gradient and are skipped by the optimizer.
struct Parameter {
  Tensor value;
  Tensor grad;
  std::string name;
  bool frozen = false;

  Parameter() = default;
  Parameter(std::string n, Tensor v)
      : value(std::move(v)), grad(Tensor::zeros(value.shape())),
        name(std::move(n)) {}

  void zero_grad() { grad.fill(0.0); }
};

/// Numerically stable softmax (max-subtraction). Errors on empty input.
std::vector<double> softmax_row(std::span<const double> x);

}  // namespace cenet
