#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

namespace milkit {

/// Dense row-major tensor of doubles. Rank is small (<= 4) everywhere in this
/// codebase; shapes are checked at operation boundaries, not per element.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape);
  Tensor(std::vector<int> shape, std::vector<double> data);

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<int> shape, double value);
  static Tensor scalar(double value) { return Tensor({1}, {value}); }

  const std::vector<int>& shape() const { return shape_; }
  int dim(std::size_t i) const { return shape_[i]; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& at2(int i, int j) { return data_[static_cast<std::size_t>(i) * shape_[1] + j]; }
  double at2(int i, int j) const { return data_[static_cast<std::size_t>(i) * shape_[1] + j]; }

  void fill(double value);
  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool all_finite() const;

  /// Single element of a {1}-shaped tensor.
  double item() const;

  std::string shape_str() const;

 private:
  std::vector<int> shape_;
  std::vector<double> data_;
};

std::size_t shape_numel(const std::vector<int>& shape);

}  // namespace milkit
