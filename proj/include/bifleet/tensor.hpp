#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace bifleet {

// Dense row-major tensor of 64-bit reals. Rank 1 ({n}) and rank 2 ({r, c})
// cover everything this project needs; higher ranks are rejected.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int64_t> shape);
  Tensor(std::vector<int64_t> shape, std::vector<double> data);

  static Tensor zeros(std::vector<int64_t> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<int64_t> shape, double value);
  static Tensor ones(std::vector<int64_t> shape) { return full(std::move(shape), 1.0); }
  static Tensor scalar(double value) { return Tensor({1}, {value}); }
  static Tensor vector(std::vector<double> values);
  static Tensor identity(int64_t n);

  const std::vector<int64_t>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int64_t dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  int64_t numel() const { return static_cast<int64_t>(data_.size()); }
  int64_t rows() const;
  int64_t cols() const;
  bool is_scalar() const { return numel() == 1; }
  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& flat() { return data_; }
  const std::vector<double>& flat() const { return data_; }

  double& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }
  double& at(int64_t r, int64_t c) { return data_[static_cast<size_t>(r * cols() + c)]; }
  double at(int64_t r, int64_t c) const { return data_[static_cast<size_t>(r * cols() + c)]; }

  double item() const;  // requires numel() == 1
  bool all_finite() const;
  void fill(double value);

  std::string shape_str() const;

 private:
  std::vector<int64_t> shape_;
  std::vector<double> data_;
};

// out += a * b (matrix product); shapes must already agree.
void matmul_accumulate(const Tensor& a, const Tensor& b, Tensor& out,
                       bool transpose_a = false, bool transpose_b = false);
Tensor matmul(const Tensor& a, const Tensor& b,
              bool transpose_a = false, bool transpose_b = false);

}  // namespace bifleet
