#include "bifleet/tensor.hpp"

#include <cmath>
#include <sstream>

#include "bifleet/common.hpp"

namespace bifleet {

namespace {
int64_t checked_numel(const std::vector<int64_t>& shape) {
  if (shape.empty() || shape.size() > 2) {
    throw ShapeError("tensor rank must be 1 or 2, got rank " + std::to_string(shape.size()));
  }
  int64_t n = 1;
  for (int64_t d : shape) {
    if (d <= 0) throw ShapeError("tensor dimensions must be positive");
    n *= d;
  }
  return n;
}
}  // namespace

Tensor::Tensor(std::vector<int64_t> shape) : shape_(std::move(shape)) {
  data_.assign(static_cast<size_t>(checked_numel(shape_)), 0.0);
}

Tensor::Tensor(std::vector<int64_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  int64_t n = checked_numel(shape_);
  if (n != static_cast<int64_t>(data_.size())) {
    throw ShapeError(cat("tensor data length ", data_.size(), " does not match shape ",
                         shape_str(), " (needs ", n, ")"));
  }
}

Tensor Tensor::full(std::vector<int64_t> shape, double value) {
  Tensor t(std::move(shape));
  t.fill(value);
  return t;
}

Tensor Tensor::vector(std::vector<double> values) {
  int64_t n = static_cast<int64_t>(values.size());
  return Tensor({n}, std::move(values));
}

Tensor Tensor::identity(int64_t n) {
  Tensor t({n, n});
  for (int64_t i = 0; i < n; ++i) t.at(i, i) = 1.0;
  return t;
}

int64_t Tensor::rows() const { return rank() == 2 ? shape_[0] : 1; }
int64_t Tensor::cols() const { return rank() == 2 ? shape_[1] : shape_[0]; }

double Tensor::item() const {
  if (numel() != 1) throw ContractViolation("item() on tensor of shape " + shape_str());
  return data_[0];
}

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void Tensor::fill(double value) {
  for (double& v : data_) v = value;
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape_.size(); ++i) {
    if (i) os << "x";
    os << shape_[i];
  }
  os << "]";
  return os.str();
}

void matmul_accumulate(const Tensor& a, const Tensor& b, Tensor& out,
                       bool transpose_a, bool transpose_b) {
  const int64_t m = transpose_a ? a.cols() : a.rows();
  const int64_t k = transpose_a ? a.rows() : a.cols();
  const int64_t kb = transpose_b ? b.cols() : b.rows();
  const int64_t n = transpose_b ? b.rows() : b.cols();
  if (k != kb) {
    throw ShapeError(cat("matmul inner dimensions disagree: ", a.shape_str(),
                         transpose_a ? "^T" : "", " x ", b.shape_str(),
                         transpose_b ? "^T" : ""));
  }
  if (out.rows() != m || out.cols() != n) {
    throw ShapeError("matmul output shape mismatch: " + out.shape_str());
  }

  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.data();
  const int64_t lda = a.cols();
  const int64_t ldb = b.cols();

  if (!transpose_a && !transpose_b) {
    // ikj order: streams through b and out rows.
    for (int64_t i = 0; i < m; ++i) {
      double* orow = po + i * n;
      const double* arow = pa + i * lda;
      for (int64_t kk = 0; kk < k; ++kk) {
        const double av = arow[kk];
        if (av == 0.0) continue;
        const double* brow = pb + kk * ldb;
        for (int64_t j = 0; j < n; ++j) orow[j] += av * brow[j];
      }
    }
  } else if (!transpose_a && transpose_b) {
    for (int64_t i = 0; i < m; ++i) {
      const double* arow = pa + i * lda;
      double* orow = po + i * n;
      for (int64_t j = 0; j < n; ++j) {
        const double* brow = pb + j * ldb;
        double acc = 0.0;
        for (int64_t kk = 0; kk < k; ++kk) acc += arow[kk] * brow[kk];
        orow[j] += acc;
      }
    }
  } else if (transpose_a && !transpose_b) {
    for (int64_t kk = 0; kk < k; ++kk) {
      const double* arow = pa + kk * lda;  // row kk of a holds column entries
      const double* brow = pb + kk * ldb;
      for (int64_t i = 0; i < m; ++i) {
        const double av = arow[i];
        if (av == 0.0) continue;
        double* orow = po + i * n;
        for (int64_t j = 0; j < n; ++j) orow[j] += av * brow[j];
      }
    }
  } else {
    for (int64_t i = 0; i < m; ++i) {
      double* orow = po + i * n;
      for (int64_t kk = 0; kk < k; ++kk) {
        const double av = pa[kk * lda + i];
        if (av == 0.0) continue;
        const double* bcol = pb + kk;
        for (int64_t j = 0; j < n; ++j) orow[j] += av * bcol[j * ldb];
      }
    }
  }
}

Tensor matmul(const Tensor& a, const Tensor& b, bool transpose_a, bool transpose_b) {
  const int64_t m = transpose_a ? a.cols() : a.rows();
  const int64_t n = transpose_b ? b.rows() : b.cols();
  Tensor out({m, n});
  matmul_accumulate(a, b, out, transpose_a, transpose_b);
  return out;
}

}  // namespace bifleet
