#ifndef NMF_ENERGY_MATRIX_HPP
#define NMF_ENERGY_MATRIX_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "error.hpp"

namespace nmf_energy {

/// Dense row-major matrix of doubles. Problem sizes here are tiny (at most a
/// few hundred entries), so there is no expression-template machinery.
class Matrix {
 public:
  Matrix() = default;

  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), values_(rows * cols, fill) {}

  Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
      : rows_(rows), cols_(cols), values_(std::move(values)) {
    if (values_.size() != rows_ * cols_)
      throw DimensionMismatch("Matrix: value count " +
                              std::to_string(values_.size()) + " != " +
                              std::to_string(rows_) + "x" +
                              std::to_string(cols_));
  }

  static Matrix from_rows(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) return {};
    Matrix m(rows.size(), rows.front().size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].size() != m.cols_)
        throw DimensionMismatch("Matrix::from_rows: ragged rows");
      std::copy(rows[i].begin(), rows[i].end(), m.row(i).begin());
    }
    return m;
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  double& operator()(std::size_t i, std::size_t j) {
    return values_[i * cols_ + j];
  }
  double operator()(std::size_t i, std::size_t j) const {
    return values_[i * cols_ + j];
  }

  std::span<double> row(std::size_t i) {
    return {values_.data() + i * cols_, cols_};
  }
  std::span<const double> row(std::size_t i) const {
    return {values_.data() + i * cols_, cols_};
  }

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }

  std::vector<std::vector<double>> to_rows() const {
    std::vector<std::vector<double>> out(rows_);
    for (std::size_t i = 0; i < rows_; ++i)
      out[i].assign(row(i).begin(), row(i).end());
    return out;
  }

  Matrix transpose() const {
    Matrix t(cols_, rows_);
    for (std::size_t i = 0; i < rows_; ++i)
      for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
    return t;
  }

  bool is_nonnegative() const {
    return std::all_of(values_.begin(), values_.end(),
                       [](double v) { return v >= 0.0; });
  }

  double min_value() const {
    return values_.empty() ? 0.0
                           : *std::min_element(values_.begin(), values_.end());
  }

  double mean() const {
    if (values_.empty()) return 0.0;
    double s = 0.0;
    for (double v : values_) s += v;
    return s / static_cast<double>(values_.size());
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

struct FactorPair {
  Matrix W;  // n x p
  Matrix H;  // p x m

  friend bool operator==(const FactorPair&, const FactorPair&) = default;
};

inline void require_same_shape(const Matrix& a, const Matrix& b,
                               const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw DimensionMismatch(std::string(what) + ": shape " +
                            std::to_string(a.rows()) + "x" +
                            std::to_string(a.cols()) + " vs " +
                            std::to_string(b.rows()) + "x" +
                            std::to_string(b.cols()));
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows())
    throw DimensionMismatch("matmul: inner dimensions " +
                            std::to_string(a.cols()) + " and " +
                            std::to_string(b.rows()));
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += aik * b(k, j);
    }
  return c;
}

inline Matrix reconstruct(const FactorPair& f) { return matmul(f.W, f.H); }

inline double frobenius_norm(const Matrix& a) {
  double s = 0.0;
  for (double v : a.values()) s += v * v;
  return std::sqrt(s);
}

struct ErrorMetrics {
  double absolute = 0.0;  // ||V - V~||_F
  double relative = 0.0;  // absolute / ||V||_F
};

/// Absolute and relative Frobenius reconstruction error. The relative error of
/// an all-zero V is 0 for an exact reconstruction and +inf otherwise.
inline ErrorMetrics error_metrics(const Matrix& v, const Matrix& approx) {
  require_same_shape(v, approx, "error_metrics");
  double diff = 0.0;
  double norm = 0.0;
  const auto a = v.values();
  const auto b = approx.values();
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    diff += d * d;
    norm += a[i] * a[i];
  }
  ErrorMetrics out;
  out.absolute = std::sqrt(diff);
  if (norm == 0.0)
    out.relative =
        out.absolute == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  else
    out.relative = out.absolute / std::sqrt(norm);
  return out;
}

inline ErrorMetrics error_metrics(const Matrix& v, const FactorPair& f) {
  return error_metrics(v, reconstruct(f));
}

}  // namespace nmf_energy

#endif  // NMF_ENERGY_MATRIX_HPP
