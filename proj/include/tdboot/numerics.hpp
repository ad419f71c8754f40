#pragma once

// Small dense kernels shared by every other module: a row-major matrix,
// a partial-pivot solver, empirical quantiles, sample covariance and the
// inverse standard-normal CDF.

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tdboot/errors.hpp"

namespace tdboot {

using Vector = std::vector<double>;

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> row_major)
      : rows_(rows), cols_(cols), data_(std::move(row_major)) {
    if (data_.size() != rows_ * cols_) {
      throw DimensionMismatch("entry count " + std::to_string(data_.size()) +
                              " != " + std::to_string(rows_) + "x" + std::to_string(cols_));
    }
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool square() const noexcept { return rows_ == cols_; }

  double& operator()(std::size_t i, std::size_t j) noexcept {
    assert(i < rows_ && j < cols_);
    return data_[i * cols_ + j];
  }
  double operator()(std::size_t i, std::size_t j) const noexcept {
    assert(i < rows_ && j < cols_);
    return data_[i * cols_ + j];
  }

  std::span<double> row(std::size_t i) noexcept { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const noexcept {
    return {data_.data() + i * cols_, cols_};
  }

  const std::vector<double>& data() const noexcept { return data_; }
  std::vector<double>& data() noexcept { return data_; }

  Matrix transpose() const {
    Matrix t(cols_, rows_);
    for (std::size_t i = 0; i < rows_; ++i)
      for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
    return t;
  }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline double dot(std::span<const double> x, std::span<const double> y) {
  assert(x.size() == y.size());
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
  return s;
}

inline double norm2(std::span<const double> x) { return std::sqrt(dot(x, x)); }

inline double norm_inf(std::span<const double> x) {
  double m = 0.0;
  for (double v : x) m = std::max(m, std::abs(v));
  return m;
}

/// Max absolute row sum.
inline double norm_inf(const Matrix& a) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double s = 0.0;
    for (double v : a.row(i)) s += std::abs(v);
    m = std::max(m, s);
  }
  return m;
}

inline double frobenius(const Matrix& a) { return norm2(a.data()); }

inline bool all_finite(std::span<const double> x) {
  return std::all_of(x.begin(), x.end(), [](double v) { return std::isfinite(v); });
}

inline Vector matvec(const Matrix& a, std::span<const double> x) {
  if (a.cols() != x.size()) throw DimensionMismatch("matvec");
  Vector y(a.rows(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) y[i] = dot(a.row(i), x);
  return y;
}

/// x^T a, i.e. a row vector times a matrix.
inline Vector vecmat(std::span<const double> x, const Matrix& a) {
  if (a.rows() != x.size()) throw DimensionMismatch("vecmat");
  Vector y(a.cols(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    if (x[i] == 0.0) continue;
    auto r = a.row(i);
    for (std::size_t j = 0; j < a.cols(); ++j) y[j] += x[i] * r[j];
  }
  return y;
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw DimensionMismatch("matmul");
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += aik * b(k, j);
    }
  return c;
}

/// Solves a x = b by Gaussian elimination with partial pivoting.
///
/// Throws SingularMatrix when the best available pivot falls below
/// 1e-12 * ||a||_inf.
inline Vector solve_linear(const Matrix& a, std::span<const double> b) {
  if (!a.square()) throw DimensionMismatch("solve_linear: matrix is not square");
  const std::size_t n = a.rows();
  if (b.size() != n) throw DimensionMismatch("solve_linear: rhs size");

  Matrix lu = a;
  Vector x(b.begin(), b.end());
  const double threshold = 1e-12 * norm_inf(a);

  for (std::size_t k = 0; k < n; ++k) {
    std::size_t piv = k;
    double best = std::abs(lu(k, k));
    for (std::size_t i = k + 1; i < n; ++i) {
      if (std::abs(lu(i, k)) > best) {
        best = std::abs(lu(i, k));
        piv = i;
      }
    }
    if (!(best > threshold)) {
      throw SingularMatrix("pivot " + std::to_string(best) + " at column " + std::to_string(k));
    }
    if (piv != k) {
      std::swap_ranges(lu.row(k).begin(), lu.row(k).end(), lu.row(piv).begin());
      std::swap(x[k], x[piv]);
    }
    for (std::size_t i = k + 1; i < n; ++i) {
      const double f = lu(i, k) / lu(k, k);
      if (f == 0.0) continue;
      lu(i, k) = 0.0;
      for (std::size_t j = k + 1; j < n; ++j) lu(i, j) -= f * lu(k, j);
      x[i] -= f * x[k];
    }
  }
  for (std::size_t k = n; k-- > 0;) {
    double s = x[k];
    for (std::size_t j = k + 1; j < n; ++j) s -= lu(k, j) * x[j];
    x[k] = s / lu(k, k);
  }
  return x;
}

/// Quantile of already sorted samples, linear interpolation at (n-1)*delta.
inline double empirical_quantile_sorted(std::span<const double> sorted, double delta) {
  if (sorted.empty()) throw EmptySamples("empirical_quantile");
  if (!(delta >= 0.0 && delta <= 1.0)) throw OutOfRange("quantile level " + std::to_string(delta));
  const double h = static_cast<double>(sorted.size() - 1) * delta;
  const double lo = std::floor(h);
  const auto i = static_cast<std::size_t>(lo);
  const double frac = h - lo;
  if (frac == 0.0 || i + 1 >= sorted.size()) return sorted[i];
  return sorted[i] + frac * (sorted[i + 1] - sorted[i]);
}

inline double empirical_quantile(std::span<const double> samples, double delta) {
  Vector s(samples.begin(), samples.end());
  std::sort(s.begin(), s.end());
  return empirical_quantile_sorted(s, delta);
}

/// Unbiased (n-1) covariance of `n` samples stored row-major in `flat`.
inline Matrix sample_covariance(std::span<const double> flat, std::size_t dim) {
  if (dim == 0 || flat.size() % dim != 0) throw DimensionMismatch("sample_covariance");
  const std::size_t n = flat.size() / dim;
  if (n < 2) throw InsufficientSamples("need at least 2 samples, got " + std::to_string(n));

  Vector mean(dim, 0.0);
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t j = 0; j < dim; ++j) mean[j] += flat[k * dim + j];
  for (double& m : mean) m /= static_cast<double>(n);

  Matrix cov(dim, dim);
  Vector centered(dim);
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t j = 0; j < dim; ++j) centered[j] = flat[k * dim + j] - mean[j];
    for (std::size_t i = 0; i < dim; ++i) {
      if (centered[i] == 0.0) continue;
      for (std::size_t j = i; j < dim; ++j) cov(i, j) += centered[i] * centered[j];
    }
  }
  const double denom = static_cast<double>(n - 1);
  for (std::size_t i = 0; i < dim; ++i)
    for (std::size_t j = i; j < dim; ++j) {
      cov(i, j) /= denom;
      cov(j, i) = cov(i, j);
    }
  return cov;
}

inline Matrix sample_covariance(const std::vector<Vector>& samples) {
  if (samples.size() < 2)
    throw InsufficientSamples("need at least 2 samples, got " + std::to_string(samples.size()));
  const std::size_t dim = samples.front().size();
  std::vector<double> flat;
  flat.reserve(samples.size() * dim);
  for (const auto& s : samples) {
    if (s.size() != dim) throw DimensionMismatch("sample_covariance: ragged samples");
    flat.insert(flat.end(), s.begin(), s.end());
  }
  return sample_covariance(flat, dim);
}

inline double std_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

/// Inverse standard-normal CDF: Acklam's rational approximation followed by
/// one Halley step against erfc, good to ~1e-15 in the central region.
inline double std_normal_quantile(double delta) {
  if (!(delta > 0.0 && delta < 1.0)) throw OutOfRange("normal quantile level " + std::to_string(delta));

  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                 -2.759285104469687e+02, 1.383577518672690e+02,
                                 -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                 -1.556989798598866e+02, 6.680131188771972e+01,
                                 -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                 -2.400758277161838e+00, -2.549732539343734e+00,
                                 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                 2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double p_low = 0.02425;

  // Work on the lower half and reflect, so that q(delta) + q(1-delta) == 0 exactly.
  const bool upper = delta > 0.5;
  const double p = upper ? 1.0 - delta : delta;
  if (p == 0.5) return 0.0;

  double x;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  }

  const double e = std_normal_cdf(x) - p;
  const double u = e * std::sqrt(2.0 * M_PI) * std::exp(x * x / 2.0);
  x = x - u / (1.0 + x * u / 2.0);

  return upper ? -x : x;
}

}  // namespace tdboot
