#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <random>

#include "tdboot/numerics.hpp"
#include "tdboot/random.hpp"

using namespace tdboot;

namespace {

// Inverse of 0.5*erfc(-x/sqrt2) by bisection in long double.
double bisect_normal_quantile(double p) {
  long double lo = -40.0L, hi = 40.0L;
  for (int i = 0; i < 200; ++i) {
    const long double mid = 0.5L * (lo + hi);
    const long double cdf = 0.5L * std::erfc(-mid / std::sqrt(2.0L));
    (cdf < p ? lo : hi) = mid;
  }
  return static_cast<double>(0.5L * (lo + hi));
}

// Quantile without a full sort: select the two order statistics directly.
double select_quantile(std::vector<double> x, double delta) {
  const double h = (x.size() - 1) * delta;
  const auto i = static_cast<std::size_t>(std::floor(h));
  std::nth_element(x.begin(), x.begin() + i, x.end());
  const double a = x[i];
  if (i + 1 >= x.size()) return a;
  const double b = *std::min_element(x.begin() + i + 1, x.end());
  return a + (h - i) * (b - a);
}

}  // namespace

TEST(SolveLinear, Identity) {
  const Vector x = solve_linear(Matrix::identity(2), Vector{3, -1});
  EXPECT_DOUBLE_EQ(x[0], 3);
  EXPECT_DOUBLE_EQ(x[1], -1);
}

TEST(SolveLinear, Diagonal) {
  Matrix a(2, 2, {2, 0, 0, 4});
  const Vector x = solve_linear(a, Vector{2, 4});
  EXPECT_DOUBLE_EQ(x[0], 1);
  EXPECT_DOUBLE_EQ(x[1], 1);
}

TEST(SolveLinear, TwoStateTdSystem) {
  Matrix a(2, 2, {0.5, -0.25, -0.25, 0.5});
  const Vector x = solve_linear(a, Vector{0.5, 0});
  EXPECT_NEAR(x[0], 4.0 / 3.0, 1e-14);
  EXPECT_NEAR(x[1], 2.0 / 3.0, 1e-14);
}

TEST(SolveLinear, SingularThrows) {
  Matrix a(2, 2, {1, 2, 2, 4});
  EXPECT_THROW(solve_linear(a, Vector{1, 1}), SingularMatrix);
  EXPECT_THROW(solve_linear(Matrix(2, 2), Vector{1, 1}), SingularMatrix);
}

TEST(SolveLinear, ShapeErrors) {
  EXPECT_THROW(solve_linear(Matrix(2, 3), Vector{1, 1}), DimensionMismatch);
  EXPECT_THROW(solve_linear(Matrix::identity(2), Vector{1, 1, 1}), DimensionMismatch);
}

TEST(SolveLinear, MatchesEigenAndRecoversX) {
  Rng rng(42);
  std::normal_distribution<double> n01;
  for (std::size_t d : {1, 3, 8, 17, 32, 64}) {
    Matrix a(d, d);
    Eigen::MatrixXd ea(d, d);
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) ea(i, j) = a(i, j) = n01(rng) + (i == j ? 2.0 * std::sqrt(d) : 0.0);
    Vector x(d);
    for (double& v : x) v = n01(rng);
    const Vector b = matvec(a, x);
    const Vector got = solve_linear(a, b);
    const Eigen::VectorXd eb = Eigen::Map<const Eigen::VectorXd>(b.data(), d);
    const Eigen::VectorXd ref = ea.partialPivLu().solve(eb);
    double err = 0, ref_err = 0, resid = 0;
    const Vector ax = matvec(a, got);
    for (std::size_t i = 0; i < d; ++i) {
      err = std::max(err, std::abs(got[i] - x[i]));
      ref_err = std::max(ref_err, std::abs(got[i] - ref[i]));
      resid = std::max(resid, std::abs(ax[i] - b[i]));
    }
    EXPECT_LE(err, 1e-7 * (1 + norm_inf(x))) << "d=" << d;
    EXPECT_LE(ref_err, 1e-10 * (1 + norm_inf(x))) << "d=" << d;
    EXPECT_LE(resid, 1e-8 * (1 + norm_inf(b))) << "d=" << d;
  }
}

TEST(EmpiricalQuantile, Examples) {
  EXPECT_DOUBLE_EQ(empirical_quantile(Vector{5}, 0.9), 5);
  EXPECT_DOUBLE_EQ(empirical_quantile(Vector{4, 2, 3, 1}, 0.5), 2.5);
  EXPECT_DOUBLE_EQ(empirical_quantile(Vector{4, 2, 3, 1}, 0.0), 1);
  EXPECT_DOUBLE_EQ(empirical_quantile(Vector{4, 2, 3, 1}, 1.0), 4);
}

TEST(EmpiricalQuantile, Errors) {
  EXPECT_THROW(empirical_quantile(Vector{}, 0.5), EmptySamples);
  EXPECT_THROW(empirical_quantile(Vector{1}, -0.1), OutOfRange);
  EXPECT_THROW(empirical_quantile(Vector{1}, 1.1), OutOfRange);
}

TEST(EmpiricalQuantile, MatchesSelectionOracle) {
  Rng rng(7);
  Vector x(200);
  for (double& v : x) v = uniform01(rng);
  EXPECT_EQ(empirical_quantile(x, 0.025), select_quantile(x, 0.025));
  for (double delta : {0.0, 0.1, 0.333, 0.5, 0.975, 1.0}) EXPECT_EQ(empirical_quantile(x, delta), select_quantile(x, delta));
}

TEST(EmpiricalQuantile, MonotoneInDelta) {
  Rng rng(8);
  Vector x(37);
  for (double& v : x) v = uniform01(rng) * 10 - 5;
  double prev = -1e300;
  for (int k = 0; k <= 1000; ++k) {
    const double q = empirical_quantile(x, k / 1000.0);
    EXPECT_GE(q, prev);
    prev = q;
  }
}

TEST(SampleCovariance, Examples) {
  const Matrix z = sample_covariance(std::vector<Vector>{{1, 0}, {1, 0}});
  for (double v : z.data()) EXPECT_EQ(v, 0.0);
  const Matrix s = sample_covariance(std::vector<Vector>{{0}, {2}});
  EXPECT_DOUBLE_EQ(s(0, 0), 2.0);
  EXPECT_THROW(sample_covariance(std::vector<Vector>{{1, 2}}), InsufficientSamples);
}

TEST(SampleCovariance, NormalMonteCarlo) {
  Rng rng(2024);
  std::normal_distribution<double> n01;
  std::vector<Vector> xs(1000, Vector(2));
  for (auto& x : xs) x = {n01(rng), n01(rng)};
  const Matrix c = sample_covariance(xs);
  EXPECT_NEAR(c(0, 0), 1, 0.15);
  EXPECT_NEAR(c(1, 1), 1, 0.15);
  EXPECT_NEAR(c(0, 1), 0, 0.15);
  EXPECT_EQ(c(0, 1), c(1, 0));
}

TEST(SampleCovariance, OrderAndShiftInvariant) {
  Rng rng(3);
  std::vector<Vector> xs(50, Vector(3));
  for (auto& x : xs)
    for (double& v : x) v = uniform01(rng);
  const Matrix base = sample_covariance(xs);
  auto shuffled = xs;
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  auto shifted = xs;
  for (auto& x : shifted) x[0] += 10, x[1] -= 3, x[2] += 0.5;
  const Matrix a = sample_covariance(shuffled), b = sample_covariance(shifted);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      EXPECT_NEAR(a(i, j), base(i, j), 1e-12);
      EXPECT_NEAR(b(i, j), base(i, j), 1e-10);
      EXPECT_NEAR(base(i, j), base(j, i), 1e-10);
    }
  // Brute-force entry.
  double m0 = 0, m2 = 0;
  for (auto& x : xs) m0 += x[0], m2 += x[2];
  m0 /= 50, m2 /= 50;
  double c02 = 0;
  for (auto& x : xs) c02 += (x[0] - m0) * (x[2] - m2);
  EXPECT_NEAR(base(0, 2), c02 / 49, 1e-14);
}

TEST(NormalQuantile, Examples) {
  EXPECT_EQ(std_normal_quantile(0.5), 0.0);
  EXPECT_NEAR(std_normal_quantile(0.975), 1.95996398, 1e-8);
  EXPECT_THROW(std_normal_quantile(0.0), OutOfRange);
  EXPECT_THROW(std_normal_quantile(1.0), OutOfRange);
  EXPECT_THROW(std_normal_quantile(-0.5), OutOfRange);
}

TEST(NormalQuantile, SymmetricAndAccurate) {
  for (double p_raw : {1e-10, 1e-6, 0.001, 0.01, 0.02425, 0.05, 0.1, 0.3, 0.45, 0.4999}) {
    const double p = 1 - (1 - p_raw);  // so that 1 - p is exact
    EXPECT_NEAR(std_normal_quantile(p) + std_normal_quantile(1 - p), 0.0, 1e-12) << p;
    EXPECT_NEAR(std_normal_quantile(p), bisect_normal_quantile(p), 1e-8) << p;
    EXPECT_NEAR(std_normal_cdf(std_normal_quantile(p)), p, 1e-7);
    EXPECT_NEAR(std_normal_cdf(std_normal_quantile(1 - p)), 1 - p, 1e-7);
  }
}
