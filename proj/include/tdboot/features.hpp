#pragma once

// State feature maps: the n_states x d table Phi whose rows are phi(s).

#include <Eigen/Dense>

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "tdboot/errors.hpp"
#include "tdboot/numerics.hpp"
#include "tdboot/random.hpp"

namespace tdboot {

enum class FeatureKind { one_hot, random, external };

class FeatureMap {
 public:
  FeatureMap() = default;
  FeatureMap(Matrix table, FeatureKind kind) : table_(std::move(table)), kind_(kind) {
    if (!all_finite(table_.data())) throw InvalidModel("feature table has non-finite entries");
    for (std::size_t s = 0; s < table_.rows(); ++s) phi_max_ = std::max(phi_max_, norm2(table_.row(s)));
  }

  std::size_t n_states() const noexcept { return table_.rows(); }
  std::size_t dim() const noexcept { return table_.cols(); }
  FeatureKind kind() const noexcept { return kind_; }
  /// Largest row norm, recorded at construction.
  double phi_max() const noexcept { return phi_max_; }

  std::span<const double> operator()(std::size_t s) const noexcept { return table_.row(s); }
  const Matrix& table() const noexcept { return table_; }

 private:
  Matrix table_;
  FeatureKind kind_ = FeatureKind::external;
  double phi_max_ = 0.0;
};

/// Smallest singular value of `m` (rows >= cols).
inline double smallest_singular_value(const Matrix& m) {
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> view(
      m.data().data(), static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols()));
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(view);
  const auto& sv = svd.singularValues();
  return sv.size() == 0 ? 0.0 : sv(sv.size() - 1);
}

inline FeatureMap one_hot_features(std::size_t n_states) {
  return FeatureMap(Matrix::identity(n_states), FeatureKind::one_hot);
}

/// One-hot over the states where `active[s]` is set; inactive rows are zero.
/// Used for episodic models, where terminal states carry no feature.
inline FeatureMap one_hot_features(const std::vector<char>& active) {
  std::size_t d = 0;
  for (char a : active) d += a ? 1 : 0;
  Matrix t(active.size(), d);
  std::size_t col = 0;
  for (std::size_t s = 0; s < active.size(); ++s)
    if (active[s]) t(s, col++) = 1.0;
  return FeatureMap(std::move(t), FeatureKind::one_hot);
}

/// Uniform(0,1) entries with each column standardized to zero mean and unit
/// (population) variance. Redraws up to 10 times if the table is rank deficient.
inline FeatureMap random_features(std::size_t n_states, std::size_t d, std::uint64_t seed) {
  if (d == 0 || d > n_states) {
    throw RankDeficient("random_features needs 1 <= d <= n_states (d=" + std::to_string(d) + ")");
  }
  Rng rng(seed);
  for (int attempt = 0; attempt < 10; ++attempt) {
    Matrix t(n_states, d);
    for (double& x : t.data()) x = uniform01(rng);
    for (std::size_t j = 0; j < d; ++j) {
      double mean = 0.0;
      for (std::size_t s = 0; s < n_states; ++s) mean += t(s, j);
      mean /= static_cast<double>(n_states);
      double var = 0.0;
      for (std::size_t s = 0; s < n_states; ++s) var += (t(s, j) - mean) * (t(s, j) - mean);
      const double sd = std::sqrt(var / static_cast<double>(n_states));
      for (std::size_t s = 0; s < n_states; ++s) t(s, j) = sd > 0.0 ? (t(s, j) - mean) / sd : 0.0;
    }
    if (smallest_singular_value(t) > 1e-8) return FeatureMap(std::move(t), FeatureKind::random);
  }
  throw RankDeficient("random feature table rank deficient after 10 draws");
}

/// Reads an n_states x d table with header `f0,...,f{d-1}`.
inline FeatureMap load_feature_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw InvalidModel("feature csv is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();

  std::size_t d = 0;
  {
    std::stringstream header(line);
    std::string name;
    while (std::getline(header, name, ',')) {
      if (name != "f" + std::to_string(d)) {
        throw InvalidModel("feature csv header: expected f" + std::to_string(d) + ", got '" + name + "'");
      }
      ++d;
    }
  }
  if (d == 0) throw InvalidModel("feature csv header has no columns");

  std::vector<double> entries;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream row(line);
    std::string cell;
    std::size_t cols = 0;
    while (std::getline(row, cell, ',')) {
      try {
        std::size_t used = 0;
        entries.push_back(std::stod(cell, &used));
        if (used != cell.size()) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw InvalidModel("feature csv row " + std::to_string(rows + 1) + ": bad number '" + cell + "'");
      }
      ++cols;
    }
    if (cols != d) {
      throw InvalidModel("feature csv row " + std::to_string(rows + 1) + " has " + std::to_string(cols) +
                         " columns, expected " + std::to_string(d));
    }
    ++rows;
  }
  return FeatureMap(Matrix(rows, d, std::move(entries)), FeatureKind::external);
}

inline FeatureMap load_feature_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidModel("cannot open feature csv '" + path + "'");
  return load_feature_csv(in);
}

}  // namespace tdboot
