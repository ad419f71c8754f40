#pragma once

// Online multiplier bootstrap for LSA: B perturbed replicates driven by the
// same observation stream, plus the confidence intervals built from them and
// the offline episode-resampling baseline.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tdboot/env.hpp"
#include "tdboot/errors.hpp"
#include "tdboot/lsa.hpp"
#include "tdboot/numerics.hpp"
#include "tdboot/observations.hpp"
#include "tdboot/random.hpp"

namespace tdboot {

enum class WeightKind {
  uniform_mv1,  ///< U(1 - sqrt3, 1 + sqrt3): mean 1, variance 1.
  two_point,    ///< {0, 2} with equal probability: mean 1, variance 1.
  uniform_narrow,  ///< U(1 - 1/sqrt3, 1 + 1/sqrt3): mean 1, variance 1/9.
  unit,         ///< Always 1; turns the ensemble into copies of the plain iterate.
};

inline std::string to_string(WeightKind k) {
  switch (k) {
    case WeightKind::uniform_mv1: return "uniform_mv1";
    case WeightKind::two_point: return "two_point";
    case WeightKind::uniform_narrow: return "uniform_narrow";
    case WeightKind::unit: return "unit";
  }
  return "?";
}

/// Stream of i.i.d. multiplier weights.
class WeightSampler {
 public:
  WeightSampler(WeightKind kind, std::uint64_t seed) : kind_(kind), seed_(seed), rng_(seed) {
    switch (kind_) {
      case WeightKind::uniform_mv1: lo_ = 1.0 - std::sqrt(3.0), hi_ = 1.0 + std::sqrt(3.0); break;
      case WeightKind::uniform_narrow: lo_ = 1.0 - 1.0 / std::sqrt(3.0), hi_ = 1.0 + 1.0 / std::sqrt(3.0); break;
      case WeightKind::two_point: lo_ = 0.0, hi_ = 2.0; break;
      case WeightKind::unit: lo_ = hi_ = 1.0; break;
    }
  }

  double operator()() {
    switch (kind_) {
      case WeightKind::uniform_mv1:
      case WeightKind::uniform_narrow: return std::uniform_real_distribution<double>(lo_, hi_)(rng_);
      case WeightKind::two_point: return (rng_() >> 63) ? 2.0 : 0.0;
      case WeightKind::unit: return 1.0;
    }
    return 1.0;
  }

  WeightKind kind() const noexcept { return kind_; }
  std::uint64_t seed() const noexcept { return seed_; }
  double lo() const noexcept { return lo_; }
  double hi() const noexcept { return hi_; }
  double w_max() const noexcept { return std::max(std::abs(lo_), std::abs(hi_)); }

 private:
  WeightKind kind_;
  std::uint64_t seed_;
  Rng rng_;
  double lo_ = 1.0;
  double hi_ = 1.0;
};

inline double sample_weight(WeightSampler& sampler) { return sampler(); }

/// B perturbed LSA replicates sharing one observation stream. Replicate b
/// draws its weights from its own generator seeded with seed ^ mix(b), so
/// results do not depend on how replicates are scheduled.
class BootstrapEnsemble {
 public:
  BootstrapEnsemble(std::size_t replicates, std::size_t dim, WeightKind kind, std::uint64_t seed)
      : b_(replicates), dim_(dim), theta_(replicates * dim, 0.0), theta_bar_(replicates * dim, 0.0) {
    if (replicates == 0) throw InsufficientReplicates("ensemble needs at least one replicate");
    samplers_.reserve(replicates);
    for (std::size_t b = 0; b < replicates; ++b) samplers_.emplace_back(kind, derive_seed(seed, b));
  }

  std::size_t size() const noexcept { return b_; }
  std::size_t dim() const noexcept { return dim_; }
  std::uint64_t t() const noexcept { return t_; }

  std::span<const double> theta(std::size_t b) const noexcept { return {theta_.data() + b * dim_, dim_}; }
  std::span<const double> theta_bar(std::size_t b) const noexcept { return {theta_bar_.data() + b * dim_, dim_}; }
  /// All averaged replicates, row-major B x dim.
  std::span<const double> theta_bars() const noexcept { return theta_bar_; }

  template <LinearObservation Obs>
  void step(const Obs& obs, double alpha) {
    if (obs.dim() != dim_) throw DimensionMismatch("observation dim does not match ensemble");
    for (std::size_t b = 0; b < b_; ++b) {
      const double w = samplers_[b]();
      try {
        detail::perturbed_step(std::span<double>(theta_.data() + b * dim_, dim_),
                               std::span<double>(theta_bar_.data() + b * dim_, dim_), t_, obs, alpha, w);
      } catch (const NonFinite& e) {
        throw NonFinite("replicate " + std::to_string(b) + ": " + e.what());
      }
    }
    ++t_;
  }

  template <LinearObservation Obs>
  void step(const Obs& obs, const StepSchedule& schedule) {
    step(obs, schedule(t_ + 1));
  }

 private:
  std::size_t b_;
  std::size_t dim_;
  std::vector<double> theta_;
  std::vector<double> theta_bar_;
  std::vector<WeightSampler> samplers_;
  std::uint64_t t_ = 0;
};

template <LinearObservation Obs>
inline void ensemble_step(BootstrapEnsemble& ens, const Obs& obs, double alpha) {
  ens.step(obs, alpha);
}

enum class CiMethod { quantile, se };

inline std::string to_string(CiMethod m) { return m == CiMethod::quantile ? "quantile" : "se"; }

struct ConfidenceInterval {
  double lower = 0.0;
  double upper = 0.0;
  double level = 0.95;
  CiMethod method = CiMethod::quantile;

  double width() const noexcept { return upper - lower; }
  bool contains(double x) const noexcept { return lower <= x && x <= upper; }
};

/// c^T x for every averaged replicate.
inline Vector project_replicates(const BootstrapEnsemble& ens, std::span<const double> c) {
  if (c.size() != ens.dim()) throw DimensionMismatch("functional length != ensemble dim");
  Vector out(ens.size());
  for (std::size_t b = 0; b < ens.size(); ++b) out[b] = dot(c, ens.theta_bar(b));
  return out;
}

/// Quantile interval from scalar replicate values: center + the alpha/2 and
/// 1-alpha/2 empirical quantiles of (value - center). Level 1 gives the
/// full replicate range.
inline ConfidenceInterval quantile_interval(double center, std::span<const double> replicate_values, double level) {
  if (replicate_values.size() < 2) throw InsufficientReplicates("quantile CI needs B >= 2");
  if (!(level > 0.0 && level <= 1.0)) throw OutOfRange("confidence level must lie in (0,1]");
  Vector deltas(replicate_values.begin(), replicate_values.end());
  for (double& x : deltas) x -= center;
  std::sort(deltas.begin(), deltas.end());
  const double alpha = 1.0 - level;
  return {center + empirical_quantile_sorted(deltas, alpha / 2.0),
          center + empirical_quantile_sorted(deltas, 1.0 - alpha / 2.0), level, CiMethod::quantile};
}

/// center -/+ z_{1-alpha/2} * sd(replicate values), sd with divisor B-1.
inline ConfidenceInterval se_interval(double center, std::span<const double> replicate_values, double level) {
  if (replicate_values.size() < 2) throw InsufficientReplicates("SE CI needs B >= 2");
  if (!(level > 0.0 && level < 1.0)) throw OutOfRange("confidence level must lie in (0,1)");
  const double var = sample_covariance(replicate_values, 1)(0, 0);
  const double half = std_normal_quantile(1.0 - (1.0 - level) / 2.0) * std::sqrt(std::max(var, 0.0));
  return {center - half, center + half, level, CiMethod::se};
}

/// Quantile CI for c^T theta over the ensemble's averaged replicates.
inline ConfidenceInterval quantile_ci(std::span<const double> theta_bar, const BootstrapEnsemble& ens, double level,
                                      std::span<const double> c) {
  if (ens.size() < 2) throw InsufficientReplicates("quantile CI needs B >= 2");
  return quantile_interval(dot(c, theta_bar), project_replicates(ens, c), level);
}

/// c^T theta_bar -/+ z_{1-alpha/2} sqrt(c^T Sigma c), Sigma the replicate covariance.
inline ConfidenceInterval se_ci(std::span<const double> theta_bar, const BootstrapEnsemble& ens, double level,
                                std::span<const double> c) {
  if (ens.size() < 2) throw InsufficientReplicates("SE CI needs B >= 2");
  if (!(level > 0.0 && level < 1.0)) throw OutOfRange("confidence level must lie in (0,1)");
  if (c.size() != ens.dim()) throw DimensionMismatch("functional length != ensemble dim");
  const double center = dot(c, theta_bar);
  const Matrix sigma = sample_covariance(ens.theta_bars(), ens.dim());
  const double var = dot(c, matvec(sigma, c));
  const double half = std_normal_quantile(1.0 - (1.0 - level) / 2.0) * std::sqrt(std::max(var, 0.0));
  return {center - half, center + half, level, CiMethod::se};
}

/// c = sum_s nu(s) phi(s); c^T theta is the value under reference law nu.
inline Vector value_functional(const FeatureMap& features, std::span<const double> nu) {
  if (nu.size() != features.n_states()) throw DimensionMismatch("nu length != n_states");
  double total = 0.0;
  for (double p : nu) {
    if (!(p >= 0.0)) throw OutOfRange("nu has a negative entry");
    total += p;
  }
  if (std::abs(total - 1.0) > kStochasticTol) throw OutOfRange("nu does not sum to 1");
  Vector c(features.dim(), 0.0);
  for (std::size_t s = 0; s < nu.size(); ++s) {
    if (nu[s] == 0.0) continue;
    auto phi = features(s);
    for (std::size_t j = 0; j < c.size(); ++j) c[j] += nu[s] * phi[j];
  }
  return c;
}

inline Vector point_mass(std::size_t n, std::size_t s) {
  if (s >= n) throw OutOfRange("point mass state out of range");
  Vector nu(n, 0.0);
  nu[s] = 1.0;
  return nu;
}

/// Extends a functional on theta to the stacked (theta, y) GTD parameter.
inline Vector pad_functional(std::span<const double> c, std::size_t dim) {
  Vector out(dim, 0.0);
  std::copy(c.begin(), c.end(), out.begin());
  return out;
}

// ---------------------------------------------------------------------------
// Offline baseline

using Episode = std::vector<Transition>;

/// Splits a transition stream at terminal transitions. A trailing partial
/// episode is kept.
inline std::vector<Episode> split_episodes(std::span<const Transition> stream) {
  std::vector<Episode> out;
  Episode cur;
  for (const auto& tr : stream) {
    cur.push_back(tr);
    if (tr.terminal_next) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

/// Full-run LSA from theta_0 = 0 over a transition list; returns theta_bar.
template <class Obs>
inline Vector run_lsa(std::span<const Transition> transitions, ObservationBuilder<Obs>& builder,
                      const StepSchedule& schedule) {
  LsaState state(builder.dim());
  for (const auto& tr : transitions) state.step(builder.build(tr), schedule);
  return state.theta_bar();
}

/// For each of B resamples: draw |episodes| episodes with replacement,
/// concatenate them, and run `estimator` on the result.
template <class Estimator>
  requires std::invocable<Estimator&, std::span<const Transition>>
inline std::vector<Vector> offline_bootstrap(const std::vector<Episode>& episodes, std::size_t replicates,
                                             Estimator&& estimator, std::uint64_t seed) {
  if (episodes.empty()) throw EmptyEpisodes("offline bootstrap needs at least one episode");
  Rng rng(derive_seed(seed, kResampleStream));
  std::uniform_int_distribution<std::size_t> pick(0, episodes.size() - 1);
  std::vector<Vector> out;
  out.reserve(replicates);
  std::vector<Transition> stream;
  for (std::size_t b = 0; b < replicates; ++b) {
    stream.clear();
    for (std::size_t k = 0; k < episodes.size(); ++k) {
      const auto& ep = episodes[pick(rng)];
      stream.insert(stream.end(), ep.begin(), ep.end());
    }
    out.push_back(estimator(std::span<const Transition>(stream)));
  }
  return out;
}

/// Quantile CI from offline resample estimates, centered on the full-data estimate.
inline ConfidenceInterval offline_quantile_ci(std::span<const double> theta_bar, const std::vector<Vector>& resamples,
                                              double level, std::span<const double> c) {
  Vector values;
  values.reserve(resamples.size());
  for (const auto& r : resamples) values.push_back(dot(c, r));
  return quantile_interval(dot(c, theta_bar), values, level);
}

}  // namespace tdboot
