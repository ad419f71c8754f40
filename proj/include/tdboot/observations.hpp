#pragma once

// Noisy LSA observations (A(X_t), b(X_t)) built from transitions.
//
// Every observation type models the LinearObservation concept: it knows its
// dimension, can materialize its dense (A, b), and can apply the update
// theta <- theta + scale * (b - A theta) in place without forming A.

#include <concepts>
#include <span>
#include <vector>

#include "tdboot/env.hpp"
#include "tdboot/errors.hpp"
#include "tdboot/features.hpp"
#include "tdboot/numerics.hpp"

namespace tdboot {

template <class O>
concept LinearObservation = requires(const O& o, std::span<double> theta, double scale) {
  { o.dim() } -> std::convertible_to<std::size_t>;
  { o.a_matrix() } -> std::convertible_to<Matrix>;
  { o.b_vector() } -> std::convertible_to<Vector>;
  o.apply(theta, scale);
};

/// Arbitrary dense observation.
struct DenseObservation {
  Matrix a;
  Vector b;

  DenseObservation() = default;
  DenseObservation(Matrix a_mat, Vector b_vec) : a(std::move(a_mat)), b(std::move(b_vec)) {}

  std::size_t dim() const noexcept { return b.size(); }
  Matrix a_matrix() const { return a; }
  Vector b_vector() const { return b; }

  void apply(std::span<double> theta, double scale) const {
    const std::size_t n = dim();
    scratch_.resize(n);
    for (std::size_t i = 0; i < n; ++i) scratch_[i] = b[i] - dot(a.row(i), theta);
    for (std::size_t i = 0; i < n; ++i) theta[i] += scale * scratch_[i];
  }

 private:
  mutable Vector scratch_;
};

/// TD observation: A = u v^T, b = r u with u = phi(s), v = phi(s) - gamma phi(s').
struct TdObservation {
  Vector u;
  Vector v;
  double reward = 0.0;

  std::size_t dim() const noexcept { return u.size(); }

  Matrix a_matrix() const {
    Matrix a(u.size(), v.size());
    for (std::size_t i = 0; i < u.size(); ++i)
      for (std::size_t j = 0; j < v.size(); ++j) a(i, j) = u[i] * v[j];
    return a;
  }
  Vector b_vector() const {
    Vector b(u);
    for (double& x : b) x *= reward;
    return b;
  }

  void apply(std::span<double> theta, double scale) const {
    const double step = scale * (reward - dot(v, theta));
    for (std::size_t i = 0; i < u.size(); ++i) theta[i] += step * u[i];
  }

  double a_frobenius() const { return norm2(u) * norm2(v); }
  double b_norm() const { return std::abs(reward) * norm2(u); }
};

enum class GtdVariant { neu, mspbe };

/// Stacked GTD observation on Theta = (theta, y):
///   A = [[0, -A_t^T], [A_t, M_t]], b = (0, b_t)
/// with A_t = rho u v^T, b_t = rho r u, M_t = I (NEU) or u u^T (MSPBE).
struct GtdObservation {
  Vector u;
  Vector v;
  double reward = 0.0;
  double rho = 1.0;
  GtdVariant variant = GtdVariant::neu;

  std::size_t dim() const noexcept { return 2 * u.size(); }

  Matrix a_matrix() const {
    const std::size_t d = u.size();
    Matrix a(2 * d, 2 * d);
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) {
        const double at_ij = rho * u[i] * v[j];
        a(d + i, j) = at_ij;
        a(j, d + i) = -at_ij;
        a(d + i, d + j) = variant == GtdVariant::neu ? (i == j ? 1.0 : 0.0) : u[i] * u[j];
      }
    return a;
  }
  Vector b_vector() const {
    const std::size_t d = u.size();
    Vector b(2 * d, 0.0);
    for (std::size_t i = 0; i < d; ++i) b[d + i] = rho * reward * u[i];
    return b;
  }

  void apply(std::span<double> big_theta, double scale) const {
    const std::size_t d = u.size();
    auto theta = big_theta.first(d);
    auto y = big_theta.subspan(d, d);
    const double uy = dot(u, y);
    const double td_error = reward - dot(v, theta);
    // theta += scale * rho (u.y) v
    const double theta_step = scale * rho * uy;
    for (std::size_t i = 0; i < d; ++i) theta[i] += theta_step * v[i];
    // y += scale * (rho delta u - M y)
    const double y_step = scale * rho * td_error;
    if (variant == GtdVariant::neu) {
      for (std::size_t i = 0; i < d; ++i) y[i] += y_step * u[i] - scale * y[i];
    } else {
      const double m_step = scale * uy;
      for (std::size_t i = 0; i < d; ++i) y[i] += (y_step - m_step) * u[i];
    }
  }

  /// Frobenius norms of the blocks: sqrt(2 ||A_t||^2 + ||M_t||^2).
  double a_frobenius() const {
    const double at = rho * norm2(u) * norm2(v);
    const double m = variant == GtdVariant::neu ? std::sqrt(static_cast<double>(u.size())) : dot(u, u);
    return std::sqrt(2.0 * at * at + m * m);
  }
  double b_norm() const { return rho * std::abs(reward) * norm2(u); }
};

static_assert(LinearObservation<DenseObservation>);
static_assert(LinearObservation<TdObservation>);
static_assert(LinearObservation<GtdObservation>);

inline void fill_td_vectors(const Transition& tr, const FeatureMap& features, double gamma, Vector& u, Vector& v) {
  if (tr.s >= features.n_states() || tr.s_next >= features.n_states()) {
    throw OutOfRange("transition state index outside feature table");
  }
  auto phi = features(tr.s);
  u.assign(phi.begin(), phi.end());
  v.assign(phi.begin(), phi.end());
  if (!tr.terminal_next) {
    auto phi2 = features(tr.s_next);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= gamma * phi2[i];
  }
}

inline TdObservation td_observation(const Transition& tr, const FeatureMap& features, double gamma) {
  TdObservation obs;
  fill_td_vectors(tr, features, gamma, obs.u, obs.v);
  obs.reward = tr.r;
  return obs;
}

inline double importance_ratio(const Policy& target, const Policy& behavior, std::size_t s, std::size_t a) {
  const double pb = behavior(s, a);
  if (!(pb > 0.0)) {
    throw ZeroBehaviorProbability("pi_b(" + std::to_string(a) + "|" + std::to_string(s) + ") = 0");
  }
  return target(s, a) / pb;
}

inline GtdObservation gtd_observation(const Transition& tr, const FeatureMap& features, double gamma,
                                      const Policy& target, const Policy& behavior, GtdVariant variant) {
  GtdObservation obs;
  fill_td_vectors(tr, features, gamma, obs.u, obs.v);
  obs.reward = tr.r;
  obs.rho = importance_ratio(target, behavior, tr.s, tr.a);
  obs.variant = variant;
  return obs;
}

/// Largest importance ratio over the behavior policy's support.
inline double max_importance_ratio(const Policy& target, const Policy& behavior) {
  double rho_max = 0.0;
  for (std::size_t s = 0; s < behavior.n_states(); ++s)
    for (std::size_t a = 0; a < behavior.n_actions(); ++a)
      if (behavior(s, a) > 0.0) rho_max = std::max(rho_max, target(s, a) / behavior(s, a));
  return rho_max;
}

/// Bounds every observation emitted for a given (features, gamma, policies, r_max).
struct ObservationBounds {
  double a_max = 0.0;
  double b_max = 0.0;
};

inline ObservationBounds observation_bounds(const FeatureMap& features, double gamma, double r_max, double rho_max,
                                            Task task) {
  const double phi = features.phi_max();
  const double at = phi * (1.0 + gamma) * phi * rho_max;
  ObservationBounds out{at, rho_max * r_max * phi};
  if (is_gtd(task)) {
    const double m = task == Task::gtd_neu ? std::sqrt(static_cast<double>(features.dim())) : phi * phi;
    out.a_max = std::sqrt(2.0 * at * at + m * m);
  }
  return out;
}

/// Turns a transition stream into observations of one task, reusing buffers
/// and checking each observation against the precomputed bounds.
template <class Obs>
class ObservationBuilder {
 public:
  ObservationBuilder(const FeatureMap& features, double gamma, double r_max, Task task, Policy target,
                     Policy behavior)
      : features_(&features), gamma_(gamma), task_(task), target_(std::move(target)), behavior_(std::move(behavior)) {
    if constexpr (std::same_as<Obs, TdObservation>) {
      if (task != Task::td) throw ConfigInvalid("TdObservation builder used for a GTD task");
    } else {
      if (task == Task::td) throw ConfigInvalid("GtdObservation builder used for the TD task");
      check_behavior_support(target_, behavior_);
      obs_.variant = task == Task::gtd_neu ? GtdVariant::neu : GtdVariant::mspbe;
    }
    rho_max_ = is_gtd(task) ? max_importance_ratio(target_, behavior_) : 1.0;
    bounds_ = observation_bounds(features, gamma, r_max, rho_max_, task);
  }

  const Obs& build(const Transition& tr) {
    fill_td_vectors(tr, *features_, gamma_, obs_.u, obs_.v);
    obs_.reward = tr.r;
    if constexpr (std::same_as<Obs, GtdObservation>) obs_.rho = importance_ratio(target_, behavior_, tr.s, tr.a);
    constexpr double slack = 1.0 + 1e-9;
    if (obs_.a_frobenius() > bounds_.a_max * slack || obs_.b_norm() > bounds_.b_max * slack) {
      throw BoundViolation("observation exceeds declared A_max/b_max bounds");
    }
    return obs_;
  }

  std::size_t dim() const noexcept { return is_gtd(task_) ? 2 * features_->dim() : features_->dim(); }
  double rho_max() const noexcept { return rho_max_; }
  const ObservationBounds& bounds() const noexcept { return bounds_; }

 private:
  const FeatureMap* features_;
  double gamma_;
  Task task_;
  Policy target_;
  Policy behavior_;
  double rho_max_ = 1.0;
  ObservationBounds bounds_;
  Obs obs_;
};

}  // namespace tdboot
