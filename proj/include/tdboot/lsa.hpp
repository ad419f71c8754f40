#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>

#include "tdboot/errors.hpp"
#include "tdboot/numerics.hpp"
#include "tdboot/observations.hpp"

namespace tdboot {

/// alpha_t = alpha0 / t^eta with eta in (1/2, 1).
struct StepSchedule {
  double alpha0 = 1.0;
  double eta = 0.75;

  void validate() const {
    if (!(alpha0 > 0.0)) throw ConfigInvalid("alpha0 must be positive");
    if (!(eta > 0.5 && eta < 1.0)) throw ConfigInvalid("eta must lie strictly between 0.5 and 1");
  }

  double operator()(std::uint64_t t) const {
    if (t == 0) throw OutOfRange("step sizes are indexed from t = 1");
    return alpha0 / std::pow(static_cast<double>(t), eta);
  }
};

inline double step_size(const StepSchedule& schedule, std::uint64_t t) { return schedule(t); }

/// Norm above which an iterate counts as diverged even while still finite.
inline constexpr double kDivergenceNorm = 1e8;

namespace detail {

/// One (possibly perturbed) LSA step on raw spans. The unperturbed iterate
/// runs through here with weight 1 so it stays bitwise identical to a
/// replicate whose weights are all 1.
template <LinearObservation Obs>
inline void perturbed_step(std::span<double> theta, std::span<double> theta_bar, std::uint64_t t, const Obs& obs,
                           double alpha, double weight) {
  obs.apply(theta, alpha * weight);
  const double tt = static_cast<double>(t);
  const double inv = 1.0 / (tt + 1.0);
  bool finite = true;
  double sq = 0.0;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    theta_bar[i] = (tt * theta_bar[i] + theta[i]) * inv;
    finite = finite && std::isfinite(theta[i]);
    sq += theta[i] * theta[i];
  }
  if (!finite || !(sq <= kDivergenceNorm * kDivergenceNorm)) {
    throw NonFinite("iterate diverged at step " + std::to_string(t + 1));
  }
}

}  // namespace detail

/// Current iterate, its Polyak-Ruppert running average, and the step count.
/// The average covers theta_1..theta_t; theta_0 is not included.
class LsaState {
 public:
  LsaState() = default;
  explicit LsaState(std::size_t dim) : theta_(dim, 0.0), theta_bar_(dim, 0.0) {}
  explicit LsaState(Vector theta0) : theta_(std::move(theta0)), theta_bar_(theta_.size(), 0.0) {}

  std::size_t dim() const noexcept { return theta_.size(); }
  std::uint64_t t() const noexcept { return t_; }
  const Vector& theta() const noexcept { return theta_; }
  const Vector& theta_bar() const noexcept { return theta_bar_; }

  /// theta <- theta + alpha (b - A theta); theta_bar <- (t theta_bar + theta) / (t+1).
  template <LinearObservation Obs>
  void step(const Obs& obs, double alpha) {
    if (obs.dim() != dim()) throw DimensionMismatch("observation dim " + std::to_string(obs.dim()) +
                                                    " != state dim " + std::to_string(dim()));
    detail::perturbed_step(std::span<double>(theta_), std::span<double>(theta_bar_), t_, obs, alpha, 1.0);
    ++t_;
  }

  /// Uses alpha_{t+1} from the schedule.
  template <LinearObservation Obs>
  void step(const Obs& obs, const StepSchedule& schedule) {
    step(obs, schedule(t_ + 1));
  }

 private:
  Vector theta_;
  Vector theta_bar_;
  std::uint64_t t_ = 0;
};

template <LinearObservation Obs>
[[nodiscard]] inline LsaState lsa_step(LsaState state, const Obs& obs, double alpha) {
  state.step(obs, alpha);
  return state;
}

}  // namespace tdboot
