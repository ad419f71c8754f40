#pragma once

// Tabular MDPs and the analytic quantities derived from them: induced
// reward processes, true values, stationary distributions and the expected
// (A, b) system that TD/GTD iterates are solving. Also the built-in
// environment generators and the episode-concatenating trajectory sampler.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <queue>
#include <set>
#include <string>
#include <vector>

#include "tdboot/errors.hpp"
#include "tdboot/features.hpp"
#include "tdboot/numerics.hpp"
#include "tdboot/random.hpp"

namespace tdboot {

inline constexpr double kStochasticTol = 1e-10;

/// Finite MDP with transition P[s][a][s'], reward R[s][a][s'] and discount.
/// Terminal states are absorbing with zero reward.
class TabularMdp {
 public:
  TabularMdp() = default;
  TabularMdp(std::size_t n_states, std::size_t n_actions, std::vector<double> transition,
             std::vector<double> reward, double gamma, std::vector<char> terminal,
             std::size_t start_state)
      : n_states_(n_states),
        n_actions_(n_actions),
        transition_(std::move(transition)),
        reward_(std::move(reward)),
        gamma_(gamma),
        terminal_(std::move(terminal)),
        start_(start_state) {
    validate();
  }

  std::size_t n_states() const noexcept { return n_states_; }
  std::size_t n_actions() const noexcept { return n_actions_; }
  double gamma() const noexcept { return gamma_; }
  std::size_t start_state() const noexcept { return start_; }
  double r_max() const noexcept { return r_max_; }
  bool terminal(std::size_t s) const noexcept { return terminal_[s] != 0; }
  const std::vector<char>& terminal_mask() const noexcept { return terminal_; }
  bool episodic() const noexcept {
    return std::any_of(terminal_.begin(), terminal_.end(), [](char t) { return t != 0; });
  }
  std::vector<char> nonterminal_mask() const {
    std::vector<char> m(n_states_);
    for (std::size_t s = 0; s < n_states_; ++s) m[s] = terminal_[s] ? 0 : 1;
    return m;
  }

  double p(std::size_t s, std::size_t a, std::size_t s2) const noexcept {
    return transition_[index(s, a, s2)];
  }
  double r(std::size_t s, std::size_t a, std::size_t s2) const noexcept {
    return reward_[index(s, a, s2)];
  }
  std::span<const double> p_row(std::size_t s, std::size_t a) const noexcept {
    return {transition_.data() + index(s, a, 0), n_states_};
  }

 private:
  std::size_t index(std::size_t s, std::size_t a, std::size_t s2) const noexcept {
    return (s * n_actions_ + a) * n_states_ + s2;
  }

  void validate() {
    const std::size_t n = n_states_ * n_actions_ * n_states_;
    if (n_states_ == 0 || n_actions_ == 0) throw InvalidModel("empty state or action space");
    if (transition_.size() != n || reward_.size() != n) throw InvalidModel("tensor sizes do not match S x A x S");
    if (terminal_.size() != n_states_) throw InvalidModel("terminal mask size");
    if (!(gamma_ > 0.0 && gamma_ < 1.0)) throw InvalidModel("gamma must lie in (0,1)");
    if (start_ >= n_states_) throw InvalidModel("start state out of range");
    if (terminal_[start_]) throw InvalidModel("start state is terminal");
    if (!all_finite(reward_)) throw InvalidModel("non-finite reward");
    for (std::size_t s = 0; s < n_states_; ++s)
      for (std::size_t a = 0; a < n_actions_; ++a) {
        double sum = 0.0;
        for (std::size_t s2 = 0; s2 < n_states_; ++s2) {
          const double pr = p(s, a, s2);
          if (!(pr >= 0.0)) throw InvalidModel("negative transition probability");
          sum += pr;
          r_max_ = std::max(r_max_, std::abs(r(s, a, s2)));
        }
        if (std::abs(sum - 1.0) > kStochasticTol) {
          throw InvalidModel("P[" + std::to_string(s) + "][" + std::to_string(a) + "] sums to " +
                             std::to_string(sum));
        }
        if (terminal_[s]) {
          if (p(s, a, s) != 1.0) throw InvalidModel("terminal state without unit self-loop");
          for (std::size_t s2 = 0; s2 < n_states_; ++s2)
            if (r(s, a, s2) != 0.0) throw InvalidModel("terminal state with nonzero reward");
        }
      }
  }

  std::size_t n_states_ = 0;
  std::size_t n_actions_ = 0;
  std::vector<double> transition_;
  std::vector<double> reward_;
  double gamma_ = 0.9;
  std::vector<char> terminal_;
  std::size_t start_ = 0;
  double r_max_ = 0.0;
};

/// Stochastic policy pi[s][a].
class Policy {
 public:
  Policy() = default;
  explicit Policy(Matrix probs) : probs_(std::move(probs)) {
    for (std::size_t s = 0; s < probs_.rows(); ++s) {
      double sum = 0.0;
      for (double p : probs_.row(s)) {
        if (!(p >= 0.0)) throw InvalidModel("negative policy probability");
        sum += p;
      }
      if (std::abs(sum - 1.0) > kStochasticTol) {
        throw InvalidModel("policy row " + std::to_string(s) + " sums to " + std::to_string(sum));
      }
    }
  }

  static Policy uniform(std::size_t n_states, std::size_t n_actions) {
    return Policy(Matrix(n_states, n_actions, 1.0 / static_cast<double>(n_actions)));
  }
  static Policy deterministic(const std::vector<std::size_t>& action, std::size_t n_actions) {
    Matrix m(action.size(), n_actions);
    for (std::size_t s = 0; s < action.size(); ++s) m(s, action[s]) = 1.0;
    return Policy(std::move(m));
  }

  std::size_t n_states() const noexcept { return probs_.rows(); }
  std::size_t n_actions() const noexcept { return probs_.cols(); }
  double operator()(std::size_t s, std::size_t a) const noexcept { return probs_(s, a); }
  const Matrix& probs() const noexcept { return probs_; }

  bool operator==(const Policy&) const = default;

 private:
  Matrix probs_;
};

/// Markov reward process induced by fixing a policy.
struct Mrp {
  Matrix kernel;
  Vector expected_reward;
  double gamma = 0.9;
  std::vector<char> terminal;
  std::size_t start_state = 0;
};

/// One observed step (s, a, r, s').
struct Transition {
  std::size_t s = 0;
  std::size_t a = 0;
  double r = 0.0;
  std::size_t s_next = 0;
  bool terminal_next = false;

  bool operator==(const Transition&) const = default;
};

inline void check_policy_shape(const TabularMdp& mdp, const Policy& pi) {
  if (pi.n_states() != mdp.n_states() || pi.n_actions() != mdp.n_actions()) {
    throw DimensionMismatch("policy is " + std::to_string(pi.n_states()) + "x" + std::to_string(pi.n_actions()) +
                            ", mdp is " + std::to_string(mdp.n_states()) + "x" + std::to_string(mdp.n_actions()));
  }
}

inline Mrp induce_mrp(const TabularMdp& mdp, const Policy& pi) {
  check_policy_shape(mdp, pi);
  const std::size_t n = mdp.n_states();
  Mrp out{Matrix(n, n), Vector(n, 0.0), mdp.gamma(), mdp.terminal_mask(), mdp.start_state()};
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t a = 0; a < mdp.n_actions(); ++a) {
      const double w = pi(s, a);
      if (w == 0.0) continue;
      for (std::size_t s2 = 0; s2 < n; ++s2) {
        const double p = mdp.p(s, a, s2);
        out.kernel(s, s2) += w * p;
        out.expected_reward[s] += w * p * mdp.r(s, a, s2);
      }
    }
  return out;
}

/// V = (I - gamma P)^-1 r. Terminal states come out as 0 because their rows
/// are zero-reward self-loops.
inline Vector true_value(const Mrp& mrp) {
  const std::size_t n = mrp.kernel.rows();
  Matrix lhs = Matrix::identity(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) lhs(i, j) -= mrp.gamma * mrp.kernel(i, j);
  Vector v = solve_linear(lhs, mrp.expected_reward);
  for (std::size_t s = 0; s < n && s < mrp.terminal.size(); ++s)
    if (mrp.terminal[s]) v[s] = 0.0;
  return v;
}

struct StationaryOptions {
  /// Replace terminal rows (per `terminal`) by a unit jump to `start`.
  bool restart_augmented = false;
  std::vector<char> terminal;
  std::size_t start = 0;
  /// Iterate on damping*P + (1-damping)*I. Any damping in (0,1] keeps the
  /// fixed point of P; values below 1 remove periodicity.
  double damping = 1.0;
  double tol = 1e-12;
  std::size_t max_iter = 1'000'000;
};

/// Left fixed point of a row-stochastic kernel by power iteration from a
/// point mass at `opts.start`.
inline Vector stationary_distribution(const Matrix& kernel, const StationaryOptions& opts = {}) {
  if (!kernel.square()) throw DimensionMismatch("stationary_distribution: kernel not square");
  const std::size_t n = kernel.rows();
  if (opts.start >= n) throw OutOfRange("stationary_distribution: start state");
  if (!(opts.damping > 0.0 && opts.damping <= 1.0)) throw OutOfRange("damping must lie in (0,1]");

  Matrix k = kernel;
  if (opts.restart_augmented) {
    if (opts.terminal.size() != n) throw DimensionMismatch("stationary_distribution: terminal mask");
    for (std::size_t s = 0; s < n; ++s) {
      if (!opts.terminal[s]) continue;
      std::fill(k.row(s).begin(), k.row(s).end(), 0.0);
      k(s, opts.start) = 1.0;
    }
  }

  auto apply = [&](const Vector& mu, double damping) {
    Vector next = vecmat(mu, k);
    if (damping < 1.0)
      for (std::size_t i = 0; i < n; ++i) next[i] = damping * next[i] + (1.0 - damping) * mu[i];
    double total = 0.0;
    for (double x : next) total += x;
    for (double& x : next) x /= total;
    return next;
  };

  Vector mu(n, 0.0);
  mu[opts.start] = 1.0;
  for (std::size_t it = 0; it < opts.max_iter; ++it) {
    Vector next = apply(mu, opts.damping);
    double change = 0.0;
    for (std::size_t i = 0; i < n; ++i) change += std::abs(next[i] - mu[i]);
    mu = std::move(next);
    if (change <= opts.tol) {
      if (opts.damping < 1.0) mu = apply(mu, 1.0);
      return mu;
    }
  }
  throw NonConvergence("power iteration did not settle after " + std::to_string(opts.max_iter) +
                       " iterations (periodic or reducible chain?)");
}

/// Long-run frequency of states at observation time when `behavior` drives
/// the concatenated-episode stream: the restart-augmented stationary law with
/// terminal mass removed (terminal states are never observed as s_t).
inline Vector observation_distribution(const TabularMdp& mdp, const Policy& behavior) {
  const Mrp mrp = induce_mrp(mdp, behavior);
  StationaryOptions opts;
  opts.restart_augmented = mdp.episodic();
  opts.terminal = mdp.terminal_mask();
  opts.start = mdp.start_state();
  opts.damping = 0.999;
  Vector mu = stationary_distribution(mrp.kernel, opts);
  double total = 0.0;
  for (std::size_t s = 0; s < mu.size(); ++s) {
    if (mdp.terminal(s)) mu[s] = 0.0;
    total += mu[s];
  }
  for (double& x : mu) x /= total;
  return mu;
}

enum class Task { td, gtd_neu, gtd_mspbe };

inline bool is_gtd(Task t) noexcept { return t != Task::td; }

struct LinearSystem {
  Matrix a;
  Vector b;
};

inline void check_behavior_support(const Policy& target, const Policy& behavior) {
  for (std::size_t s = 0; s < target.n_states(); ++s)
    for (std::size_t a = 0; a < target.n_actions(); ++a)
      if (target(s, a) > 0.0 && behavior(s, a) == 0.0) {
        throw ZeroBehaviorProbability("behavior never takes action " + std::to_string(a) + " in state " +
                                      std::to_string(s) + " but the target does");
      }
}

/// Expected (A, b) of the observation stream under the sign convention
/// theta <- theta + alpha (b - A theta).
///
/// TD: A = Phi^T Xi (I - gamma P~) Phi, b = Phi^T Xi r, with Xi the
/// observation distribution of the behavior chain and P~ the target kernel
/// with transitions into terminal states removed (zero successor features).
/// GTD: the stacked 2d system [[0, -A^T], [A, M]], (0, b) with M = I (NEU)
/// or Phi^T Xi Phi (MSPBE).
inline LinearSystem expected_lsa_system(const TabularMdp& mdp, const Policy& target, const Policy& behavior,
                                        const FeatureMap& features, Task task) {
  check_policy_shape(mdp, target);
  check_policy_shape(mdp, behavior);
  if (features.n_states() != mdp.n_states()) throw DimensionMismatch("feature rows != n_states");
  if (features.dim() == 0) throw DimensionMismatch("feature dimension is 0");
  if (task == Task::td && !(target == behavior)) {
    throw DimensionMismatch("TD expects target == behavior; use a GTD task for off-policy data");
  }
  check_behavior_support(target, behavior);

  const std::size_t n = mdp.n_states();
  const std::size_t d = features.dim();
  const Vector xi = observation_distribution(mdp, behavior);
  const Mrp mrp = induce_mrp(mdp, target);

  Matrix a(d, d);
  Matrix m(d, d);
  Vector b(d, 0.0);
  Vector next_phi(d);
  for (std::size_t s = 0; s < n; ++s) {
    if (xi[s] == 0.0) continue;
    auto phi = features(s);
    std::fill(next_phi.begin(), next_phi.end(), 0.0);
    for (std::size_t s2 = 0; s2 < n; ++s2) {
      const double p = mrp.kernel(s, s2);
      if (p == 0.0 || mdp.terminal(s2)) continue;
      auto phi2 = features(s2);
      for (std::size_t j = 0; j < d; ++j) next_phi[j] += p * phi2[j];
    }
    for (std::size_t i = 0; i < d; ++i) {
      const double wi = xi[s] * phi[i];
      if (wi == 0.0) continue;
      for (std::size_t j = 0; j < d; ++j) {
        a(i, j) += wi * (phi[j] - mdp.gamma() * next_phi[j]);
        m(i, j) += wi * phi[j];
      }
      b[i] += wi * mrp.expected_reward[s];
    }
  }
  if (task == Task::td) return {std::move(a), std::move(b)};

  if (task == Task::gtd_neu) m = Matrix::identity(d);
  Matrix stacked(2 * d, 2 * d);
  Vector rhs(2 * d, 0.0);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      stacked(i, d + j) = -a(j, i);
      stacked(d + i, j) = a(i, j);
      stacked(d + i, d + j) = m(i, j);
    }
    rhs[d + i] = b[i];
  }
  return {std::move(stacked), std::move(rhs)};
}

// ---------------------------------------------------------------------------
// Environment generators

struct GridLayout {
  std::size_t width = 4;
  std::size_t height = 4;
  std::set<std::size_t> holes;
  std::size_t goal = 15;
};

enum GridAction : std::size_t { kUp = 0, kDown = 1, kLeft = 2, kRight = 3 };

/// Standard FrozenLake maps ("4x4", "8x8"); start top-left, goal bottom-right.
inline GridLayout frozen_lake_layout(const std::string& name) {
  std::vector<std::string> rows;
  if (name == "4x4") {
    rows = {"SFFF", "FHFH", "FFFH", "HFFG"};
  } else if (name == "8x8") {
    rows = {"SFFFFFFF", "FFFFFFFF", "FFFHFFFF", "FFFFFHFF",
            "FFFHFFFF", "FHHFFFHF", "FHFFHFHF", "FFFHFFFG"};
  } else {
    throw InvalidLayout("unknown map '" + name + "' (expected 4x4 or 8x8)");
  }
  GridLayout g;
  g.height = rows.size();
  g.width = rows.front().size();
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c) {
      const std::size_t s = r * g.width + c;
      if (rows[r][c] == 'H') g.holes.insert(s);
      if (rows[r][c] == 'G') g.goal = s;
    }
  return g;
}

/// Gridworld with perpendicular slip: the intended move happens with
/// probability 1-slip, each perpendicular move with slip/2. Off-grid moves
/// stay put; holes and the goal are terminal; reward 1 on entering the goal.
inline TabularMdp build_gridworld(const GridLayout& layout, double slip, double gamma) {
  const std::size_t w = layout.width, h = layout.height, n = w * h;
  if (w == 0 || h == 0) throw InvalidLayout("empty grid");
  if (layout.goal >= n) throw InvalidLayout("goal outside grid");
  if (layout.holes.count(layout.goal)) throw InvalidLayout("goal is a hole");
  if (layout.holes.count(0) || layout.goal == 0) throw InvalidLayout("start state is terminal");
  for (std::size_t hole : layout.holes)
    if (hole >= n) throw InvalidLayout("hole outside grid");
  if (!(slip >= 0.0 && slip < 1.0)) throw InvalidLayout("slip must lie in [0,1)");

  std::vector<char> terminal(n, 0);
  for (std::size_t hole : layout.holes) terminal[hole] = 1;
  terminal[layout.goal] = 1;

  auto move = [&](std::size_t s, std::size_t dir) -> std::size_t {
    const std::size_t r = s / w, c = s % w;
    switch (dir) {
      case kUp: return r == 0 ? s : s - w;
      case kDown: return r + 1 == h ? s : s + w;
      case kLeft: return c == 0 ? s : s - 1;
      default: return c + 1 == w ? s : s + 1;
    }
  };
  auto perpendicular = [](std::size_t dir) -> std::pair<std::size_t, std::size_t> {
    return (dir == kUp || dir == kDown) ? std::pair<std::size_t, std::size_t>{kLeft, kRight}
                                        : std::pair<std::size_t, std::size_t>{kUp, kDown};
  };

  constexpr std::size_t na = 4;
  std::vector<double> p(n * na * n, 0.0), rew(n * na * n, 0.0);
  auto at = [&](std::size_t s, std::size_t a, std::size_t s2) { return (s * na + a) * n + s2; };
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t a = 0; a < na; ++a) {
      if (terminal[s]) {
        p[at(s, a, s)] = 1.0;
        continue;
      }
      const auto [left, right] = perpendicular(a);
      p[at(s, a, move(s, a))] += 1.0 - slip;
      if (slip > 0.0) {
        p[at(s, a, move(s, left))] += slip / 2.0;
        p[at(s, a, move(s, right))] += slip / 2.0;
      }
      rew[at(s, a, layout.goal)] = 1.0;
    }
  return TabularMdp(n, na, std::move(p), std::move(rew), gamma, std::move(terminal), 0);
}

/// Two states that alternate deterministically under either action. State 0
/// pays 0 or 2 and state 1 pays -1 or +1 depending on the action, so under
/// the uniform policy P = [[0,1],[1,0]] and r = (1, 0) with reward noise.
inline TabularMdp build_two_state_chain(double gamma = 0.5) {
  std::vector<double> p = {0, 1, 0, 1,    // s=0: a=0, a=1
                           1, 0, 1, 0};   // s=1
  std::vector<double> r = {0, 0, 0, 2,
                           -1, 0, 1, 0};
  return TabularMdp(2, 2, std::move(p), std::move(r), gamma, {0, 0}, 0);
}

/// r = (I - gamma P) Phi theta: the expected reward that makes Phi theta the
/// exact value of the chain P.
inline Vector linear_value_rewards(const Matrix& kernel, const Matrix& phi, std::span<const double> theta,
                                   double gamma) {
  const Vector v = matvec(phi, theta);
  const Vector pv = matvec(kernel, v);
  Vector r(v.size());
  for (std::size_t s = 0; s < v.size(); ++s) r[s] = v[s] - gamma * pv[s];
  return r;
}

struct RandomMdpInstance {
  TabularMdp mdp;
  FeatureMap features;
  Vector theta_true;
  Policy target;
};

/// Random MDP whose target-policy value is exactly Phi theta_true.
/// Transition rows and target-policy rows are Dirichlet(1), features are
/// standardized uniforms and theta_true ~ U(-1,1). R(s,a,s') = r(s), so the
/// expected-reward constraint holds for every policy.
inline RandomMdpInstance build_random_mdp(std::size_t n_states, std::size_t n_actions, std::size_t d,
                                          double gamma, std::uint64_t seed) {
  if (d == 0 || d > n_states) throw InvalidModel("random mdp needs 1 <= d <= n_states");
  Rng rng(derive_seed(seed, 1));
  std::vector<double> p;
  p.reserve(n_states * n_actions * n_states);
  for (std::size_t i = 0; i < n_states * n_actions; ++i) {
    const auto row = dirichlet_ones(n_states, rng);
    p.insert(p.end(), row.begin(), row.end());
  }
  Matrix pi(n_states, n_actions);
  for (std::size_t s = 0; s < n_states; ++s) {
    const auto row = dirichlet_ones(n_actions, rng);
    std::copy(row.begin(), row.end(), pi.row(s).begin());
  }
  Policy target(std::move(pi));
  Vector theta(d);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (double& x : theta) x = u(rng);

  FeatureMap features = random_features(n_states, d, derive_seed(seed, 2));

  // Reward-free model first, to get the target kernel.
  TabularMdp shell(n_states, n_actions, p, std::vector<double>(p.size(), 0.0), gamma,
                   std::vector<char>(n_states, 0), 0);
  const Vector r = linear_value_rewards(induce_mrp(shell, target).kernel, features.table(), theta, gamma);
  std::vector<double> rew(p.size());
  for (std::size_t s = 0; s < n_states; ++s)
    std::fill_n(rew.begin() + static_cast<std::ptrdiff_t>(s * n_actions * n_states), n_actions * n_states, r[s]);

  return {TabularMdp(n_states, n_actions, std::move(p), std::move(rew), gamma, std::vector<char>(n_states, 0), 0),
          std::move(features), std::move(theta), std::move(target)};
}

// ---------------------------------------------------------------------------
// Policy utilities

/// Greedy deterministic policy from value iteration; ties go to the lowest
/// action index. Terminal states get action 0.
inline Policy value_iteration(const TabularMdp& mdp, double tol) {
  if (!(tol > 0.0)) throw OutOfRange("value_iteration tolerance must be positive");
  const std::size_t n = mdp.n_states(), na = mdp.n_actions();
  Vector v(n, 0.0);
  auto q = [&](std::size_t s, std::size_t a, const Vector& values) {
    double acc = 0.0;
    for (std::size_t s2 = 0; s2 < n; ++s2) {
      const double p = mdp.p(s, a, s2);
      if (p == 0.0) continue;
      acc += p * (mdp.r(s, a, s2) + (mdp.terminal(s2) ? 0.0 : mdp.gamma() * values[s2]));
    }
    return acc;
  };
  for (;;) {
    Vector next(n, 0.0);
    double change = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
      if (mdp.terminal(s)) continue;
      double best = -std::numeric_limits<double>::infinity();
      for (std::size_t a = 0; a < na; ++a) best = std::max(best, q(s, a, v));
      next[s] = best;
      change = std::max(change, std::abs(best - v[s]));
    }
    v = std::move(next);
    if (change <= tol) break;
  }
  std::vector<std::size_t> greedy(n, 0);
  for (std::size_t s = 0; s < n; ++s) {
    if (mdp.terminal(s)) continue;
    double best = q(s, 0, v);
    for (std::size_t a = 1; a < na; ++a) {
      const double qa = q(s, a, v);
      if (qa > best + 1e-12) {
        best = qa;
        greedy[s] = a;
      }
    }
  }
  return Policy::deterministic(greedy, na);
}

inline Policy epsilon_greedy(const Policy& base, double epsilon) {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw OutOfRange("epsilon must lie in [0,1]");
  Matrix m = base.probs();
  const double floor = epsilon / static_cast<double>(base.n_actions());
  for (double& p : m.data()) p = (1.0 - epsilon) * p + floor;
  return Policy(std::move(m));
}

// ---------------------------------------------------------------------------
// Sampling

/// Generates the concatenated-episode transition stream under a behavior
/// policy. On entering a terminal state the sampler silently jumps back to
/// the start state; the terminal state itself is never emitted as `s`.
class TrajectorySampler {
 public:
  TrajectorySampler(const TabularMdp& mdp, Policy behavior, std::uint64_t seed)
      : mdp_(&mdp), behavior_(std::move(behavior)), rng_(seed), current_(mdp.start_state()) {
    check_policy_shape(mdp, behavior_);
    const std::size_t n = mdp.n_states(), na = mdp.n_actions();
    action_cdf_.resize(n * na);
    next_cdf_.resize(n * na * n);
    for (std::size_t s = 0; s < n; ++s) {
      double acc = 0.0;
      for (std::size_t a = 0; a < na; ++a) action_cdf_[s * na + a] = (acc += behavior_(s, a));
      for (std::size_t a = 0; a < na; ++a) {
        double acc2 = 0.0;
        for (std::size_t s2 = 0; s2 < n; ++s2) next_cdf_[(s * na + a) * n + s2] = (acc2 += mdp.p(s, a, s2));
      }
    }
  }

  Transition next() {
    const std::size_t n = mdp_->n_states(), na = mdp_->n_actions();
    Transition tr;
    tr.s = current_;
    tr.a = sample_from_cdf(std::span<const double>(action_cdf_).subspan(current_ * na, na), rng_);
    tr.s_next = sample_from_cdf(std::span<const double>(next_cdf_).subspan((current_ * na + tr.a) * n, n), rng_);
    tr.r = mdp_->r(tr.s, tr.a, tr.s_next);
    tr.terminal_next = mdp_->terminal(tr.s_next);
    ++steps_;
    if (tr.terminal_next) {
      ++episodes_;
      current_ = mdp_->start_state();
    } else {
      current_ = tr.s_next;
    }
    return tr;
  }

  std::size_t current_state() const noexcept { return current_; }
  std::uint64_t steps() const noexcept { return steps_; }
  std::uint64_t episodes_completed() const noexcept { return episodes_; }
  const Policy& behavior() const noexcept { return behavior_; }

 private:
  const TabularMdp* mdp_;
  Policy behavior_;
  Rng rng_;
  std::size_t current_;
  std::uint64_t steps_ = 0;
  std::uint64_t episodes_ = 0;
  std::vector<double> action_cdf_;
  std::vector<double> next_cdf_;
};

}  // namespace tdboot
