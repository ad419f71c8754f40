#include <gtest/gtest.h>

#include <cmath>

#include "tdboot/lsa.hpp"

using namespace tdboot;

namespace {

DenseObservation two_state_mean_system() {
  return {Matrix(2, 2, {0.5, -0.25, -0.25, 0.5}), Vector{0.5, 0.0}};
}

TabularMdp five_state_chain() {
  Rng rng(500);
  std::vector<double> p, r;
  for (std::size_t i = 0; i < 5 * 2; ++i) {
    auto row = dirichlet_ones(5, rng);
    p.insert(p.end(), row.begin(), row.end());
    for (std::size_t k = 0; k < 5; ++k) r.push_back(2 * uniform01(rng) - 1);
  }
  return TabularMdp(5, 2, p, r, 0.7, std::vector<char>(5, 0), 0);
}

}  // namespace

TEST(StepSize, Examples) {
  EXPECT_EQ(step_size({1.0, 0.75}, 1), 1.0);
  EXPECT_DOUBLE_EQ(step_size({1.0, 0.75}, 16), 0.125);
  const long double oracle = 0.5L / std::exp(0.6L * std::log(32.0L));
  EXPECT_NEAR(step_size({0.5, 0.6}, 32), static_cast<double>(oracle), 1e-12);
  EXPECT_THROW(step_size({1.0, 0.75}, 0), OutOfRange);
}

TEST(StepSize, StrictlyDecreasing) {
  const StepSchedule s{2.0, 0.75};
  for (std::uint64_t t = 1; t < 10000; ++t) EXPECT_GT(s(t), s(t + 1));
}

TEST(StepSize, ValidateRejectsOutsideRange) {
  EXPECT_THROW((StepSchedule{1.0, 0.5}.validate()), ConfigInvalid);
  EXPECT_THROW((StepSchedule{1.0, 1.0}.validate()), ConfigInvalid);
  EXPECT_THROW((StepSchedule{0.0, 0.75}.validate()), ConfigInvalid);
  EXPECT_NO_THROW((StepSchedule{1.0, 0.51}.validate()));
}

TEST(LsaStep, ScalarContraction) {
  LsaState s(Vector{1.0});
  s = lsa_step(s, DenseObservation{Matrix(1, 1, {1.0}), Vector{0.0}}, 0.5);
  EXPECT_EQ(s.theta()[0], 0.5);
  EXPECT_EQ(s.theta_bar()[0], 0.5);
  EXPECT_EQ(s.t(), 1u);
}

TEST(LsaStep, FixedPointIsInvariant) {
  const auto obs = two_state_mean_system();
  const Vector star = solve_linear(obs.a, obs.b);
  LsaState s(star);
  for (int k = 0; k < 10; ++k) s.step(obs, 0.9);
  EXPECT_NEAR(s.theta()[0], star[0], 1e-15);
  EXPECT_NEAR(s.theta()[1], star[1], 1e-15);
}

TEST(LsaStep, DeterministicMeanSystemConverges) {
  const auto obs = two_state_mean_system();
  LsaState s(2);
  const StepSchedule sched{0.5, 0.75};
  for (int k = 0; k < 10000; ++k) s.step(obs, sched);
  EXPECT_NEAR(s.theta_bar()[0], 4.0 / 3.0, 0.05);
  EXPECT_NEAR(s.theta_bar()[1], 2.0 / 3.0, 0.05);
}

TEST(LsaStep, AverageEqualsHistoryMean) {
  const auto mdp = five_state_chain();
  const Policy pi = Policy::uniform(5, 2);
  const FeatureMap f = random_features(5, 3, 1);
  TrajectorySampler sampler(mdp, pi, 2);
  LsaState s(3);
  const StepSchedule sched{0.5, 0.75};
  Vector sum(3, 0.0);
  for (int k = 1; k <= 10000; ++k) {
    s.step(td_observation(sampler.next(), f, mdp.gamma()), sched);
    for (std::size_t i = 0; i < 3; ++i) sum[i] += s.theta()[i];
    if (k % 1000 == 0) {
      for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(s.theta_bar()[i], sum[i] / k, 1e-10);
    }
  }
}

TEST(LsaStep, DimensionMismatch) {
  LsaState s(3);
  EXPECT_THROW(s.step(two_state_mean_system(), 0.1), DimensionMismatch);
}

TEST(LsaStep, DivergenceRaisesNonFinite) {
  // A = -1 grows theta geometrically.
  LsaState s(Vector{1.0});
  const DenseObservation obs{Matrix(1, 1, {-1.0}), Vector{0.0}};
  EXPECT_THROW(
      {
        for (int k = 0; k < 10000; ++k) s.step(obs, 1.0);
      },
      NonFinite);
  LsaState n(Vector{1.0});
  EXPECT_THROW(n.step(DenseObservation{Matrix(1, 1, {0.0}), Vector{std::nan("")}}, 1.0), NonFinite);
}

TEST(LsaConsistency, FiveStateTdConvergesInMostRuns) {
  const auto mdp = five_state_chain();
  const Policy pi = Policy::uniform(5, 2);
  const FeatureMap f = random_features(5, 3, 3);
  const auto sys = expected_lsa_system(mdp, pi, pi, f, Task::td);
  const Vector star = solve_linear(sys.a, sys.b);
  const StepSchedule sched{0.5, 0.75};
  int good = 0;
  for (int run = 0; run < 100; ++run) {
    TrajectorySampler sampler(mdp, pi, derive_seed(900, run));
    LsaState s(3);
    ObservationBuilder<TdObservation> builder(f, mdp.gamma(), mdp.r_max(), Task::td, pi, pi);
    for (int k = 0; k < 100000; ++k) s.step(builder.build(sampler.next()), sched);
    Vector diff(3);
    for (std::size_t i = 0; i < 3; ++i) diff[i] = s.theta_bar()[i] - star[i];
    good += norm2(diff) < 0.1 * (1 + norm2(star));
  }
  EXPECT_GE(good, 95);
}
