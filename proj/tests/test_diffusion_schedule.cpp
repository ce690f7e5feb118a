#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "cfp2ffa/diffusion_schedule.hpp"

using namespace cfp2ffa;

namespace {

// Independent oracle: betas from the endpoint formula, products through
// exp(sum log1p(-beta)) instead of a running multiplication.
std::vector<double> oracle_alpha_bars(int steps, double lo, double hi) {
  std::vector<double> out;
  double log_sum = 0.0;
  for (int s = 0; s < steps; ++s) {
    const double beta = steps == 1 ? lo : lo + (hi - lo) * s / (steps - 1);
    log_sum += std::log1p(-beta);
    out.push_back(std::exp(log_sum));
  }
  return out;
}

}  // namespace

TEST(NoiseSchedule, ZeroBetasGiveUnitAlphaBars) {
  auto s = NoiseSchedule::build(4, 0.0, 0.0);
  ASSERT_EQ(s.num_steps(), 4);
  for (double a : s.alpha_bars()) EXPECT_EQ(a, 1.0);
}

TEST(NoiseSchedule, FirstAlphaBarIsOneMinusBetaMin) {
  auto s = NoiseSchedule::build(1000, 1e-4, 2e-3);
  EXPECT_DOUBLE_EQ(s.alpha_bar(0), 0.9999);
}

TEST(NoiseSchedule, MatchesIndependentCumulativeProduct) {
  auto s = NoiseSchedule::build(1000, 1e-4, 2e-3);
  const auto oracle = oracle_alpha_bars(1000, 1e-4, 2e-3);
  for (int t = 0; t < 1000; ++t) {
    EXPECT_LE(std::abs(s.alpha_bar(t) - oracle[t]) / oracle[t], 1e-12) << "t = " << t;
  }
  for (int t = 1; t < 1000; ++t) EXPECT_LT(s.alpha_bar(t), s.alpha_bar(t - 1));
}

TEST(NoiseSchedule, BetasAreLinearBetweenEndpoints) {
  auto s = NoiseSchedule::build(11, 0.1, 0.2);
  const auto b = s.betas();
  EXPECT_DOUBLE_EQ(b.front(), 0.1);
  EXPECT_DOUBLE_EQ(b.back(), 0.2);
  for (std::size_t i = 1; i < b.size(); ++i) EXPECT_NEAR(b[i] - b[i - 1], 0.01, 1e-15);
  for (double a : s.alpha_bars()) {
    EXPECT_GT(a, 0.0);
    EXPECT_LE(a, 1.0);
  }
}

TEST(NoiseSchedule, RejectsInvalidParameters) {
  EXPECT_THROW(NoiseSchedule::build(0, 1e-4, 2e-3), std::invalid_argument);
  EXPECT_THROW(NoiseSchedule::build(10, 1e-4, 1.0), std::invalid_argument);
  EXPECT_THROW(NoiseSchedule::build(10, -1e-4, 2e-3), std::invalid_argument);
  EXPECT_THROW(NoiseSchedule::build(10, 3e-3, 2e-3), std::invalid_argument);
  EXPECT_NO_THROW(NoiseSchedule::build(1, 0.01, 0.01));
}

TEST(NoiseSchedule, AlphaBarOutOfRangeThrows) {
  auto s = NoiseSchedule::build(10, 1e-4, 2e-3);
  EXPECT_THROW(s.alpha_bar(-1), std::out_of_range);
  EXPECT_THROW(s.alpha_bar(10), std::out_of_range);
}

TEST(ForwardDiffuse, ZeroScheduleReturnsInput) {
  auto s = NoiseSchedule::build(4, 0.0, 0.0);
  torch::manual_seed(3);
  auto z0 = torch::randn({3, 5, 5});
  auto eps = torch::randn({3, 5, 5});
  EXPECT_TRUE(torch::equal(forward_diffuse(s, z0, 2, eps), z0));
}

TEST(ForwardDiffuse, ZeroNoiseScalesByRootAlphaBar) {
  auto s = NoiseSchedule::build(1000, 1e-4, 2e-3);
  auto z0 = torch::randn({3, 4, 4}, torch::kFloat64);
  auto out = forward_diffuse(s, z0, 500, torch::zeros_like(z0));
  EXPECT_TRUE(torch::allclose(out, z0 * std::sqrt(s.alpha_bar(500)), 0.0, 1e-15));
}

TEST(ForwardDiffuse, LinearInInputAndNoise) {
  auto s = NoiseSchedule::build(1000, 1e-4, 2e-3);
  auto z0 = torch::randn({2, 3, 4}, torch::kFloat64);
  auto eps = torch::randn({2, 3, 4}, torch::kFloat64);
  const double a = -2.5;
  auto lhs = forward_diffuse(s, a * z0, 321, a * eps);
  auto rhs = a * forward_diffuse(s, z0, 321, eps);
  EXPECT_TRUE(torch::allclose(lhs, rhs, 1e-12, 1e-12));
}

TEST(ForwardDiffuse, RejectsBadStepAndShape) {
  auto s = NoiseSchedule::build(10, 1e-4, 2e-3);
  auto z0 = torch::zeros({3, 4, 4});
  EXPECT_THROW(forward_diffuse(s, z0, 10, torch::zeros_like(z0)), std::out_of_range);
  EXPECT_THROW(forward_diffuse(s, z0, -1, torch::zeros_like(z0)), std::out_of_range);
  EXPECT_THROW(forward_diffuse(s, z0, 1, torch::zeros({3, 4, 5})), std::invalid_argument);
}

TEST(ForwardDiffuse, BatchedMatchesPerSample) {
  auto s = NoiseSchedule::build(1000, 1e-4, 2e-3);
  auto z0 = torch::randn({3, 3, 4, 4});
  auto eps = torch::randn({3, 3, 4, 4});
  const std::vector<std::int64_t> steps = {0, 17, 999};
  auto batched = forward_diffuse(s, z0, steps, eps);
  for (int i = 0; i < 3; ++i) {
    EXPECT_TRUE(torch::allclose(batched[i], forward_diffuse(s, z0[i], steps[i], eps[i]), 1e-6, 1e-7));
  }
  const std::vector<std::int64_t> short_steps = {0, 1};
  EXPECT_THROW(forward_diffuse(s, z0, short_steps, eps), std::invalid_argument);
}

TEST(ForwardDiffuse, MonteCarloMomentsMatchClosedForm) {
  auto s = NoiseSchedule::build(1000, 1e-4, 2e-3);
  auto gen = at::detail::createCPUGenerator(11);
  const std::int64_t n = 100000;
  for (std::int64_t t : {0, 400, 999}) {
    auto z0 = torch::ones({n}, torch::kFloat64);
    auto eps = torch::randn({n}, gen, torch::kFloat64);
    auto z = forward_diffuse(s, z0, t, eps);
    const double mean = z.mean().item<double>();
    const double var = z.var().item<double>();
    const double ab = s.alpha_bar(t);
    EXPECT_LT(std::abs(mean - std::sqrt(ab)) / std::sqrt(ab), 0.01) << "t = " << t;
    EXPECT_LT(std::abs(var - (1.0 - ab)) / (1.0 - ab), 0.01) << "t = " << t;
  }
}

TEST(ForwardDiffuse, BitReproducibleUnderFixedSeed) {
  auto s = NoiseSchedule::build(1000, 1e-4, 2e-3);
  auto run = [&] {
    auto gen = at::detail::createCPUGenerator(5);
    auto z0 = torch::randn({3, 8, 8}, gen);
    return forward_diffuse(s, z0, 250, torch::randn({3, 8, 8}, gen));
  };
  EXPECT_TRUE(torch::equal(run(), run()));
}
