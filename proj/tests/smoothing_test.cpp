#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <gtest/gtest.h>

#include "smoothrl/nn/losses.hpp"
#include "smoothrl/parallel.hpp"
#include "smoothrl/smoothing/smoothing.hpp"
#include "test_util.hpp"

namespace smoothrl::smoothing {
namespace {

using testing::constant_q;
using testing::linear_net;

// Q = (0, s): action 1 iff s > 0, ties at s = 0 go to action 0.
nn::Mlp threshold_q() {
  const Vector w{0.0, 1.0};
  const Vector b{0.0, 0.0};
  return linear_net(1, 2, w, b);
}

TEST(HardQ, OneHotAtArgmax) {
  const auto q = constant_q(2, {3.0, -1.0});
  const Vector s{0.0, 0.0};
  EXPECT_EQ(hard_q(q, nullptr, s), (Vector{1.0, 0.0}));
}

TEST(HardQ, TiesBreakToLowestIndex) {
  const auto q = constant_q(2, {2.0, 2.0});
  const Vector s{0.0, 0.0};
  EXPECT_EQ(hard_q(q, nullptr, s), (Vector{1.0, 0.0}));
  EXPECT_EQ(argmax(Vector{1.0, 5.0, 5.0, 0.0}), 1);
}

TEST(HardQ, DenoiserIsAppliedFirst) {
  // Denoiser negates the input; the threshold Q then flips its choice.
  const Vector w{-1.0};
  const Vector b{0.0};
  const auto neg = linear_net(1, 1, w, b);
  const Vector s{0.5};
  EXPECT_EQ(greedy_action(threshold_q(), nullptr, s), 1);
  EXPECT_EQ(greedy_action(threshold_q(), &neg, s), 0);
}

TEST(EstimateSmoothedQ, ConstantArgmaxIsExactlyOneHot) {
  const auto q = constant_q(3, {0.0, 5.0, 1.0, -2.0});
  Rng rng(1);
  for (double sigma : {0.01, 1.0, 10.0}) {
    for (std::size_t m : {1, 7, 500}) {
      const SmoothConfig cfg{sigma, m, 0.05, 0.5};
      const auto est = estimate_smoothed_q(q, nullptr, Vector{0.1, 0.2, 0.3}, cfg, rng);
      EXPECT_EQ(est.q_est, (Vector{0.0, 1.0, 0.0, 0.0}));
      EXPECT_EQ(est.top_action, 1);
    }
  }
}

TEST(EstimateSmoothedQ, SingleDrawIsOneHotAtThatSample) {
  const auto q = threshold_q();
  const Vector s{0.05};
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    Rng copy = rng;
    const auto est = estimate_smoothed_q(q, nullptr, s, {0.5, 1, 0.05, 0.5}, rng);
    const auto x = noisy_state(s, 0.5, copy.next_u64(), 0);
    const int expected = x[0] > 0.0 ? 1 : 0;
    EXPECT_EQ(est.q_est[static_cast<std::size_t>(expected)], 1.0);
    EXPECT_EQ(est.top_action, expected);
  }
}

TEST(EstimateSmoothedQ, CenteredThresholdSplitsEvenly) {
  Rng rng(2);
  const SmoothConfig cfg{1.0, 10000, 0.05, 0.5};
  const auto est = estimate_smoothed_q(threshold_q(), nullptr, Vector{0.0}, cfg, rng);
  EXPECT_NEAR(est.q_est[0], 0.5, 0.02);
  EXPECT_NEAR(est.q_est[1], 0.5, 0.02);
}

TEST(EstimateSmoothedQ, EntriesSumToOneAndOrdered) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const auto q = testing::random_net({3, 8, 4}, {nn::Activation::relu, nn::Activation::identity}, rng);
    const auto s = testing::random_vector(3, rng);
    const auto est = estimate_smoothed_q(q, nullptr, s, {0.7, 101, 0.05, 0.5}, rng);
    std::size_t total = std::accumulate(est.counts.begin(), est.counts.end(), std::size_t{0});
    EXPECT_EQ(total, 101u);
    double sum = 0.0;
    for (double v : est.q_est) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
      sum += v;
    }
    EXPECT_NEAR(sum, 1.0, 1e-12);
    const auto top = est.q_est[static_cast<std::size_t>(est.top_action)];
    const auto second = est.q_est[static_cast<std::size_t>(est.runner_up)];
    EXPECT_GE(top, second);
    for (std::size_t a = 0; a < 4; ++a) {
      if (static_cast<int>(a) != est.top_action) EXPECT_LE(est.q_est[a], second);
    }
  }
}

TEST(EstimateSmoothedQ, SameSeedSameEstimateAnyThreadCount) {
  Rng net_rng(4);
  const auto q = testing::random_net({3, 8, 4}, {nn::Activation::tanh, nn::Activation::identity}, net_rng);
  const Vector s{0.1, -0.3, 0.2};
  const SmoothConfig cfg{0.5, 2001, 0.05, 0.5};
  Rng a(77);
  const auto ref = estimate_smoothed_q(q, nullptr, s, cfg, a);
  for (int threads : {1, 2, 4}) {
    set_num_threads(threads);
    Rng b(77);
    EXPECT_EQ(estimate_smoothed_q(q, nullptr, s, cfg, b).counts, ref.counts);
  }
  set_num_threads(1);
}

TEST(EstimateSmoothedQ, MatchesNormalCdfForThreshold) {
  // For the threshold classifier P(s + sigma z > 0) = Phi(s / sigma).
  const double sigma = 0.5;
  for (double s : {-0.4, 0.2, 0.6}) {
    const auto est = estimate_smoothed_q_keyed(threshold_q(), nullptr, Vector{s}, sigma, 20000, 0.05, 11);
    const double expected = 0.5 * std::erfc(-s / sigma / std::sqrt(2.0));
    EXPECT_NEAR(est.q_est[1], expected, 3.0 / std::sqrt(20000.0));
  }
}

TEST(SmoothConfig, ValidatesRanges) {
  EXPECT_NO_THROW((SmoothConfig{0.1, 1, 0.5, 0.5}.validate()));
  EXPECT_THROW((SmoothConfig{0.0, 1, 0.5, 0.5}.validate()), std::invalid_argument);
  EXPECT_THROW((SmoothConfig{0.1, 0, 0.5, 0.5}.validate()), std::invalid_argument);
  EXPECT_THROW((SmoothConfig{0.1, 1, 1.0, 0.5}.validate()), std::invalid_argument);
  EXPECT_THROW((SmoothConfig{0.1, 1, 0.5, 0.0}.validate()), std::invalid_argument);
}

TEST(HoeffdingDelta, ClosedForms) {
  EXPECT_EQ(hoeffding_delta(10, 1.0), 0.0);
  EXPECT_NEAR(hoeffding_delta(1, std::exp(-2.0)), 1.0, 1e-15);
  // sqrt(ln 20 / 200) = 0.12238734...
  EXPECT_NEAR(hoeffding_delta(100, 0.05), 0.12239, 1e-5);
  EXPECT_NEAR(hoeffding_delta(100, 0.05), std::sqrt(std::log(20.0) / 200.0), 1e-15);
  EXPECT_THROW(hoeffding_delta(0, 0.05), std::invalid_argument);
  EXPECT_THROW(hoeffding_delta(10, 0.0), std::invalid_argument);
}

TEST(PercentileSmooth, SmallExamples) {
  const Vector x{3, 1, 5, 2, 4};
  EXPECT_EQ(percentile_smooth(x, 0.5), 3.0);
  EXPECT_EQ(percentile_smooth(x, 0.999), 5.0);
  EXPECT_EQ(percentile_smooth(x, 1e-9), 1.0);
  EXPECT_EQ(percentile_rank(5, 0.5), 3u);
  EXPECT_EQ(percentile_rank(5, 0.999), 5u);
  EXPECT_EQ(percentile_rank(4, 0.5), 2u);
}

TEST(PercentileSmooth, RejectsEmptyAndBadP) {
  const Vector empty;
  EXPECT_THROW(percentile_smooth(empty, 0.5), std::invalid_argument);
  const Vector x{1.0};
  EXPECT_THROW(percentile_smooth(x, 0.0), std::invalid_argument);
  EXPECT_THROW(percentile_smooth(x, 1.0), std::invalid_argument);
}

TEST(PercentileSmooth, MatchesSortOnUniformDraws) {
  Rng rng(5);
  Vector x(200);
  for (double& v : x) v = rng.uniform();
  Vector sorted = x;
  std::sort(sorted.begin(), sorted.end());
  EXPECT_EQ(percentile_smooth(x, 0.25), sorted[49]);
}

TEST(PercentileSmooth, MonotoneInP) {
  Rng rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    Vector x(1 + rng.uniform_index(60));
    for (double& v : x) v = std::round(rng.normal() * 3.0);  // plenty of ties
    double prev = -1e300;
    for (double p = 0.01; p < 1.0; p += 0.01) {
      const double v = percentile_smooth(x, p);
      EXPECT_GE(v, prev);
      prev = v;
    }
  }
}

TEST(PercentileIndex, PointsAtReturnedValue) {
  const Vector x{2.0, 2.0, 1.0, 2.0};
  const auto i = percentile_index(x, 0.5);
  EXPECT_EQ(x[i], 2.0);
  EXPECT_EQ(i, 0u);  // ties resolved by lower index
}

nn::GaussianPolicy constant_policy(const Vector& c, const Vector& log_std) {
  return {constant_q(c.size() == 2 ? 3 : 1, c), log_std};
}

TEST(MedianSmoothPolicy, ConstantHeadGivesConstants) {
  const auto pol = constant_policy({0.3, -0.7}, {-1.0, 0.5});
  Rng rng(7);
  for (double sigma : {0.01, 1.0}) {
    for (std::size_t m : {1, 11}) {
      const auto ms = median_smooth_policy(pol, Vector{0.1, 0.2, 0.3}, {sigma, m, 0.05, 0.5}, rng);
      EXPECT_EQ(ms.mean, (Vector{0.3, -0.7}));
      EXPECT_EQ(ms.stddev, pol.stddev());
    }
  }
}

TEST(MedianSmoothPolicy, SingleSampleEqualsNoisyEvaluation) {
  Rng net_rng(8);
  nn::GaussianPolicy pol{
      testing::random_net({3, 6, 2}, {nn::Activation::tanh, nn::Activation::identity}, net_rng), {0.0, 0.0}};
  const Vector s{0.2, -0.1, 0.5};
  Rng rng(9);
  Rng copy = rng;
  const auto ms = median_smooth_policy(pol, s, {0.3, 1, 0.05, 0.5}, rng);
  const auto expected = pol.mean_net.forward(noisy_state(s, 0.3, copy.next_u64(), 0));
  EXPECT_EQ(ms.mean, expected);
}

TEST(MedianSmoothPolicy, LinearHeadMedianIsCentered) {
  nn::GaussianPolicy pol{linear_net(1, 1, Vector{1.0}, Vector{0.0}), {0.0}};
  Rng rng(10);
  const auto ms = median_smooth_policy(pol, Vector{0.0}, {0.2, 10001, 0.05, 0.5}, rng);
  EXPECT_NEAR(ms.mean[0], 0.0, 0.01);
}

TEST(DeterministicSmoothedAction, ConstantHead) {
  const auto pol = constant_policy({0.25, 0.5}, {0.0, 0.0});
  Rng rng(11);
  EXPECT_EQ(deterministic_smoothed_action(pol, Vector{1.0, 2.0, 3.0}, {0.5, 9, 0.05, 0.5}, rng),
            (Vector{0.25, 0.5}));
}

TEST(DeterministicSmoothedAction, AntisymmetricHeadAtOriginIsZero) {
  // mean(s) = tanh(W s) is odd, so the median over symmetric noise is 0 in distribution.
  Rng net_rng(12);
  nn::GaussianPolicy pol{nn::Mlp({2, 2}, {nn::Activation::tanh}), {0.0, 0.0}};
  const Vector w{1.5, -0.5, 0.7, 2.0};
  std::copy(w.begin(), w.end(), pol.mean_net.weights(0).begin());
  Rng rng(13);
  const auto a = deterministic_smoothed_action(pol, Vector{0.0, 0.0}, {0.2, 10001, 0.05, 0.5}, rng);
  EXPECT_NEAR(a[0], 0.0, 0.01);
  EXPECT_NEAR(a[1], 0.0, 0.01);
}

TEST(DeterministicSmoothedAction, ConsumesRngLikeMedianSmoothPolicy) {
  Rng net_rng(14);
  nn::GaussianPolicy pol{
      testing::random_net({3, 4, 2}, {nn::Activation::tanh, nn::Activation::identity}, net_rng), {0.0, 0.0}};
  const Vector s{0.1, 0.1, 0.1};
  const SmoothConfig cfg{0.2, 15, 0.05, 0.5};
  Rng a(15), b(15);
  EXPECT_EQ(deterministic_smoothed_action(pol, s, cfg, a), median_smooth_policy(pol, s, cfg, b).mean);
  EXPECT_EQ(a.next_u64(), b.next_u64());
}

TEST(SmoothedMeanKeyed, ZeroSigmaUsesCleanState) {
  Rng net_rng(16);
  const auto net = testing::random_net({3, 4, 2}, {nn::Activation::tanh, nn::Activation::identity}, net_rng);
  const Vector s{0.3, 0.1, -0.2};
  const auto sm = smoothed_mean_keyed(net, s, 0.0, 5, 0.5, 99);
  EXPECT_EQ(sm.value, net.forward(s));
}

}  // namespace
}  // namespace smoothrl::smoothing
