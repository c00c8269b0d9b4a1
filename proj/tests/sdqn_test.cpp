#include <array>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <gtest/gtest.h>

#include "smoothrl/envs/grid_reach.hpp"
#include "smoothrl/envs/point_reach.hpp"
#include "smoothrl/error.hpp"
#include "smoothrl/nn/losses.hpp"
#include "smoothrl/sdqn/replay_buffer.hpp"
#include "smoothrl/sdqn/sdqn.hpp"
#include "test_util.hpp"

namespace smoothrl::sdqn {
namespace {

envs::Transition make_transition(double s, int a, double r, double next, bool terminal) {
  envs::Transition t;
  t.state = {s};
  t.action = a;
  t.reward = r;
  t.next_state = {next};
  t.terminal = terminal;
  t.done = terminal;
  return t;
}

// Identity denoiser on a 1-D state: residual with a zeroed output layer.
nn::Mlp identity_denoiser(std::size_t dim) {
  Rng rng(0);
  return make_denoiser(dim, 4, rng);
}

// Q(x) = (2x, 1 - x)
nn::Mlp two_action_q() {
  const Vector w{2.0, -1.0};
  const Vector b{0.0, 1.0};
  return testing::linear_net(1, 2, w, b);
}

TEST(EpsilonSchedule, LinearThenConstant) {
  const EpsilonSchedule s{1.0, 0.05, 100};
  EXPECT_EQ(s.at(0), 1.0);
  EXPECT_NEAR(s.at(50), 0.525, 1e-15);
  EXPECT_EQ(s.at(100), 0.05);
  EXPECT_EQ(s.at(100000), 0.05);
  EXPECT_THROW((EpsilonSchedule{1.5, 0.0, 10}.validate()), std::invalid_argument);
}

TEST(ReplayBuffer, RingOverwritesOldest) {
  ReplayBuffer buf(3);
  for (int i = 0; i < 5; ++i) buf.push(make_transition(i, 0, 0, 0, false));
  EXPECT_EQ(buf.size(), 3u);
  EXPECT_EQ(buf.capacity(), 3u);
  std::array<bool, 5> present{};
  for (std::size_t i = 0; i < buf.size(); ++i) present[static_cast<std::size_t>(buf.at(i).state[0])] = true;
  EXPECT_FALSE(present[0]);
  EXPECT_FALSE(present[1]);
  EXPECT_TRUE(present[2] && present[3] && present[4]);
  EXPECT_THROW(ReplayBuffer(0), std::invalid_argument);
}

TEST(ReplayBuffer, SamplingIsUniform) {
  ReplayBuffer buf(4);
  Rng rng(1);
  EXPECT_THROW(buf.sample_indices(1, rng), std::logic_error);
  for (int i = 0; i < 4; ++i) buf.push(make_transition(i, 0, 0, 0, false));
  std::array<int, 4> counts{};
  for (auto i : buf.sample_indices(40000, rng)) counts[i]++;
  // Chi-square with 3 dof; 16.3 is the 0.999 quantile.
  double chi2 = 0.0;
  for (int c : counts) chi2 += (c - 10000.0) * (c - 10000.0) / 10000.0;
  EXPECT_LT(chi2, 16.3);
}

TEST(SdqnSelectAction, FullExplorationIsUniform) {
  const auto q = testing::constant_q(8, {0.0, 1.0, 0.0, 0.0});
  const auto d = identity_denoiser(8);
  Rng rng(2);
  std::array<int, 4> counts{};
  const Vector s(8, 0.5);
  for (int i = 0; i < 8000; ++i) counts[static_cast<std::size_t>(sdqn_select_action(q, d, s, 1.0, 0.1, rng))]++;
  double chi2 = 0.0;
  for (int c : counts) chi2 += (c - 2000.0) * (c - 2000.0) / 2000.0;
  EXPECT_LT(chi2, 16.3);
}

TEST(SdqnSelectAction, NoiselessGreedyLimit) {
  Rng rng(3);
  const auto q = testing::random_net({8, 16, 4}, {nn::Activation::relu, nn::Activation::identity}, rng);
  const auto d = identity_denoiser(8);
  for (int i = 0; i < 50; ++i) {
    const auto s = testing::random_vector(8, rng, 0.0, 1.0);
    EXPECT_EQ(sdqn_select_action(q, d, s, 0.0, 1e-12, rng), smoothing::greedy_action(q, nullptr, s));
  }
}

TEST(SdqnSelectAction, MatchesHardQOnSameNoisyState) {
  Rng rng(4);
  const auto q = testing::random_net({8, 16, 4}, {nn::Activation::relu, nn::Activation::identity}, rng);
  const auto d = testing::random_net({8, 6, 8}, {nn::Activation::relu, nn::Activation::identity}, rng, 0.3, true);
  for (int i = 0; i < 50; ++i) {
    const auto s = testing::random_vector(8, rng, 0.0, 1.0);
    Rng copy = rng;
    const int a = sdqn_select_action(q, d, s, 0.0, 0.3, rng);
    const auto noisy = smoothing::noisy_state(s, 0.3, copy.next_u64(), 0);
    EXPECT_EQ(smoothing::hard_q(q, &d, noisy)[static_cast<std::size_t>(a)], 1.0);
  }
}

TEST(SdqnActTest, SingleSampleEqualsSelectAction) {
  Rng rng(5);
  const auto q = testing::random_net({8, 16, 4}, {nn::Activation::relu, nn::Activation::identity}, rng);
  const auto d = testing::random_net({8, 6, 8}, {nn::Activation::relu, nn::Activation::identity}, rng, 0.3, true);
  for (int i = 0; i < 50; ++i) {
    const auto s = testing::random_vector(8, rng, 0.0, 1.0);
    Rng a = rng, b = rng;
    EXPECT_EQ(sdqn_act_test(q, &d, s, {0.3, 1, 0.05, 0.5}, a), sdqn_select_action(q, d, s, 0.0, 0.3, b));
    rng.next_u64();
  }
}

TEST(SdqnActTest, ConstantArgmax) {
  const auto q = testing::constant_q(8, {0.0, 0.0, 3.0, 1.0});
  Rng rng(6);
  for (std::size_t m : {1, 10, 100}) {
    EXPECT_EQ(sdqn_act_test(q, nullptr, Vector(8, 0.2), {0.5, m, 0.05, 0.5}, rng), 2);
  }
}

TEST(SdqnActTest, AgreesWithIndependentHighCountEstimate) {
  Rng rng(7);
  const auto q = testing::random_net({8, 16, 4}, {nn::Activation::relu, nn::Activation::identity}, rng);
  const smoothing::SmoothConfig cfg{0.2, 10000, 0.05, 0.5};
  int compared = 0;
  for (int i = 0; i < 20; ++i) {
    const auto s = testing::random_vector(8, rng, 0.0, 1.0);
    const int a = sdqn_act_test(q, nullptr, s, cfg, rng);
    Rng fresh(1000 + static_cast<std::uint64_t>(i));
    const auto ref = smoothing::estimate_smoothed_q(q, nullptr, s, cfg, fresh);
    const double gap = ref.q_est[static_cast<std::size_t>(ref.top_action)] -
                       ref.q_est[static_cast<std::size_t>(ref.runner_up)];
    if (gap < 0.05) continue;
    ++compared;
    EXPECT_EQ(a, ref.top_action);
  }
  EXPECT_GT(compared, 0);
}

TEST(SdqnLoss, PerfectReconstructionWithoutTdIsZero) {
  SdqnConfig cfg;
  cfg.lambda2 = 0.0;
  const std::vector<envs::Transition> batch{make_transition(0.5, 0, 0.3, 0.2, false),
                                            make_transition(-0.1, 1, -1.0, 0.0, true)};
  const std::vector<Vector> noise{{0.0}, {0.0}};
  const auto l = sdqn_loss(batch, two_action_q(), identity_denoiser(1), cfg, noise);
  EXPECT_EQ(l.total, 0.0);
  EXPECT_EQ(l.recon, 0.0);
}

TEST(SdqnLoss, HandComputedSingleTransition) {
  SdqnConfig cfg;
  cfg.gamma = 0.9;
  const std::vector<envs::Transition> batch{make_transition(0.5, 0, 0.3, 0.2, false)};
  const std::vector<Vector> noise{{0.1}};
  const auto l = sdqn_loss(batch, two_action_q(), identity_denoiser(1), cfg, noise);
  // D(s~) = 0.6; recon = 0.1^2. Target 0.3 + 0.9 max(0.4, 0.8) = 1.02; Q(0.6)_0 = 1.2;
  // eta = -0.18, huber = 0.0162.
  EXPECT_NEAR(l.recon, 0.01, 1e-15);
  EXPECT_NEAR(l.td, 0.0162, 1e-15);
  EXPECT_NEAR(l.total, 0.0262, 1e-15);

  const std::vector<envs::Transition> term{make_transition(0.5, 0, 0.3, 0.2, true)};
  const auto lt = sdqn_loss(term, two_action_q(), identity_denoiser(1), cfg, noise);
  // Terminal: target 0.3, eta = -0.9, huber = 0.405.
  EXPECT_NEAR(lt.td, 0.405, 1e-15);
}

TEST(SdqnLoss, ReconWeightZeroLeavesHuberTd) {
  SdqnConfig cfg;
  cfg.lambda1 = 0.0;
  cfg.gamma = 0.99;
  Rng rng(8);
  const auto q = testing::random_net({8, 16, 4}, {nn::Activation::relu, nn::Activation::identity}, rng);
  const auto d = testing::random_net({8, 6, 8}, {nn::Activation::relu, nn::Activation::identity}, rng, 0.3, true);
  std::vector<envs::Transition> batch;
  std::vector<Vector> noise;
  for (int i = 0; i < 5; ++i) {
    envs::Transition t;
    t.state = testing::random_vector(8, rng, 0, 1);
    t.next_state = testing::random_vector(8, rng, 0, 1);
    t.action = rng.uniform_int(4);
    t.reward = -0.01;
    batch.push_back(t);
    noise.push_back(testing::random_vector(8, rng, -0.1, 0.1));
  }
  const auto l = sdqn_loss(batch, q, d, cfg, noise);
  double expected = 0.0;
  for (std::size_t j = 0; j < batch.size(); ++j) {
    Vector x = batch[j].state;
    for (std::size_t i = 0; i < 8; ++i) x[i] += noise[j][i];
    const auto qs = q.forward(d.forward(x));
    const auto qn = q.forward(batch[j].next_state);
    const double y = batch[j].reward + 0.99 * *std::max_element(qn.begin(), qn.end());
    expected += nn::huber(y - qs[static_cast<std::size_t>(std::get<int>(batch[j].action))]) / 5.0;
  }
  EXPECT_NEAR(l.total, expected, 1e-12);
}

TEST(SdqnLoss, GradientMatchesFiniteDifferences) {
  SdqnConfig cfg;
  Rng rng(9);
  const auto q = testing::random_net({3, 8, 2}, {nn::Activation::tanh, nn::Activation::identity}, rng);
  auto d = testing::random_net({3, 5, 3}, {nn::Activation::tanh, nn::Activation::identity}, rng, 0.5, true);
  std::vector<envs::Transition> batch;
  std::vector<Vector> noise;
  for (int i = 0; i < 4; ++i) {
    envs::Transition t;
    t.state = testing::random_vector(3, rng);
    t.next_state = testing::random_vector(3, rng);
    t.action = rng.uniform_int(2);
    t.reward = rng.uniform(-1, 1);
    t.terminal = i == 3;
    batch.push_back(t);
    noise.push_back(testing::random_vector(3, rng, -0.2, 0.2));
  }
  const auto l = sdqn_loss(batch, q, d, cfg, noise);
  const Vector params(d.parameters().begin(), d.parameters().end());
  for (std::size_t k = 0; k < params.size(); ++k) {
    const double fd = testing::central_diff(
        [&](const Vector& p) {
          nn::Mlp copy = d;
          std::copy(p.begin(), p.end(), copy.parameters().begin());
          return sdqn_loss(batch, q, copy, cfg, noise).total;
        },
        params, k);
    EXPECT_TRUE(testing::close_rel(l.grad[k], fd, 1e-4, 1e-7)) << k << ": " << l.grad[k] << " vs " << fd;
  }
}

TEST(SdqnLoss, RejectsMismatchedNoise) {
  SdqnConfig cfg;
  const std::vector<envs::Transition> batch{make_transition(0.5, 0, 0.3, 0.2, false)};
  const std::vector<Vector> none;
  EXPECT_THROW(sdqn_loss(batch, two_action_q(), identity_denoiser(1), cfg, none), ShapeError);
}

DqnConfig tiny_dqn(std::uint64_t steps) {
  DqnConfig c;
  c.steps = steps;
  c.learning_starts = 100;
  c.eval_episodes = 2;
  c.hidden = {16};
  c.epsilon = {1.0, 0.05, steps / 5 + 1};
  return c;
}

TEST(PretrainQ, ZeroStepsReturnsInitialization) {
  envs::GridReach env;
  Rng rng(10);
  const auto r = pretrain_q(env, tiny_dqn(0), rng);
  Rng init = Rng(10).child("init");
  const auto expected =
      nn::Mlp::glorot({8, 16, 4}, {nn::Activation::relu, nn::Activation::identity}, init);
  EXPECT_EQ(r.qnet, expected);
  EXPECT_TRUE(r.episodes.empty());
  EXPECT_EQ(r.steps_run, 0u);
}

TEST(PretrainQ, SameSeedSameParameters) {
  envs::GridReach env;
  Rng a(11), b(11);
  const auto ra = pretrain_q(env, tiny_dqn(1500), a);
  const auto rb = pretrain_q(env, tiny_dqn(1500), b);
  EXPECT_EQ(ra.qnet, rb.qnet);
  EXPECT_EQ(pretrain_metrics_csv(ra.episodes), pretrain_metrics_csv(rb.episodes));
  Rng c(12);
  EXPECT_NE(pretrain_q(env, tiny_dqn(1500), c).qnet, ra.qnet);
}

TEST(PretrainQ, RejectsContinuousEnvironment) {
  envs::PointReach env;
  Rng rng(13);
  EXPECT_THROW(pretrain_q(env, tiny_dqn(10), rng), std::invalid_argument);
}

SdqnConfig tiny_sdqn(std::uint64_t steps) {
  SdqnConfig c;
  c.steps = steps;
  c.learning_starts = 64;
  c.denoiser_hidden = 16;
  c.epsilon = {1.0, 0.05, steps / 5 + 1};
  return c;
}

TEST(TrainSdqn, ZeroStepsReturnsIdentityDenoiser) {
  envs::GridReach env;
  Rng rng(14);
  const auto q = testing::random_net({8, 16, 4}, {nn::Activation::relu, nn::Activation::identity}, rng);
  Rng train(15);
  const auto r = train_sdqn(env, q, tiny_sdqn(0), train);
  Rng init = Rng(15).child("init");
  EXPECT_EQ(r.denoiser, make_denoiser(8, 16, init));
  const Vector s(8, 0.3);
  EXPECT_EQ(r.denoiser.forward(s), s);
}

TEST(TrainSdqn, LeavesQNetworkUntouchedAndIsDeterministic) {
  envs::GridReach env;
  Rng rng(16);
  const auto q = testing::random_net({8, 16, 4}, {nn::Activation::relu, nn::Activation::identity}, rng, 0.3);
  const nn::Mlp before = q;
  Rng a(17), b(17);
  const auto ra = train_sdqn(env, q, tiny_sdqn(600), a);
  const auto rb = train_sdqn(env, q, tiny_sdqn(600), b);
  EXPECT_EQ(q, before);
  EXPECT_EQ(ra.denoiser, rb.denoiser);
  EXPECT_EQ(ra.step_loss, rb.step_loss);
  EXPECT_FALSE(ra.step_loss.empty());
}

TEST(TrainSdqn, NonFiniteLossAborts) {
  envs::GridReach env;
  Rng rng(18);
  auto q = testing::random_net({8, 16, 4}, {nn::Activation::relu, nn::Activation::identity}, rng);
  for (double& w : q.parameters()) w = std::numeric_limits<double>::max();
  Rng train(19);
  try {
    train_sdqn(env, q, tiny_sdqn(200), train);
    FAIL() << "expected divergence";
  } catch (const DivergenceError& e) {
    EXPECT_GE(e.step(), 63u);
  }
}

TEST(MetricsCsv, Columns) {
  std::vector<EpisodeRecord> recs(2);
  recs[0].step = 10;
  recs[0].loss_total = std::numeric_limits<double>::quiet_NaN();
  std::istringstream in(sdqn_metrics_csv(recs));
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "step,episode_reward,loss_total,loss_recon,loss_td");
  std::istringstream pin(pretrain_metrics_csv(recs));
  std::getline(pin, header);
  EXPECT_EQ(header, "step,episode_reward,epsilon,loss_td");
}

}  // namespace
}  // namespace smoothrl::sdqn
