// Acceptance suite: prints one PASS/FAIL line per criterion and exits nonzero if any fails.
// Tolerances and sample sizes are fixed here; none are adjusted after the fact.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "cli/commands.hpp"
#include "smoothrl/agents.hpp"
#include "smoothrl/attacks/attacks.hpp"
#include "smoothrl/certify/certify.hpp"
#include "smoothrl/certify/normal.hpp"
#include "smoothrl/envs/grid_reach.hpp"
#include "smoothrl/envs/point_reach.hpp"
#include "smoothrl/sdqn/sdqn.hpp"
#include "smoothrl/smoothing/smoothing.hpp"
#include "smoothrl/sppo/sppo.hpp"
#include "test_util.hpp"

namespace {

using namespace smoothrl;
namespace fs = std::filesystem;
using nlohmann::json;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int digits = 4) {
  std::ostringstream s;
  s.precision(digits);
  s << v;
  return s.str();
}

// ------------------------------------------------------------------ shared trained agents

struct GridAgents {
  nn::Mlp qnet;
  nn::Mlp denoiser;
};

const GridAgents& grid_agents() {
  static const GridAgents agents = [] {
    envs::GridReach env;
    Rng pre_rng(101);
    auto pre = sdqn::pretrain_q(env, sdqn::DqnConfig{}, pre_rng);
    Rng rng(102);
    auto sd = sdqn::train_sdqn(env, pre.qnet, sdqn::SdqnConfig{}, rng);
    std::cerr << "  [trained GridReach DQN: greedy " << pre.final_greedy_reward << "]\n";
    return GridAgents{std::move(pre.qnet), std::move(sd.denoiser)};
  }();
  return agents;
}

const smoothing::SmoothConfig kGridSmooth{0.1, 100, 0.05, 0.5};

// ------------------------------------------------------------------ criteria

Outcome crop_example() {
  const smoothing::SmoothConfig cfg{0.1, 100, 0.05, 0.5};
  const auto wide = certify::certified_radius_crop(3.0, -3.0, -10.0, 10.0, cfg);
  const auto narrow = certify::certified_radius_crop(3.0, -3.0, -3.5, 3.5, cfg);
  if (!wide.radius || !narrow.radius) return {false, "uncertified"};
  const bool ok = std::abs(*wide.radius - 0.007) <= 0.001 && std::abs(*narrow.radius - 0.086) <= 0.001;
  return {ok, "[-10,10]: " + fmt(*wide.radius) + ", [-3.5,3.5]: " + fmt(*narrow.radius)};
}

Outcome gradient_oracle() {
  Rng rng(201);
  const nn::Activation kinds[] = {nn::Activation::relu, nn::Activation::tanh, nn::Activation::identity};
  int failed_pairs = 0;
  double worst = 0.0;
  for (int pair = 0; pair < 100; ++pair) {
    const std::size_t in = 1 + rng.uniform_index(6);
    const std::size_t layers = 1 + rng.uniform_index(3);
    const bool residual = rng.uniform() < 0.25;
    std::vector<std::size_t> dims{in};
    std::vector<nn::Activation> acts;
    for (std::size_t l = 0; l < layers; ++l) {
      dims.push_back(l + 1 == layers ? (residual ? in : 1 + rng.uniform_index(4)) : 1 + rng.uniform_index(8));
      acts.push_back(kinds[rng.uniform_index(3)]);
    }
    const auto net = testing::random_net(dims, acts, rng, 1.0, residual);
    const Vector x = testing::random_vector(in, rng);
    const Vector c = testing::random_vector(net.output_dim(), rng);
    // loss = c . y + 0.5 |y|^2
    const nn::OutputLoss loss = [&](std::span<const double> y, std::span<double> g) {
      double v = 0.0;
      for (std::size_t i = 0; i < y.size(); ++i) {
        v += c[i] * y[i] + 0.5 * y[i] * y[i];
        g[i] = c[i] + y[i];
      }
      return v;
    };
    auto value = [&](const nn::Mlp& n, const Vector& input) {
      const Vector y = n.forward(input);
      Vector g(y.size());
      return loss(y, g);
    };
    const auto grads = nn::gradients(net, loss, x);
    bool ok = true;
    const Vector params(net.parameters().begin(), net.parameters().end());
    for (std::size_t k = 0; k < params.size(); ++k) {
      const double fd = testing::central_diff(
          [&](const Vector& p) {
            nn::Mlp copy = net;
            std::copy(p.begin(), p.end(), copy.parameters().begin());
            return value(copy, x);
          },
          params, k);
      if (!testing::close_rel(grads.params[k], fd, 1e-4, 1e-7)) ok = false;
      worst = std::max(worst, std::abs(grads.params[k] - fd) / std::max(1e-7, std::abs(fd)));
    }
    for (std::size_t k = 0; k < in; ++k) {
      const double fd = testing::central_diff([&](const Vector& xi) { return value(net, xi); }, x, k);
      if (!testing::close_rel(grads.input[k], fd, 1e-4, 1e-7)) ok = false;
    }
    if (!ok) ++failed_pairs;
  }
  return {failed_pairs == 0, std::to_string(100 - failed_pairs) + "/100 pairs within rel 1e-4"};
}

Outcome hoeffding_coverage() {
  // One-dimensional threshold Q-network: action 0 wins iff s + delta > 0, so the true
  // vote fraction at s = sigma * Phi^-1(p) is exactly p.
  const Vector w{1.0, 0.0};
  const Vector b{0.0, 0.0};
  const auto q = testing::linear_net(1, 2, w, b);
  const double sigma = 0.5;
  const std::size_t m = 100;
  const double alpha = 0.05;
  const double delta = smoothing::hoeffding_delta(m, alpha);
  Rng rng(301);
  double worst = 0.0;
  std::string detail;
  for (double p : {0.1, 0.5, 0.9}) {
    const Vector s{sigma * certify::normal_inv_cdf(p)};
    int lower_viol = 0, upper_viol = 0;
    for (int t = 0; t < 2000; ++t) {
      const auto est = smoothing::estimate_smoothed_q(q, nullptr, s, {sigma, m, alpha, 0.5}, rng);
      if (est.q_est[0] - delta > p) ++lower_viol;
      if (est.q_est[0] + delta < p) ++upper_viol;
    }
    const double rate = std::max(lower_viol, upper_viol) / 2000.0;
    worst = std::max(worst, rate);
    detail += "p=" + fmt(p, 2) + ": " + fmt(rate) + " ";
  }
  return {worst <= alpha + 0.01, detail + "(limit " + fmt(alpha + 0.01) + ")"};
}

Outcome order_statistics() {
  Rng rng(401);
  int mismatches = 0;
  for (int c = 0; c < 1000; ++c) {
    const std::size_t n = 1 + rng.uniform_index(400);
    double p = rng.uniform();
    if (rng.uniform() < 0.2) p = static_cast<double>(1 + rng.uniform_index(n)) / static_cast<double>(n);
    if (!(p > 0.0 && p < 1.0)) p = 0.5;
    Vector samples(n);
    const bool ties = rng.uniform() < 0.3;
    for (double& x : samples) x = ties ? std::floor(rng.uniform(0, 5)) : rng.normal();
    Vector sorted = samples;
    std::sort(sorted.begin(), sorted.end());
    // Smallest 1-based rank k with k >= n p.
    std::size_t k = 1;
    while (k < n && static_cast<double>(k) < static_cast<double>(n) * p) ++k;
    if (smoothing::percentile_smooth(samples, p) != sorted[k - 1]) ++mismatches;
  }
  return {mismatches == 0, std::to_string(1000 - mismatches) + "/1000 exact"};
}

Outcome certificate_soundness() {
  const auto& g = grid_agents();
  envs::GridReach env;
  Rng state_rng(501), cert_rng(502), probe_rng(503), est_rng(504);
  int certified = 0, flipped = 0, tried = 0;
  double radius_sum = 0.0;
  while (certified < 100 && tried < 2000) {
    ++tried;
    const Vector s = env.sample_observation(state_rng);
    const auto cert = certify::certify_state(g.qnet, &g.denoiser, s, kGridSmooth, cert_rng);
    if (!cert.radius || *cert.radius <= 0.0) continue;
    ++certified;
    const double r = *cert.radius;
    radius_sum += r;
    std::vector<Vector> probes;
    for (int d = 0; d < 20; ++d) {
      Vector u(s.size());
      probe_rng.fill_normal(u);
      const double n = norm2(u);
      Vector x = s;
      for (std::size_t i = 0; i < s.size(); ++i) x[i] += r * u[i] / n;
      probes.push_back(std::move(x));
    }
    attacks::AttackConfig acfg;
    acfg.epsilon = r;
    acfg.norm = attacks::Norm::l2;
    acfg.sigma = kGridSmooth.sigma;
    probes.push_back(attacks::s_pgd_attack(g.qnet, &g.denoiser, s, cert.top_action, acfg, probe_rng));
    bool flip = false;
    for (const auto& x : probes) {
      const auto est = smoothing::estimate_smoothed_q(g.qnet, &g.denoiser, x,
                                                      {kGridSmooth.sigma, 10000, 0.05, 0.5}, est_rng);
      if (est.top_action != cert.top_action) flip = true;
    }
    if (flip) ++flipped;
  }
  if (certified < 100) return {false, "only " + std::to_string(certified) + " certified states found"};
  return {flipped <= 5, std::to_string(flipped) + "/100 states flipped (mean radius " +
                            fmt(radius_sum / certified) + ")"};
}

Outcome reward_bound_validity() {
  const auto& g = grid_agents();
  envs::GridReach env;
  const double eps = 0.01;
  const double budget = eps * std::sqrt(static_cast<double>(env.spec().horizon));
  const agents::NoisyQAgent noisy(g.qnet, g.denoiser, kGridSmooth.sigma);
  Rng rng(601);
  const auto bound = certify::reward_lower_bound(env, noisy, budget, kGridSmooth, 1000, rng);
  if (!bound.bound) return {false, "bound uncertified at B=" + fmt(budget)};
  attacks::AttackConfig acfg;
  acfg.epsilon = eps;
  acfg.norm = attacks::Norm::l2;
  acfg.sigma = kGridSmooth.sigma;
  acfg.obs_box = env.spec().observation_box;
  const attacks::QAttack attack(attacks::QAttackMethod::s_pgd, g.qnet, g.denoiser, acfg, kGridSmooth);
  Rng ep_rng(602);
  const auto attacked = attacks::run_attack_eval(env, noisy, attack, 100, ep_rng);
  const auto violations = std::count_if(attacked.per_episode.begin(), attacked.per_episode.end(),
                                        [&](double r) { return r < *bound.bound; });
  return {violations <= 5, std::to_string(violations) + "/100 episodes below bound " + fmt(*bound.bound) +
                               " (B=" + fmt(budget) + ", attacked mean " + fmt(attacked.mean) + ")"};
}

Outcome robustness_ordering() {
  const auto& g = grid_agents();
  envs::GridReach env;
  attacks::AttackConfig acfg;
  acfg.epsilon = 0.05;
  acfg.norm = attacks::Norm::linf;
  acfg.sigma = kGridSmooth.sigma;
  acfg.obs_box = env.spec().observation_box;
  const agents::SmoothedQAgent smoothed(g.qnet, g.denoiser, kGridSmooth);
  const agents::GreedyQAgent vanilla(g.qnet);
  const attacks::QAttack spgd(attacks::QAttackMethod::s_pgd, g.qnet, g.denoiser, acfg, kGridSmooth);
  const attacks::QAttack pgd_s(attacks::QAttackMethod::pgd, g.qnet, g.denoiser, acfg, kGridSmooth);
  const attacks::QAttack pgd_v(attacks::QAttackMethod::pgd, g.qnet, std::nullopt, acfg);
  auto run = [&](const agents::Agent& agent, const attacks::Attack& attack) {
    Rng rng(701);  // matched seeds across the three runs
    return attacks::run_attack_eval(env, agent, attack, 20, rng).mean;
  };
  const double sdqn_spgd = run(smoothed, spgd);
  const double sdqn_pgd = run(smoothed, pgd_s);
  const double dqn_pgd = run(vanilla, pgd_v);
  const bool ok = sdqn_spgd >= dqn_pgd && sdqn_spgd <= sdqn_pgd;
  return {ok, "S-DQN/s-pgd " + fmt(sdqn_spgd) + ", DQN/pgd " + fmt(dqn_pgd) + ", S-DQN/pgd " + fmt(sdqn_pgd)};
}

double retention(double clean, double attacked) { return 1.0 - (clean - attacked) / std::abs(clean); }

Outcome sppo_learning_and_robustness() {
  envs::PointReach env;
  sppo::PpoConfig s_cfg;  // sigma 0.2, m 5
  sppo::PpoConfig v_cfg;
  v_cfg.sigma = 0.0;
  v_cfg.m = 1;
  Rng s_rng(801), v_rng(802);
  const auto init = sppo::initial_networks(env, s_cfg, s_rng);
  const auto s_res = sppo::train_sppo(env, s_cfg, s_rng);
  const auto v_res = sppo::train_sppo(env, v_cfg, v_rng);

  const smoothing::SmoothConfig sc{s_cfg.sigma, 100, 0.05, 0.5};
  auto evaluate = [&](const agents::Agent& agent, const attacks::Attack& attack) {
    Rng rng(803);  // matched seeds for every evaluation
    return attacks::run_attack_eval(env, agent, attack, 50, rng).mean;
  };
  const attacks::NoAttack none;
  const double before = evaluate(agents::SmoothedPolicyAgent(init.policy, sc), none);
  const agents::SmoothedPolicyAgent s_agent(s_res.policy, sc);
  const double after = evaluate(s_agent, none);
  const double improvement = (after - before) / std::abs(before);

  attacks::AttackConfig acfg;
  acfg.epsilon = 0.075;
  acfg.norm = attacks::Norm::linf;
  acfg.obs_box = env.spec().observation_box;
  const double s_attacked = evaluate(s_agent, attacks::MadAttack(s_res.policy, acfg, sc));
  const agents::MeanPolicyAgent v_agent(v_res.policy);
  const double v_clean = evaluate(v_agent, none);
  const double v_attacked = evaluate(v_agent, attacks::MadAttack(v_res.policy, acfg));
  const double s_ret = retention(after, s_attacked);
  const double v_ret = retention(v_clean, v_attacked);
  const bool ok = improvement >= 0.5 && s_ret > v_ret;
  return {ok, "improvement " + fmt(improvement) + " (" + fmt(before) + " -> " + fmt(after) +
                  "), MAD retention S-PPO " + fmt(s_ret) + " vs PPO " + fmt(v_ret)};
}

Outcome lipschitz_slope() {
  const auto& g = grid_agents();
  envs::GridReach env;
  const double sigma = kGridSmooth.sigma;
  const double h = 0.01;
  const std::size_t m = 100000;
  Rng rng(901);
  // Probe states whose top vote is not saturated, so Phi^-1 stays well conditioned.
  struct Probe {
    Vector state;
    int action;
  };
  std::vector<Probe> probes;
  for (int tries = 0; tries < 5000 && probes.size() < 10; ++tries) {
    Vector s = env.sample_observation(rng);
    for (double& x : s) x += rng.uniform(-0.15, 0.15);
    const auto est = smoothing::estimate_smoothed_q_keyed(g.qnet, &g.denoiser, s, sigma, 2000, 0.05, rng.next_u64());
    const double top = est.q_est[static_cast<std::size_t>(est.top_action)];
    if (top >= 0.05 && top <= 0.95) probes.push_back({s, est.top_action});
  }
  if (probes.empty()) return {false, "no unsaturated probe state found"};
  double worst = 0.0;
  for (int d = 0; d < 50; ++d) {
    const Probe& pr = probes[static_cast<std::size_t>(d) % probes.size()];
    Vector u(pr.state.size());
    rng.fill_normal(u);
    const double n = norm2(u);
    Vector x = pr.state;
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += h * u[i] / n;
    const std::uint64_t key = rng.next_u64();  // common random numbers at both points
    const auto a = smoothing::estimate_smoothed_q_keyed(g.qnet, &g.denoiser, pr.state, sigma, m, 0.05, key);
    const auto b = smoothing::estimate_smoothed_q_keyed(g.qnet, &g.denoiser, x, sigma, m, 0.05, key);
    auto f = [&](const smoothing::SmoothedQEstimate& e) {
      const double q = std::clamp(e.q_est[static_cast<std::size_t>(pr.action)], certify::kProbFloor,
                                  1.0 - certify::kProbFloor);
      return sigma * certify::normal_inv_cdf(q);
    };
    worst = std::max(worst, std::abs(f(b) - f(a)) / h);
  }
  return {worst <= 1.05, "max slope " + fmt(worst) + " over 50 directions, " +
                             std::to_string(probes.size()) + " probe states"};
}

Outcome replay_determinism(const fs::path& work) {
  fs::remove_all(work);
  std::ostringstream sink, err;
  auto train = [&](const json& params, const fs::path& out, int threads) {
    return cli::run(cli::Invocation{"train", params, 42, out, threads}, sink, err);
  };
  const json pretrain = {{"kind", "sdqn-pretrain"}, {"env", "gridreach"}, {"steps", 3000},
                         {"batch_size", 32}, {"gamma", 0.99}, {"lr", 1e-3}, {"buffer_capacity", 5000},
                         {"learning_starts", 200}, {"train_every", 1}, {"target_sync_interval", 250},
                         {"epsilon_start", 1.0}, {"epsilon_end", 0.05}, {"epsilon_decay_steps", 1000},
                         {"hidden", {32, 32}}, {"reward_threshold", 0.9}, {"early_stop", false},
                         {"eval_interval", 1000}, {"eval_episodes", 5}};
  json sdqn = {{"kind", "sdqn"}, {"env", "gridreach"}, {"base_checkpoint", (work / "pretrain" / "checkpoint.v1").string()},
               {"lambda1", 1.0}, {"lambda2", 1.0}, {"sigma", 0.1}, {"gamma", 0.99}, {"huber_zeta", 1.0},
               {"epsilon_start", 1.0}, {"epsilon_end", 0.05}, {"epsilon_decay_steps", 500}, {"steps", 2000},
               {"batch_size", 32}, {"lr", 1e-3}, {"buffer_capacity", 5000}, {"learning_starts", 200},
               {"train_every", 1}, {"denoiser_hidden", 32}};
  json ppo = {{"kind", "sppo"}, {"env", "pointreach"}, {"clip", 0.2}, {"gamma", 0.99}, {"gae_lambda", 0.95},
              {"sigma", 0.2}, {"m", 5}, {"p", 0.5}, {"iterations", 4}, {"trajectories", 4}, {"epochs", 3},
              {"minibatch", 100}, {"policy_lr", 3e-4}, {"value_lr", 1e-3}, {"hidden", json::array({32})},
              {"init_log_std", -0.5}};
  json atla = ppo;
  atla["kind"] = "s-atla";
  atla["adversary_budget"] = 0.075;
  atla["adversary_lr"] = 3e-4;

  struct Run {
    std::string name;
    json params;
    int threads;
  };
  const std::vector<Run> runs{{"pretrain", pretrain, 1}, {"sdqn", sdqn, 1}, {"sppo", ppo, 1}, {"s-atla", atla, 2}};
  int identical = 0;
  std::string detail;
  for (const auto& r : runs) {
    if (train(r.params, work / r.name, r.threads) != cli::kOk) {
      detail += r.name + ": run failed (" + err.str() + ") ";
      continue;
    }
    std::ostringstream rout, rerr;
    const int status = cli::replay(work / r.name / "manifest.json", work / (r.name + "-replay"), 3, rout, rerr);
    const bool metrics_same = rout.str().find("identical metrics.csv") != std::string::npos;
    if (status == cli::kOk && metrics_same) ++identical;
    else detail += r.name + ": replay differs ";
  }
  detail += std::to_string(identical) + "/" + std::to_string(runs.size()) + " replays byte-identical at --threads 3";
  return {identical == static_cast<int>(runs.size()), detail};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance checks"};
  std::string work_dir = (fs::temp_directory_path() / "smoothrl_acceptance").string();
  app.add_option("--work-dir", work_dir, "scratch directory for CLI runs");
  std::vector<int> only;
  app.add_option("--only", only, "run only these criterion numbers");
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"crop radius example", crop_example},
      {"gradient oracle", gradient_oracle},
      {"Hoeffding coverage", hoeffding_coverage},
      {"order-statistic oracle", order_statistics},
      {"empirical certificate soundness", certificate_soundness},
      {"reward-bound validity", reward_bound_validity},
      {"robustness ordering", robustness_ordering},
      {"S-PPO learning and MAD robustness", sppo_learning_and_robustness},
      {"smoothed vote Lipschitz slope", lipschitz_slope},
      {"manifest replay determinism", [&] { return replay_determinism(fs::path(work_dir) / "replay"); }},
  };

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int number = static_cast<int>(i) + 1;
    if (!only.empty() && std::find(only.begin(), only.end(), number) == only.end()) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!o.pass) ++failures;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << number << " (" << criteria[i].first
              << "): " << o.detail << " [" << fmt(secs, 3) << " s]" << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
