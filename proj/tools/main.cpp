#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "cli/commands.hpp"
#include "cli/config.hpp"

namespace {

using nlohmann::json;
using smoothrl::cli::ConfigError;
using smoothrl::cli::Invocation;

struct Common {
  std::string config;
  std::uint64_t seed = 0;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c, bool config_required) {
  auto* opt = cmd->add_option("--config", c.config, "flat JSON config file");
  if (config_required) opt->required();
  cmd->add_option("--seed", c.seed, "root seed for every random stream")->required();
  cmd->add_option("--out", c.out, "output directory")->required();
}

// Config-file contents overlaid with explicitly given flags.
json base_params(const Common& c) {
  if (c.config.empty()) return json::object();
  return smoothrl::cli::load_config_file(c.config);
}

template <typename T>
void overlay(json& params, CLI::Option* opt, const std::string& key, const T& value) {
  if (opt->count() > 0) params[key] = value;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Certifiably robust RL via randomized smoothing: train, evaluate, attack, certify"};
  app.require_subcommand(1);
  int threads = 1;
  app.add_option("--threads", threads, "worker threads (results do not depend on this)")
      ->check(CLI::PositiveNumber);

  Common common;

  auto* train = app.add_subcommand("train", "train an agent");
  std::string kind;
  train->add_option("kind", kind, "sdqn-pretrain, sdqn, sppo or s-atla")->required();
  add_common(train, common, true);

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  add_common(eval, common, false);
  std::string checkpoint, agent;
  int episodes = 0;
  std::size_t m = 0;
  double sigma = 0.0, alpha = 0.0;
  auto* e_ckpt = eval->add_option("--checkpoint", checkpoint);
  auto* e_eps = eval->add_option("--episodes", episodes);
  auto* e_m = eval->add_option("--m", m, "smoothing sample count");
  auto* e_sigma = eval->add_option("--sigma", sigma);
  auto* e_agent = eval->add_option("--agent", agent, "auto, plain or smoothed");

  auto* attack = app.add_subcommand("attack", "evaluate under an observation attack");
  add_common(attack, common, false);
  std::string attack_name, norm;
  std::vector<double> epsilons;
  auto* a_ckpt = attack->add_option("--checkpoint", checkpoint);
  auto* a_name = attack->add_option("--attack", attack_name, "pgd, s-pgd, fgsm, s-fgsm or mad");
  auto* a_grid = attack->add_option("--eps", epsilons, "comma-separated budget grid")->delimiter(',');
  auto* a_eps = attack->add_option("--episodes", episodes);
  auto* a_norm = attack->add_option("--norm", norm, "l2 or linf");
  auto* a_m = attack->add_option("--m", m);
  auto* a_agent = attack->add_option("--agent", agent);

  auto* certify = app.add_subcommand("certify", "compute robustness certificates");
  add_common(certify, common, false);
  std::string mode;
  double epsilon = 0.0, budget = 0.0;
  std::uint64_t states = 0;
  auto* c_ckpt = certify->add_option("--checkpoint", checkpoint);
  auto* c_mode = certify->add_option("--mode", mode, "radius, action-bound, reward-bound or adiv");
  auto* c_m = certify->add_option("--m", m);
  auto* c_alpha = certify->add_option("--alpha", alpha);
  auto* c_sigma = certify->add_option("--sigma", sigma);
  auto* c_states = certify->add_option("--states", states, "probe states (radius mode)");
  auto* c_eps = certify->add_option("--epsilon", epsilon, "l2 budget (action-bound, reward-bound)");
  auto* c_budget = certify->add_option("--budget", budget, "total trajectory budget B (reward-bound)");
  bool crop = false;
  auto* c_crop = certify->add_flag("--crop", crop, "also report the mean-smoothing baseline radius");
  double v_min = 0.0, v_max = 0.0, q1 = 0.0, q2 = 0.0;
  auto* c_vmin = certify->add_option("--v-min", v_min);
  auto* c_vmax = certify->add_option("--v-max", v_max);
  auto* c_q1 = certify->add_option("--crop-q1", q1, "explicit top Q value for the baseline radius");
  auto* c_q2 = certify->add_option("--crop-q2", q2, "explicit runner-up Q value");

  auto* replay = app.add_subcommand("replay", "re-run a manifest and compare outputs byte for byte");
  std::string manifest, replay_out;
  replay->add_option("--manifest", manifest)->required();
  replay->add_option("--out", replay_out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : smoothrl::cli::kUsage;
  }

  if (*replay) {
    return smoothrl::cli::replay(manifest, replay_out, app.get_option("--threads")->count() ? threads : 0,
                                 std::cout, std::cerr);
  }

  Invocation inv;
  inv.seed = common.seed;
  inv.out = common.out;
  inv.threads = threads;
  try {
    inv.params = base_params(common);
    if (!inv.params.is_object()) throw ConfigError("", "config must be a JSON object");
    json& p = inv.params;
    if (*train) {
      inv.command = "train";
      p["kind"] = kind;
    } else if (*eval) {
      inv.command = "eval";
      overlay(p, e_ckpt, "checkpoint", checkpoint);
      overlay(p, e_eps, "episodes", episodes);
      overlay(p, e_m, "m", m);
      overlay(p, e_sigma, "sigma", sigma);
      overlay(p, e_agent, "agent", agent);
    } else if (*attack) {
      inv.command = "attack";
      overlay(p, a_ckpt, "checkpoint", checkpoint);
      overlay(p, a_name, "attack", attack_name);
      overlay(p, a_grid, "epsilons", epsilons);
      overlay(p, a_eps, "episodes", episodes);
      overlay(p, a_norm, "norm", norm);
      overlay(p, a_m, "m", m);
      overlay(p, a_agent, "agent", agent);
    } else if (*certify) {
      inv.command = "certify";
      overlay(p, c_ckpt, "checkpoint", checkpoint);
      overlay(p, c_mode, "mode", mode);
      overlay(p, c_m, "m", m);
      overlay(p, c_alpha, "alpha", alpha);
      overlay(p, c_sigma, "sigma", sigma);
      overlay(p, c_states, "states", states);
      overlay(p, c_eps, "epsilon", epsilon);
      overlay(p, c_budget, "budget", budget);
      if (c_crop->count() > 0) p["crop"] = crop;
      overlay(p, c_vmin, "v_min", v_min);
      overlay(p, c_vmax, "v_max", v_max);
      overlay(p, c_q1, "crop_q1", q1);
      overlay(p, c_q2, "crop_q2", q2);
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return smoothrl::cli::kUsage;
  }
  return smoothrl::cli::run(inv, std::cout, std::cerr);
}
