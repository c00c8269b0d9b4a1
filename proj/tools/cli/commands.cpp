#include "commands.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <ctime>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>

#include "config.hpp"
#include "smoothrl/agents.hpp"
#include "smoothrl/attacks/attacks.hpp"
#include "smoothrl/certify/certify.hpp"
#include "smoothrl/envs/env.hpp"
#include "smoothrl/error.hpp"
#include "smoothrl/io/csv.hpp"
#include "smoothrl/io/files.hpp"
#include "smoothrl/nn/checkpoint.hpp"
#include "smoothrl/parallel.hpp"
#include "smoothrl/sdqn/sdqn.hpp"
#include "smoothrl/smoothing/smoothing.hpp"
#include "smoothrl/sppo/sppo.hpp"

#ifndef SMOOTHRL_VERSION
#define SMOOTHRL_VERSION "unknown"
#endif

namespace smoothrl::cli {

namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

std::string now_utc() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Shortest round-trip form, for file names.
std::string short_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void fill_defaults(json& params, const json& defaults) {
  for (const auto& [k, v] : defaults.items()) {
    if (!params.contains(k)) params[k] = v;
  }
}

// Everything a command produces; written only after the computation succeeded.
struct Artifacts {
  std::vector<std::pair<std::string, std::string>> files;  // relative path, content
  json inputs = json::object();
  std::string env;
  std::vector<std::string> warnings;

  void add(std::string path, std::string content) { files.emplace_back(std::move(path), std::move(content)); }
};

void write_artifacts(const Invocation& inv, const json& snapshot, const Artifacts& a,
                     const std::string& started) {
  fs::create_directories(inv.out);
  json outputs = json::array();
  for (const auto& [rel, content] : a.files) {
    const fs::path path = inv.out / rel;
    fs::create_directories(path.parent_path());
    io::write_file_atomic(path, content);
    outputs.push_back(rel);
  }
  json manifest;
  manifest["command"] = inv.command;
  manifest["seed"] = inv.seed;
  manifest["threads"] = inv.threads;
  manifest["env"] = a.env;
  manifest["config"] = snapshot;
  manifest["inputs"] = a.inputs;
  manifest["outputs"] = outputs;
  manifest["warnings"] = a.warnings;
  manifest["code_version"] = SMOOTHRL_VERSION;
  manifest["started_at"] = started;
  manifest["finished_at"] = now_utc();
  io::write_file_atomic(inv.out / "manifest.json", manifest.dump(2) + "\n");
}

std::unique_ptr<envs::Environment> env_from_config(const std::string& id) {
  try {
    return envs::make_env(id);
  } catch (const std::invalid_argument&) {
    throw ConfigError("env", "config key 'env': unknown environment '" + id + "' (valid: gridreach, pointreach)");
  }
}

// ---------------------------------------------------------------- checkpoints and agents

struct Model {
  nn::Checkpoint ckpt;
  std::unique_ptr<envs::Environment> env;
  std::optional<nn::Mlp> qnet;
  std::optional<nn::Mlp> denoiser;
  std::optional<nn::GaussianPolicy> policy;

  bool discrete() const { return qnet.has_value(); }
  double sigma() const { return ckpt.metadata.sigma; }
};

Model load_model(const fs::path& path) {
  Model m;
  m.ckpt = nn::load_checkpoint(path);
  try {
    m.env = envs::make_env(m.ckpt.env_id);
  } catch (const std::invalid_argument&) {
    throw CheckpointError("checkpoint names unknown environment '" + m.ckpt.env_id + "'");
  }
  const auto& spec = m.env->spec();
  const std::string& kind = m.ckpt.kind;
  if (kind == "dqn" || kind == "sdqn") {
    if (!spec.discrete()) throw CheckpointError("Q-network checkpoint on a continuous environment");
    m.qnet = m.ckpt.network("qnet");
    if (m.qnet->input_dim() != spec.obs_dim || m.qnet->output_dim() != static_cast<std::size_t>(spec.num_actions())) {
      throw CheckpointError("checkpoint Q-network does not match environment " + spec.id);
    }
    if (kind == "sdqn") {
      m.denoiser = m.ckpt.network("denoiser");
      if (m.denoiser->input_dim() != spec.obs_dim || m.denoiser->output_dim() != spec.obs_dim) {
        throw CheckpointError("checkpoint denoiser does not match environment " + spec.id);
      }
    }
  } else if (kind == "sppo" || kind == "s-atla") {
    if (spec.discrete()) throw CheckpointError("policy checkpoint on a discrete environment");
    nn::GaussianPolicy pol{m.ckpt.network("policy"), m.ckpt.vector("log_std")};
    if (pol.obs_dim() != spec.obs_dim || pol.action_dim() != spec.action_dim() ||
        pol.log_std.size() != spec.action_dim()) {
      throw CheckpointError("checkpoint policy does not match environment " + spec.id);
    }
    m.policy = std::move(pol);
  } else {
    throw CheckpointError("unknown checkpoint kind '" + kind + "'");
  }
  return m;
}

// Resolves "auto" to smoothed when the checkpoint was trained with smoothing noise.
std::string resolve_agent_mode(const std::string& mode, const Model& model) {
  if (mode == "auto") return model.sigma() > 0.0 ? "smoothed" : "plain";
  if (mode != "plain" && mode != "smoothed") {
    throw ConfigError("agent", "config key 'agent' must be auto, plain or smoothed");
  }
  return mode;
}

std::unique_ptr<agents::Agent> make_agent(const Model& model, const std::string& mode,
                                          const smoothing::SmoothConfig& cfg) {
  if (model.discrete()) {
    if (mode == "plain") return std::make_unique<agents::GreedyQAgent>(*model.qnet, model.denoiser);
    return std::make_unique<agents::SmoothedQAgent>(*model.qnet, model.denoiser, cfg);
  }
  if (mode == "plain") return std::make_unique<agents::MeanPolicyAgent>(*model.policy);
  return std::make_unique<agents::SmoothedPolicyAgent>(*model.policy, cfg);
}

// Common smoothing options of eval/attack/certify. sigma null means the checkpoint's.
struct SmoothOptions {
  smoothing::SmoothConfig cfg;
  std::string agent;
};

json smoothing_defaults() {
  return {{"m", 100}, {"alpha", 0.05}, {"p", 0.5}, {"sigma", nullptr}, {"agent", "auto"}};
}

SmoothOptions read_smoothing(ConfigReader& r, json& snapshot, const Model* model) {
  SmoothOptions o;
  o.cfg.m = r.count("m");
  o.cfg.alpha = r.number("alpha");
  o.cfg.p = r.number("p");
  const auto sigma = r.nullable_number("sigma");
  o.cfg.sigma = sigma ? *sigma : (model ? model->sigma() : 0.0);
  o.agent = r.string("agent");
  if (model) {
    o.agent = resolve_agent_mode(o.agent, *model);
    if (o.agent == "smoothed" && !(o.cfg.sigma > 0.0)) {
      throw ConfigError("sigma", "smoothed agent needs sigma > 0; the checkpoint has none, set 'sigma'");
    }
  }
  snapshot["sigma"] = o.cfg.sigma;
  snapshot["agent"] = o.agent;
  return o;
}

fs::path checkpoint_path(ConfigReader& r, json& snapshot) {
  const std::string raw = r.string("checkpoint");
  if (raw.empty()) throw ConfigError("checkpoint", "config key 'checkpoint' is empty");
  const fs::path abs = fs::absolute(raw).lexically_normal();
  snapshot["checkpoint"] = abs.string();
  return abs;
}

// ---------------------------------------------------------------- train

sdqn::DqnConfig read_dqn(ConfigReader& r) {
  sdqn::DqnConfig c;
  c.steps = r.count("steps");
  c.batch_size = r.count("batch_size");
  c.gamma = r.number("gamma");
  c.lr = r.number("lr");
  c.buffer_capacity = r.count("buffer_capacity");
  c.learning_starts = r.count("learning_starts");
  c.train_every = r.count("train_every");
  c.target_sync_interval = r.count("target_sync_interval");
  c.epsilon = {r.number("epsilon_start"), r.number("epsilon_end"), r.count("epsilon_decay_steps")};
  c.hidden = r.size_list("hidden");
  c.reward_threshold = r.number("reward_threshold");
  c.early_stop = r.boolean("early_stop");
  c.eval_interval = r.count("eval_interval");
  c.eval_episodes = static_cast<int>(r.count("eval_episodes"));
  return c;
}

sdqn::SdqnConfig read_sdqn(ConfigReader& r) {
  sdqn::SdqnConfig c;
  c.lambda1 = r.number("lambda1");
  c.lambda2 = r.number("lambda2");
  c.sigma = r.number("sigma");
  c.gamma = r.number("gamma");
  c.huber_zeta = r.number("huber_zeta");
  c.epsilon = {r.number("epsilon_start"), r.number("epsilon_end"), r.count("epsilon_decay_steps")};
  c.steps = r.count("steps");
  c.batch_size = r.count("batch_size");
  c.lr = r.number("lr");
  c.buffer_capacity = r.count("buffer_capacity");
  c.learning_starts = r.count("learning_starts");
  c.train_every = r.count("train_every");
  c.denoiser_hidden = r.count("denoiser_hidden");
  return c;
}

sppo::PpoConfig read_ppo(ConfigReader& r, bool adversary) {
  sppo::PpoConfig c;
  c.clip = r.number("clip");
  c.gamma = r.number("gamma");
  c.gae_lambda = r.number("gae_lambda");
  c.sigma = r.number("sigma");
  c.m = r.count("m");
  c.p = r.number("p");
  c.iterations = r.count("iterations");
  c.trajectories = static_cast<int>(r.count("trajectories"));
  c.epochs = static_cast<int>(r.count("epochs"));
  c.minibatch = r.count("minibatch");
  c.policy_lr = r.number("policy_lr");
  c.value_lr = r.number("value_lr");
  c.hidden = r.size_list("hidden");
  c.init_log_std = r.number("init_log_std");
  c.adversary_enabled = adversary;
  if (adversary) {
    c.adversary_budget = r.number("adversary_budget");
    c.adversary_lr = r.number("adversary_lr");
  }
  return c;
}

// Runs a core-level validate() and reports failures as configuration errors.
template <typename Cfg>
void validate_config(const Cfg& c) {
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError("", std::string("invalid config: ") + e.what());
  }
}

nn::Checkpoint ppo_checkpoint(const std::string& kind, const std::string& env_id,
                              const sppo::PpoResult& res, const sppo::PpoConfig& c,
                              std::uint64_t seed) {
  nn::Checkpoint ck;
  ck.kind = kind;
  ck.env_id = env_id;
  ck.networks["policy"] = res.policy.mean_net;
  ck.networks["value"] = res.value;
  ck.vectors["log_std"] = res.policy.log_std;
  if (res.adversary) {
    ck.networks["adversary"] = res.adversary->mean_net;
    ck.networks["adversary_value"] = *res.adversary_value;
    ck.vectors["adversary_log_std"] = res.adversary->log_std;
  }
  ck.metadata.sigma = c.sigma;
  ck.metadata.seed = seed;
  ck.metadata.steps = c.iterations;
  ck.metadata.extra = {{"m", c.m}, {"p", c.p}};
  if (res.adversary) ck.metadata.extra["adversary_budget"] = c.adversary_budget;
  return ck;
}

Artifacts cmd_train(const Invocation& inv, json& snapshot) {
  ConfigReader r(snapshot);
  const std::string kind = r.string("kind");
  const std::string env_id = r.string("env");
  Artifacts a;
  a.env = env_id;
  Rng rng(derive_seed(inv.seed, "train"));

  if (kind == "sdqn-pretrain") {
    const auto c = read_dqn(r);
    r.finish();
    validate_config(c);
    const auto env = env_from_config(env_id);
    if (!env->spec().discrete()) throw ConfigError("env", "sdqn-pretrain needs a discrete environment");
    const auto res = sdqn::pretrain_q(*env, c, rng);
    nn::Checkpoint ck;
    ck.kind = "dqn";
    ck.env_id = env_id;
    ck.networks["qnet"] = res.qnet;
    ck.metadata.seed = inv.seed;
    ck.metadata.steps = res.steps_run;
    ck.metadata.extra = {{"reached_threshold", res.reached_threshold},
                         {"final_greedy_reward", res.final_greedy_reward}};
    if (!res.reached_threshold) a.warnings.push_back("pretrain_below_threshold");
    a.add("checkpoint.v1", nn::encode_checkpoint(ck));
    a.add("metrics.csv", sdqn::pretrain_metrics_csv(res.episodes));
    return a;
  }
  if (kind == "sdqn") {
    const auto c = read_sdqn(r);
    const fs::path base = fs::absolute(r.string("base_checkpoint")).lexically_normal();
    snapshot["base_checkpoint"] = base.string();
    r.finish();
    validate_config(c);
    const auto env = env_from_config(env_id);
    const Model pre = load_model(base);
    if (pre.ckpt.kind != "dqn") throw CheckpointError("base_checkpoint must be an sdqn-pretrain checkpoint");
    if (pre.ckpt.env_id != env_id) throw ConfigError("env", "config env differs from the base checkpoint's");
    a.inputs["base_checkpoint"] = base.string();
    const auto res = sdqn::train_sdqn(*env, *pre.qnet, c, rng);
    nn::Checkpoint ck;
    ck.kind = "sdqn";
    ck.env_id = env_id;
    ck.networks["qnet"] = *pre.qnet;
    ck.networks["denoiser"] = res.denoiser;
    ck.metadata.sigma = c.sigma;
    ck.metadata.seed = inv.seed;
    ck.metadata.steps = c.steps;
    a.add("checkpoint.v1", nn::encode_checkpoint(ck));
    a.add("metrics.csv", sdqn::sdqn_metrics_csv(res.episodes));
    return a;
  }
  if (kind == "sppo" || kind == "s-atla") {
    const bool adversary = kind == "s-atla";
    const auto c = read_ppo(r, adversary);
    r.finish();
    validate_config(c);
    const auto env = env_from_config(env_id);
    if (env->spec().discrete()) throw ConfigError("env", kind + " needs a continuous environment");
    const auto res = adversary ? sppo::train_s_atla(*env, c, rng) : sppo::train_sppo(*env, c, rng);
    a.add("checkpoint.v1", nn::encode_checkpoint(ppo_checkpoint(kind, env_id, res, c, inv.seed)));
    a.add("metrics.csv", sppo::ppo_metrics_csv(res.iterations));
    return a;
  }
  throw ConfigError("kind", "unknown train kind '" + kind + "' (valid: sdqn-pretrain, sdqn, sppo, s-atla)");
}

// ---------------------------------------------------------------- eval

json stats_json(const attacks::RewardStats& s) {
  return {{"mean", s.mean}, {"std", s.std}, {"per_episode", s.per_episode}};
}

Artifacts cmd_eval(const Invocation& inv, json& snapshot, std::ostream& out) {
  json defaults = smoothing_defaults();
  defaults["episodes"] = 20;
  fill_defaults(snapshot, defaults);
  ConfigReader r(snapshot);
  const fs::path ckpt = checkpoint_path(r, snapshot);
  const auto episodes = static_cast<int>(r.count("episodes"));
  const Model model = load_model(ckpt);
  const SmoothOptions so = read_smoothing(r, snapshot, &model);
  r.finish();
  if (episodes < 1) throw ConfigError("episodes", "config key 'episodes' must be >= 1");
  const auto agent = make_agent(model, so.agent, so.cfg);
  Rng rng(derive_seed(inv.seed, "episodes"));
  const auto stats = attacks::evaluate(*model.env, *agent, episodes, rng);

  json report = stats_json(stats);
  report["agent"] = agent->name();
  report["env"] = model.ckpt.env_id;
  report["episodes"] = episodes;
  report["m"] = so.cfg.m;
  report["sigma"] = so.cfg.sigma;
  Artifacts a;
  a.env = model.ckpt.env_id;
  a.inputs["checkpoint"] = ckpt.string();
  a.add("reports/eval.json", report.dump(2) + "\n");
  out << "eval " << agent->name() << " on " << a.env << ": mean " << io::format_double(stats.mean)
      << " std " << io::format_double(stats.std) << " over " << episodes << " episodes\n";
  return a;
}

// ---------------------------------------------------------------- attack

constexpr const char* kAttackNames = "pgd, s-pgd, fgsm, s-fgsm, mad";

Artifacts cmd_attack(const Invocation& inv, json& snapshot, std::ostream& out) {
  json defaults = smoothing_defaults();
  defaults.update({{"episodes", 20}, {"norm", "linf"}, {"steps", 10}, {"step_size", 0.0},
                   {"restarts", 1}, {"attack_sigma", nullptr}});
  fill_defaults(snapshot, defaults);
  ConfigReader r(snapshot);
  const std::string name = r.string("attack");
  const std::vector<double> epsilons = r.number_list("epsilons");
  const auto episodes = static_cast<int>(r.count("episodes"));
  const std::string norm_name = r.string("norm");
  attacks::AttackConfig base;
  base.steps = static_cast<int>(r.integer("steps"));
  base.step_size = r.number("step_size");
  base.restarts = static_cast<int>(r.integer("restarts"));
  const auto attack_sigma = r.nullable_number("attack_sigma");
  const fs::path ckpt = checkpoint_path(r, snapshot);

  static const std::vector<std::string> valid{"pgd", "s-pgd", "fgsm", "s-fgsm", "mad"};
  if (std::find(valid.begin(), valid.end(), name) == valid.end()) {
    throw ConfigError("attack", "unknown attack '" + name + "' (valid: " + kAttackNames + ")");
  }
  if (epsilons.empty()) throw ConfigError("epsilons", "config key 'epsilons' must not be empty");
  if (episodes < 1) throw ConfigError("episodes", "config key 'episodes' must be >= 1");
  try {
    base.norm = attacks::norm_from_string(norm_name);
  } catch (const std::invalid_argument&) {
    throw ConfigError("norm", "config key 'norm' must be l2 or linf");
  }

  const Model model = load_model(ckpt);
  const SmoothOptions so = read_smoothing(r, snapshot, &model);
  r.finish();
  if (name == "mad" && model.discrete()) {
    throw ConfigError("attack", "attack 'mad' needs a continuous-action checkpoint");
  }
  if (name != "mad" && !model.discrete()) {
    throw ConfigError("attack", "attack '" + name + "' needs a Q-network checkpoint; use mad");
  }
  base.sigma = attack_sigma ? *attack_sigma : (model.sigma() > 0.0 ? model.sigma() : 0.1);
  snapshot["attack_sigma"] = base.sigma;
  base.obs_box = model.env->spec().observation_box;

  const auto agent = make_agent(model, so.agent, so.cfg);
  const bool smoothed = so.agent == "smoothed";
  Artifacts a;
  a.env = model.ckpt.env_id;
  a.inputs["checkpoint"] = ckpt.string();
  io::CsvWriter table({"attack", "epsilon", "norm", "episodes", "mean", "std"});
  for (std::size_t i = 0; i < epsilons.size(); ++i) {
    attacks::AttackConfig cfg = base;
    cfg.epsilon = epsilons[i];
    validate_config(cfg);
    std::unique_ptr<attacks::Attack> attack;
    if (name == "mad") {
      attack = std::make_unique<attacks::MadAttack>(
          *model.policy, cfg, smoothed ? std::optional(so.cfg) : std::nullopt);
    } else {
      const auto method = name == "pgd"     ? attacks::QAttackMethod::pgd
                          : name == "s-pgd" ? attacks::QAttackMethod::s_pgd
                          : name == "fgsm"  ? attacks::QAttackMethod::fgsm
                                            : attacks::QAttackMethod::s_fgsm;
      attack = std::make_unique<attacks::QAttack>(method, *model.qnet, model.denoiser, cfg,
                                                  smoothed ? std::optional(so.cfg) : std::nullopt);
    }
    Rng rng(derive_seed(inv.seed, "episodes"));
    const auto stats = attacks::run_attack_eval(*model.env, *agent, *attack, episodes, rng);
    json report = stats_json(stats);
    report["attack"] = name;
    report["epsilon"] = cfg.epsilon;
    report["norm"] = norm_name;
    report["episodes"] = episodes;
    report["agent"] = agent->name();
    a.add("reports/attack_" + name + "_eps" + short_double(cfg.epsilon) + ".json", report.dump(2) + "\n");
    table.row({name, io::format_double(cfg.epsilon), norm_name, std::to_string(episodes),
               io::format_double(stats.mean), io::format_double(stats.std)});
    out << "attack " << name << " eps " << short_double(cfg.epsilon) << ": mean "
        << io::format_double(stats.mean) << " std " << io::format_double(stats.std) << "\n";
  }
  a.add("attack_summary.csv", table.str());
  return a;
}

// ---------------------------------------------------------------- certify

double median_of(std::vector<double> v) {
  if (v.empty()) return std::nan("");
  return smoothing::percentile_smooth(v, 0.5);
}

Artifacts certify_crop_inputs(ConfigReader& r, json& snapshot, double q1, double q2,
                              std::ostream& out) {
  smoothing::SmoothConfig cfg;
  cfg.m = r.count("m");
  cfg.alpha = r.number("alpha");
  cfg.p = r.number("p");
  const auto sigma = r.nullable_number("sigma");
  if (!sigma) throw ConfigError("sigma", "explicit crop inputs need 'sigma'");
  cfg.sigma = *sigma;
  r.string("agent");
  const auto vmin = r.nullable_number("v_min");
  const auto vmax = r.nullable_number("v_max");
  r.boolean("crop");
  r.count("states");
  r.string("checkpoint");
  r.finish();
  if (!vmin || !vmax) throw ConfigError("v_min", "crop needs 'v_min' and 'v_max'");
  snapshot["sigma"] = cfg.sigma;
  validate_config(cfg);
  const auto c = certify::certified_radius_crop(q1, q2, *vmin, *vmax, cfg);
  Artifacts a;
  a.add("reports/crop.json", certify::to_json(c).dump(2) + "\n");
  std::vector<certify::RadiusCertificate> one{c};
  a.add("reports/certificates.csv", certify::radius_table_csv(one));
  out << "crop radius " << (c.radius ? io::format_double(*c.radius) : std::string("uncertified"))
      << " for [" << short_double(*vmin) << ", " << short_double(*vmax) << "]\n";
  return a;
}

Artifacts cmd_certify(const Invocation& inv, json& snapshot, std::ostream& out) {
  json defaults = smoothing_defaults();
  const std::string mode = snapshot.contains("mode") && snapshot["mode"].is_string()
                               ? snapshot["mode"].get<std::string>()
                               : std::string();
  if (mode == "radius") {
    defaults.update({{"states", 100}, {"crop", false}, {"v_min", nullptr}, {"v_max", nullptr},
                     {"crop_q1", nullptr}, {"crop_q2", nullptr}, {"checkpoint", ""}});
  } else if (mode == "action-bound") {
    defaults.update({{"epsilon", 0.1}, {"trajectories", 1}});
  } else if (mode == "reward-bound") {
    defaults.update({{"budget", nullptr}, {"epsilon", nullptr}, {"m_tau", 1000}});
  } else if (mode == "adiv") {
    defaults.update({{"epsilons", {0.1, 0.2, 0.3}}, {"trajectories", 50}});
  } else {
    throw ConfigError("mode", "config key 'mode' must be radius, action-bound, reward-bound or adiv");
  }
  fill_defaults(snapshot, defaults);
  ConfigReader r(snapshot);
  r.string("mode");
  Rng state_rng(derive_seed(inv.seed, "states"));
  Rng rng(derive_seed(inv.seed, "certify"));

  if (mode == "radius") {
    const auto q1 = r.nullable_number("crop_q1");
    const auto q2 = r.nullable_number("crop_q2");
    if (q1 || q2) {
      if (!q1 || !q2) throw ConfigError(q1 ? "crop_q2" : "crop_q1", "crop inputs need both crop_q1 and crop_q2");
      return certify_crop_inputs(r, snapshot, *q1, *q2, out);
    }
  }
  const fs::path ckpt = checkpoint_path(r, snapshot);
  const Model model = load_model(ckpt);
  const SmoothOptions so = read_smoothing(r, snapshot, &model);
  Artifacts a;
  a.env = model.ckpt.env_id;
  a.inputs["checkpoint"] = ckpt.string();
  const auto& env = *model.env;

  if (mode == "radius") {
    const auto n_states = r.count("states");
    const bool crop = r.boolean("crop");
    const auto vmin = r.nullable_number("v_min");
    const auto vmax = r.nullable_number("v_max");
    r.finish();
    if (!model.discrete()) throw ConfigError("mode", "radius mode needs a Q-network checkpoint");
    if (crop && (!vmin || !vmax)) throw ConfigError("v_min", "crop comparison needs 'v_min' and 'v_max'");
    validate_config(so.cfg);
    const nn::Mlp* d = model.denoiser ? &*model.denoiser : nullptr;
    std::vector<certify::RadiusCertificate> hard, crop_certs;
    json records = json::array();
    std::vector<double> radii;
    std::size_t uncertified = 0;
    for (std::uint64_t i = 0; i < n_states; ++i) {
      const Vector s = env.sample_observation(state_rng);
      hard.push_back(certify::certify_state(*model.qnet, d, s, so.cfg, rng));
      json rec = certify::to_json(hard.back());
      rec["state"] = s;
      if (crop) {
        crop_certs.push_back(certify::certify_state_crop(*model.qnet, d, s, *vmin, *vmax, so.cfg, rng));
        rec["crop"] = certify::to_json(crop_certs.back());
      }
      records.push_back(rec);
      if (hard.back().radius) radii.push_back(*hard.back().radius);
      else ++uncertified;
    }
    a.add("reports/certificates.json", records.dump(2) + "\n");
    a.add("reports/certificates.csv", certify::radius_table_csv(hard));
    if (crop) a.add("reports/certificates_crop.csv", certify::radius_table_csv(crop_certs));
    out << "radius: median certified radius "
        << (radii.empty() ? std::string("none") : io::format_double(median_of(radii))) << " over "
        << radii.size() << " certified states, " << uncertified << " uncertified\n";
    return a;
  }

  if (mode == "action-bound") {
    const double eps = r.number("epsilon");
    const auto trajectories = r.count("trajectories");
    r.finish();
    if (model.discrete()) throw ConfigError("mode", "action-bound mode needs a policy checkpoint");
    validate_config(so.cfg);
    std::vector<certify::ActionBoundResult> bounds;
    json records = json::array();
    std::vector<double> widths;
    Rng act_rng(derive_seed(inv.seed, "act"));
    for (std::uint64_t k = 0; k < trajectories; ++k) {
      auto local = env.clone();
      Vector obs = local->reset(derive_seed(derive_seed(inv.seed, "env"), k));
      while (!local->done()) {
        bounds.push_back(certify::action_bound(*model.policy, obs, eps, so.cfg, rng));
        json rec = certify::to_json(bounds.back());
        rec["state"] = obs;
        records.push_back(rec);
        if (bounds.back().certified) {
          Vector w(bounds.back().upper.size());
          for (std::size_t i = 0; i < w.size(); ++i) w[i] = bounds.back().upper[i] - bounds.back().lower[i];
          widths.push_back(norm2(w));
        }
        obs = local->step(smoothing::deterministic_smoothed_action(*model.policy, obs, so.cfg, act_rng)).next_state;
      }
    }
    a.add("reports/action_bounds.json", records.dump(2) + "\n");
    a.add("reports/action_bounds.csv", certify::action_bound_table_csv(bounds));
    out << "action-bound: median interval width "
        << (widths.empty() ? std::string("none") : io::format_double(median_of(widths))) << " over "
        << widths.size() << " certified states of " << bounds.size() << "\n";
    return a;
  }

  if (mode == "reward-bound") {
    const auto budget = r.nullable_number("budget");
    const auto eps = r.nullable_number("epsilon");
    const auto m_tau = r.count("m_tau");
    r.finish();
    if (budget.has_value() == eps.has_value()) {
      throw ConfigError("budget", "reward-bound needs exactly one of 'budget' or 'epsilon'");
    }
    const double B = budget ? *budget : *eps * std::sqrt(static_cast<double>(env.spec().horizon));
    snapshot["budget"] = B;
    validate_config(so.cfg);
    std::unique_ptr<agents::Agent> noisy;
    if (model.discrete()) {
      noisy = std::make_unique<agents::NoisyQAgent>(*model.qnet, model.denoiser, so.cfg.sigma);
    } else {
      noisy = std::make_unique<agents::NoisyPolicyAgent>(*model.policy, so.cfg.sigma);
    }
    const auto res = certify::reward_lower_bound(env, *noisy, B, so.cfg, m_tau, rng);
    json report = certify::to_json(res, true);
    report["clean_percentile"] = smoothing::percentile_smooth(res.returns, so.cfg.p);
    a.add("reports/reward_bound.json", report.dump(2) + "\n");
    io::CsvWriter csv({"B", "p", "p_lower", "m_tau", "alpha", "sigma", "bound", "clean_percentile"});
    csv.row({io::format_double(B), io::format_double(res.p), io::format_double(res.p_lower),
             std::to_string(res.m_tau), io::format_double(res.alpha), io::format_double(res.sigma),
             res.bound ? io::format_double(*res.bound) : "uncertified",
             io::format_double(report["clean_percentile"].get<double>())});
    a.add("reports/reward_bound.csv", csv.str());
    out << "reward-bound: certified lower bound "
        << (res.bound ? io::format_double(*res.bound) : std::string("uncertified")) << " at B "
        << io::format_double(B) << "\n";
    return a;
  }

  // adiv
  const auto epsilons = r.number_list("epsilons");
  const auto trajectories = r.count("trajectories");
  r.finish();
  if (model.discrete()) throw ConfigError("mode", "adiv mode needs a policy checkpoint");
  validate_config(so.cfg);
  const auto res = certify::adiv(*model.policy, env, so.cfg, epsilons, static_cast<int>(trajectories), rng);
  a.add("reports/adiv.json", certify::to_json(res).dump(2) + "\n");
  io::CsvWriter csv({"adiv", "evaluated", "skipped"});
  csv.row({io::format_double(res.adiv), std::to_string(res.evaluated), std::to_string(res.skipped)});
  a.add("reports/adiv.csv", csv.str());
  out << "adiv: " << io::format_double(res.adiv) << " (" << res.evaluated << " evaluated, "
      << res.skipped << " skipped)\n";
  return a;
}

void write_divergence(const Invocation& inv, const DivergenceError& e) {
  json rec{{"command", inv.command},
           {"kind", inv.params.value("kind", "")},
           {"step", e.step()},
           {"message", e.what()}};
  fs::create_directories(inv.out);
  io::write_file_atomic(inv.out / "divergence.json", rec.dump(2) + "\n");
}

}  // namespace

int run(const Invocation& inv, std::ostream& out, std::ostream& err) {
  const std::string started = now_utc();
  try {
    if (inv.threads < 1) throw ConfigError("threads", "--threads must be >= 1");
    if (inv.out.empty()) throw ConfigError("out", "--out is required");
    set_num_threads(inv.threads);
    json snapshot = inv.params;
    if (!snapshot.is_object()) throw ConfigError("", "config must be a JSON object");
    Artifacts a;
    if (inv.command == "train") {
      a = cmd_train(inv, snapshot);
    } else if (inv.command == "eval") {
      a = cmd_eval(inv, snapshot, out);
    } else if (inv.command == "attack") {
      a = cmd_attack(inv, snapshot, out);
    } else if (inv.command == "certify") {
      a = cmd_certify(inv, snapshot, out);
    } else {
      throw ConfigError("", "unknown command '" + inv.command + "'");
    }
    write_artifacts(inv, snapshot, a, started);
    for (const auto& w : a.warnings) err << "warning: " << w << "\n";
    return kOk;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const CheckpointError& e) {
    err << "checkpoint error: " << e.what() << "\n";
    return kCheckpoint;
  } catch (const DivergenceError& e) {
    err << "divergence at step " << e.step() << ": " << e.what() << "\n";
    try {
      write_divergence(inv, e);
    } catch (const std::exception& w) {
      err << "could not write divergence record: " << w.what() << "\n";
    }
    return kDivergence;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  }
}

int replay(const fs::path& manifest_path, const fs::path& out_dir, int threads, std::ostream& out,
           std::ostream& err) {
  json manifest;
  try {
    manifest = json::parse(io::read_file(manifest_path));
  } catch (const std::exception& e) {
    err << "error: cannot read manifest " << manifest_path.string() << ": " << e.what() << "\n";
    return kUsage;
  }
  const fs::path source_dir = manifest_path.parent_path();
  if (fs::exists(out_dir) && fs::exists(source_dir) && fs::equivalent(out_dir, source_dir)) {
    err << "error: replay output directory must differ from the manifest's directory\n";
    return kUsage;
  }
  Invocation inv;
  try {
    inv.command = manifest.at("command").get<std::string>();
    inv.params = manifest.at("config");
    inv.seed = manifest.at("seed").get<std::uint64_t>();
    inv.threads = threads >= 1 ? threads : manifest.value("threads", 1);
  } catch (const std::exception& e) {
    err << "error: malformed manifest: " << e.what() << "\n";
    return kUsage;
  }
  inv.out = out_dir;
  const int status = run(inv, out, err);
  if (status != kOk) return status;

  bool identical = true;
  for (const auto& rel : manifest.value("outputs", json::array())) {
    const std::string name = rel.get<std::string>();
    std::string before, after;
    try {
      before = io::read_file(source_dir / name);
      after = io::read_file(out_dir / name);
    } catch (const std::exception& e) {
      err << "missing " << name << ": " << e.what() << "\n";
      identical = false;
      continue;
    }
    const bool same = before == after;
    identical = identical && same;
    out << (same ? "identical " : "DIFFERS   ") << name << "\n";
  }
  return identical ? kOk : kFailure;
}

}  // namespace smoothrl::cli
