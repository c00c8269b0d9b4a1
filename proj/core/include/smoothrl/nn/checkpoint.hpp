#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "smoothrl/nn/mlp.hpp"

namespace smoothrl::nn {

inline constexpr int kCheckpointFormatVersion = 1;

struct TrainingMetadata {
  double sigma = 0.0;
  std::uint64_t seed = 0;
  std::uint64_t steps = 0;
  nlohmann::json extra = nlohmann::json::object();
};

/// A set of named networks and vectors for one agent, e.g. {qnet, denoiser} for
/// S-DQN or {policy, value} plus the log_std vector for S-PPO.
struct Checkpoint {
  std::string kind;    // dqn, sdqn, ppo, sppo, s-atla
  std::string env_id;  // gridreach, pointreach
  std::map<std::string, Mlp> networks;
  std::map<std::string, Vector> vectors;
  TrainingMetadata metadata;

  bool has_network(std::string_view name) const;
  const Mlp& network(std::string_view name) const;
  const Vector& vector(std::string_view name) const;
};

/// Text document:
///   {"format": "smoothrl-checkpoint", "format_version": 1, "kind", "env",
///    "networks": {name: {"architecture": {"dims", "activations", "residual"},
///                        "parameters": {"layer<i>.weight": b64, "layer<i>.bias": b64}}},
///    "vectors": {name: b64}, "metadata": {"sigma", "seed", "steps", ...}}
/// Parameter arrays are little-endian float64, base64 encoded.
std::string encode_checkpoint(const Checkpoint& ckpt);

/// Throws CheckpointError on malformed documents and unknown format versions.
Checkpoint decode_checkpoint(std::string_view text);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace smoothrl::nn
