#include "smoothrl/nn/checkpoint.hpp"

#include "smoothrl/error.hpp"
#include "smoothrl/io/base64.hpp"
#include "smoothrl/io/files.hpp"

namespace smoothrl::nn {

using nlohmann::json;

bool Checkpoint::has_network(std::string_view name) const {
  return networks.find(std::string(name)) != networks.end();
}

const Mlp& Checkpoint::network(std::string_view name) const {
  auto it = networks.find(std::string(name));
  if (it == networks.end()) throw CheckpointError("checkpoint has no network '" + std::string(name) + "'");
  return it->second;
}

const Vector& Checkpoint::vector(std::string_view name) const {
  auto it = vectors.find(std::string(name));
  if (it == vectors.end()) throw CheckpointError("checkpoint has no vector '" + std::string(name) + "'");
  return it->second;
}

std::string encode_checkpoint(const Checkpoint& ckpt) {
  json doc;
  doc["format"] = "smoothrl-checkpoint";
  doc["format_version"] = kCheckpointFormatVersion;
  doc["kind"] = ckpt.kind;
  doc["env"] = ckpt.env_id;
  json nets = json::object();
  for (const auto& [name, net] : ckpt.networks) {
    json arch;
    arch["dims"] = net.dims();
    json acts = json::array();
    for (Activation a : net.activations()) acts.push_back(std::string(to_string(a)));
    arch["activations"] = acts;
    arch["residual"] = net.residual();
    json params = json::object();
    for (std::size_t l = 0; l < net.num_layers(); ++l) {
      params["layer" + std::to_string(l) + ".weight"] = io::encode_doubles(net.weights(l));
      params["layer" + std::to_string(l) + ".bias"] = io::encode_doubles(net.biases(l));
    }
    nets[name] = {{"architecture", arch}, {"parameters", params}};
  }
  doc["networks"] = nets;
  json vecs = json::object();
  for (const auto& [name, v] : ckpt.vectors) vecs[name] = io::encode_doubles(v);
  doc["vectors"] = vecs;
  json meta = ckpt.metadata.extra.is_object() ? ckpt.metadata.extra : json::object();
  meta["sigma"] = ckpt.metadata.sigma;
  meta["seed"] = ckpt.metadata.seed;
  meta["steps"] = ckpt.metadata.steps;
  doc["metadata"] = meta;
  return doc.dump(2) + "\n";
}

namespace {

Vector decode_array(const json& value, std::size_t expected, const std::string& what) {
  if (!value.is_string()) throw CheckpointError(what + " is not a base64 string");
  Vector v;
  try {
    v = io::decode_doubles(value.get<std::string>());
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(what + ": " + e.what());
  }
  if (v.size() != expected) {
    throw CheckpointError(what + " has " + std::to_string(v.size()) + " values, expected " +
                          std::to_string(expected));
  }
  if (!all_finite(v)) throw CheckpointError(what + " contains non-finite values");
  return v;
}

}  // namespace

Checkpoint decode_checkpoint(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("checkpoint is not valid JSON: ") + e.what());
  }
  try {
    if (!doc.is_object() || doc.value("format", "") != "smoothrl-checkpoint") {
      throw CheckpointError("not a smoothrl checkpoint");
    }
    if (!doc.contains("format_version") || !doc["format_version"].is_number_integer()) {
      throw CheckpointError("checkpoint has no format_version");
    }
    const int version = doc["format_version"].get<int>();
    if (version != kCheckpointFormatVersion) {
      throw CheckpointError("unsupported checkpoint format_version " + std::to_string(version));
    }
    Checkpoint ckpt;
    ckpt.kind = doc.at("kind").get<std::string>();
    ckpt.env_id = doc.at("env").get<std::string>();
    for (const auto& [name, entry] : doc.at("networks").items()) {
      const json& arch = entry.at("architecture");
      auto dims = arch.at("dims").get<std::vector<std::size_t>>();
      std::vector<Activation> acts;
      for (const auto& a : arch.at("activations")) acts.push_back(activation_from_string(a.get<std::string>()));
      Mlp net(std::move(dims), std::move(acts), arch.value("residual", false));
      const json& params = entry.at("parameters");
      for (std::size_t l = 0; l < net.num_layers(); ++l) {
        const std::string prefix = name + ".layer" + std::to_string(l);
        const Vector w = decode_array(params.at("layer" + std::to_string(l) + ".weight"),
                                      net.weights(l).size(), prefix + ".weight");
        const Vector b = decode_array(params.at("layer" + std::to_string(l) + ".bias"),
                                      net.biases(l).size(), prefix + ".bias");
        std::copy(w.begin(), w.end(), net.weights(l).begin());
        std::copy(b.begin(), b.end(), net.biases(l).begin());
      }
      ckpt.networks.emplace(name, std::move(net));
    }
    for (const auto& [name, value] : doc.at("vectors").items()) {
      const auto raw = io::decode_doubles(value.get<std::string>());
      ckpt.vectors.emplace(name, decode_array(value, raw.size(), name));
    }
    json meta = doc.at("metadata");
    ckpt.metadata.sigma = meta.at("sigma").get<double>();
    ckpt.metadata.seed = meta.at("seed").get<std::uint64_t>();
    ckpt.metadata.steps = meta.at("steps").get<std::uint64_t>();
    meta.erase("sigma");
    meta.erase("seed");
    meta.erase("steps");
    ckpt.metadata.extra = meta;
    return ckpt;
  } catch (const CheckpointError&) {
    throw;
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("malformed checkpoint: ") + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  io::write_file_atomic(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::string text;
  try {
    text = io::read_file(path);
  } catch (const std::exception& e) {
    throw CheckpointError(e.what());
  }
  return decode_checkpoint(text);
}

}  // namespace smoothrl::nn
