#include "config.hpp"

#include <fstream>
#include <sstream>

namespace smoothrl::cli {

ConfigReader::ConfigReader(nlohmann::json doc) : doc_(std::move(doc)) {
  if (!doc_.is_object()) throw ConfigError("", "config must be a JSON object");
  for (const auto& [key, value] : doc_.items()) {
    if (value.is_object()) throw ConfigError(key, "config key '" + key + "': nested objects are not allowed");
  }
}

const nlohmann::json& ConfigReader::get(const std::string& key) {
  if (!doc_.contains(key)) throw ConfigError(key, "missing config key '" + key + "'");
  used_.insert(key);
  return doc_.at(key);
}

double ConfigReader::number(const std::string& key) {
  const auto& v = get(key);
  if (!v.is_number()) throw ConfigError(key, "config key '" + key + "' must be a number");
  return v.get<double>();
}

std::int64_t ConfigReader::integer(const std::string& key) {
  const auto& v = get(key);
  if (!v.is_number_integer()) throw ConfigError(key, "config key '" + key + "' must be an integer");
  return v.get<std::int64_t>();
}

std::uint64_t ConfigReader::count(const std::string& key) {
  const auto& v = get(key);
  if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
    throw ConfigError(key, "config key '" + key + "' must be a non-negative integer");
  }
  return v.get<std::uint64_t>();
}

std::optional<double> ConfigReader::nullable_number(const std::string& key) {
  if (get(key).is_null()) return std::nullopt;
  return number(key);
}

bool ConfigReader::boolean(const std::string& key) {
  const auto& v = get(key);
  if (!v.is_boolean()) throw ConfigError(key, "config key '" + key + "' must be true or false");
  return v.get<bool>();
}

std::string ConfigReader::string(const std::string& key) {
  const auto& v = get(key);
  if (!v.is_string()) throw ConfigError(key, "config key '" + key + "' must be a string");
  return v.get<std::string>();
}

std::vector<std::size_t> ConfigReader::size_list(const std::string& key) {
  const auto& v = get(key);
  if (!v.is_array()) throw ConfigError(key, "config key '" + key + "' must be an array of integers");
  std::vector<std::size_t> out;
  for (const auto& e : v) {
    // Values built in code are stored signed; values parsed from text are unsigned.
    const bool positive = e.is_number_unsigned() ? e.get<std::uint64_t>() > 0
                                                 : e.is_number_integer() && e.get<std::int64_t>() > 0;
    if (!positive) {
      throw ConfigError(key, "config key '" + key + "' must hold positive integers");
    }
    out.push_back(e.get<std::size_t>());
  }
  return out;
}

std::vector<double> ConfigReader::number_list(const std::string& key) {
  const auto& v = get(key);
  if (!v.is_array()) throw ConfigError(key, "config key '" + key + "' must be an array of numbers");
  std::vector<double> out;
  for (const auto& e : v) {
    if (!e.is_number()) throw ConfigError(key, "config key '" + key + "' must hold numbers");
    out.push_back(e.get<double>());
  }
  return out;
}

void ConfigReader::finish() const {
  for (const auto& [key, value] : doc_.items()) {
    if (!used_.contains(key)) throw ConfigError(key, "unknown config key '" + key + "'");
  }
}

nlohmann::json load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("", "cannot read config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return nlohmann::json::parse(ss.str());
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("", "config file " + path.string() + " is not valid JSON: " + e.what());
  }
}

}  // namespace smoothrl::cli
