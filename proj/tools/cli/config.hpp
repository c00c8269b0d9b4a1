#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace smoothrl::cli {

/// Bad configuration or usage; maps to exit status 2. `key` names the offending entry
/// when there is one.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string key, const std::string& message)
      : std::runtime_error(message), key_(std::move(key)) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

/// Strict reader over a flat JSON object. Every key read is recorded; finish() rejects
/// whatever was not read, so typos never pass silently.
class ConfigReader {
 public:
  explicit ConfigReader(nlohmann::json doc);

  double number(const std::string& key);
  std::int64_t integer(const std::string& key);
  std::uint64_t count(const std::string& key);  // non-negative integer
  bool boolean(const std::string& key);
  std::string string(const std::string& key);
  std::vector<std::size_t> size_list(const std::string& key);
  std::vector<double> number_list(const std::string& key);

  /// Null entries yield nullopt.
  std::optional<double> nullable_number(const std::string& key);

  bool has(const std::string& key) const { return doc_.contains(key); }

  /// Throws ConfigError naming the first key that was never read.
  void finish() const;

  const nlohmann::json& json() const { return doc_; }

 private:
  const nlohmann::json& get(const std::string& key);

  nlohmann::json doc_;
  std::set<std::string> used_;
};

/// Parses a config file into a flat object. Missing file and parse errors throw
/// ConfigError naming the path.
nlohmann::json load_config_file(const std::filesystem::path& path);

}  // namespace smoothrl::cli
