#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>

#include <nlohmann/json.hpp>

namespace smoothrl::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,  // unexpected error, or a replay whose outputs differ
  kUsage = 2,
  kDivergence = 3,
  kCheckpoint = 4,
};

/// One fully described run. `params` is the flat config snapshot; for train it holds
/// "kind" plus every hyperparameter, for eval/attack/certify the command options. Missing
/// optional entries are filled with their defaults and recorded in the manifest.
struct Invocation {
  std::string command;  // train, eval, attack, certify
  nlohmann::json params = nlohmann::json::object();
  std::uint64_t seed = 0;
  std::filesystem::path out;
  int threads = 1;
};

/// Runs the command and writes its artifacts under inv.out. Errors are reported as one line
/// on `err` and mapped to an exit code; nothing is written on failure except a divergence
/// record.
int run(const Invocation& inv, std::ostream& out, std::ostream& err);

/// Re-runs the manifest's invocation into `out_dir` and compares every output it lists
/// byte for byte against the files next to the manifest. threads < 1 keeps the recorded
/// count.
int replay(const std::filesystem::path& manifest_path, const std::filesystem::path& out_dir,
           int threads, std::ostream& out, std::ostream& err);

}  // namespace smoothrl::cli
