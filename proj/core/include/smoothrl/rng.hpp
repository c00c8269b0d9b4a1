#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>

namespace smoothrl {

/// SplitMix64 finalizer. Used as the stateless mixing function for seed derivation
/// and counter-based noise.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Stable child seed for a named sub-stream. Depends only on (root, name), so adding
/// a new consumer never shifts the seeds of existing ones.
std::uint64_t derive_seed(std::uint64_t root, std::string_view name);
std::uint64_t derive_seed(std::uint64_t root, std::uint64_t index);

/// Sequential random stream with a remembered root seed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }

  /// Independent stream derived from this stream's root seed (not its position).
  Rng child(std::string_view name) const { return Rng(derive_seed(seed_, name)); }
  Rng child(std::uint64_t index) const { return Rng(derive_seed(seed_, index)); }

  std::uint64_t next_u64() { return engine_(); }
  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }
  int uniform_int(int n) { return std::uniform_int_distribution<int>(0, n - 1)(engine_); }
  std::size_t uniform_index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
  }
  double normal() { return normal_(engine_); }
  void fill_normal(std::span<double> out, double stddev = 1.0) {
    for (double& x : out) x = stddev * normal_(engine_);
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

/// Counter-based standard normals: sample `index` under `key` is a pure function of
/// (key, index), so Monte-Carlo loops give identical results for any worker count.
void counter_normal(std::uint64_t key, std::uint64_t index, std::span<double> out);

}  // namespace smoothrl
