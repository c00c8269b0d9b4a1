#include "smoothrl/rng.hpp"

#include <cmath>
#include <numbers>

namespace smoothrl {

namespace {

constexpr std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ULL;
  }
  return h;
}

// Uniform on the open interval (0, 1) from the top 53 bits.
double open_unit(std::uint64_t bits) {
  return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t root, std::string_view name) {
  return splitmix64(splitmix64(root) ^ fnv1a(name));
}

std::uint64_t derive_seed(std::uint64_t root, std::uint64_t index) {
  return splitmix64(splitmix64(root ^ 0xD1B54A32D192ED03ULL) + splitmix64(index));
}

void counter_normal(std::uint64_t key, std::uint64_t index, std::span<double> out) {
  std::uint64_t state = derive_seed(key, index);
  std::size_t i = 0;
  while (i < out.size()) {
    state = splitmix64(state);
    const double u1 = open_unit(state);
    state = splitmix64(state);
    const double u2 = open_unit(state);
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    out[i++] = r * std::cos(theta);
    if (i < out.size()) out[i++] = r * std::sin(theta);
  }
}

}  // namespace smoothrl
