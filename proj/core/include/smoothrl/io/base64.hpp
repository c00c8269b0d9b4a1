#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "smoothrl/tensor.hpp"

namespace smoothrl::io {

std::string base64_encode(std::span<const std::uint8_t> bytes);
/// Throws std::invalid_argument on malformed input.
std::vector<std::uint8_t> base64_decode(std::string_view text);

/// Doubles as little-endian IEEE-754 binary64, base64 encoded.
std::string encode_doubles(std::span<const double> values);
Vector decode_doubles(std::string_view text);

}  // namespace smoothrl::io
