#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace smoothrl::io {

/// Writes to a sibling temporary file and renames it over `path`, so readers see either
/// the old file or the complete new one.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

std::string read_file(const std::filesystem::path& path);

}  // namespace smoothrl::io
