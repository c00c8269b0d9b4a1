#pragma once

#include <initializer_list>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace smoothrl::io {

/// Shortest-safe decimal: 17 significant digits, '.' separator, locale independent.
std::string format_double(double v);

/// Accumulates CSV text with a fixed header. Cells are written verbatim; callers format
/// numbers with format_double.
class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header);

  void row(std::span<const std::string> cells);
  void row(std::initializer_list<std::string> cells);

  const std::string& str() const { return text_; }
  std::size_t columns() const { return columns_; }

 private:
  std::size_t columns_;
  std::string text_;
};

}  // namespace smoothrl::io
