#include "smoothrl/io/csv.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <stdexcept>

namespace smoothrl::io {

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::array<char, 64> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v,
                                 std::chars_format::general, 17);
  return std::string(buf.data(), res.ptr);
}

CsvWriter::CsvWriter(std::vector<std::string> header) : columns_(header.size()) {
  row(std::span<const std::string>(header));
}

void CsvWriter::row(std::span<const std::string> cells) {
  if (cells.size() != columns_) throw std::invalid_argument("CsvWriter: wrong number of cells");
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) text_ += ',';
    text_ += cells[i];
  }
  text_ += '\n';
}

void CsvWriter::row(std::initializer_list<std::string> cells) {
  row(std::span<const std::string>(cells.begin(), cells.size()));
}

}  // namespace smoothrl::io
