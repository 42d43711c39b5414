#pragma once

// Small helpers shared by the text file formats.

#include <cstddef>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace cdcl {

/// Shortest decimal form with 17 significant digits (round-trips exactly).
std::string format_double(double v);

std::vector<std::string> split_ws(std::string_view line);
std::vector<std::string> split(std::string_view s, char sep);

/// Line-numbered reader; every parse failure becomes a FormatError naming the line.
class LineReader {
 public:
  explicit LineReader(std::istream& in) : in_(in) {}

  bool next(std::string& line);
  std::size_t line_number() const { return line_; }

  [[noreturn]] void fail(const std::string& msg) const;
  std::size_t parse_size(std::string_view s) const;
  long long parse_int(std::string_view s) const;
  double parse_double(std::string_view s) const;

 private:
  std::istream& in_;
  std::size_t line_ = 0;
};

}  // namespace cdcl
