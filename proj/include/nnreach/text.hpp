#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace nnreach {

/// Shortest decimal representation that parses back to the same double.
std::string format_double(double value);

/// Strict parse of a whole token; throws std::invalid_argument on trailing junk.
double parse_double(std::string_view token);
long long parse_int(std::string_view token);

std::vector<std::string_view> split(std::string_view text, char sep);
std::string_view trim(std::string_view text);

/// Comma-joined shortest representations.
template <typename Range>
std::string join_doubles(const Range& values, char sep = ',') {
  std::string out;
  bool first = true;
  for (double v : values) {
    if (!first) out.push_back(sep);
    out += format_double(v);
    first = false;
  }
  return out;
}

/// 64-bit FNV-1a, rendered as 16 hex digits. Stable across platforms.
std::string fnv1a_hex(std::string_view data);

}  // namespace nnreach
