#pragma once

#include <iosfwd>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace nnreach::cli {

/// Bad invocation or configuration; maps to exit code 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Flat key=value configuration. Later assignments override earlier ones.
class Config {
 public:
  /// Lines of `key=value`; blank lines and `#` comments are skipped.
  static Config parse(std::istream& in, const std::string& origin);
  static Config load(const std::string& path);

  void set(const std::string& key, const std::string& value);
  void merge(const Config& other);
  bool has(const std::string& key) const { return entries_.count(key) != 0; }
  const std::map<std::string, std::string>& entries() const { return entries_; }

  std::string str(const std::string& key, const std::string& fallback) const;
  std::string require(const std::string& key) const;
  double num(const std::string& key, double fallback) const;
  long long integer(const std::string& key, long long fallback) const;
  bool flag(const std::string& key, bool fallback) const;
  std::vector<double> nums(const std::string& key, const std::vector<double>& fallback) const;
  std::vector<std::string> strs(const std::string& key) const;
  /// "AxB" pairs such as cells=100x100.
  std::pair<int, int> dims2(const std::string& key, std::pair<int, int> fallback) const;

  /// Throws UsageError naming every key outside `known`.
  void check_known(std::span<const std::string_view> known) const;

  /// FNV-1a of the sorted entries, excluding keys that do not affect results (workers, out).
  std::string hash() const;

 private:
  std::map<std::string, std::string> entries_;
};

}  // namespace nnreach::cli
