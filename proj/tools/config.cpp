#include "config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "nnreach/text.hpp"

namespace nnreach::cli {

Config Config::parse(std::istream& in, const std::string& origin) {
  Config cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto view = trim(line);
    if (view.empty() || view.front() == '#') continue;
    const auto eq = view.find('=');
    if (eq == std::string_view::npos) {
      throw UsageError(origin + ":" + std::to_string(lineno) + ": expected key=value");
    }
    const auto key = trim(view.substr(0, eq));
    if (key.empty()) throw UsageError(origin + ":" + std::to_string(lineno) + ": empty key");
    cfg.set(std::string(key), std::string(trim(view.substr(eq + 1))));
  }
  return cfg;
}

Config Config::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file: " + path);
  return parse(in, path);
}

void Config::set(const std::string& key, const std::string& value) { entries_[key] = value; }

void Config::merge(const Config& other) {
  for (const auto& [k, v] : other.entries_) entries_[k] = v;
}

std::string Config::str(const std::string& key, const std::string& fallback) const {
  const auto it = entries_.find(key);
  return it == entries_.end() ? fallback : it->second;
}

std::string Config::require(const std::string& key) const {
  const auto it = entries_.find(key);
  if (it == entries_.end() || it->second.empty()) throw UsageError("missing required key: " + key);
  return it->second;
}

double Config::num(const std::string& key, double fallback) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  try {
    return parse_double(it->second);
  } catch (const std::exception&) {
    throw UsageError("key " + key + ": not a number: '" + it->second + "'");
  }
}

long long Config::integer(const std::string& key, long long fallback) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  try {
    return parse_int(it->second);
  } catch (const std::exception&) {
    throw UsageError("key " + key + ": not an integer: '" + it->second + "'");
  }
}

bool Config::flag(const std::string& key, bool fallback) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  const std::string& v = it->second;
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw UsageError("key " + key + ": expected a boolean, got '" + v + "'");
}

std::vector<double> Config::nums(const std::string& key, const std::vector<double>& fallback) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  std::vector<double> out;
  for (auto tok : split(it->second, ',')) {
    try {
      out.push_back(parse_double(trim(tok)));
    } catch (const std::exception&) {
      throw UsageError("key " + key + ": not a number list: '" + it->second + "'");
    }
  }
  return out;
}

std::vector<std::string> Config::strs(const std::string& key) const {
  std::vector<std::string> out;
  const auto it = entries_.find(key);
  if (it == entries_.end() || it->second.empty()) return out;
  for (auto tok : split(it->second, ',')) out.emplace_back(trim(tok));
  return out;
}

std::pair<int, int> Config::dims2(const std::string& key, std::pair<int, int> fallback) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  const auto parts = split(it->second, 'x');
  try {
    if (parts.size() != 2) throw std::invalid_argument("shape");
    const auto a = parse_int(trim(parts[0]));
    const auto b = parse_int(trim(parts[1]));
    if (a < 1 || b < 1) throw std::invalid_argument("range");
    return {static_cast<int>(a), static_cast<int>(b)};
  } catch (const std::exception&) {
    throw UsageError("key " + key + ": expected AxB with positive integers, got '" + it->second + "'");
  }
}

void Config::check_known(std::span<const std::string_view> known) const {
  std::string unknown;
  for (const auto& [k, v] : entries_) {
    if (std::find(known.begin(), known.end(), k) == known.end()) unknown += (unknown.empty() ? "" : ", ") + k;
  }
  if (!unknown.empty()) throw UsageError("unknown configuration keys: " + unknown);
}

std::string Config::hash() const {
  std::ostringstream text;
  for (const auto& [k, v] : entries_) {
    if (k == "workers" || k == "out") continue;
    text << k << '=' << v << '\n';
  }
  return fnv1a_hex(text.str());
}

}  // namespace nnreach::cli
