#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace tcam {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Flat `key = value` text. Blank lines and lines starting with '#' are
/// ignored; later duplicates override earlier ones.
class KeyValueConfig {
 public:
  KeyValueConfig() = default;

  static KeyValueConfig parse(const std::string& text, const std::string& origin = "<string>") {
    KeyValueConfig cfg;
    cfg.origin_ = origin;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto body = trim(line);
      if (body.empty() || body.front() == '#') continue;
      const auto eq = body.find('=');
      if (eq == std::string::npos) {
        throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key=value");
      }
      auto key = trim(body.substr(0, eq));
      if (key.empty()) throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
      cfg.values_[key] = trim(body.substr(eq + 1));
    }
    return cfg;
  }

  static KeyValueConfig load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    auto cfg = parse(buf.str(), path.string());
    cfg.directory_ = path.parent_path();
    return cfg;
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }
  const std::map<std::string, std::string>& values() const { return values_; }

  /// Directory of the file the config came from (empty for strings).
  const std::filesystem::path& directory() const { return directory_; }

  std::string get_string(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  std::string require_string(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError(origin_ + ": missing required key '" + key + "'");
    return it->second;
  }

  /// Relative paths resolve against the config file's directory.
  std::filesystem::path get_path(const std::string& key, const std::filesystem::path& fallback = {}) const {
    std::filesystem::path p = has(key) ? std::filesystem::path(values_.at(key)) : fallback;
    if (p.empty() || p.is_absolute() || directory_.empty()) return p;
    return directory_ / p;
  }

  std::int64_t get_int(const std::string& key, std::int64_t fallback) const {
    if (!has(key)) return fallback;
    return to_int(key, values_.at(key));
  }

  double get_double(const std::string& key, double fallback) const {
    if (!has(key)) return fallback;
    return to_double(key, values_.at(key));
  }

  bool get_bool(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const auto& v = values_.at(key);
    if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
    if (v == "0" || v == "false" || v == "no" || v == "off") return false;
    throw ConfigError(origin_ + ": '" + key + "' is not a boolean: " + v);
  }

  /// Comma-separated `epoch:multiplier` pairs, e.g. `50:0.1,80:0.1`.
  std::vector<std::pair<int, double>> get_schedule(const std::string& key) const {
    std::vector<std::pair<int, double>> out;
    if (!has(key)) return out;
    for (const auto& item : split(values_.at(key), ',')) {
      const auto colon = item.find(':');
      if (colon == std::string::npos) {
        throw ConfigError(origin_ + ": '" + key + "' entries must be epoch:multiplier");
      }
      out.emplace_back(static_cast<int>(to_int(key, item.substr(0, colon))),
                       to_double(key, item.substr(colon + 1)));
    }
    return out;
  }

  /// Throws on any key outside `known`, so typos do not pass silently.
  void check_keys(const std::set<std::string>& known) const {
    for (const auto& [key, value] : values_) {
      if (!known.count(key)) throw ConfigError(origin_ + ": unknown key '" + key + "'");
    }
  }

  std::string to_text() const {
    std::string out;
    for (const auto& [key, value] : values_) out += key + "=" + value + "\n";
    return out;
  }

 private:
  static std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
  }

  static std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(s);
    while (std::getline(in, item, sep)) {
      item = trim(item);
      if (!item.empty()) out.push_back(item);
    }
    return out;
  }

  std::int64_t to_int(const std::string& key, const std::string& text) const {
    const auto t = trim(text);
    std::int64_t v = 0;
    auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc{} || ptr != t.data() + t.size()) {
      throw ConfigError(origin_ + ": '" + key + "' is not an integer: " + text);
    }
    return v;
  }

  double to_double(const std::string& key, const std::string& text) const {
    const auto t = trim(text);
    double v = 0;
    auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc{} || ptr != t.data() + t.size()) {
      throw ConfigError(origin_ + ": '" + key + "' is not a number: " + text);
    }
    return v;
  }

  std::map<std::string, std::string> values_;
  std::string origin_ = "<string>";
  std::filesystem::path directory_;
};

}  // namespace tcam
