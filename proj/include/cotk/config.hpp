#pragma once

#include <map>
#include <string>

#include "cotk/types.hpp"

namespace cotk {

// Flat `key = value` file (TOML-compatible for scalar assignments).
// Lines starting with '#' and blank lines are skipped; values may be
// quoted. Lookups that are absent raise ConfigError naming the key.
class KvConfig {
 public:
  static KvConfig parse_file(const std::string& path);
  static KvConfig parse_text(const std::string& text);

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  // "key=value" as given on a command line.
  void apply_override(const std::string& assignment);

  std::string require(const std::string& key) const;
  std::string get(const std::string& key, const std::string& fallback) const;
  double require_double(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  long require_long(const std::string& key) const;
  long get_long(const std::string& key, long fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  // Sorted `key = value` lines; input to the config hash.
  std::string canonical() const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace cotk
