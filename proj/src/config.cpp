#include "cotk/config.hpp"

#include <fstream>
#include <sstream>

namespace cotk {

namespace {

std::string strip(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

std::string unquote(const std::string& s) {
  if (s.size() >= 2 && ((s.front() == '"' && s.back() == '"') ||
                        (s.front() == '\'' && s.back() == '\'')))
    return s.substr(1, s.size() - 2);
  return s;
}

}  // namespace

KvConfig KvConfig::parse_text(const std::string& text) {
  KvConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string stripped = strip(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos)
      throw ConfigError("expected `key = value`, got: " + stripped, lineno);
    const std::string key = strip(stripped.substr(0, eq));
    const std::string value = unquote(strip(stripped.substr(eq + 1)));
    if (key.empty()) throw ConfigError("empty key", lineno);
    cfg.values_[key] = value;
  }
  return cfg;
}

KvConfig KvConfig::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_text(buf.str());
}

void KvConfig::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos)
    throw ConfigError("override must look like key=value, got: " + assignment);
  const std::string key = strip(assignment.substr(0, eq));
  if (key.empty()) throw ConfigError("override with empty key: " + assignment);
  values_[key] = unquote(strip(assignment.substr(eq + 1)));
}

std::string KvConfig::require(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("missing required key: " + key);
  return it->second;
}

std::string KvConfig::get(const std::string& key, const std::string& fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double KvConfig::require_double(const std::string& key) const {
  const std::string raw = require(key);
  try {
    std::size_t pos = 0;
    const double v = std::stod(raw, &pos);
    if (pos != raw.size()) throw std::invalid_argument(raw);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("key `" + key + "` is not a number: " + raw);
  }
}

double KvConfig::get_double(const std::string& key, double fallback) const {
  return has(key) ? require_double(key) : fallback;
}

long KvConfig::require_long(const std::string& key) const {
  const std::string raw = require(key);
  try {
    std::size_t pos = 0;
    const long v = std::stol(raw, &pos);
    if (pos != raw.size()) throw std::invalid_argument(raw);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("key `" + key + "` is not an integer: " + raw);
  }
}

long KvConfig::get_long(const std::string& key, long fallback) const {
  return has(key) ? require_long(key) : fallback;
}

bool KvConfig::get_bool(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  const std::string raw = require(key);
  if (raw == "true" || raw == "1") return true;
  if (raw == "false" || raw == "0") return false;
  throw ConfigError("key `" + key + "` is not a boolean: " + raw);
}

std::string KvConfig::canonical() const {
  std::ostringstream out;
  for (const auto& [k, v] : values_) out << k << " = " << v << "\n";
  return out.str();
}

}  // namespace cotk
