// SPDX-License-Identifier: Apache-2.0

#include "haven/config.hpp"

#include <cctype>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <istream>

#include "haven/error.hpp"

namespace haven {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::string where(std::size_t line) { return "config line " + std::to_string(line) + ": "; }

std::string interpolate(const std::string& s, const Config::EnvLookup& env, std::size_t line) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '$' && i + 1 < s.size() && s[i + 1] == '{') {
      const auto close = s.find('}', i + 2);
      if (close == std::string::npos) throw ConfigError(where(line) + "unterminated ${...}");
      const std::string name = s.substr(i + 2, close - i - 2);
      auto value = env(name);
      if (!value) throw ConfigError(where(line) + "environment variable '" + name + "' is not set");
      out += *value;
      i = close;
    } else {
      out += s[i];
    }
  }
  return out;
}

std::string unquote(const std::string& raw, std::size_t line) {
  const char q = raw.front();
  std::string out;
  std::size_t i = 1;
  for (; i < raw.size(); ++i) {
    const char c = raw[i];
    if (c == q) break;
    if (c == '\\' && q == '"' && i + 1 < raw.size()) {
      const char n = raw[++i];
      switch (n) {
        case 'n': out += '\n'; break;
        case 't': out += '\t'; break;
        case '"': out += '"'; break;
        case '\\': out += '\\'; break;
        default: throw ConfigError(where(line) + "unknown escape \\" + std::string(1, n));
      }
    } else {
      out += c;
    }
  }
  if (i >= raw.size()) throw ConfigError(where(line) + "unterminated string");
  const std::string rest = trim(raw.substr(i + 1));
  if (!rest.empty() && rest.front() != '#') {
    throw ConfigError(where(line) + "trailing characters after string");
  }
  return out;
}

ConfigValue parse_value(const std::string& raw_in, const Config::EnvLookup& env, std::size_t line) {
  std::string raw = trim(raw_in);
  if (raw.empty()) throw ConfigError(where(line) + "missing value");
  if (raw.front() == '"' || raw.front() == '\'') {
    std::string s = unquote(raw, line);
    return raw.front() == '"' ? interpolate(s, env, line) : s;
  }
  if (auto hash = raw.find('#'); hash != std::string::npos) raw = trim(raw.substr(0, hash));
  if (raw == "true") return true;
  if (raw == "false") return false;
  long long iv = 0;
  auto [p, ec] = std::from_chars(raw.data(), raw.data() + raw.size(), iv);
  if (ec == std::errc() && p == raw.data() + raw.size()) return iv;
  char* end = nullptr;
  const double dv = std::strtod(raw.c_str(), &end);
  if (end == raw.c_str() + raw.size()) return dv;
  throw ConfigError(where(line) + "cannot parse value '" + raw + "' (strings must be quoted)");
}

}  // namespace

std::optional<std::string> Config::process_env(const std::string& name) {
  const char* v = std::getenv(name.c_str());
  if (v == nullptr) return std::nullopt;
  return std::string(v);
}

Config Config::parse(std::istream& in, const EnvLookup& env) {
  Config cfg;
  std::string section;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    const std::string t = trim(text);
    if (t.empty() || t.front() == '#') continue;
    if (t.front() == '[') {
      if (t.back() != ']') throw ConfigError(where(line) + "malformed section header");
      section = trim(t.substr(1, t.size() - 2));
      if (section.empty()) throw ConfigError(where(line) + "empty section name");
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError(where(line) + "expected key = value");
    const std::string key = trim(t.substr(0, eq));
    if (key.empty()) throw ConfigError(where(line) + "empty key");
    const std::string full = section.empty() ? key : section + "." + key;
    if (cfg.values_.contains(full)) throw ConfigError(where(line) + "duplicate key '" + full + "'");
    cfg.values_[full] = parse_value(t.substr(eq + 1), env, line);
  }
  return cfg;
}

Config Config::load(const std::filesystem::path& path, const EnvLookup& env) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  return parse(in, env);
}

std::string Config::get_string(const std::string& key, std::optional<std::string> fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) {
    if (fallback) return *fallback;
    throw ConfigError("missing config key '" + key + "'");
  }
  if (auto* s = std::get_if<std::string>(&it->second)) return *s;
  throw ConfigError("config key '" + key + "' must be a string");
}

long long Config::get_int(const std::string& key, std::optional<long long> fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) {
    if (fallback) return *fallback;
    throw ConfigError("missing config key '" + key + "'");
  }
  if (auto* i = std::get_if<long long>(&it->second)) return *i;
  throw ConfigError("config key '" + key + "' must be an integer");
}

double Config::get_double(const std::string& key, std::optional<double> fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) {
    if (fallback) return *fallback;
    throw ConfigError("missing config key '" + key + "'");
  }
  if (auto* d = std::get_if<double>(&it->second)) return *d;
  if (auto* i = std::get_if<long long>(&it->second)) return static_cast<double>(*i);
  throw ConfigError("config key '" + key + "' must be a number");
}

bool Config::get_bool(const std::string& key, std::optional<bool> fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) {
    if (fallback) return *fallback;
    throw ConfigError("missing config key '" + key + "'");
  }
  if (auto* b = std::get_if<bool>(&it->second)) return *b;
  throw ConfigError("config key '" + key + "' must be a boolean");
}

}  // namespace haven
