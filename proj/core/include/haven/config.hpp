// SPDX-License-Identifier: Apache-2.0
//
// Minimal TOML-style configuration: `[section]` headers, `key = value` lines,
// `#` comments. Values are quoted strings, integers, reals or booleans.
// `${NAME}` inside a string expands to the environment variable NAME.

#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace haven {

using ConfigValue = std::variant<std::string, long long, double, bool>;

class Config {
 public:
  using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;

  static Config parse(std::istream& in, const EnvLookup& env = process_env);
  static Config load(const std::filesystem::path& path, const EnvLookup& env = process_env);
  static std::optional<std::string> process_env(const std::string& name);

  // Keys are "section.key"; top-level keys have no prefix.
  bool contains(const std::string& key) const { return values_.contains(key); }
  std::string get_string(const std::string& key, std::optional<std::string> fallback = {}) const;
  long long get_int(const std::string& key, std::optional<long long> fallback = {}) const;
  double get_double(const std::string& key, std::optional<double> fallback = {}) const;
  bool get_bool(const std::string& key, std::optional<bool> fallback = {}) const;

  void set(const std::string& key, ConfigValue value) { values_[key] = std::move(value); }
  const std::map<std::string, ConfigValue>& values() const { return values_; }

 private:
  std::map<std::string, ConfigValue> values_;
};

}  // namespace haven
