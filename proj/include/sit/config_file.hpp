#pragma once

// Flat key=value configuration text. Blank lines and lines starting with '#'
// are ignored; whitespace around keys and values is trimmed.

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace sit {

class KeyValues {
 public:
  // Throws ParseError on a line without '=' or a repeated key.
  static KeyValues parse(std::string_view text);
  static KeyValues load(const std::string& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }
  const std::map<std::string, std::string>& entries() const noexcept { return values_; }
  // "key=value" lines in key order; parse() reads them back.
  std::string serialize() const;

  // Typed getters return the fallback when the key is absent and throw
  // ConfigError when the value does not parse.
  std::string get_string(const std::string& key, const std::string& fallback) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  std::size_t get_size(const std::string& key, std::size_t fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  // Throws ConfigError naming the first key not in `known`.
  void require_known(const std::vector<std::string>& known) const;

 private:
  std::map<std::string, std::string> values_;
};

// Shortest text that reads back to the same double.
std::string format_double(double value);

}  // namespace sit
