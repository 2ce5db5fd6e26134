#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <stdexcept>
#include <string>

namespace sfa {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Flat `key = value` text. One assignment per line, `#` starts a comment,
// blank lines ignored, keys may not repeat. Values are kept as raw strings
// until a typed getter is called.
class ConfigMap {
 public:
  static ConfigMap parse_text(const std::string& text);
  static ConfigMap parse_file(const std::string& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  std::string get_string(const std::string& key, const std::string& fallback) const;
  long long get_int(const std::string& key, long long fallback) const;
  uint64_t get_uint64(const std::string& key, uint64_t fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  // Raises ConfigError naming the first key outside the allowed set.
  void reject_unknown(const std::set<std::string>& allowed) const;

  const std::map<std::string, std::string>& entries() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace sfa
