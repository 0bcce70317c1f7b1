#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace parle {

/// Flat `key = value` configuration. Blank lines and lines starting with
/// '#' are ignored; later assignments override earlier ones.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(const std::string& text, const std::string& origin = "<string>");
  static KeyValueConfig load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  std::optional<double> get_optional_double(const std::string& key) const;
  std::vector<std::int64_t> get_int_list(const std::string& key) const;

  // Throws ConfigError naming the first key not in `known`.
  void reject_unknown(const std::set<std::string>& known) const;

  // Sorted `key=value` lines; stable input for hashing and echo files.
  std::string canonical() const;

  const std::filesystem::path& base_dir() const { return base_dir_; }
  const std::string& origin() const { return origin_; }

 private:
  const std::string* find(const std::string& key) const;

  std::map<std::string, std::string> values_;
  std::filesystem::path base_dir_;
  std::string origin_;
};

}  // namespace parle
