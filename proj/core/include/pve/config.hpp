#pragma once

#include <filesystem>
#include <map>
#include <string>

namespace pve {

/// Flat `key = value` text config. '#' starts a comment; blank lines are
/// ignored. Later assignments override earlier ones.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(const std::string& text);
  static KeyValueConfig load(const std::filesystem::path& path);

  bool contains(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  std::string get(const std::string& key, const std::string& fallback) const;
  double get(const std::string& key, double fallback) const;
  long long get(const std::string& key, long long fallback) const;

  /// Values of `other` override ours.
  void merge(const KeyValueConfig& other);
  std::string to_string() const;
  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace pve
