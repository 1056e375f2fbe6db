#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ocumap/camera.hpp"

namespace ocumap {

// Plain-text "key = value" configuration. Blank lines and lines starting with
// '#' are ignored; later assignments override earlier ones.
class KeyValueConfig {
 public:
  KeyValueConfig() = default;

  static KeyValueConfig parse(const std::string& text, const std::string& origin = "<string>");
  static KeyValueConfig load(const std::filesystem::path& path);

  bool contains(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  std::optional<std::string> get(const std::string& key) const;
  // Throws ParseError naming the key when the value is not a number.
  std::optional<double> get_double(const std::string& key) const;
  std::optional<long> get_int(const std::string& key) const;

  double get_double_or(const std::string& key, double fallback) const;
  long get_int_or(const std::string& key, long fallback) const;
  std::string get_or(const std::string& key, const std::string& fallback) const;

  std::vector<std::string> keys() const;

  // Keys are written in lexicographic order, one per line.
  std::string to_string() const;

 private:
  std::string origin_ = "<config>";
  std::map<std::string, std::string> values_;
};

// Overrides fields of `base` from keys fx, fy, cx, cy, width, height and
// validates the result.
Intrinsics intrinsics_from_config(const KeyValueConfig& config, Intrinsics base);

}  // namespace ocumap
