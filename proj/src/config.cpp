#include "ocumap/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "ocumap/errors.hpp"

namespace ocumap {
namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(const std::string& text, const std::string& origin) {
  KeyValueConfig cfg;
  cfg.origin_ = origin;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw ParseError(origin + ":" + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = trim(stripped.substr(0, eq));
    std::string value = trim(stripped.substr(eq + 1));
    if (const auto hash = value.find(" #"); hash != std::string::npos) value = trim(value.substr(0, hash));
    if (key.empty()) {
      throw ParseError(origin + ":" + std::to_string(line_no) + ": empty key");
    }
    cfg.values_[key] = value;
  }
  return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse(buffer.str(), path.string());
}

std::optional<std::string> KeyValueConfig::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  return it->second;
}

std::optional<double> KeyValueConfig::get_double(const std::string& key) const {
  const auto raw = get(key);
  if (!raw) return std::nullopt;
  try {
    std::size_t used = 0;
    const double v = std::stod(*raw, &used);
    if (used != raw->size()) throw std::invalid_argument(*raw);
    return v;
  } catch (const std::exception&) {
    throw ParseError(origin_ + ": key '" + key + "' is not a number: '" + *raw + "'");
  }
}

std::optional<long> KeyValueConfig::get_int(const std::string& key) const {
  const auto raw = get(key);
  if (!raw) return std::nullopt;
  long v = 0;
  const auto* end = raw->data() + raw->size();
  const auto [ptr, ec] = std::from_chars(raw->data(), end, v);
  if (ec != std::errc() || ptr != end) {
    throw ParseError(origin_ + ": key '" + key + "' is not an integer: '" + *raw + "'");
  }
  return v;
}

double KeyValueConfig::get_double_or(const std::string& key, double fallback) const {
  return get_double(key).value_or(fallback);
}

long KeyValueConfig::get_int_or(const std::string& key, long fallback) const {
  return get_int(key).value_or(fallback);
}

std::string KeyValueConfig::get_or(const std::string& key, const std::string& fallback) const {
  return get(key).value_or(fallback);
}

std::vector<std::string> KeyValueConfig::keys() const {
  std::vector<std::string> out;
  out.reserve(values_.size());
  for (const auto& [k, v] : values_) out.push_back(k);
  return out;
}

std::string KeyValueConfig::to_string() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
  return out;
}

Intrinsics intrinsics_from_config(const KeyValueConfig& config, Intrinsics base) {
  base.fx = config.get_double_or("fx", base.fx);
  base.fy = config.get_double_or("fy", base.fy);
  base.cx = config.get_double_or("cx", base.cx);
  base.cy = config.get_double_or("cy", base.cy);
  base.width = static_cast<int>(config.get_int_or("width", base.width));
  base.height = static_cast<int>(config.get_int_or("height", base.height));
  base.validate();
  return base;
}

}  // namespace ocumap
