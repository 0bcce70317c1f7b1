#include "parle/config.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "parle/error.hpp"

namespace parle {

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
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected key=value");
    }
    const std::string key = trim(t.substr(0, eq));
    if (key.empty()) throw ConfigError(origin + ":" + std::to_string(line_no) + ": empty key");
    cfg.values_[key] = trim(t.substr(eq + 1));
  }
  return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  KeyValueConfig cfg = parse(buf.str(), path.string());
  cfg.base_dir_ = path.parent_path();
  return cfg;
}

const std::string* KeyValueConfig::find(const std::string& key) const {
  const auto it = values_.find(key);
  return it == values_.end() ? nullptr : &it->second;
}

std::string KeyValueConfig::get_string(const std::string& key, const std::string& fallback) const {
  const auto* v = find(key);
  return v ? *v : fallback;
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
  const auto v = get_optional_double(key);
  return v ? *v : fallback;
}

std::optional<double> KeyValueConfig::get_optional_double(const std::string& key) const {
  const auto* v = find(key);
  if (!v) return std::nullopt;
  if (*v == "inf" || *v == "infinity") return std::numeric_limits<double>::infinity();
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(*v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v->size() || std::isnan(out)) {
    throw ConfigError(origin_ + ": key '" + key + "' expects a number, got '" + *v + "'");
  }
  return out;
}

std::int64_t KeyValueConfig::get_int(const std::string& key, std::int64_t fallback) const {
  const auto* v = find(key);
  if (!v) return fallback;
  std::size_t used = 0;
  std::int64_t out = 0;
  try {
    out = std::stoll(*v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v->size()) {
    throw ConfigError(origin_ + ": key '" + key + "' expects an integer, got '" + *v + "'");
  }
  return out;
}

std::uint64_t KeyValueConfig::get_u64(const std::string& key, std::uint64_t fallback) const {
  const auto* v = find(key);
  if (!v) return fallback;
  std::size_t used = 0;
  std::uint64_t out = 0;
  try {
    if (!v->empty() && v->front() == '-') throw std::invalid_argument("negative");
    out = std::stoull(*v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v->size()) {
    throw ConfigError(origin_ + ": key '" + key + "' expects an unsigned integer, got '" + *v + "'");
  }
  return out;
}

std::vector<std::int64_t> KeyValueConfig::get_int_list(const std::string& key) const {
  std::vector<std::int64_t> out;
  const auto* v = find(key);
  if (!v || v->empty()) return out;
  std::stringstream ss(*v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    KeyValueConfig one;
    one.origin_ = origin_;
    one.values_[key] = trim(item);
    out.push_back(one.get_int(key, 0));
  }
  return out;
}

void KeyValueConfig::reject_unknown(const std::set<std::string>& known) const {
  for (const auto& [key, value] : values_) {
    if (known.count(key) == 0) throw ConfigError(origin_ + ": unknown key '" + key + "'");
  }
}

std::string KeyValueConfig::canonical() const {
  std::string out;
  for (const auto& [key, value] : values_) out += key + "=" + value + "\n";
  return out;
}

}  // namespace parle
