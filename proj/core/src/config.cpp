#include "polieval/config.hpp"

#include <fstream>
#include <sstream>

#include "polieval/csv.hpp"
#include "polieval/errors.hpp"

namespace polieval {

namespace {

std::string strip(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

}  // namespace

KeyValueConfig KeyValueConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return from_string(buf.str());
}

KeyValueConfig KeyValueConfig::from_string(const std::string& text) {
  KeyValueConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string s = strip(line);
    if (s.empty() || s[0] == '#') continue;
    std::size_t eq = s.find('=');
    if (eq == std::string::npos) {
      throw ValidationError("config line " + std::to_string(lineno) + ": expected 'key = value'");
    }
    std::string key = strip(s.substr(0, eq));
    std::string value = strip(s.substr(eq + 1));
    if (key.empty()) {
      throw ValidationError("config line " + std::to_string(lineno) + ": empty key");
    }
    cfg.entries_.emplace_back(key, value);
  }
  return cfg;
}

bool KeyValueConfig::has(const std::string& key) const {
  for (const auto& [k, v] : entries_) {
    if (k == key) return true;
  }
  return false;
}

std::string KeyValueConfig::get_string(const std::string& key) const {
  for (const auto& [k, v] : entries_) {
    if (k == key) return v;
  }
  throw ValidationError("config key '" + key + "' is required");
}

std::string KeyValueConfig::get_string(const std::string& key, const std::string& fallback) const {
  return has(key) ? get_string(key) : fallback;
}

double KeyValueConfig::get_double(const std::string& key) const {
  return csv::parse_double(get_string(key), "config key '" + key + "'");
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
  return has(key) ? get_double(key) : fallback;
}

long long KeyValueConfig::get_int(const std::string& key) const {
  return csv::parse_int(get_string(key), "config key '" + key + "'");
}

long long KeyValueConfig::get_int(const std::string& key, long long fallback) const {
  return has(key) ? get_int(key) : fallback;
}

std::uint64_t KeyValueConfig::get_seed(const std::string& key, std::uint64_t fallback) const {
  if (!has(key)) return fallback;
  long long v = get_int(key);
  return static_cast<std::uint64_t>(v);
}

std::vector<std::string> KeyValueConfig::get_all(const std::string& key) const {
  std::vector<std::string> out;
  for (const auto& [k, v] : entries_) {
    if (k == key) out.push_back(v);
  }
  return out;
}

std::vector<std::string> KeyValueConfig::get_list(const std::string& key) const {
  std::vector<std::string> out;
  for (auto& field : csv::split_line(get_string(key))) {
    std::string s = strip(field);
    if (!s.empty()) out.push_back(s);
  }
  return out;
}

void KeyValueConfig::set(const std::string& key, const std::string& value) {
  entries_.emplace_back(key, value);
}

void KeyValueConfig::write_file(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open config '" + path + "' for writing");
  for (const auto& [k, v] : entries_) {
    out << k << " = " << v << '\n';
  }
}

}  // namespace polieval
