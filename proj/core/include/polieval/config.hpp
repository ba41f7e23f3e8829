#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace polieval {

/// Plain `key = value` text configuration. Lines starting with '#' and blank
/// lines are ignored. A key may repeat; repeated values are kept in order.
class KeyValueConfig {
 public:
  KeyValueConfig() = default;

  static KeyValueConfig from_file(const std::string& path);
  static KeyValueConfig from_string(const std::string& text);

  bool has(const std::string& key) const;

  std::string get_string(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;

  double get_double(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;

  long long get_int(const std::string& key) const;
  long long get_int(const std::string& key, long long fallback) const;

  std::uint64_t get_seed(const std::string& key, std::uint64_t fallback) const;

  // All values recorded for a repeated key, in file order.
  std::vector<std::string> get_all(const std::string& key) const;

  // Comma-separated list value.
  std::vector<std::string> get_list(const std::string& key) const;

  void set(const std::string& key, const std::string& value);

  void write_file(const std::string& path) const;

 private:
  // Insertion-ordered storage so serialization round-trips.
  std::vector<std::pair<std::string, std::string>> entries_;
};

}  // namespace polieval
