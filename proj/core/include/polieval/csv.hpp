#pragma once

#include <optional>
#include <string>
#include <vector>

namespace polieval::csv {

// Minimal comma-separated I/O. Fields are numeric values or plain identifiers;
// quoting and embedded commas are not supported.

std::vector<std::string> split_line(const std::string& line);

// Shortest decimal string that round-trips to the same double.
std::string format_double(double v);

double parse_double(const std::string& field, const std::string& context);
long long parse_int(const std::string& field, const std::string& context);

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  // Column index by name; throws IoError if absent.
  std::size_t column(const std::string& name) const;
  std::optional<std::size_t> find_column(const std::string& name) const;
};

Table read_file(const std::string& path);

class Writer {
 public:
  explicit Writer(const std::string& path);
  ~Writer();
  Writer(const Writer&) = delete;
  Writer& operator=(const Writer&) = delete;

  void row(const std::vector<std::string>& fields);

 private:
  struct Impl;
  Impl* impl_;
};

std::string num(double v);
std::string num(long long v);
inline std::string num(int v) { return num(static_cast<long long>(v)); }
inline std::string num(std::size_t v) { return num(static_cast<long long>(v)); }

}  // namespace polieval::csv
