#include "polieval/csv.hpp"

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>

#include "polieval/errors.hpp"

namespace polieval::csv {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = line.find(',', start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

std::string format_double(double v) {
  char buf[40];
  for (int prec = 15; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) return buf;
  }
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double parse_double(const std::string& field, const std::string& context) {
  errno = 0;
  char* end = nullptr;
  double v = std::strtod(field.c_str(), &end);
  if (end == field.c_str() || *end != '\0' || errno == ERANGE) {
    throw IoError("malformed numeric field '" + field + "' (" + context + ")");
  }
  return v;
}

long long parse_int(const std::string& field, const std::string& context) {
  errno = 0;
  char* end = nullptr;
  long long v = std::strtoll(field.c_str(), &end, 10);
  if (end == field.c_str() || *end != '\0' || errno == ERANGE) {
    throw IoError("malformed integer field '" + field + "' (" + context + ")");
  }
  return v;
}

std::size_t Table::column(const std::string& name) const {
  auto idx = find_column(name);
  if (!idx) throw IoError("missing required column '" + name + "'");
  return *idx;
}

std::optional<std::size_t> Table::find_column(const std::string& name) const {
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (header[j] == name) return j;
  }
  return std::nullopt;
}

Table read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  Table t;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (first) {
      if (line.empty()) throw IoError("empty header in '" + path + "'");
      t.header = split_line(line);
      first = false;
      continue;
    }
    if (line.empty()) continue;
    auto fields = split_line(line);
    if (fields.size() != t.header.size()) {
      throw IoError("'" + path + "' line " + std::to_string(t.rows.size() + 2) +
                    ": expected " + std::to_string(t.header.size()) + " fields, got " +
                    std::to_string(fields.size()));
    }
    t.rows.push_back(std::move(fields));
  }
  if (first) throw IoError("'" + path + "' is empty (header required)");
  return t;
}

struct Writer::Impl {
  std::ofstream out;
};

Writer::Writer(const std::string& path) : impl_(new Impl) {
  impl_->out.open(path);
  if (!impl_->out) {
    delete impl_;
    throw IoError("cannot open '" + path + "' for writing");
  }
}

Writer::~Writer() { delete impl_; }

void Writer::row(const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) impl_->out << ',';
    impl_->out << fields[i];
  }
  impl_->out << '\n';
}

std::string num(double v) { return format_double(v); }
std::string num(long long v) { return std::to_string(v); }

}  // namespace polieval::csv
