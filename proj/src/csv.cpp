// Licensed under the Apache License 2.0 (see LICENSE file).

#include "tsync/csv.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "tsync/errors.hpp"

namespace tsync::io {
namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

CsvRows read_csv(const std::string& path, const std::string& header) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "' for reading");
  CsvRows table{path, {}};
  std::string line;
  if (!std::getline(in, line) || line != header)
    throw DataError(path + ": line 1: expected header '" + header + "'");
  const std::size_t width = split(header).size();
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto fields = split(line);
    if (fields.size() != width)
      throw DataError(path + ": line " + std::to_string(line_no) + ": expected " +
                      std::to_string(width) + " fields");
    table.rows.push_back(std::move(fields));
  }
  return table;
}

long long CsvRows::as_int(std::size_t row, std::size_t col) const {
  const std::string& f = rows.at(row).at(col);
  long long v = 0;
  auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
  if (ec != std::errc() || ptr != f.data() + f.size())
    throw DataError(path + ": data row " + std::to_string(row + 1) + ": bad integer '" + f + "'");
  return v;
}

double CsvRows::as_double(std::size_t row, std::size_t col) const {
  const std::string& f = rows.at(row).at(col);
  char* end = nullptr;
  const double v = std::strtod(f.c_str(), &end);
  if (f.empty() || end != f.c_str() + f.size() || !std::isfinite(v))
    throw DataError(path + ": data row " + std::to_string(row + 1) + ": bad number '" + f + "'");
  return v;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  out << text;
  out.flush();
  if (!out) throw DataError("write failed on '" + path + "'");
}

std::string format_fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  std::string s(buf);
  // "-0.000" and "0.000" must print the same so round trips stay stable.
  if (s.front() == '-' && s.find_first_not_of("-0.") == std::string::npos) s.erase(0, 1);
  return s;
}

}  // namespace tsync::io
