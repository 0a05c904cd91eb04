// Licensed under the Apache License 2.0 (see LICENSE file).

#pragma once

#include <string>
#include <vector>

namespace tsync::io {

struct CsvRows {
  std::string path;
  std::vector<std::vector<std::string>> rows;  // header excluded

  long long as_int(std::size_t row, std::size_t col) const;
  double as_double(std::size_t row, std::size_t col) const;
};

// Reads a comma-separated file whose first line must equal `header`
// exactly. Every data row must have as many fields as the header.
CsvRows read_csv(const std::string& path, const std::string& header);

// Truncates `path` and writes `text`.
void write_text(const std::string& path, const std::string& text);

std::string format_fixed(double v, int decimals);

}  // namespace tsync::io
