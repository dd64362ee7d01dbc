#pragma once

#include <string>
#include <vector>

namespace iqrtest {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  // Column position by header name; throws InputError naming the column.
  std::size_t column(const std::string& name) const;
  bool has_column(const std::string& name) const;
};

// Reads a UTF-8 CSV file with a mandatory header row. Handles double-quoted
// fields (embedded commas, quotes, newlines). Throws InputError with a line
// number on ragged rows or I/O failure.
CsvTable read_csv_file(const std::string& path);
CsvTable read_csv_string(const std::string& text, const std::string& origin);

// Locale-independent numeric parse; context appears in the error message.
double parse_double(const std::string& field, const std::string& context);

std::string csv_escape(const std::string& field);

// Shortest exact decimal form, stable across runs.
std::string format_double(double v);

}  // namespace iqrtest
