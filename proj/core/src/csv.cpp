#include "iqrtest/csv.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "iqrtest/errors.hpp"

namespace iqrtest {

std::size_t CsvTable::column(const std::string& name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) {
    throw InputError("missing column '" + name + "'");
  }
  return static_cast<std::size_t>(it - header.begin());
}

bool CsvTable::has_column(const std::string& name) const {
  return std::find(header.begin(), header.end(), name) != header.end();
}

namespace {

// Splits the full text into records, honoring quoted fields. Tracks the line
// number each record starts on for error messages.
std::vector<std::pair<std::size_t, std::vector<std::string>>> parse_records(
    const std::string& text, const std::string& origin) {
  std::vector<std::pair<std::size_t, std::vector<std::string>>> records;
  std::vector<std::string> fields;
  std::string field;
  bool in_quotes = false;
  bool record_has_content = false;
  std::size_t line = 1;
  std::size_t record_line = 1;

  const auto end_field = [&] {
    fields.push_back(field);
    field.clear();
  };
  const auto end_record = [&] {
    if (record_has_content || !fields.empty() || !field.empty()) {
      end_field();
      records.emplace_back(record_line, std::move(fields));
      fields = {};
    }
    record_has_content = false;
    record_line = line;
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        in_quotes = true;
        record_has_content = true;
        break;
      case ',':
        end_field();
        record_has_content = true;
        break;
      case '\r':
        break;
      case '\n':
        ++line;
        end_record();
        break;
      default:
        field.push_back(c);
        record_has_content = true;
        break;
    }
  }
  if (in_quotes) {
    throw InputError(origin + ": unterminated quoted field");
  }
  end_record();
  return records;
}

}  // namespace

CsvTable read_csv_string(const std::string& text, const std::string& origin) {
  auto records = parse_records(text, origin);
  if (records.empty()) {
    throw InputError(origin + ": empty file (header row required)");
  }
  CsvTable table;
  table.header = std::move(records.front().second);
  for (std::size_t r = 1; r < records.size(); ++r) {
    auto& [line, fields] = records[r];
    if (fields.size() != table.header.size()) {
      throw InputError(origin + ":" + std::to_string(line) + ": expected " +
                       std::to_string(table.header.size()) + " fields, found " +
                       std::to_string(fields.size()));
    }
    table.rows.push_back(std::move(fields));
  }
  return table;
}

CsvTable read_csv_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw InputError("cannot open file '" + path + "'");
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return read_csv_string(buf.str(), path);
}

double parse_double(const std::string& field, const std::string& context) {
  const char* first = field.data();
  const char* last = field.data() + field.size();
  while (first != last && (*first == ' ' || *first == '\t')) ++first;
  while (last != first && (*(last - 1) == ' ' || *(last - 1) == '\t')) --last;
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last || first == last) {
    throw InputError(context + ": non-numeric value '" + field + "'");
  }
  return value;
}

std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\n\r") == std::string::npos) return field;
  std::string out = "\"";
  for (const char c : field) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out += '"';
  return out;
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  // Shortest representation that round-trips.
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace iqrtest
