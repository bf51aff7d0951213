#pragma once

#include <string>
#include <vector>

namespace glymph {

/// Shortest decimal representation that round-trips through a double.
std::string format_number(double v);

/// A CSV cell; numeric constructors render with format_number.
struct CsvValue {
  std::string text;

  CsvValue(const char* s) : text(s) {}
  CsvValue(std::string s) : text(std::move(s)) {}
  CsvValue(double v) : text(format_number(v)) {}
  CsvValue(int v) : text(std::to_string(v)) {}
  CsvValue(long v) : text(std::to_string(v)) {}
};

using CsvRows = std::vector<std::vector<CsvValue>>;

/// RFC-4180-style encoding (quotes around cells containing commas, quotes or
/// newlines; embedded quotes doubled). Rows must be rectangular.
std::string encode_csv(const CsvRows& rows);

void emit_csv(const CsvRows& rows, const std::string& path);

/// Parses CSV text back into cells; understands the quoting emit_csv writes.
std::vector<std::vector<std::string>> parse_csv(const std::string& text);

} // namespace glymph
