#include "glymph/csv.hpp"

#include <charconv>
#include <cmath>

#include "glymph/error.hpp"
#include "glymph/tensor.hpp"

namespace glymph {

std::string format_number(double v) {
  if (std::isfinite(v) && v == std::floor(v) && std::abs(v) < 1e15)
    return std::to_string(static_cast<long long>(v));
  char buf[40];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

namespace {

bool needs_quoting(const std::string& s) {
  return s.find_first_of(",\"\n\r") != std::string::npos;
}

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  out += '"';
  return out;
}

} // namespace

std::string encode_csv(const CsvRows& rows) {
  std::size_t columns = rows.empty() ? 0 : rows.front().size();
  std::string out;
  for (const auto& row : rows) {
    if (row.size() != columns)
      fail(ErrorKind::Value, "emit_csv: ragged rows (" + std::to_string(row.size()) + " vs " +
                                 std::to_string(columns) + " cells)");
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) out += ',';
      out += needs_quoting(row[c].text) ? quote(row[c].text) : row[c].text;
    }
    out += '\n';
  }
  return out;
}

void emit_csv(const CsvRows& rows, const std::string& path) {
  write_file_bytes(path, encode_csv(rows));
}

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string cell;
  bool in_quotes = false;
  bool cell_started = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          cell += '"';
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        cell += c;
      }
      continue;
    }
    switch (c) {
      case '"':
        in_quotes = true;
        cell_started = true;
        break;
      case ',':
        row.push_back(std::move(cell));
        cell.clear();
        cell_started = true;
        break;
      case '\n':
        if (cell_started || !cell.empty() || !row.empty()) {
          row.push_back(std::move(cell));
          cell.clear();
          rows.push_back(std::move(row));
          row.clear();
          cell_started = false;
        }
        break;
      case '\r':
        break;
      default:
        cell += c;
        cell_started = true;
    }
  }
  if (in_quotes) fail(ErrorKind::Value, "parse_csv: unterminated quoted cell");
  if (cell_started || !cell.empty() || !row.empty()) {
    row.push_back(std::move(cell));
    rows.push_back(std::move(row));
  }
  return rows;
}

} // namespace glymph
