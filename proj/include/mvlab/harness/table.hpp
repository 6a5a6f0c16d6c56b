#pragma once

// Result tables: fixed column schema per experiment kind, CSV with shortest
// round-trip numbers, and the JSON manifest written next to it.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <system_error>
#include <vector>

#include "mvlab/error.hpp"
#include "mvlab/harness/strict_json.hpp"

namespace mvlab::harness {

inline constexpr const char* kToolVersion = "mvlab 1.0.0";

inline std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

// One CSV cell.
struct Cell {
  std::string text;
  Cell(double v) : text(format_number(v)) {}
  Cell(std::size_t v) : text(std::to_string(v)) {}
  Cell(int v) : text(std::to_string(v)) {}
  Cell(bool v) : text(v ? "true" : "false") {}
  Cell(const char* s) : text(s) {}
  Cell(std::string s) : text(std::move(s)) {}
};

// JSON number that survives NaN/inf (stored as strings).
inline Json json_number(double v) {
  if (std::isfinite(v)) return v;
  return format_number(v);
}

struct ResultTable {
  std::string kind;
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;
  Json summary = Json::object();    // derived quantities and verdicts
  Json constants = Json::object();  // every constant the run used
  std::string reference;            // law the distances were measured against

  void add(std::vector<Cell> cells) {
    if (cells.size() != columns.size())
      throw Error(ErrorKind::numeric, "row has " + std::to_string(cells.size()) + " cells, schema has " +
                                          std::to_string(columns.size()));
    std::vector<std::string> row;
    row.reserve(cells.size());
    for (auto& c : cells) row.push_back(std::move(c.text));
    rows.push_back(std::move(row));
  }

  std::string csv() const {
    std::string out;
    auto line = [&](const std::vector<std::string>& fields) {
      for (std::size_t i = 0; i < fields.size(); ++i) out += (i ? "," : "") + csv_field(fields[i]);
      out += "\n";
    };
    line(columns);
    for (const auto& row : rows) line(row);
    return out;
  }

  static std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char ch : s) q += ch == '"' ? std::string("\"\"") : std::string(1, ch);
    return q + "\"";
  }
};

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::io, "cannot write '" + path.string() + "'");
  out << text;
  out.flush();
  if (!out) throw Error(ErrorKind::io, "write failed for '" + path.string() + "'");
}

inline void make_dirs(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::io, "cannot create directory '" + dir.string() + "': " + ec.message());
}

}  // namespace mvlab::harness
