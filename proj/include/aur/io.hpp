#pragma once

// Minimal CSV tables and file helpers. Numbers are written in shortest
// round-trip form so re-parsing reproduces them exactly.

#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include "json.hpp"

#include "aur/errors.hpp"

namespace aur {

inline std::string format_number(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  CsvTable() = default;
  explicit CsvTable(std::vector<std::string> h) : header(std::move(h)) {}

  void add_row(std::vector<std::string> row) {
    if (row.size() != header.size()) throw InvalidInput("CsvTable: row width != header width");
    rows.push_back(std::move(row));
  }

  std::size_t column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return i;
    }
    throw InvalidInput("CsvTable: no column '" + name + "'");
  }

  std::vector<double> numeric_column(const std::string& name) const {
    const std::size_t c = column(name);
    std::vector<double> out;
    out.reserve(rows.size());
    for (const auto& r : rows) out.push_back(std::stod(r[c]));
    return out;
  }

  std::string to_string() const {
    std::ostringstream os;
    auto line = [&os](const std::vector<std::string>& cells) {
      for (std::size_t i = 0; i < cells.size(); ++i) os << (i ? "," : "") << cells[i];
      os << '\n';
    };
    line(header);
    for (const auto& r : rows) line(r);
    return os.str();
  }

  static CsvTable parse(const std::string& text) {
    CsvTable t;
    std::istringstream is(text);
    std::string line;
    bool first = true;
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      std::vector<std::string> cells;
      std::string cell;
      std::istringstream ls(line);
      while (std::getline(ls, cell, ',')) cells.push_back(cell);
      if (!line.empty() && line.back() == ',') cells.emplace_back();
      if (first) {
        t.header = std::move(cells);
        first = false;
      } else {
        t.add_row(std::move(cells));
      }
    }
    return t;
  }
};

/// Builds a row from mixed numbers and strings.
class RowBuilder {
 public:
  RowBuilder& operator<<(double v) {
    cells_.push_back(format_number(v));
    return *this;
  }
  RowBuilder& operator<<(int v) {
    cells_.push_back(std::to_string(v));
    return *this;
  }
  RowBuilder& operator<<(long v) {
    cells_.push_back(std::to_string(v));
    return *this;
  }
  RowBuilder& operator<<(long long v) {
    cells_.push_back(std::to_string(v));
    return *this;
  }
  RowBuilder& operator<<(const std::string& s) {
    cells_.push_back(s);
    return *this;
  }
  RowBuilder& operator<<(const char* s) {
    cells_.emplace_back(s);
    return *this;
  }
  std::vector<std::string> take() { return std::move(cells_); }

 private:
  std::vector<std::string> cells_;
};

inline void ensure_parent_dir(const std::filesystem::path& path) {
  const auto parent = path.parent_path();
  if (parent.empty()) return;
  std::error_code ec;
  std::filesystem::create_directories(parent, ec);
  if (ec) throw IoError("cannot create directory " + parent.string() + ": " + ec.message());
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  ensure_parent_dir(path);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os << text;
  if (!os) throw IoError("write failed for " + path.string());
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string() + " for reading");
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

inline void write_csv(const std::filesystem::path& path, const CsvTable& t) {
  write_text(path, t.to_string());
}

inline CsvTable read_csv(const std::filesystem::path& path) { return CsvTable::parse(read_text(path)); }

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  write_text(path, j.dump(1) + "\n");
}

inline nlohmann::json read_json(const std::filesystem::path& path) {
  const std::string text = read_text(path);
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace aur
