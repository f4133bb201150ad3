#include "icsim/csv.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "icsim/errors.hpp"

namespace icsim::csv {

std::optional<std::size_t> Table::find_column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return i;
  return std::nullopt;
}

std::size_t Table::column(const std::string& name) const {
  if (auto i = find_column(name)) return *i;
  throw ConfigError("CSV has no column '" + name + "'");
}

void Table::add_row(std::vector<std::string> row) {
  if (row.size() != header.size())
    throw ConfigError("CSV row has " + std::to_string(row.size()) + " cells, header has " +
                      std::to_string(header.size()));
  rows.push_back(std::move(row));
}

std::string fmt(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  if (x == 0.0) return "0";  // folds -0
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", x);
  return buf;
}

std::string fmt(std::int64_t x) { return std::to_string(x); }
std::string fmt(std::uint64_t x) { return std::to_string(x); }
std::string fmt(int x) { return std::to_string(x); }

double parse_double(const std::string& cell) {
  if (cell == "nan") return std::nan("");
  if (cell == "inf") return INFINITY;
  if (cell == "-inf") return -INFINITY;
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(cell, &used);
  } catch (const std::exception&) {
    throw ConfigError("CSV cell '" + cell + "' is not a number");
  }
  if (used != cell.size()) throw ConfigError("CSV cell '" + cell + "' is not a number");
  return v;
}

namespace {

void put_cell(std::string& out, const std::string& cell) {
  if (cell.find_first_of(",\"\n\r") == std::string::npos) {
    out += cell;
    return;
  }
  out += '"';
  for (char c : cell) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
}

void put_row(std::string& out, const std::vector<std::string>& row) {
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (i) out += ',';
    put_cell(out, row[i]);
  }
  out += '\n';
}

}  // namespace

std::string to_string(const Table& t) {
  std::string out;
  put_row(out, t.header);
  for (const auto& r : t.rows) put_row(out, r);
  return out;
}

Table parse(const std::string& text) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> row;
  std::string cell;
  bool quoted = false;
  bool any = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          cell += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cell += c;
      }
      continue;
    }
    if (c == '"') {
      quoted = true;
      any = true;
    } else if (c == ',') {
      row.push_back(std::move(cell));
      cell.clear();
      any = true;
    } else if (c == '\n') {
      row.push_back(std::move(cell));
      cell.clear();
      records.push_back(std::move(row));
      row.clear();
      any = false;
    } else if (c != '\r') {
      cell += c;
      any = true;
    }
  }
  if (quoted) throw ConfigError("CSV ends inside a quoted cell");
  if (any) {
    row.push_back(std::move(cell));
    records.push_back(std::move(row));
  }
  Table t;
  if (records.empty()) return t;
  t.header = std::move(records.front());
  for (std::size_t r = 1; r < records.size(); ++r) {
    if (records[r].size() != t.header.size())
      throw ConfigError("CSV line " + std::to_string(r + 1) + " has " +
                        std::to_string(records[r].size()) + " cells, expected " +
                        std::to_string(t.header.size()));
    t.rows.push_back(std::move(records[r]));
  }
  return t;
}

void write(const std::filesystem::path& path, const Table& t) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write " + path.string());
  f << to_string(t);
  if (!f) throw ConfigError("failed writing " + path.string());
}

Table read(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot read " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse(ss.str());
}

}  // namespace icsim::csv
