#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace icsim::csv {

/// A rectangular table of already formatted cells.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Index of a header column; throws ConfigError when absent.
  std::size_t column(const std::string& name) const;
  std::optional<std::size_t> find_column(const std::string& name) const;
  void add_row(std::vector<std::string> row);
};

/// Shortest-round-trip style formatting fixed at 12 significant digits, so
/// files are stable across platforms and easy to diff.
std::string fmt(double x);
std::string fmt(std::int64_t x);
std::string fmt(std::uint64_t x);
std::string fmt(int x);

double parse_double(const std::string& cell);

std::string to_string(const Table& t);
Table parse(const std::string& text);

void write(const std::filesystem::path& path, const Table& t);
Table read(const std::filesystem::path& path);

}  // namespace icsim::csv
