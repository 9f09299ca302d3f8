#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace stealthlink::csv {

struct Row {
  std::size_t line = 0;  // 1-based line number in the source file
  std::vector<std::string> fields;
};

struct Table {
  std::string source;  // file name used in error messages
  std::vector<std::string> header;
  std::vector<Row> rows;

  // Index of a named column, or -1.
  int column(std::string_view name) const;
};

// Reads a comma-separated file with a mandatory header row. Blank lines and
// lines starting with '#' are skipped. No quoting: fields never contain commas.
Table read(const std::filesystem::path& path);
Table parse(std::string_view text, const std::string& source_name);

double parse_double(std::string_view field, const std::string& source, std::size_t line);
std::int64_t parse_int(std::string_view field, const std::string& source, std::size_t line);
std::uint64_t parse_uint(std::string_view field, const std::string& source, std::size_t line);

// Shortest representation that parses back to the identical double.
std::string format_double(double v);

std::vector<std::string> split(std::string_view line, char sep = ',');

// Writes `text` to `path` atomically enough for our purposes (truncate + write),
// creating parent directories. Throws IoError.
void write_file(const std::filesystem::path& path, std::string_view text);
std::string read_file(const std::filesystem::path& path);

}  // namespace stealthlink::csv
