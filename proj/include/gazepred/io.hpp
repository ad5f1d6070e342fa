#pragma once

#include <filesystem>
#include <istream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace gazepred::io {

using json = nlohmann::json;

/// Shortest decimal text that parses back to the same double; "NaN" for NaN.
std::string format_double(double v);

/// Parses a decimal field. Returns NaN for an empty field or "NaN"/"nan".
/// Throws std::invalid_argument for anything else that is not a number.
double parse_double(std::string_view field);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  /// 1-based line number in the source for each row (header is line 1).
  std::vector<long> line_numbers;

  /// Index of a header column, or -1.
  int column(std::string_view name) const;
};

/// Reads a comma-separated table with a header row. Fields may be wrapped in
/// double quotes; embedded commas inside quotes are kept.
CsvTable read_csv(std::istream& in);
CsvTable read_csv_file(const std::filesystem::path& path);

std::string read_text_file(const std::filesystem::path& path);
/// Writes atomically enough for our purposes: write to a temp file, then rename.
void write_text_file(const std::filesystem::path& path, std::string_view text);

json read_json_file(const std::filesystem::path& path);
/// Pretty-printed with a trailing newline so files diff cleanly.
void write_json_file(const std::filesystem::path& path, const json& j);

/// Hex SHA-256 digest.
std::string sha256_hex(std::string_view data);
std::string sha256_file(const std::filesystem::path& path);

}  // namespace gazepred::io
