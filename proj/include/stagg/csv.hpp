#pragma once

// Minimal comma-separated table I/O. Fields are trimmed; quoting is not supported
// because none of the project's tables carry embedded commas.

#include <optional>
#include <string>
#include <vector>

namespace stagg {

struct CsvTable {
  std::string source;  // file name, for error messages
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Column index by header name; IngestionError when absent.
  std::size_t column(const std::string& name) const;
  std::optional<std::size_t> find_column(const std::string& name) const;
  /// Parse cell (row, col) as a finite number; IngestionError with location otherwise.
  double number(std::size_t row, std::size_t col) const;
};

CsvTable parse_csv(const std::string& text, const std::string& source = "<memory>");
CsvTable read_csv_file(const std::string& path);
void write_csv_file(const std::string& path, const CsvTable& table);
std::string to_csv(const CsvTable& table);

/// Shortest decimal text that parses back to exactly `v`.
std::string format_number(double v);

/// Write `content` to `path` through a temporary file and rename.
void write_file_atomic(const std::string& path, const std::string& content);
std::string read_file(const std::string& path);

}  // namespace stagg
