#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace fairdiag {

// Minimal CSV support for the dataset schemas: comma-separated, no quoting,
// empty field = missing. Tracks line numbers for error reporting.
struct CsvRow {
  std::vector<std::string> fields;
  long line = 0;  // 1-based line in the source file
};

struct CsvFile {
  std::filesystem::path path;
  std::vector<std::string> header;
  std::vector<CsvRow> rows;
};

// Reads the whole file; throws DataError naming file and line on structural
// problems (missing header, inconsistent column count).
CsvFile read_csv(const std::filesystem::path& path);

// Field accessor that throws DataError naming file, line and column on
// parse failures.
double parse_double(const CsvFile& f, const CsvRow& row, size_t col);
int parse_binary(const CsvFile& f, const CsvRow& row, size_t col);

void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);

// Canonical float formatting for CSV output (round-trips doubles exactly).
std::string format_double(double v);

}  // namespace fairdiag
