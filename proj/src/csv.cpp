#include "fairdiag/csv.hpp"

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "fairdiag/errors.hpp"

namespace fairdiag {

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

std::string where(const CsvFile& f, long line, size_t col) {
  std::ostringstream os;
  os << f.path.string() << ":" << line << " column " << (col + 1);
  if (col < f.header.size()) os << " (" << f.header[col] << ")";
  return os.str();
}

}  // namespace

CsvFile read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  CsvFile f;
  f.path = path;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno == 1) {
      f.header = split_fields(line);
      continue;
    }
    if (line.empty()) continue;
    CsvRow row{split_fields(line), lineno};
    if (row.fields.size() != f.header.size()) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                      std::to_string(f.header.size()) + " fields, got " + std::to_string(row.fields.size()));
    }
    f.rows.push_back(std::move(row));
  }
  if (f.header.empty()) throw DataError(path.string() + ": missing header row");
  return f;
}

double parse_double(const CsvFile& f, const CsvRow& row, size_t col) {
  const std::string& s = row.fields.at(col);
  if (s.empty()) throw DataError("empty numeric field at " + where(f, row.line, col));
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size() || errno == ERANGE) {
    throw DataError("malformed number '" + s + "' at " + where(f, row.line, col));
  }
  return v;
}

int parse_binary(const CsvFile& f, const CsvRow& row, size_t col) {
  const std::string& s = row.fields.at(col);
  if (s == "0") return 0;
  if (s == "1") return 1;
  throw DataError("expected 0 or 1, got '" + s + "' at " + where(f, row.line, col));
}

void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  for (size_t j = 0; j < header.size(); ++j) out << (j ? "," : "") << header[j];
  out << "\n";
  for (const auto& row : rows) {
    for (size_t j = 0; j < row.size(); ++j) out << (j ? "," : "") << row[j];
    out << "\n";
  }
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace fairdiag
