#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace blo {

// Numeric CSV with a single header line. Values are written with 17
// significant digits so a write/read cycle reproduces every double.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
  // Optional leading text column (e.g. a method name), one entry per row.
  std::string label_header;
  std::vector<std::string> labels;

  std::size_t column(const std::string& name) const;  // throws ParseError when absent
  std::vector<double> column_values(const std::string& name) const;
};

std::string format_double(double x);

void write_csv(std::ostream& out, const CsvTable& table);
void write_csv(const std::filesystem::path& path, const CsvTable& table);  // IoError on failure

// labeled: the first column is text and goes to label_header / labels.
CsvTable read_csv(std::istream& in, bool labeled = false);
CsvTable read_csv(const std::filesystem::path& path, bool labeled = false);

}  // namespace blo
