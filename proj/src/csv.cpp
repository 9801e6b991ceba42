#include "blo/csv.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "blo/error.hpp"

namespace blo {

std::size_t CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return i;
  throw Error(ErrorKind::ParseError, "no column '" + name + "'");
}

std::vector<double> CsvTable::column_values(const std::string& name) const {
  const std::size_t c = column(name);
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(r.at(c));
  return out;
}

std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

void write_csv(std::ostream& out, const CsvTable& table) {
  const bool labeled = !table.label_header.empty();
  if (labeled && table.labels.size() != table.rows.size())
    throw Error(ErrorKind::DimensionMismatch, "csv label count != row count");
  auto check_text = [](const std::string& s) {
    if (s.find_first_of(",\n\r") != std::string::npos)
      throw Error(ErrorKind::InvalidConfig, "csv text cell contains a separator: '" + s + "'");
  };
  bool first = true;
  if (labeled) {
    check_text(table.label_header);
    out << table.label_header;
    first = false;
  }
  for (const auto& h : table.header) {
    check_text(h);
    out << (first ? "" : ",") << h;
    first = false;
  }
  out << '\n';
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    if (row.size() != table.header.size()) throw Error(ErrorKind::DimensionMismatch, "csv row width != header width");
    first = true;
    if (labeled) {
      check_text(table.labels[r]);
      out << table.labels[r];
      first = false;
    }
    for (double v : row) {
      out << (first ? "" : ",") << format_double(v);
      first = false;
    }
    out << '\n';
  }
}

void write_csv(const std::filesystem::path& path, const CsvTable& table) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::IoError, "cannot open " + path.string() + " for writing");
  write_csv(out, table);
  if (!out) throw Error(ErrorKind::IoError, "write failed: " + path.string());
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

double parse_cell(const std::string& s) {
  // from_chars rejects "inf"/"nan" spellings that snprintf may emit; strtod reads both.
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) throw Error(ErrorKind::ParseError, "bad csv number '" + s + "'");
  return v;
}

}  // namespace

CsvTable read_csv(std::istream& in, bool labeled) {
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::ParseError, "empty csv");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  t.header = split_line(line);
  if (labeled) {
    if (t.header.empty()) throw Error(ErrorKind::ParseError, "labeled csv needs a label column");
    t.label_header = t.header.front();
    t.header.erase(t.header.begin());
  }
  const std::size_t width = t.header.size() + (labeled ? 1 : 0);
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split_line(line);
    if (cells.size() != width) throw Error(ErrorKind::ParseError, "csv row width != header width");
    std::vector<double> row;
    row.reserve(t.header.size());
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (labeled && i == 0)
        t.labels.push_back(cells[i]);
      else
        row.push_back(parse_cell(cells[i]));
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

CsvTable read_csv(const std::filesystem::path& path, bool labeled) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + path.string());
  return read_csv(in, labeled);
}

}  // namespace blo
