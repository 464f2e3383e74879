#include "fsb/csv.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace fsb::csv {

std::string format_number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void write(const std::filesystem::path& path, const std::vector<std::string>& header,
           const std::vector<Row>& rows) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  out << '\n';
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << format_number(row[i]);
    out << '\n';
  }
}

namespace {
bool parse_row(const std::string& line, Row& row) {
  row.clear();
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    std::size_t b = cell.find_first_not_of(" \t\r");
    std::size_t e = cell.find_last_not_of(" \t\r");
    if (b == std::string::npos) return false;
    cell = cell.substr(b, e - b + 1);
    double v = 0;
    const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
    if (res.ec != std::errc() || res.ptr != cell.data() + cell.size()) return false;
    row.push_back(v);
  }
  return !row.empty();
}
}  // namespace

std::vector<Row> read(const std::filesystem::path& path, std::vector<std::string>* header) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<Row> rows;
  std::string line;
  bool first = true;
  Row row;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    if (parse_row(line, row)) {
      rows.push_back(row);
    } else if (first) {
      if (header) {
        header->clear();
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) header->push_back(cell);
      }
    } else {
      throw std::runtime_error("malformed CSV line in " + path.string() + ": " + line);
    }
    first = false;
  }
  return rows;
}

}  // namespace fsb::csv
