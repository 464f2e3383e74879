#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace fsb::csv {

using Row = std::vector<double>;

/// Writes a header line and numeric rows with full round-trip precision.
void write(const std::filesystem::path& path, const std::vector<std::string>& header,
           const std::vector<Row>& rows);

/// Reads a numeric CSV; a first line that does not parse as numbers is treated
/// as the header and returned through `header` when non-null.
std::vector<Row> read(const std::filesystem::path& path,
                      std::vector<std::string>* header = nullptr);

std::string format_number(double v);

}  // namespace fsb::csv
