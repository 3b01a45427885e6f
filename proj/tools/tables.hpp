#ifndef SYSRISK_TOOLS_TABLES_HPP
#define SYSRISK_TOOLS_TABLES_HPP

#include "sysrisk/io.hpp"

#include <optional>
#include <string>
#include <vector>

namespace sysrisk::cli {

/// One recomputed table entry next to the published figure.
struct TableCell {
  std::string block;
  std::string quantity;
  std::string column;
  double computed = 0.0;
  double published = 0.0;
  double tolerance = 0.0;
  /// "pass" within tolerance, "flag" for an analysed misprint, "fail" otherwise.
  std::string status;
  std::string note;
};

/// Recompute table `id` (1..6). Rows are solved concurrently, output order is fixed.
std::vector<TableCell> tableCells(int id);
io::CsvTable tableCsv(const std::vector<TableCell>& cells);

}  // namespace sysrisk::cli

#endif  // SYSRISK_TOOLS_TABLES_HPP
