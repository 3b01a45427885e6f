#ifndef SYSRISK_IO_HPP
#define SYSRISK_IO_HPP

#include "sysrisk/core.hpp"
#include "sysrisk/finite_alloc.hpp"
#include "sysrisk/oracle.hpp"
#include "sysrisk/ou_network.hpp"

#include "json.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace sysrisk::io {

using Json = nlohmann::json;

/// Malformed or missing configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

Json readJson(const std::filesystem::path& path);

Vector vectorFrom(const Json& j, const char* what);
Matrix matrixFrom(const Json& j, const char* what);
Json toJson(const Vector& v);
Json toJson(const Matrix& m);

/// {"probabilities": [...], "positions": [[institution 1 per scenario], ...]}
RiskVector riskVectorFrom(const Json& j);
Json toJson(const RiskVector& x);

/// {"mu": [...], "Q": [[...]]}
GaussianSystem gaussianFrom(const Json& j);
Json toJson(const GaussianSystem& sys);

/// {"p": [[...]], "sigma": [...], "rhoCommon": [...], "x0": [...], "t": ...}
NetworkModel networkFrom(const Json& j);
Json toJson(const NetworkModel& model);

/// {"type": "sum" | "shortfall" | "exponential" | "gain-loss" | "eisenberg-noe", ...}
Aggregation aggregationFrom(const Json& j, Index institutions);
/// {"type": "floor", "floor": b} | {"type": "worst-case"} | {"type": "es", "level": q}
AcceptanceCriterion acceptanceFrom(const Json& j);
/// {"type": "deterministic" | "flexible" | "floors" | "grouped" | "two-state", ...}
AllocationClass allocationClassFrom(const Json& j, Index institutions, Index scenarios);

Json toJson(const std::vector<PropertyCheck>& checks);

/// Six significant digits, '.' decimal separator.
std::string formatNumber(double value);
/// 1-based indices joined by ';'.
std::string formatRanking(const std::vector<Index>& ranking);
std::string joinNumbers(const Vector& values, char separator = ';');

/// Comma-separated table with a header row and LF line endings. Fields with
/// commas, quotes or newlines are quoted.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

  void addRow(std::vector<std::string> row);
  const std::vector<std::string>& header() const { return header_; }
  std::size_t rows() const { return rows_.size(); }
  std::string str() const;

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

/// Ordered (name, value) pairs describing one solve; rendered as a CSV row.
struct Record {
  std::vector<std::pair<std::string, std::string>> fields;

  void add(std::string name, std::string value) { fields.emplace_back(std::move(name), std::move(value)); }
  void add(std::string name, double value) { add(std::move(name), formatNumber(value)); }
};

/// Rows share the first record's columns; a record with other columns is a ShapeError.
CsvTable tableOf(const std::vector<Record>& records);

}  // namespace sysrisk::io

#endif  // SYSRISK_IO_HPP
