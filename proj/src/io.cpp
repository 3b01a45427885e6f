#include "sysrisk/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace sysrisk::io {

namespace {

const Json& field(const Json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) throw ConfigError(std::string("missing field \"") + key + "\"");
  return j.at(key);
}

double numberFrom(const Json& j, const char* what) {
  if (!j.is_number()) throw ConfigError(std::string(what) + ": expected a number");
  return j.get<double>();
}

std::string typeOf(const Json& j, const char* what) {
  const Json& t = field(j, "type");
  if (!t.is_string()) throw ConfigError(std::string(what) + ": \"type\" must be a string");
  return t.get<std::string>();
}

}  // namespace

Json readJson(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

Vector vectorFrom(const Json& j, const char* what) {
  if (!j.is_array()) throw ConfigError(std::string(what) + ": expected an array");
  Vector v(static_cast<Index>(j.size()));
  for (std::size_t k = 0; k < j.size(); ++k) v[static_cast<Index>(k)] = numberFrom(j[k], what);
  return v;
}

Matrix matrixFrom(const Json& j, const char* what) {
  if (!j.is_array() || j.empty()) throw ConfigError(std::string(what) + ": expected a nonempty array of rows");
  const std::size_t cols = j[0].is_array() ? j[0].size() : 0;
  Matrix m(static_cast<Index>(j.size()), static_cast<Index>(cols));
  for (std::size_t r = 0; r < j.size(); ++r) {
    if (!j[r].is_array() || j[r].size() != cols) throw ConfigError(std::string(what) + ": ragged rows");
    for (std::size_t c = 0; c < cols; ++c)
      m(static_cast<Index>(r), static_cast<Index>(c)) = numberFrom(j[r][c], what);
  }
  return m;
}

Json toJson(const Vector& v) { return Json(std::vector<double>(v.data(), v.data() + v.size())); }

Json toJson(const Matrix& m) {
  Json rows = Json::array();
  for (Index r = 0; r < m.rows(); ++r) rows.push_back(toJson(Vector(m.row(r).transpose())));
  return rows;
}

RiskVector riskVectorFrom(const Json& j) {
  return RiskVector(matrixFrom(field(j, "positions"), "positions"),
                    ScenarioSpace(vectorFrom(field(j, "probabilities"), "probabilities")));
}

Json toJson(const RiskVector& x) {
  return Json{{"probabilities", toJson(x.space().probabilities())}, {"positions", toJson(x.values())}};
}

GaussianSystem gaussianFrom(const Json& j) {
  return GaussianSystem(vectorFrom(field(j, "mu"), "mu"), matrixFrom(field(j, "Q"), "Q"));
}

Json toJson(const GaussianSystem& sys) { return Json{{"mu", toJson(sys.mu())}, {"Q", toJson(sys.covariance())}}; }

NetworkModel networkFrom(const Json& j) {
  return NetworkModel(matrixFrom(field(j, "p"), "p"), vectorFrom(field(j, "sigma"), "sigma"),
                      vectorFrom(field(j, "rhoCommon"), "rhoCommon"), vectorFrom(field(j, "x0"), "x0"),
                      numberFrom(field(j, "t"), "t"));
}

Json toJson(const NetworkModel& model) {
  return Json{{"p", toJson(model.preferences())},
              {"sigma", toJson(model.sigma())},
              {"rhoCommon", toJson(model.rhoCommon())},
              {"x0", toJson(model.x0())},
              {"t", model.horizon()}};
}

Aggregation aggregationFrom(const Json& j, Index n) {
  const std::string type = typeOf(j, "aggregation");
  Aggregation out;
  if (type == "sum") {
    out = SumAggregation{};
  } else if (type == "shortfall") {
    out = ShortfallSum{j.contains("critical") ? vectorFrom(j["critical"], "critical") : Vector::Zero(n)};
  } else if (type == "exponential") {
    out = ExponentialLoss{vectorFrom(field(j, "alpha"), "alpha")};
  } else if (type == "gain-loss") {
    out = GainLossWeighted{vectorFrom(field(j, "alpha"), "alpha"), vectorFrom(field(j, "beta"), "beta"),
                           vectorFrom(field(j, "threshold"), "threshold")};
  } else if (type == "eisenberg-noe") {
    out = EisenbergNoe{matrixFrom(field(j, "liabilities"), "liabilities")};
  } else {
    throw ConfigError("unknown aggregation type \"" + type + "\"");
  }
  validate(out, n);
  return out;
}

AcceptanceCriterion acceptanceFrom(const Json& j) {
  const std::string type = typeOf(j, "acceptance");
  AcceptanceCriterion out;
  if (type == "floor") {
    out = ExpectationFloor{numberFrom(field(j, "floor"), "floor")};
  } else if (type == "worst-case") {
    out = WorstCase{};
  } else if (type == "es") {
    out = ExpectedShortfall{j.contains("level") ? numberFrom(j["level"], "level") : 0.05};
  } else {
    throw ConfigError("unknown acceptance type \"" + type + "\"");
  }
  validate(out);
  return out;
}

AllocationClass allocationClassFrom(const Json& j, Index n, Index m) {
  const std::string type = typeOf(j, "class");
  if (type == "deterministic") return Deterministic{};
  if (type == "flexible") return FullyFlexible{};
  if (type == "floors") {
    Vector floors = vectorFrom(field(j, "floors"), "floors");
    return FloorConstrained{FloorVector(std::move(floors))};
  }
  if (type == "grouped") {
    const Json& p = field(j, "partition");
    if (!p.is_string()) throw ConfigError("partition: expected block notation such as \"{1 3}{2}\"");
    return Grouped{GroupPartition::parse(p.get<std::string>(), n)};
  }
  if (type == "two-state") {
    const Json& e = field(j, "event");
    if (!e.is_array() || static_cast<Index>(e.size()) != m) throw ConfigError("event: one flag per scenario");
    TwoStateParametric out;
    for (const Json& flag : e) {
      if (!flag.is_boolean() && !flag.is_number_integer()) throw ConfigError("event: flags must be booleans or 0/1");
      out.event.push_back(flag.is_boolean() ? flag.get<bool>() : flag.get<int>() != 0);
    }
    return out;
  }
  throw ConfigError("unknown class type \"" + type + "\"");
}

Json toJson(const std::vector<PropertyCheck>& checks) {
  Json out = Json::array();
  for (const PropertyCheck& c : checks) {
    out.push_back(Json{{"property", c.property},
                       {"trials", c.trials},
                       {"failures", c.failures},
                       {"worstViolation", c.worstViolation},
                       {"witness", c.witness < 0 ? Json(nullptr) : Json(c.witness)}});
  }
  return out;
}

std::string formatNumber(double value) {
  if (value == 0.0) value = 0.0;  // drop the sign of negative zero
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", value);
  return buf;
}

std::string formatRanking(const std::vector<Index>& ranking) {
  std::string out;
  for (std::size_t k = 0; k < ranking.size(); ++k) out += (k ? ";" : "") + std::to_string(ranking[k] + 1);
  return out;
}

std::string joinNumbers(const Vector& values, char separator) {
  std::string out;
  for (Index k = 0; k < values.size(); ++k) {
    if (k) out += separator;
    out += formatNumber(values[k]);
  }
  return out;
}

void CsvTable::addRow(std::vector<std::string> row) {
  if (row.size() != header_.size()) throw ShapeError("CsvTable: row width differs from header");
  rows_.push_back(std::move(row));
}

std::string CsvTable::str() const {
  auto quoted = [](const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (const char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
    return q + "\"";
  };
  std::ostringstream out;
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t k = 0; k < cells.size(); ++k) out << (k ? "," : "") << quoted(cells[k]);
    out << '\n';
  };
  line(header_);
  for (const auto& r : rows_) line(r);
  return out.str();
}

CsvTable tableOf(const std::vector<Record>& records) {
  if (records.empty()) throw ShapeError("tableOf: no records");
  std::vector<std::string> header;
  for (const auto& [name, value] : records.front().fields) header.push_back(name);
  CsvTable table(header);
  for (const Record& r : records) {
    std::vector<std::string> row;
    for (std::size_t k = 0; k < r.fields.size(); ++k) {
      if (k >= header.size() || r.fields[k].first != header[k]) throw ShapeError("tableOf: records have different columns");
      row.push_back(r.fields[k].second);
    }
    table.addRow(std::move(row));
  }
  return table;
}

}  // namespace sysrisk::io
