#include "cli.hpp"

#include "tables.hpp"

#include "sysrisk/closed_forms.hpp"
#include "sysrisk/finite_alloc.hpp"
#include "sysrisk/gaussian_det.hpp"
#include "sysrisk/gaussian_scen.hpp"
#include "sysrisk/io.hpp"
#include "sysrisk/normal.hpp"
#include "sysrisk/oracle.hpp"
#include "sysrisk/ou_network.hpp"
#include "sysrisk/parallel.hpp"

#include "CLI11.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>

namespace sysrisk::cli {

namespace {

using io::ConfigError;
using io::Json;
using io::Record;

struct Settings {
  std::string solver;
  std::string input;
  std::string out;
  std::string sweep;
  int table = 0;
  std::optional<double> gamma;
  std::optional<double> level;
  std::optional<double> trigger;
  std::optional<std::string> alphas;
  std::optional<std::string> partition;
  std::optional<std::string> side;
  std::uint64_t seed = 1;
  long paths = 10000;
  long steps = 1000;
};

struct Outcome {
  Record record;
  bool converged = true;
};

std::string indexed(const std::string& name, Index i) { return name + "_" + std::to_string(i + 1); }

double required(const std::optional<double>& flag, const Json& in, const char* key) {
  if (flag) return *flag;
  if (in.contains(key) && in[key].is_number()) return in[key].get<double>();
  throw ConfigError(std::string("missing parameter ") + key + " (flag or input field)");
}

Vector parseList(const std::string& text) {
  std::vector<double> values;
  std::stringstream in(text);
  std::string token;
  while (std::getline(in, token, ',')) {
    try {
      std::size_t used = 0;
      values.push_back(std::stod(token, &used));
      if (token.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(token);
    } catch (const std::exception&) {
      throw ConfigError("malformed number \"" + token + "\" in list \"" + text + "\"");
    }
  }
  return Eigen::Map<const Vector>(values.data(), static_cast<Index>(values.size()));
}

void addRanking(Record& r, const Vector& expected) { r.add("ranking", io::formatRanking(rankByExpectation(expected))); }

// ---------------------------------------------------------------------------
// Solvers
// ---------------------------------------------------------------------------

Outcome solveGaussianDet(const Settings& s, const Json& in) {
  const GaussianSystem sys = io::gaussianFrom(in);
  const double gamma = required(s.gamma, in, "gamma");
  const Vector critical = in.contains("critical") ? io::vectorFrom(in["critical"], "critical") : Vector::Zero(sys.size());
  const DetGaussianSolution det = optimalDeterministic(sys, critical, gamma);
  Outcome o;
  o.record.add("rho", det.rho);
  o.record.add("R", det.R);
  for (Index i = 0; i < sys.size(); ++i) o.record.add(indexed("m", i), det.m[i]);
  addRanking(o.record, det.m);
  return o;
}

TriggerSide sideFrom(const Settings& s, const Json& in) {
  std::string side = s.side.value_or(in.contains("side") && in["side"].is_string() ? in["side"].get<std::string>()
                                                                                    : "at-or-below");
  if (side == "at-or-below") return TriggerSide::AtOrBelow;
  if (side == "above") return TriggerSide::Above;
  throw ConfigError("side must be \"at-or-below\" or \"above\"");
}

Outcome solveGaussianScen(const Settings& s, const Json& in) {
  const GaussianSystem sys = io::gaussianFrom(in);
  const double gamma = required(s.gamma, in, "gamma");
  const double trigger = s.trigger.value_or(in.contains("trigger") ? in["trigger"].get<double>() : 0.0);
  const Vector critical = in.contains("critical") ? io::vectorFrom(in["critical"], "critical") : Vector::Zero(sys.size());
  TwoStateOptions options;
  options.side = sideFrom(s, in);
  const TwoStateSolution sol = solveTwoState(sys, critical, gamma, trigger, options);

  // E[Y_i] = m_i + alpha_i P(D)
  const MarginalVsSum law = marginalVsSum(sys).front();
  double below = law.sigmaS > 0.0 ? normal::cdf((trigger - law.muS) / law.sigmaS) : (law.muS <= trigger ? 1.0 : 0.0);
  const double pD = options.side == TriggerSide::AtOrBelow ? below : 1.0 - below;

  Outcome o;
  o.converged = sol.converged;
  o.record.add("rho", sol.rho);
  for (Index i = 0; i < sys.size(); ++i) o.record.add(indexed("m", i), sol.m[i]);
  for (Index i = 0; i < sys.size(); ++i) o.record.add(indexed("alpha", i), sol.alpha[i]);
  o.record.add("lambda", sol.lambdaMult);
  o.record.add("residual", sol.residual);
  o.record.add("iterations", std::to_string(sol.iterations));
  o.record.add("converged", sol.converged ? "1" : "0");
  addRanking(o.record, sol.m + pD * sol.alpha);
  return o;
}

FloorVector floorsFrom(const Json& in, Index n) {
  if (!in.contains("floors")) return FloorVector::zeros(n);
  const Json& f = in["floors"];
  if (!f.is_array()) throw ConfigError("floors: expected an array (null = unbounded)");
  Vector v(static_cast<Index>(f.size()));
  for (std::size_t k = 0; k < f.size(); ++k)
    v[static_cast<Index>(k)] = f[k].is_null() ? FloorVector::kUnbounded : io::vectorFrom(Json::array({f[k]}), "floors")[0];
  if (v.size() != n) throw ConfigError("floors: one entry per institution");
  return FloorVector(std::move(v));
}

Outcome solveWorstCase(const Settings& s, const Json& in, bool es) {
  const RiskVector x = io::riskVectorFrom(in);
  AcceptanceCriterion criterion = WorstCase{};
  if (es) criterion = ExpectedShortfall{s.level.value_or(in.contains("level") ? in["level"].get<double>() : 0.05)};
  validate(criterion);
  const DeterministicWorstCase det = rhoDeterministicWC(x);
  Outcome o;
  o.record.add("rho_ag", rhoAg(x, criterion));
  o.record.add("rho_deterministic", det.rho);
  o.record.add("rho_constrained", rhoConstrainedWC(x, floorsFrom(in, x.institutions())));
  for (Index i = 0; i < x.institutions(); ++i) o.record.add(indexed("m", i), det.allocation[i]);
  addRanking(o.record, det.allocation);
  return o;
}

struct FiniteInputs {
  RiskVector x;
  Vector alphas;
  double gamma;
  std::optional<GroupPartition> partition;
};

FiniteInputs finiteInputs(const Settings& s, const Json& in) {
  RiskVector x = io::riskVectorFrom(in);
  Vector alphas;
  if (s.alphas) {
    alphas = parseList(*s.alphas);
  } else if (in.contains("alphas")) {
    alphas = io::vectorFrom(in["alphas"], "alphas");
  } else {
    throw ConfigError("missing parameter alphas (flag or input field)");
  }
  if (alphas.size() == 1 && x.institutions() > 1) alphas = Vector::Constant(x.institutions(), alphas[0]);
  const double gamma = required(s.gamma, in, "gamma");
  std::optional<GroupPartition> partition;
  if (s.partition) {
    partition = GroupPartition::parse(*s.partition, x.institutions());
  } else if (in.contains("partition") && in["partition"].is_string()) {
    partition = GroupPartition::parse(in["partition"].get<std::string>(), x.institutions());
  }
  return FiniteInputs{std::move(x), std::move(alphas), gamma, std::move(partition)};
}

Outcome solveFinite(const Settings& s, const Json& in) {
  const FiniteInputs f = finiteInputs(s, in);
  if (!f.partition) throw ConfigError("finite: a partition is required here (omit --sweep for the full partition sweep)");
  const GroupedSolution sol = solveGrouped(f.x, f.alphas, f.gamma, *f.partition);
  const Vector expected = sol.allocation * f.x.space().probabilities();
  Outcome o;
  o.record.add("rho", sol.rho);
  o.record.add("partition", sol.partition.str());
  o.record.add("constants", io::joinNumbers(sol.groupConstants));
  for (Index i = 0; i < f.x.institutions(); ++i) o.record.add(indexed("EY", i), expected[i]);
  o.record.add("lambda", sol.lambdaMult);
  addRanking(o.record, expected);
  return o;
}

io::CsvTable finitePartitionSweep(const Settings& s, const Json& in) {
  const FiniteInputs f = finiteInputs(s, in);
  io::CsvTable table({"partition", "rho", "constants"});
  for (const SweepRow& row : groupSweep(f.x, f.alphas, f.gamma))
    table.addRow({row.partition.str(), io::formatNumber(row.rho), io::joinNumbers(row.groupConstants)});
  return table;
}

Outcome solveOu(const Settings& s, const Json& in) {
  const NetworkModel model = io::networkFrom(in);
  const GaussianSystem analytic = heterogeneousCovariance(model);
  Outcome o;
  const Index n = model.size();
  for (Index i = 0; i < n; ++i) o.record.add(indexed("mean", i), analytic.mu()[i]);
  for (Index i = 0; i < n; ++i) o.record.add(indexed("var", i), analytic.covariance()(i, i));
  if (s.paths > 0) {
    if (s.steps < 1) throw ConfigError("steps must be positive");
    const SampleMoments mc = simulatePaths(model, s.paths, s.steps, s.seed);
    for (Index i = 0; i < n; ++i) {
      o.record.add(indexed("mc_mean", i), mc.mean[i]);
      o.record.add(indexed("mc_mean_se", i), mc.meanStdError[i]);
      o.record.add(indexed("mc_var", i), mc.covariance(i, i));
      o.record.add(indexed("mc_var_se", i), mc.covarianceStdError(i, i));
    }
    o.record.add("paths", std::to_string(s.paths));
    o.record.add("steps", std::to_string(s.steps));
    o.record.add("seed", std::to_string(s.seed));
  }
  return o;
}

Outcome solveOracle(const Settings& s, const Json& in) {
  const RiskVector x = io::riskVectorFrom(in);
  const Index n = x.institutions();
  if (!in.contains("aggregation")) throw ConfigError("missing field \"aggregation\"");
  const Aggregation lambda = io::aggregationFrom(in["aggregation"], n);

  AcceptanceCriterion acc = ExpectationFloor{};
  if (s.gamma) {
    acc = ExpectationFloor{-*s.gamma};
  } else if (s.level) {
    acc = ExpectedShortfall{*s.level};
  } else if (in.contains("acceptance")) {
    acc = io::acceptanceFrom(in["acceptance"]);
  } else {
    throw ConfigError("missing acceptance (input field, --gamma or --level)");
  }
  validate(acc);

  AllocationClass cls = FullyFlexible{};
  if (s.partition) {
    cls = Grouped{GroupPartition::parse(*s.partition, n)};
  } else if (in.contains("class")) {
    cls = io::allocationClassFrom(in["class"], n, x.scenarios());
  }

  const RiskResult r = numericRho(x, cls, lambda, acc);
  Outcome o;
  o.converged = r.diagnostics.converged;
  o.record.add("rho", r.rho);
  o.record.add("method", r.diagnostics.method);
  o.record.add("converged", r.diagnostics.converged ? "1" : "0");
  o.record.add("residual", r.diagnostics.residual);
  const Vector expected =
      r.allocation.size() > 0 ? Vector(r.allocation * x.space().probabilities()) : Vector::Constant(n, std::nan(""));
  for (Index i = 0; i < n; ++i) o.record.add(indexed("EY", i), expected[i]);
  o.record.add("ranking", r.allocation.size() > 0 ? io::formatRanking(r.ranking) : "");
  return o;
}

Outcome solveOnce(const Settings& s, const Json& in) {
  if (s.solver == "gaussian-det") return solveGaussianDet(s, in);
  if (s.solver == "gaussian-scen") return solveGaussianScen(s, in);
  if (s.solver == "worst-case") return solveWorstCase(s, in, false);
  if (s.solver == "es") return solveWorstCase(s, in, true);
  if (s.solver == "finite") return solveFinite(s, in);
  if (s.solver == "ou") return solveOu(s, in);
  if (s.solver == "oracle") return solveOracle(s, in);
  throw ConfigError("unknown solver \"" + s.solver + "\"");
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

struct Axis {
  std::string name;
  std::vector<double> values;
};

Axis parseAxis(const std::string& spec) {
  std::vector<std::string> parts;
  std::stringstream in(spec);
  std::string token;
  while (std::getline(in, token, ':')) parts.push_back(token);
  if (parts.size() != 4) throw ConfigError("sweep must look like name:lo:hi:step");
  const Vector bounds = parseList(parts[1] + "," + parts[2] + "," + parts[3]);
  const double lo = bounds[0];
  const double hi = bounds[1];
  const double step = bounds[2];
  if (hi < lo || !(step > 0.0)) throw ConfigError("sweep range is empty");
  const auto count = static_cast<long>(std::floor((hi - lo) / step + 1e-9)) + 1;
  if (count > 100000) throw ConfigError("sweep has more than 100000 points");
  Axis axis{parts[0], {}};
  for (long k = 0; k < count; ++k) {
    double v = lo + static_cast<double>(k) * step;
    if (std::abs(v) < 1e-12 * step) v = 0.0;
    axis.values.push_back(v);
  }
  return axis;
}

void applyAxis(const std::string& name, double v, Settings& s, Json& in) {
  if (name == "gamma") {
    s.gamma = v;
  } else if (name == "d" || name == "trigger") {
    s.trigger = v;
  } else if (name == "level") {
    s.level = v;
  } else if (name == "t") {
    in["t"] = v;
  } else if (name == "corr" || name == "sigma2") {
    Matrix q = io::matrixFrom(in.at("Q"), "Q");
    if (q.rows() < 2) throw ConfigError("sweep over " + name + " needs at least two institutions");
    const double corr = name == "corr" ? v : q(0, 1) / std::sqrt(q(0, 0) * q(1, 1));
    if (name == "sigma2") q(1, 1) = v * v;
    q(0, 1) = q(1, 0) = corr * std::sqrt(q(0, 0) * q(1, 1));
    in["Q"] = io::toJson(q);
  } else {
    throw ConfigError("unknown sweep parameter \"" + name + "\" (gamma, d, level, t, corr, sigma2)");
  }
}

int codeOf(const std::exception_ptr& e) {
  try {
    std::rethrow_exception(e);
  } catch (const InfeasibleError&) {
    return kInfeasible;
  } catch (const ConvergenceError&) {
    return kNotConverged;
  } catch (...) {
    return kConfigError;
  }
}

std::string messageOf(const std::exception_ptr& e) {
  try {
    std::rethrow_exception(e);
  } catch (const std::exception& ex) {
    return ex.what();
  } catch (...) {
    return "unknown error";
  }
}

struct Produced {
  std::string csv;
  int code = kOk;
  std::string message;
};

Produced runSweep(const Settings& base, const Json& input) {
  const Axis axis = parseAxis(base.sweep);
  struct Point {
    std::optional<Outcome> outcome;
    std::exception_ptr error;
  };
  std::vector<Point> points(axis.values.size());
  parallelFor(points.size(), [&](std::size_t k) {
    Settings s = base;
    Json in = input;
    try {
      applyAxis(axis.name, axis.values[k], s, in);
      points[k].outcome = solveOnce(s, in);
    } catch (...) {
      points[k].error = std::current_exception();
    }
  });

  Produced p;
  const Record* shape = nullptr;
  for (const Point& pt : points) {
    if (pt.outcome) {
      shape = &pt.outcome->record;
      break;
    }
  }
  if (!shape) {
    p.code = codeOf(points.front().error);
    p.message = messageOf(points.front().error);
    return p;
  }
  std::vector<std::string> header{axis.name, "status"};
  for (const auto& [name, value] : shape->fields) header.push_back(name);
  io::CsvTable table(header);
  for (std::size_t k = 0; k < points.size(); ++k) {
    std::vector<std::string> row{io::formatNumber(axis.values[k])};
    const Point& pt = points[k];
    int code = kOk;
    if (pt.outcome) {
      code = pt.outcome->converged ? kOk : kNotConverged;
      row.push_back(code == kOk ? "ok" : "not-converged");
      for (const auto& [name, value] : pt.outcome->record.fields) row.push_back(value);
      if (row.size() != header.size()) throw ShapeError("sweep rows have different columns");
    } else {
      code = codeOf(pt.error);
      row.push_back(code == kInfeasible ? "infeasible" : code == kNotConverged ? "not-converged" : "error");
      row.resize(header.size());
    }
    if (code != kOk && p.code == kOk) {
      p.code = code;
      p.message = pt.outcome ? "solver did not converge at " + axis.name + "=" + io::formatNumber(axis.values[k])
                             : messageOf(pt.error);
    }
    table.addRow(std::move(row));
  }
  p.csv = table.str();
  return p;
}

Produced produce(const Settings& s) {
  Produced p;
  if (s.table != 0) {
    const auto cells = tableCells(s.table);
    p.csv = tableCsv(cells).str();
    return p;
  }
  if (s.input.empty()) throw ConfigError("--input is required with --solver");
  const Json input = io::readJson(s.input);
  if (!s.sweep.empty()) return runSweep(s, input);
  if (s.solver == "finite" && !s.partition && !(input.contains("partition") && input["partition"].is_string())) {
    p.csv = finitePartitionSweep(s, input).str();
    return p;
  }
  const Outcome o = solveOnce(s, input);
  p.csv = io::tableOf({o.record}).str();
  if (!o.converged) {
    p.code = kNotConverged;
    p.message = "solver did not reach the convergence tolerance";
  }
  return p;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Systemic risk measures: Gaussian, finite-space and network solvers."};
  Settings s;
  double gamma = 0.0;
  double level = 0.0;
  double trigger = 0.0;
  std::string alphas;
  std::string partition;
  std::string side;
  auto* solverOpt = app.add_option("--solver", s.solver, "Solver to run")
                        ->check(CLI::IsMember({"gaussian-det", "gaussian-scen", "worst-case", "es", "finite", "ou",
                                               "oracle"}));
  auto* tableOpt = app.add_option("--table", s.table, "Regenerate a published table (1..6)")->check(CLI::Range(1, 6));
  solverOpt->excludes(tableOpt);
  app.add_option("--input", s.input, "JSON input for the solver");
  app.add_option("--sweep", s.sweep, "Sweep name:lo:hi:step over gamma, d, level, t, corr or sigma2");
  auto* gammaOpt = app.add_option("--gamma", gamma, "Acceptance tolerance gamma (floor -gamma)");
  auto* levelOpt = app.add_option("--level", level, "Expected Shortfall level q");
  auto* triggerOpt = app.add_option("-d,--trigger", trigger, "Trigger level d of the two-state event");
  auto* alphasOpt = app.add_option("--alphas", alphas, "Comma-separated exponential weights");
  auto* partitionOpt = app.add_option("--partition", partition, "Groups in block notation, e.g. \"{1 3}{2}{4}\"");
  auto* sideOpt = app.add_option("--side", side, "Trigger event side")->check(CLI::IsMember({"at-or-below", "above"}));
  app.add_option("--seed", s.seed, "Monte Carlo seed");
  app.add_option("--paths", s.paths, "Monte Carlo paths (0 disables simulation)")->check(CLI::NonNegativeNumber);
  app.add_option("--steps", s.steps, "Euler steps per path")->check(CLI::PositiveNumber);
  app.add_option("--out", s.out, "Write CSV here instead of standard output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "sysrisk: " << e.what() << '\n';
    return kConfigError;
  }
  if (*gammaOpt) s.gamma = gamma;
  if (*levelOpt) s.level = level;
  if (*triggerOpt) s.trigger = trigger;
  if (*alphasOpt) s.alphas = alphas;
  if (*partitionOpt) s.partition = partition;
  if (*sideOpt) s.side = side;
  if (s.solver.empty() && s.table == 0) {
    err << "sysrisk: one of --solver or --table is required\n";
    return kConfigError;
  }

  Produced p;
  try {
    p = produce(s);
  } catch (...) {
    const auto e = std::current_exception();
    err << "sysrisk: " << messageOf(e) << '\n';
    return codeOf(e);
  }
  if (!p.csv.empty()) {
    if (s.out.empty()) {
      out << p.csv;
    } else {
      std::ofstream file(s.out, std::ios::binary);
      if (!(file << p.csv)) {
        err << "sysrisk: cannot write " << s.out << '\n';
        return kConfigError;
      }
    }
  }
  if (p.code != kOk) err << "sysrisk: " << p.message << '\n';
  return p.code;
}

}  // namespace sysrisk::cli
