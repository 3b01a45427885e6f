#include "tables.hpp"

#include "sysrisk/finite_alloc.hpp"
#include "sysrisk/gaussian_det.hpp"
#include "sysrisk/gaussian_scen.hpp"
#include "sysrisk/ou_network.hpp"
#include "sysrisk/parallel.hpp"

#include <cmath>
#include <map>
#include <stdexcept>

namespace sysrisk::cli {

namespace {

struct Printed {
  std::string quantity;
  std::string column;
  double value;
};

struct Erratum {
  int table;
  std::string block;
  std::string quantity;
  std::string column;
  std::string note;
};

// Published cells that disagree with the exact solution of the stated problem,
// each traced to a specific cause.
const std::vector<Erratum>& knownErrata() {
  static const std::vector<Erratum> list = [] {
    std::vector<Erratum> e;
    int table = 0;
    auto add = [&](const std::string& block, std::initializer_list<const char*> quantities, const std::string& column,
                   const std::string& note) {
      for (const char* q : quantities) e.push_back({table, block, q, column, note});
    };
    const std::string flat = "objective flat in alpha; printed point is not stationary, exact optimum confirmed by alpha-profile scan";
    // Two-bank Gaussian, correlation sweep.
    table = 1;
    add("-0.8", {"m2", "alpha"}, "random", "printed point is strictly feasible (Psi = 0.69883), hence not optimal; " + flat);
    add("-0.5", {"alpha"}, "random", "printed point is strictly feasible (Psi = 0.69969), hence not optimal; " + flat);
    add("0", {"alpha"}, "random", "printed point is strictly feasible (Psi = 0.69962), hence not optimal; " + flat);
    add("0.5", {"alpha"}, "random", "printed point violates the constraint (Psi = 0.70118 > 0.7); " + flat);
    add("0.8", {"alpha"}, "random", "printed point violates the constraint (Psi = 0.70098 > 0.7)");
    // Two-bank Gaussian, sigma2 sweep.
    table = 2;
    add("5", {"alpha"}, "random", "printed point violates the constraint (Psi = 0.70058 > 0.7); " + flat);
    add("10", {"m2", "rho"}, "deterministic", "printed m1 and m2 imply different roots R; exact R = -1.13787");
    add("10", {"m2", "alpha", "rho"}, "random", "printed point is feasible but costlier (11.8963 > 11.8730)");
    // Three-bank network.
    table = 3;
    add("-0.8", {"rho"}, "random", "printed point violates the constraint (Psi = 0.7178 > 0.7)");
    add("-0.8", {"m2", "alpha"}, "random", "printed point violates the constraint (Psi = 0.7178 > 0.7)");
    add("-0.32", {"m1", "alpha", "rho"}, "random", "printed point violates the constraint (Psi = 0.7040 > 0.7)");
    add("0", {"alpha"}, "random", "printed point is feasible but costlier (0.9592 > 0.9577)");
    add("0.32", {"m1", "m2", "alpha"}, "random", "printed point is feasible but costlier (0.9685 > 0.9652)");
    add("0.8", {"m1", "m2", "alpha"}, "random",
        "degenerate optimum: printed m1 + m2 = 0.9730 equals the exact cost; printed total 0.9750 is a misprint");
    // Four-bank finite example; table 4 repeats the singleton cells of table 5.
    const std::string y2 = "X2 and X4 are equal in law, so Y2 must equal Y4 = 11.2161; printed value repeats Y3";
    const std::string total = "printed total carries the misprinted Y2";
    table = 4;
    add("{1}{2}{3}{4}", {"Y2"}, "deterministic", y2);
    add("{1}{2}{3}{4}", {"rho"}, "deterministic", total);
    table = 5;
    add("{1 2}{3}{4}", {"Y1(w1)", "Y1(w3)"}, "random", "sign misprint: printed constant 47.46 minus 48.73 gives -1.27");
    for (const char* block : {"{1 3}{2}{4}", "{1 4}{2}{3}"}) {
      add(block, {"Y2"}, "deterministic", y2);
      add(block, {"rho"}, "deterministic", total);
    }
    add("{1}{2}{3 4}", {"Y2"}, "deterministic", y2);
    add("{1}{2}{3 4}", {"rho"}, "deterministic", total);
    const std::string g23 = "printed block is offset by 0.55 per member; stated data give the constant -41.8382 (oracle agrees)";
    add("{1}{2 3}{4}",
        {"Y2(w1)", "Y2(w2)", "Y2(w3)", "Y2(w4)", "E[Y2]", "Y3(w1)", "Y3(w2)", "Y3(w3)", "Y3(w4)", "E[Y3]"}, "random", g23);
    add("{1}{2 3}{4}", {"Y2+Y3", "rho"}, "deterministic", g23);
    // Partition ranking.
    table = 6;
    for (const char* block : {"{1 3}{2}{4}", "{1 4}{2}{3}", "{1}{2}{3 4}"}) add(block, {"rho"}, "r=2", total);
    add("{1}{2}{3}{4}", {"rho"}, "r=3", total);
    add("{1}{2 3}{4}", {"rho"}, "r=2", g23);
    return e;
  }();
  return list;
}

std::string erratumNote(int table, const TableCell& c) {
  for (const Erratum& e : knownErrata())
    if (e.table == table && e.block == c.block && e.quantity == c.quantity && e.column == c.column) return e.note;
  return {};
}

void classify(int table, TableCell& c) {
  if (std::abs(c.computed - c.published) <= c.tolerance) {
    c.status = "pass";
    return;
  }
  c.note = erratumNote(table, c);
  c.status = c.note.empty() ? "fail" : "flag";
}

TableCell cell(std::string block, std::string quantity, std::string column, double computed, double published,
               double tolerance) {
  return TableCell{std::move(block), std::move(quantity), std::move(column), computed, published, tolerance, {}, {}};
}

std::string label(double v) { return io::formatNumber(v); }

// ---------------------------------------------------------------------------
// Two-bank Gaussian tables: mu = 0, gamma = 0.7, trigger d = 2.
// ---------------------------------------------------------------------------

constexpr double kGamma = 0.7;
constexpr double kTrigger = 2.0;

struct GaussianRow {
  double key;
  Matrix q;
  // deterministic m1, m2, rho; random m1, m2, alpha, rho
  double det[3];
  double rand[4];
};

std::vector<TableCell> gaussianCells(const std::vector<GaussianRow>& rows, double detTolerance) {
  std::vector<std::vector<TableCell>> blocks(rows.size());
  parallelFor(rows.size(), [&](std::size_t r) {
    const GaussianRow& row = rows[r];
    const GaussianSystem sys(Vector::Zero(2), row.q);
    const Vector zero = Vector::Zero(2);
    const DetGaussianSolution det = optimalDeterministic(sys, zero, kGamma);
    TwoStateOptions options;
    options.side = TriggerSide::Above;
    const TwoStateSolution scen = solveTwoState(sys, zero, kGamma, kTrigger, options);
    const std::string b = label(row.key);
    auto& out = blocks[r];
    out.push_back(cell(b, "m1", "deterministic", det.m[0], row.det[0], detTolerance));
    out.push_back(cell(b, "m2", "deterministic", det.m[1], row.det[1], detTolerance));
    out.push_back(cell(b, "alpha", "deterministic", 0.0, 0.0, detTolerance));
    out.push_back(cell(b, "rho", "deterministic", det.rho, row.det[2], detTolerance));
    out.push_back(cell(b, "m1", "random", scen.m[0], row.rand[0], 5e-3));
    out.push_back(cell(b, "m2", "random", scen.m[1], row.rand[1], 5e-3));
    out.push_back(cell(b, "alpha", "random", scen.alpha[0], row.rand[2], 5e-3));
    out.push_back(cell(b, "rho", "random", scen.rho, row.rand[3], 5e-3));
  });
  std::vector<TableCell> cells;
  for (auto& b : blocks) cells.insert(cells.end(), b.begin(), b.end());
  return cells;
}

Matrix pairCovariance(double s1, double s2, double corr) {
  Matrix q(2, 2);
  q << s1 * s1, corr * s1 * s2, corr * s1 * s2, s2 * s2;
  return q;
}

std::vector<TableCell> table1() {
  const double det[3] = {0.5772, 1.7316, 2.3088};
  std::vector<GaussianRow> rows = {
      {-0.8, pairCovariance(1, 3, -0.8), {}, {0.1597, 1.7230, 2.8704, 1.8827}},
      {-0.5, pairCovariance(1, 3, -0.5), {}, {0.2908, 1.7776, 2.3161, 2.0683}},
      {0.0, pairCovariance(1, 3, 0.0), {}, {0.4490, 1.7796, 1.7208, 2.2286}},
      {0.5, pairCovariance(1, 3, 0.5), {}, {0.5463, 1.7461, 1.3389, 2.2924}},
      {0.8, pairCovariance(1, 3, 0.8), {}, {0.5737, 1.7314, 0.7905, 2.3053}},
  };
  for (auto& r : rows) std::copy(det, det + 3, r.det);
  return gaussianCells(rows, 1e-3);
}

std::vector<TableCell> table2() {
  const std::vector<GaussianRow> rows = {
      {1.0, pairCovariance(1, 1, -0.5), {0.1008, 0.1031, 0.2039}, {0.1008, 0.1031, 0.0002, 0.2039}},
      {5.0, pairCovariance(1, 5, -0.5), {0.8168, 4.0816, 4.8984}, {0.3167, 4.1295, 3.5987, 4.4462}},
      {10.0, pairCovariance(1, 10, -0.5), {1.1417, 11.3964, 12.5381}, {0.4631, 11.4333, 6.9909, 11.8963}},
  };
  return gaussianCells(rows, 5e-3);
}

std::vector<TableCell> table3() {
  struct Row {
    double cov;
    double rand[4];
  };
  const std::vector<Row> rows = {
      {-0.8, {0.2671, 0.6347, 2.1413, 0.9018}}, {-0.32, {0.2799, 0.6577, 1.1161, 0.9376}},
      {0.0, {0.3062, 0.6530, 0.8416, 0.9592}},  {0.32, {0.3271, 0.6414, 0.6813, 0.9685}},
      {0.8, {0.3436, 0.6294, 0.6597, 0.9750}},
  };
  const double det[3] = {0.3486, 0.6313, 0.9799};
  constexpr double kRho = 0.8;
  std::vector<std::vector<TableCell>> blocks(rows.size());
  parallelFor(rows.size(), [&](std::size_t r) {
    const Row& row = rows[r];
    const ThreeBankRow res = threeBankExample(row.cov / (2.0 * kRho), 1.0, kGamma, kTrigger, kRho);
    const std::string b = label(row.cov);
    auto& out = blocks[r];
    out.push_back(cell(b, "m1", "deterministic", res.detM[0], det[0], 5e-3));
    out.push_back(cell(b, "m2", "deterministic", res.detM[1], det[1], 5e-3));
    out.push_back(cell(b, "alpha", "deterministic", 0.0, 0.0, 5e-3));
    out.push_back(cell(b, "rho", "deterministic", res.detRho, det[2], 5e-3));
    out.push_back(cell(b, "m1", "random", res.m[0], row.rand[0], 5e-3));
    out.push_back(cell(b, "m2", "random", res.m[1], row.rand[1], 5e-3));
    out.push_back(cell(b, "alpha", "random", res.alpha, row.rand[2], 5e-3));
    out.push_back(cell(b, "rho", "random", res.rho, row.rand[3], 5e-3));
  });
  std::vector<TableCell> cells;
  for (auto& b : blocks) cells.insert(cells.end(), b.begin(), b.end());
  return cells;
}

// ---------------------------------------------------------------------------
// Four-bank finite example, exponential aggregation alpha = 0.3, gamma = 50.
// ---------------------------------------------------------------------------

RiskVector fourBankExample() {
  Vector p(4);
  p << 0.64, 0.16, 0.16, 0.04;
  Matrix x(4, 4);
  x << 100, -50, 100, -50,  //
      50, -25, 50, -25,     //
      -25, 50, -25, 50,     //
      50, 50, -25, -25;
  return RiskVector(x, ScenarioSpace(p));
}

GroupedSolution solveExample(const std::string& partition) {
  const RiskVector x = fourBankExample();
  return solveGrouped(x, Vector::Constant(4, 0.3), 50.0, GroupPartition::parse(partition, 4));
}

std::vector<TableCell> table4() {
  const GroupedSolution sol = solveExample("{1}{2}{3}{4}");
  const double printed[4] = {36.18, 15.82, 15.82, 11.20};
  std::vector<TableCell> cells;
  const std::string b = sol.partition.str();
  for (Index i = 0; i < 4; ++i)
    cells.push_back(cell(b, "Y" + std::to_string(i + 1), "deterministic", sol.groupConstants[i], printed[i], 0.05));
  cells.push_back(cell(b, "rho", "deterministic", sol.rho, 79.02, 0.05));
  return cells;
}

std::vector<TableCell> table5() {
  struct Block {
    std::string partition;
    // Scenario values of the two grouped members (columns w1..w4), their means, the group constant.
    int members[2];
    double values[2][4];
    double means[2];
    double constant;
    // Singletons as printed, then the total.
    std::vector<std::pair<int, double>> singles;
    double total;
  };
  const std::vector<Block> blocks = {
      {"{1 2}{3}{4}", {1, 2}, {{11.27, 36.23, 11.27, 36.23}, {48.73, 11.23, 48.73, 11.23}}, {6.23, 41.23}, 47.46,
       {{3, 15.82}, {4, 11.20}}, 74.48},
      {"{1 3}{2}{4}", {1, 3}, {{-76.29, 36.21, -76.29, 36.21}, {48.71, -63.79, 48.71, -63.79}}, {-53.79, 26.21},
       -27.58, {{2, 15.82}, {4, 11.20}}, -0.56},
      {"{1 4}{2}{3}", {1, 4}, {{-6.64, 68.36, -44.14, 30.86}, {43.36, -31.64, 80.86, 5.86}}, {0.86, 35.86}, 36.72,
       {{2, 15.82}, {3, 15.82}}, 68.36},
      {"{1}{2 3}{4}", {2, 3}, {{-58.97, 16.03, -58.97, 16.03}, {16.03, -58.97, 16.03, -58.97}}, {-43.97, 1.03},
       -42.94, {{1, 36.18}, {4, 11.20}}, 4.44},
      {"{1}{2 4}{3}", {2, 4}, {{5.86, 43.36, -31.64, 5.86}, {5.85, -31.65, 43.35, 5.85}}, {5.86, 5.85}, 11.71,
       {{1, 36.18}, {3, 15.82}}, 63.71},
      {"{1}{2}{3 4}", {3, 4}, {{47.98, 10.48, 10.48, -27.02}, {-27.02, 10.48, 10.48, 47.98}}, {32.98, -12.02}, 20.96,
       {{1, 36.18}, {2, 15.82}}, 72.96},
  };
  const Vector p = fourBankExample().space().probabilities();
  std::vector<TableCell> cells;
  for (const Block& blk : blocks) {
    const GroupedSolution sol = solveExample(blk.partition);
    const std::string b = sol.partition.str();
    const Vector mean = sol.allocation * p;
    for (int k = 0; k < 2; ++k) {
      const Index i = blk.members[k] - 1;
      const std::string y = "Y" + std::to_string(blk.members[k]);
      for (Index j = 0; j < 4; ++j)
        cells.push_back(cell(b, y + "(w" + std::to_string(j + 1) + ")", "random", sol.allocation(i, j),
                             blk.values[k][j], 0.05));
      cells.push_back(cell(b, "E[" + y + "]", "random", mean[i], blk.means[k], 0.05));
    }
    const std::string group = "Y" + std::to_string(blk.members[0]) + "+Y" + std::to_string(blk.members[1]);
    cells.push_back(cell(b, group, "deterministic", sol.allocation(blk.members[0] - 1, 0) +
                                                        sol.allocation(blk.members[1] - 1, 0),
                         blk.constant, 0.05));
    for (const auto& [member, value] : blk.singles)
      cells.push_back(cell(b, "Y" + std::to_string(member), "deterministic", sol.allocation(member - 1, 0), value, 0.05));
    cells.push_back(cell(b, "rho", "deterministic", sol.rho, blk.total, 0.05));
  }
  return cells;
}

std::vector<TableCell> table6() {
  const std::vector<std::tuple<std::string, std::string, double, double>> rows = {
      {"r=0", "{1 2 3 4}", -26.36, 0.1},       {"r=2", "{1 3}{2}{4}", -0.56, 0.05},
      {"r=2", "{1}{2 3}{4}", 4.44, 0.05},      {"r=2", "{1}{2 4}{3}", 63.71, 0.05},
      {"r=2", "{1 4}{2}{3}", 68.36, 0.05},     {"r=2", "{1}{2}{3 4}", 72.96, 0.05},
      {"r=2", "{1 2}{3}{4}", 74.48, 0.05},     {"r=3", "{1}{2}{3}{4}", 79.02, 0.05},
  };
  std::vector<TableCell> cells;
  for (const auto& [caseName, partition, printed, tol] : rows)
    cells.push_back(cell(partition, "rho", caseName, solveExample(partition).rho, printed, tol));
  return cells;
}

}  // namespace

std::vector<TableCell> tableCells(int id) {
  std::vector<TableCell> cells;
  switch (id) {
    case 1: cells = table1(); break;
    case 2: cells = table2(); break;
    case 3: cells = table3(); break;
    case 4: cells = table4(); break;
    case 5: cells = table5(); break;
    case 6: cells = table6(); break;
    default: throw std::out_of_range("table id must be 1..6");
  }
  for (TableCell& c : cells) classify(id, c);
  return cells;
}

io::CsvTable tableCsv(const std::vector<TableCell>& cells) {
  io::CsvTable out({"block", "quantity", "column", "computed", "published", "abs_diff", "status", "note"});
  for (const TableCell& c : cells) {
    out.addRow({c.block, c.quantity, c.column, io::formatNumber(c.computed), io::formatNumber(c.published),
                io::formatNumber(std::abs(c.computed - c.published)), c.status, c.note});
  }
  return out;
}

}  // namespace sysrisk::cli
