#include "doctest.h"

#include "sysrisk/io.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>

using namespace sysrisk;
using namespace sysrisk::io;

TEST_CASE("risk vector round trip") {
  Matrix x(2, 3);
  x << -1.5, 2, 0.25, 3, -4, 1e-9;
  const RiskVector r(x, ScenarioSpace(Vector::Constant(3, 1.0 / 3.0)));
  const RiskVector back = riskVectorFrom(Json::parse(toJson(r).dump()));
  CHECK(back.values() == r.values());
  CHECK(back.space().probabilities() == r.space().probabilities());
  CHECK_THROWS_AS(riskVectorFrom(Json::parse(R"({"positions": [[1, 2]]})")), ConfigError);
  CHECK_THROWS_AS(riskVectorFrom(Json::parse(R"({"probabilities": [1], "positions": [[1], [2, 3]]})")), ConfigError);
  CHECK_THROWS_AS(riskVectorFrom(Json::parse(R"({"probabilities": [1], "positions": [["a"]]})")), ConfigError);
  // Shape and probability checks come from the domain types.
  CHECK_THROWS_AS(riskVectorFrom(Json::parse(R"({"probabilities": [0.5, 0.5], "positions": [[1]]})")), ShapeError);
  CHECK_THROWS_AS(riskVectorFrom(Json::parse(R"({"probabilities": [0.7, 0.7], "positions": [[1, 2]]})")), DomainError);
}

TEST_CASE("gaussian and network round trips") {
  Matrix q(2, 2);
  q << 1, 0.3, 0.3, 4;
  const GaussianSystem g(Vector::Constant(2, 0.5), q);
  const GaussianSystem gb = gaussianFrom(Json::parse(toJson(g).dump()));
  CHECK(gb.mu() == g.mu());
  CHECK(gb.covariance() == g.covariance());

  const NetworkModel net = NetworkModel::homogeneous(3, 0.7, 1.2, 0.4, 0.0, 2.0);
  const NetworkModel nb = networkFrom(Json::parse(toJson(net).dump()));
  CHECK(nb.preferences() == net.preferences());
  CHECK(nb.sigma() == net.sigma());
  CHECK(nb.rhoCommon() == net.rhoCommon());
  CHECK(nb.x0() == net.x0());
  CHECK(nb.horizon() == net.horizon());
  CHECK_THROWS_AS(networkFrom(Json::parse(R"({"p": [[0]], "sigma": [1], "rhoCommon": [0], "x0": [0]})")), ConfigError);
}

TEST_CASE("aggregation, acceptance and class parsing") {
  CHECK(std::holds_alternative<SumAggregation>(aggregationFrom(Json::parse(R"({"type": "sum"})"), 2)));
  const auto s = std::get<ShortfallSum>(aggregationFrom(Json::parse(R"({"type": "shortfall"})"), 3));
  CHECK(s.critical == Vector::Zero(3));
  const auto e = std::get<ExponentialLoss>(aggregationFrom(Json::parse(R"({"type": "exponential", "alpha": [0.1, 0.2]})"), 2));
  CHECK(e.alpha[1] == 0.2);
  const auto gl = std::get<GainLossWeighted>(aggregationFrom(
      Json::parse(R"({"type": "gain-loss", "alpha": [2], "beta": [0.5], "threshold": [1]})"), 1));
  CHECK(gl.beta[0] == 0.5);
  const auto en = std::get<EisenbergNoe>(
      aggregationFrom(Json::parse(R"({"type": "eisenberg-noe", "liabilities": [[0, 0.5], [0.5, 0]]})"), 2));
  CHECK(en.liabilities(0, 1) == 0.5);
  CHECK_THROWS_AS(aggregationFrom(Json::parse(R"({"type": "median"})"), 2), ConfigError);
  CHECK_THROWS_AS(aggregationFrom(Json::parse(R"({"kind": "sum"})"), 2), ConfigError);
  CHECK_THROWS_AS(aggregationFrom(Json::parse(R"({"type": 3})"), 2), ConfigError);
  CHECK_THROWS(aggregationFrom(Json::parse(R"({"type": "exponential", "alpha": [0.1]})"), 2));

  CHECK(std::get<ExpectationFloor>(acceptanceFrom(Json::parse(R"({"type": "floor", "floor": -2})"))).floor == -2.0);
  CHECK(std::holds_alternative<WorstCase>(acceptanceFrom(Json::parse(R"({"type": "worst-case"})"))));
  CHECK(std::get<ExpectedShortfall>(acceptanceFrom(Json::parse(R"({"type": "es", "level": 0.1})"))).level == 0.1);
  CHECK_THROWS_AS(acceptanceFrom(Json::parse(R"({"type": "var"})")), ConfigError);
  CHECK_THROWS(acceptanceFrom(Json::parse(R"({"type": "es", "level": 1.5})")));

  CHECK(std::holds_alternative<Deterministic>(allocationClassFrom(Json::parse(R"({"type": "deterministic"})"), 2, 2)));
  CHECK(std::holds_alternative<FullyFlexible>(allocationClassFrom(Json::parse(R"({"type": "flexible"})"), 2, 2)));
  const auto fl = std::get<FloorConstrained>(allocationClassFrom(Json::parse(R"({"type": "floors", "floors": [-1, 0]})"), 2, 2));
  CHECK(fl.floors[0] == -1.0);
  const auto gr = std::get<Grouped>(allocationClassFrom(Json::parse(R"({"type": "grouped", "partition": "{1 3}{2}"})"), 3, 2));
  CHECK(gr.partition.groups().size() == 2);
  const auto ts = std::get<TwoStateParametric>(allocationClassFrom(Json::parse(R"({"type": "two-state", "event": [true, 0, 1]})"), 2, 3));
  CHECK(ts.event == std::vector<bool>{true, false, true});
  CHECK_THROWS_AS(allocationClassFrom(Json::parse(R"({"type": "two-state", "event": [true]})"), 2, 3), ConfigError);
  CHECK_THROWS_AS(allocationClassFrom(Json::parse(R"({"type": "grouped", "partition": 12})"), 2, 2), ConfigError);
  CHECK_THROWS_AS(allocationClassFrom(Json::parse(R"({"type": "other"})"), 2, 2), ConfigError);
}

TEST_CASE("readJson") {
  const auto path = std::filesystem::temp_directory_path() / "sysrisk_test_io.json";
  {
    std::ofstream out(path);
    out << R"({"a": [1, 2]})";
  }
  CHECK(readJson(path)["a"][1] == 2);
  {
    std::ofstream out(path);
    out << "{broken";
  }
  CHECK_THROWS_AS(readJson(path), ConfigError);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(readJson(path), ConfigError);
}

TEST_CASE("number formatting") {
  CHECK(formatNumber(-0.0) == "0");
  CHECK(formatNumber(0.0) == "0");
  CHECK(formatNumber(1.0 / 3.0) == "0.333333");
  CHECK(formatNumber(-3272600.0) == "-3.2726e+06");
  CHECK(formatNumber(2.5e-7) == "2.5e-07");
  CHECK(formatNumber(-std::numeric_limits<double>::infinity()) == "-inf");
  CHECK(formatRanking({2, 0, 1}) == "3;1;2");
  CHECK(joinNumbers(Vector::Constant(2, 0.5)) == "0.5;0.5");
  CHECK(joinNumbers(Vector::Constant(2, 0.5), ' ') == "0.5 0.5");
}

TEST_CASE("csv output") {
  CsvTable t({"name", "value"});
  t.addRow({"plain", "1"});
  t.addRow({"a,b", "say \"hi\""});
  t.addRow({"two\nlines", "2"});
  CHECK(t.rows() == 3);
  CHECK(t.str() == "name,value\nplain,1\n\"a,b\",\"say \"\"hi\"\"\"\n\"two\nlines\",2\n");
  CHECK_THROWS_AS(t.addRow({"short"}), ShapeError);

  Record a;
  a.add("x", 1.0);
  a.add("label", "p");
  Record b;
  b.add("x", -0.0);
  b.add("label", "q");
  CHECK(tableOf({a, b}).str() == "x,label\n1,p\n0,q\n");
  Record c;
  c.add("label", "r");
  c.add("x", 2.0);
  CHECK_THROWS_AS(tableOf({a, c}), ShapeError);
  CHECK_THROWS_AS(tableOf({}), ShapeError);
}

TEST_CASE("property checks serialise") {
  std::vector<PropertyCheck> checks(2);
  checks[0].property = "monotonicity";
  checks[0].trials = 10;
  checks[1].property = "convexity";
  checks[1].trials = 10;
  checks[1].failures = 1;
  checks[1].worstViolation = 0.5;
  checks[1].witness = 3;
  const Json j = toJson(checks);
  CHECK(j.size() == 2);
  CHECK(j[0]["witness"].is_null());
  CHECK(j[1]["witness"] == 3);
  CHECK(j[1]["failures"] == 1);
}
