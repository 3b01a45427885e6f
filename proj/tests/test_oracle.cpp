#include "doctest.h"
#include "oracles.hpp"
#include "sysrisk/closed_forms.hpp"
#include "sysrisk/finite_alloc.hpp"
#include "sysrisk/oracle.hpp"
#include "sysrisk/random.hpp"

#include <chrono>
#include <cmath>
#include <limits>

using namespace sysrisk;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

RiskVector fourBanks() {
  Matrix x(4, 4);
  x << 100, -50, 100, -50,  //
      50, -25, 50, -25,     //
      -25, 50, -25, 50,     //
      50, 50, -25, -25;
  return RiskVector(x, ScenarioSpace(vec({0.64, 0.16, 0.16, 0.04})));
}

RiskVector small() {
  Matrix x(2, 2);
  x << -2, 1, 3, -1;
  return RiskVector(x, ScenarioSpace::uniform(2));
}

RiskVector randomX(SplitMix64& rng, Index n, Index m, double scale = 10.0) {
  Vector p(m);
  for (Index j = 0; j < m; ++j) p[j] = -std::log(rng.uniform());
  p /= p.sum();
  Matrix x(n, m);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < m; ++j) x(i, j) = rng.uniform(-scale, scale);
  return RiskVector(x, ScenarioSpace(p));
}

double relErr(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

/// Class membership of an allocation, checked directly on Y.
void checkMembership(const AllocationClass& cls, const Matrix& y, double rho, double tol) {
  const Vector totals = y.colwise().sum().transpose();
  CHECK((totals.array() - rho).abs().maxCoeff() < tol);
  std::visit(
      [&](const auto& c) {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, Deterministic>) {
          for (Index i = 0; i < y.rows(); ++i) CHECK(y.row(i).maxCoeff() - y.row(i).minCoeff() < tol);
        } else if constexpr (std::is_same_v<T, FloorConstrained>) {
          for (Index i = 0; i < y.rows(); ++i)
            if (!c.floors.isUnbounded(i)) CHECK(y.row(i).minCoeff() >= c.floors[i] - tol);
        } else if constexpr (std::is_same_v<T, Grouped>) {
          for (const auto& members : c.partition.groups()) {
            Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(y.cols());
            for (Index k : members) sum += y.row(k);
            CHECK(sum.maxCoeff() - sum.minCoeff() < tol);
          }
        } else if constexpr (std::is_same_v<T, TwoStateParametric>) {
          for (Index i = 0; i < y.rows(); ++i) {
            double in = std::numeric_limits<double>::quiet_NaN(), out = in;
            for (Index j = 0; j < y.cols(); ++j) {
              double& ref = c.event[static_cast<std::size_t>(j)] ? in : out;
              if (std::isnan(ref)) ref = y(i, j);
              CHECK(std::abs(y(i, j) - ref) < tol);
            }
          }
        }
      },
      cls);
}

bool acceptable(const RiskVector& x, const Matrix& y, const Aggregation& lambda, const AcceptanceCriterion& acc,
                double tol) {
  const Vector z = aggregateScenarios(lambda, x.values() + y);
  return std::visit(
      [&](const auto& a) {
        using T = std::decay_t<decltype(a)>;
        if constexpr (std::is_same_v<T, ExpectationFloor>) return x.space().expectation(z) >= a.floor - tol;
        else if constexpr (std::is_same_v<T, WorstCase>) return z.minCoeff() >= -tol;
        else return expectedShortfall(z, x.space(), a.level) <= tol;
      },
      acc);
}

/// Inverse standard normal cdf by bisection.
double quantile(double u) {
  return oracle::bisect([&](double z) { return oracle::Phi(z) - u; }, -40.0, 40.0);
}

}  // namespace

TEST_CASE("class parameterizations shift every institution by 1/N at unit cost") {
  const Index n = 3, m = 4;
  const std::vector<AllocationClass> classes = {
      Deterministic{}, FullyFlexible{}, FloorConstrained{FloorVector(vec({0, -1, FloorVector::kUnbounded}))},
      Grouped{GroupPartition::parse("{1 3}{2}", 3)}, TwoStateParametric{{true, false, false, true}}};
  SplitMix64 rng(1);
  for (const auto& cls : classes) {
    const AffineClass a = parameterize(cls, n, m);
    CHECK(a.cost.dot(a.shift) == doctest::Approx(1.0).epsilon(1e-14));
    const Vector moved = a.map * a.shift;
    CHECK((moved.array() - 1.0 / n).abs().maxCoeff() < 1e-14);
    // Random parameters map into the class with total equal to the cost.
    Vector z(a.map.cols());
    for (Index k = 0; k < z.size(); ++k) z[k] = rng.uniform(-3, 3);
    const Vector flat = a.map * z;
    const Matrix y = Eigen::Map<const Matrix>(flat.data(), n, m);
    if (!std::holds_alternative<FloorConstrained>(cls)) checkMembership(cls, y, a.cost.dot(z), 1e-12);
  }
  CHECK_THROWS_AS(parameterize(TwoStateParametric{{true}}, 2, 3), ShapeError);
}

TEST_CASE("Newton engine matches the grouped closed form on every partition") {
  const RiskVector x = fourBanks();
  const Vector alphas = Vector::Constant(4, 0.3);
  for (const auto& part : enumeratePartitions(4)) {
    const RiskResult r = numericRho(x, Grouped{part}, ExponentialLoss{alphas}, ExpectationFloor{-50.0});
    const GroupedSolution exact = solveGrouped(x, alphas, 50.0, part);
    CAPTURE(part.str());
    CHECK(r.diagnostics.method == "newton");
    CHECK(relErr(r.rho, exact.rho) < 1e-6);
    // Entries whose exponential weight is ~1e-13 of gamma are numerically free, so
    // compare the weights alpha e^{-alpha (X + Y)} that actually pin the optimum.
    const Matrix wNumeric = (-0.3 * (x.values() + r.allocation)).array().exp();
    const Matrix wExact = (-0.3 * (x.values() + exact.allocation)).array().exp();
    CHECK((wNumeric - wExact).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("penalty engine agrees with the closed form") {
  const RiskVector x = fourBanks();
  const Vector alphas = Vector::Constant(4, 0.3);
  OracleOptions options;
  options.engine = OracleEngine::Penalty;
  for (const char* text : {"{1}{2}{3}{4}", "{1 3}{2}{4}", "{1 2 3 4}"}) {
    const GroupPartition part = GroupPartition::parse(text, 4);
    const RiskResult r = numericRho(x, Grouped{part}, ExponentialLoss{alphas}, ExpectationFloor{-50.0}, options);
    CHECK(r.diagnostics.method == "penalty");
    CHECK(r.diagnostics.converged);
    CHECK(relErr(r.rho, solveGrouped(x, alphas, 50.0, part).rho) < 1e-5);
  }
}

TEST_CASE("worst-case instances match the closed forms") {
  const ShortfallSum shortfall{Vector::Zero(2)};
  CHECK(numericRho(small(), FloorConstrained{FloorVector::zeros(2)}, shortfall, WorstCase{}).rho == doctest::Approx(2.0));
  CHECK(numericRho(small(), Deterministic{}, shortfall, WorstCase{}).rho == doctest::Approx(3.0));
  CHECK(numericRho(small(), FullyFlexible{}, shortfall, WorstCase{}).rho == doctest::Approx(0.0));
  CHECK(rhoAg(small(), WorstCase{}) == doctest::Approx(2.0));

  SplitMix64 rng(13);
  for (int t = 0; t < 100; ++t) {
    const Index n = 2 + static_cast<Index>(rng.next() % 3);
    const RiskVector x = randomX(rng, n, 2 + static_cast<Index>(rng.next() % 5));
    Vector f(n);
    for (Index i = 0; i < n; ++i) f[i] = rng.uniform() < 0.25 ? FloorVector::kUnbounded : -rng.uniform(0, 5);
    const ShortfallSum agg{Vector::Zero(n)};
    const double scale = 1e-12 * std::max(1.0, x.values().cwiseAbs().maxCoeff());
    CHECK(std::abs(numericRho(x, FloorConstrained{FloorVector(f)}, agg, WorstCase{}).rho - rhoConstrainedWC(x, FloorVector(f))) < scale);
    CHECK(std::abs(numericRho(x, Deterministic{}, agg, WorstCase{}).rho - rhoDeterministicWC(x).rho) < scale);
    // ES acceptance before aggregation gives the worst-case values.
    const double q = rng.uniform(0.05, 0.5);
    CHECK(std::abs(numericRho(x, Deterministic{}, agg, ExpectedShortfall{q}).rho - rhoDeterministicWC(x).rho) < scale);
    CHECK(std::abs(numericRho(x, FloorConstrained{FloorVector(f)}, agg, ExpectedShortfall{q}).rho -
                   rhoConstrainedWC(x, FloorVector(f))) < scale);
  }
}

TEST_CASE("quantized Gaussian reproduces the deterministic optimum") {
  // 100 equal-probability bins per factor, each represented by its conditional mean.
  const int k = 100;
  Vector reps(k);
  for (int b = 0; b < k; ++b) {
    const double lo = b == 0 ? -40.0 : quantile(static_cast<double>(b) / k);
    const double hi = b == k - 1 ? 40.0 : quantile(static_cast<double>(b + 1) / k);
    reps[b] = k * (oracle::phi(lo) - oracle::phi(hi));
  }
  Matrix x(2, k * k);
  for (int a = 0; a < k; ++a)
    for (int b = 0; b < k; ++b) {
      x(0, a * k + b) = reps[a];
      x(1, a * k + b) = 3.0 * reps[b];
    }
  const RiskVector rv(x, ScenarioSpace::uniform(k * k));
  const RiskResult r = numericRho(rv, Deterministic{}, ShortfallSum{Vector::Zero(2)}, ExpectationFloor{-0.7});
  CHECK(std::abs(r.rho - 2.3088) <= 0.01);
  CHECK(r.diagnostics.converged);
}

TEST_CASE("acceptance families") {
  const RiskVector x = fourBanks();
  const ShortfallSum agg{Vector::Zero(4)};
  // Constant theta collapses to a fixed floor.
  const RiskResult fixed = numericRho(x, Deterministic{}, agg, ExpectationFloor{-7.0});
  const RiskResult fam = numericRhoFamily(x, Deterministic{}, agg, AcceptanceFamily::constant(7.0));
  CHECK(fam.rho == doctest::Approx(fixed.rho).epsilon(1e-8));

  // theta(m) = m, one bank, Sum: smallest m with E[X] + m >= -m.
  Matrix one(1, 3);
  one << -4, 1, -6;
  const RiskVector single(one, ScenarioSpace::uniform(3));
  const RiskResult half = numericRhoFamily(single, Deterministic{}, SumAggregation{},
                                           AcceptanceFamily({-100.0, 100.0}, {-100.0, 100.0}));
  CHECK(half.rho == doctest::Approx(-single.expectations()[0] / 2.0).epsilon(1e-8));

  // Strictly increasing theta on two banks never costs more than theta frozen at theta(0),
  // provided that constant-theta optimum has nonnegative cost (costs above 0 only relax).
  const RiskVector two = small().shifted(vec({-2, -2}));
  const AcceptanceFamily rising({-10.0, 0.0, 10.0}, {0.2, 0.5, 3.0});
  std::vector<FamilyTrace> trace;
  const RiskResult up = numericRhoFamily(two, FullyFlexible{}, ShortfallSum{Vector::Zero(2)}, rising, &trace);
  const RiskResult base = numericRho(two, FullyFlexible{}, ShortfallSum{Vector::Zero(2)}, ExpectationFloor{-0.5});
  REQUIRE(base.rho >= 0.0);
  CHECK(up.rho <= base.rho + 1e-9);
  // Feasible probes form an up-set.
  double lowestFeasible = std::numeric_limits<double>::infinity();
  double highestInfeasible = -std::numeric_limits<double>::infinity();
  for (const auto& probe : trace) {
    if (probe.feasible) lowestFeasible = std::min(lowestFeasible, probe.cost);
    else highestInfeasible = std::max(highestInfeasible, probe.cost);
  }
  CHECK(trace.size() > 5);
  CHECK(highestInfeasible < lowestFeasible);
  // The witness meets the family's acceptance at its own cost.
  const Vector z = aggregateScenarios(ShortfallSum{Vector::Zero(2)}, two.values() + up.allocation);
  CHECK(two.space().expectation(z) >= -rising.theta(up.rho) - 1e-7);

  CHECK_THROWS_AS(AcceptanceFamily({0.0, 0.0}, {1.0, 2.0}), DomainError);
  CHECK_THROWS_AS(AcceptanceFamily({0.0, 1.0}, {2.0, 1.0}), DomainError);
}

TEST_CASE("structural properties over 1000 trials") {
  const auto sampler = defaultSampler(2024);
  // Convex configuration: exponential loss, expectation floor, grouped cash.
  const RiskEvaluator grouped = [](const RiskVector& x) {
    const Index n = x.institutions();
    std::vector<int> labels(static_cast<std::size_t>(n), 0);
    for (Index i = 1; i < n; ++i) labels[static_cast<std::size_t>(i)] = i == 1 ? 0 : 1;
    return numericRho(x, Grouped{GroupPartition::fromLabels(labels)}, ExponentialLoss{Vector::Constant(n, 0.02)},
                      ExpectationFloor{-5.0})
        .rho;
  };
  const auto t0 = std::chrono::steady_clock::now();
  for (const auto& check : checkStructuralProperties(grouped, sampler, 1000, true)) {
    CAPTURE(check.property);
    CHECK(check.trials == 1000);
    CHECK(check.failures == 0);
    CHECK(check.worstViolation <= 1e-6);
  }
  // Deterministic worst case.
  const RiskEvaluator worst = [](const RiskVector& x) {
    return numericRho(x, Deterministic{}, ShortfallSum{Vector::Zero(x.institutions())}, WorstCase{}).rho;
  };
  for (const auto& check : checkStructuralProperties(worst, sampler, 1000, true)) CHECK(check.failures == 0);
  // A linear functional is trivially quasi-convex.
  const RiskEvaluator linear = [](const RiskVector& x) { return -x.space().expectation(x.scenarioSums()); };
  for (const auto& check : checkStructuralProperties(linear, sampler, 1000, true)) CHECK(check.failures == 0);
  CHECK(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() < 60.0);

  // The harness does catch a violation.
  const RiskEvaluator broken = [](const RiskVector& x) { return x.values().squaredNorm(); };
  const auto report = checkStructuralProperties(broken, sampler, 50, true);
  CHECK(report.front().property == "monotonicity");
  CHECK(report.front().failures > 0);
  CHECK(report.front().witness >= 0);
}

TEST_CASE("sum reduction under full flexibility") {
  const RiskVector x = fourBanks();
  const ExponentialLoss loss{Vector::Constant(4, 0.3)};
  const InvarianceReport flexible = checkSumReduction(x, FullyFlexible{}, loss, ExpectationFloor{-50.0});
  CHECK(flexible.holds);
  CHECK(flexible.worstDeviation <= 1e-6);
  const InvarianceReport wc = checkSumReduction(x, FullyFlexible{}, ShortfallSum{Vector::Zero(4)}, WorstCase{});
  CHECK(wc.holds);

  // Moving all of X2 into X1, and permuting, leave rho unchanged.
  Matrix moved = x.values();
  moved.row(0) += moved.row(1);
  moved.row(1).setZero();
  const double base = numericRho(x, FullyFlexible{}, loss, ExpectationFloor{-50.0}).rho;
  CHECK(numericRho(x.withValues(moved), FullyFlexible{}, loss, ExpectationFloor{-50.0}).rho == doctest::Approx(base).epsilon(1e-8));
  Matrix permuted = x.values();
  permuted.row(0).swap(permuted.row(3));
  CHECK(numericRho(x.withValues(permuted), FullyFlexible{}, loss, ExpectationFloor{-50.0}).rho == doctest::Approx(base).epsilon(1e-8));

  // Binding floors break the invariance; the witness is recorded.
  const InvarianceReport floors =
      checkSumReduction(x, FloorConstrained{FloorVector::zeros(4)}, ShortfallSum{Vector::Zero(4)}, WorstCase{});
  CHECK_FALSE(floors.holds);
  CHECK(floors.worstDeviation > 1.0);
  REQUIRE(floors.witness.has_value());
  CHECK((floors.witness->colwise().sum() - x.values().colwise().sum()).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("cash invariance") {
  const RiskVector x = fourBanks();
  const ShortfallSum agg{Vector::Zero(4)};
  CHECK(checkCashInvariance(x, Deterministic{}, agg, WorstCase{}, Vector::Zero(4)).holds);
  const InvarianceReport wc = checkCashInvariance(small(), Deterministic{}, ShortfallSum{Vector::Zero(2)}, WorstCase{}, vec({1, -1}));
  CHECK(wc.holds);
  CHECK(wc.worstDeviation < 1e-12);
  const InvarianceReport grouped = checkCashInvariance(x, Grouped{GroupPartition::parse("{1 3}{2}{4}", 4)},
                                                       ExponentialLoss{Vector::Constant(4, 0.3)},
                                                       ExpectationFloor{-50.0}, vec({3, 0, -1, 0}));
  CHECK(grouped.holds);
  CHECK(grouped.worstDeviation <= 1e-6);
}

TEST_CASE("witnesses belong to their class and are acceptable") {
  SplitMix64 rng(77);
  for (int t = 0; t < 60; ++t) {
    const Index n = 2 + static_cast<Index>(rng.next() % 3);
    const Index m = 2 + static_cast<Index>(rng.next() % 4);
    const RiskVector x = randomX(rng, n, m);
    Vector f(n);
    for (Index i = 0; i < n; ++i) f[i] = -rng.uniform(0, 5);
    std::vector<bool> event(static_cast<std::size_t>(m));
    for (Index j = 0; j < m; ++j) event[static_cast<std::size_t>(j)] = j % 2 == 0;
    const auto parts = enumeratePartitions(n);
    const std::vector<AllocationClass> classes = {Deterministic{}, FullyFlexible{}, FloorConstrained{FloorVector(f)},
                                                  Grouped{parts[rng.next() % parts.size()]}, TwoStateParametric{event}};
    Matrix pi = Matrix::Zero(n, n);
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < n; ++j)
        if (i != j) pi(i, j) = 0.8 / static_cast<double>(n - 1);
    const std::vector<std::pair<Aggregation, AcceptanceCriterion>> configs = {
        {ExponentialLoss{Vector::Constant(n, 0.2)}, ExpectationFloor{-3.0}},
        {ShortfallSum{Vector::Zero(n)}, WorstCase{}},
        {ShortfallSum{Vector::Constant(n, 1.0)}, ExpectedShortfall{0.3}},
        {GainLossWeighted{Vector::Constant(n, 2.0), Vector::Zero(n), Vector::Zero(n)}, ExpectationFloor{-1.0}},
        {EisenbergNoe{pi}, ExpectationFloor{-2.0}},
        {SumAggregation{}, ExpectationFloor{1.0}}};
    for (const auto& cls : classes) {
      for (const auto& [lambda, acc] : configs) {
        CAPTURE(t);
        if (std::holds_alternative<EisenbergNoe>(lambda) && std::holds_alternative<FloorConstrained>(cls)) {
          // Y = floors is the most favourable allocation; infeasibility must be genuine.
          const Matrix atFloors = f.replicate(1, m);
          if (!acceptable(x, atFloors, lambda, acc, 0.0)) {
            CHECK_THROWS_AS(numericRho(x, cls, lambda, acc), InfeasibleError);
            continue;
          }
        }
        const RiskResult r = numericRho(x, cls, lambda, acc);
        CAPTURE(r.diagnostics.method);
        // The contagion cost falls as positions fall, so only floors keep it bounded.
        if (std::holds_alternative<EisenbergNoe>(lambda) && !std::holds_alternative<FloorConstrained>(cls)) {
          CHECK(r.rho == -std::numeric_limits<double>::infinity());
          continue;
        }
        REQUIRE(std::isfinite(r.rho));
        checkMembership(cls, r.allocation, r.rho, 1e-7);
        CHECK(acceptable(x, r.allocation, lambda, acc, 1e-6));
        CHECK(r.ranking.size() == static_cast<std::size_t>(n));
      }
    }
  }
}

TEST_CASE("engine selection and error paths") {
  const RiskVector x = fourBanks();
  CHECK(numericRho(x, FullyFlexible{}, ShortfallSum{Vector::Zero(4)}, WorstCase{}).diagnostics.method == "lp");
  CHECK(numericRho(x, FullyFlexible{}, ExponentialLoss{Vector::Constant(4, 0.3)}, ExpectationFloor{-50}).diagnostics.method == "newton");
  OracleOptions tiny;
  tiny.maxTableauEntries = 10;
  CHECK(numericRho(x, Deterministic{}, ShortfallSum{Vector::Zero(4)}, ExpectationFloor{-30}, tiny).diagnostics.method == "penalty");

  CHECK_THROWS_AS(numericRho(x, FullyFlexible{}, ExponentialLoss{Vector::Constant(4, 0.3)}, WorstCase{}), InfeasibleError);
  CHECK_THROWS_AS(numericRho(x, FullyFlexible{}, ExponentialLoss{Vector::Constant(4, 0.3)}, ExpectationFloor{0.0}), InfeasibleError);
  // Floors at zero cannot absorb a scenario with a negative total under worst-case acceptance.
  Matrix neg(2, 2);
  neg << -1, -1, -1, -1;
  CHECK_THROWS_AS(numericRho(RiskVector(neg, ScenarioSpace::uniform(2)), FloorConstrained{FloorVector::zeros(2)},
                             EisenbergNoe{Matrix::Zero(2, 2)}, ExpectationFloor{0.5}),
                  InfeasibleError);
  // A zero loss weight lets cash be withdrawn from that institution without limit.
  const RiskResult unbounded =
      numericRho(small(), FullyFlexible{}, GainLossWeighted{vec({1, 0}), Vector::Zero(2), Vector::Zero(2)}, ExpectationFloor{-1});
  CHECK(unbounded.rho == -std::numeric_limits<double>::infinity());
  CHECK(unbounded.allocation.size() == 0);
  // Too many free variables.
  const RiskVector wide(Matrix::Zero(5, 20), ScenarioSpace::uniform(20));
  CHECK_THROWS_AS(numericRho(wide, FullyFlexible{}, SumAggregation{}, ExpectationFloor{0}), ShapeError);
}
