#include "sysrisk/core.hpp"

#include "sysrisk/closed_forms.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace sysrisk {

namespace {

template <typename Derived>
void requireFinite(const Eigen::DenseBase<Derived>& values, const char* what) {
  if (!values.allFinite()) throw DomainError(std::string(what) + ": non-finite entry");
}

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};

void requireLength(const Vector& v, Index n, const char* what) {
  if (v.size() != n) throw ShapeError(std::string(what) + ": expected length " + std::to_string(n));
}

}  // namespace

ScenarioSpace::ScenarioSpace(Vector probabilities) : probabilities_(std::move(probabilities)) {
  if (probabilities_.size() < 1) throw ShapeError("ScenarioSpace: at least one scenario required");
  requireFinite(probabilities_, "ScenarioSpace");
  // A single scenario necessarily carries probability one.
  const bool single = probabilities_.size() == 1;
  for (Index j = 0; j < probabilities_.size(); ++j) {
    const double p = probabilities_[j];
    if (!(p > 0.0) || (!single && !(p < 1.0)))
      throw DomainError("ScenarioSpace: probability " + std::to_string(j) + " outside (0,1)");
  }
  if (std::abs(probabilities_.sum() - 1.0) > tol::kProbabilitySum)
    throw DomainError("ScenarioSpace: probabilities do not sum to one");
}

ScenarioSpace ScenarioSpace::uniform(Index scenarios) {
  if (scenarios < 1) throw ShapeError("ScenarioSpace::uniform: at least one scenario required");
  return ScenarioSpace(Vector::Constant(scenarios, 1.0 / static_cast<double>(scenarios)));
}

RiskVector::RiskVector(Matrix values, ScenarioSpace space)
    : values_(std::move(values)), space_(std::move(space)) {
  if (values_.rows() < 1) throw ShapeError("RiskVector: at least one institution required");
  if (values_.cols() != space_.size()) throw ShapeError("RiskVector: column count differs from scenario count");
  requireFinite(values_, "RiskVector");
}

RiskVector RiskVector::shifted(const Vector& cash) const {
  requireLength(cash, institutions(), "RiskVector::shifted");
  Matrix moved = values_;
  moved.colwise() += cash;
  return RiskVector(std::move(moved), space_);
}

GaussianSystem::GaussianSystem(Vector mu, Matrix covariance) : mu_(std::move(mu)), q_(std::move(covariance)) {
  const Index n = mu_.size();
  if (n < 1) throw ShapeError("GaussianSystem: empty mean vector");
  if (q_.rows() != n || q_.cols() != n) throw ShapeError("GaussianSystem: covariance must be N x N");
  requireFinite(mu_, "GaussianSystem mean");
  requireFinite(q_, "GaussianSystem covariance");
  if ((q_.diagonal().array() <= 0.0).any()) throw DomainError("GaussianSystem: variances must be positive");
  const double scale = q_.diagonal().maxCoeff();
  if ((q_ - q_.transpose()).cwiseAbs().maxCoeff() > tol::kOrder * std::max(1.0, scale))
    throw DomainError("GaussianSystem: covariance not symmetric");
  const Eigen::LDLT<Matrix> ldlt(q_);
  if (ldlt.info() != Eigen::Success || (ldlt.vectorD().array() < -tol::kFactor * scale).any())
    throw DomainError("GaussianSystem: covariance not positive semi-definite");
}

void validate(const AcceptanceCriterion& criterion) {
  std::visit(Overloaded{
                 [](const ExpectationFloor& a) {
                   if (!std::isfinite(a.floor)) throw DomainError("ExpectationFloor: non-finite floor");
                 },
                 [](const WorstCase&) {},
                 [](const ExpectedShortfall& a) {
                   if (!(a.level > 0.0 && a.level < 1.0)) throw DomainError("ExpectedShortfall: level outside (0,1)");
                 },
             },
             criterion);
}

double spectralRadius(const Matrix& a) {
  if (a.rows() != a.cols()) throw ShapeError("spectralRadius: matrix must be square");
  if ((a.array() < 0.0).any()) throw DomainError("spectralRadius: matrix must be nonnegative");
  const Index n = a.rows();
  if (n == 0) return 0.0;
  // Collatz-Wielandt bounds on A + I (primitive whenever A is irreducible); shift back by one.
  const Matrix shiftedA = a + Matrix::Identity(n, n);
  Vector x = Vector::Ones(n);
  for (int iter = 0; iter < 10000; ++iter) {
    const Vector y = shiftedA * x;
    const Eigen::ArrayXd ratio = y.array() / x.array();
    const double lower = ratio.minCoeff();
    const double upper = ratio.maxCoeff();
    if (upper - lower <= 1e-12 * upper) return 0.5 * (lower + upper) - 1.0;
    x = y / y.maxCoeff();
    if ((x.array() <= 1e-300).any()) break;  // reducible: fall back to a full eigen solve
  }
  const Eigen::EigenSolver<Matrix> solver(a, false);
  return solver.eigenvalues().cwiseAbs().maxCoeff();
}

void validate(const Aggregation& aggregation, Index n) {
  std::visit(Overloaded{
                 [](const SumAggregation&) {},
                 [n](const ShortfallSum& s) {
                   requireLength(s.critical, n, "ShortfallSum");
                   requireFinite(s.critical, "ShortfallSum");
                 },
                 [n](const ExponentialLoss& e) {
                   requireLength(e.alpha, n, "ExponentialLoss");
                   requireFinite(e.alpha, "ExponentialLoss");
                   if ((e.alpha.array() <= 0.0).any()) throw DomainError("ExponentialLoss: alpha must be positive");
                 },
                 [n](const GainLossWeighted& g) {
                   requireLength(g.alpha, n, "GainLossWeighted alpha");
                   requireLength(g.beta, n, "GainLossWeighted beta");
                   requireLength(g.threshold, n, "GainLossWeighted threshold");
                   requireFinite(g.alpha, "GainLossWeighted");
                   requireFinite(g.beta, "GainLossWeighted");
                   requireFinite(g.threshold, "GainLossWeighted");
                   if ((g.alpha.array() < 0.0).any() || (g.beta.array() < 0.0).any())
                     throw DomainError("GainLossWeighted: weights must be nonnegative");
                 },
                 [n](const EisenbergNoe& e) {
                   const Matrix& pi = e.liabilities;
                   if (pi.rows() != n || pi.cols() != n) throw ShapeError("EisenbergNoe: liabilities must be N x N");
                   requireFinite(pi, "EisenbergNoe");
                   if ((pi.array() < 0.0).any() || (pi.array() > 1.0).any())
                     throw DomainError("EisenbergNoe: entries must lie in [0,1]");
                   if ((pi.rowwise().sum().array() > 1.0 + tol::kOrder).any())
                     throw DomainError("EisenbergNoe: row sums must not exceed one");
                   if (spectralRadius(pi) >= 1.0 - 1e-8)
                     throw DomainError("EisenbergNoe: spectral radius must be below one");
                 },
             },
             aggregation);
}

Vector clearingVector(const Matrix& liabilities, const Eigen::Ref<const Vector>& x) {
  const Index n = x.size();
  if (liabilities.rows() != n || liabilities.cols() != n) throw ShapeError("clearingVector: dimension mismatch");
  requireFinite(x, "clearingVector");
  Vector y = Vector::Zero(n);
  constexpr int kMaxIterations = 100000;
  for (int iter = 0; iter < kMaxIterations; ++iter) {
    Vector next = (x + liabilities * y).cwiseMax(0.0);
    const double step = (next - y).cwiseAbs().maxCoeff();
    y = std::move(next);
    if (step <= 1e-12 * std::max(1.0, y.cwiseAbs().maxCoeff())) return y;
  }
  throw ConvergenceError("clearingVector: Picard iteration did not converge");
}

double aggregate(const Aggregation& aggregation, const Eigen::Ref<const Vector>& x) {
  requireFinite(x, "aggregate");
  return std::visit(
      Overloaded{
          [&](const SumAggregation&) { return x.sum(); },
          [&](const ShortfallSum& s) { return (x - s.critical).cwiseMin(0.0).sum(); },
          [&](const ExponentialLoss& e) { return -(-e.alpha.cwiseProduct(x)).array().exp().sum(); },
          [&](const GainLossWeighted& g) {
            return g.alpha.dot(x.cwiseMin(0.0)) + g.beta.dot((x - g.threshold).cwiseMax(0.0));
          },
          [&](const EisenbergNoe& e) { return -clearingVector(e.liabilities, x).sum(); },
      },
      aggregation);
}

Vector aggregateScenarios(const Aggregation& aggregation, const Matrix& positions) {
  Vector out(positions.cols());
  for (Index j = 0; j < positions.cols(); ++j) out[j] = aggregate(aggregation, positions.col(j));
  return out;
}

bool isAcceptable(const AcceptanceCriterion& criterion, const Eigen::Ref<const Vector>& z,
                  const ScenarioSpace& space) {
  if (z.size() != space.size()) throw ShapeError("isAcceptable: scenario count mismatch");
  return std::visit(Overloaded{
                        [&](const ExpectationFloor& a) { return space.expectation(z) >= a.floor - tol::kOrder; },
                        [&](const WorstCase&) { return z.minCoeff() >= -tol::kOrder; },
                        [&](const ExpectedShortfall& a) {
                          return expectedShortfall(z, space, a.level) <= tol::kOrder;
                        },
                    },
                    criterion);
}

bool dominates(const RiskVector& x1, const RiskVector& x2) {
  if (x1.values().rows() != x2.values().rows() || x1.values().cols() != x2.values().cols())
    throw ShapeError("dominates: shape mismatch");
  if (!(x1.space() == x2.space())) throw ShapeError("dominates: different scenario spaces");
  return (x1.values().array() >= x2.values().array()).all();
}

double value(const Valuation& valuation, const Matrix& allocation) {
  return std::visit(Overloaded{[&](const TotalCash&) {
                      if (allocation.size() == 0) throw ShapeError("value: empty allocation");
                      const Vector totals = allocation.colwise().sum().transpose();
                      if (totals.maxCoeff() - totals.minCoeff() > tol::kCashConstant * std::max(1.0, totals.cwiseAbs().maxCoeff()))
                        throw DomainError("value: total cash is not scenario-constant");
                      return totals.mean();
                    }},
                    valuation);
}

std::vector<Index> rankByExpectation(const Vector& expected) {
  std::vector<Index> order(static_cast<std::size_t>(expected.size()));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return expected[a] > expected[b]; });
  return order;
}

}  // namespace sysrisk
