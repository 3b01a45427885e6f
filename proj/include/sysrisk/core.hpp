#ifndef SYSRISK_CORE_HPP
#define SYSRISK_CORE_HPP

#include <Eigen/Dense>

#include <cstddef>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace sysrisk {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

namespace tol {
/// Order and acceptance comparisons.
inline constexpr double kOrder = 1e-12;
/// Matrix factorizations (PSD checks).
inline constexpr double kFactor = 1e-10;
/// Probability vectors must sum to one within this.
inline constexpr double kProbabilitySum = 1e-12;
/// Scenario-constant totals for cash valuation.
inline constexpr double kCashConstant = 1e-9;
}  // namespace tol

// ---------------------------------------------------------------------------
// Errors. The CLI maps these onto exit codes, so keep the hierarchy flat.
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite or out-of-range input.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Dimensions of the arguments disagree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// The problem has no solution (e.g. the acceptance level cannot be met).
class InfeasibleError : public Error {
 public:
  using Error::Error;
};

/// An iterative method ran out of budget.
class ConvergenceError : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Probability spaces and positions
// ---------------------------------------------------------------------------

/// Finite probability space {w_1..w_M} with P(w_j) = p_j in (0,1).
class ScenarioSpace {
 public:
  explicit ScenarioSpace(Vector probabilities);

  static ScenarioSpace uniform(Index scenarios);

  Index size() const { return probabilities_.size(); }
  const Vector& probabilities() const { return probabilities_; }
  double operator[](Index j) const { return probabilities_[j]; }

  template <typename Derived>
  double expectation(const Eigen::MatrixBase<Derived>& z) const {
    if (z.size() != size()) throw ShapeError("expectation: scenario count mismatch");
    return probabilities_.dot(z.derived().template cast<double>());
  }

  bool operator==(const ScenarioSpace& other) const {
    return probabilities_ == other.probabilities_;
  }

 private:
  Vector probabilities_;
};

/// N x M matrix of institution positions (row i = institution, column j = scenario).
class RiskVector {
 public:
  RiskVector(Matrix values, ScenarioSpace space);

  Index institutions() const { return values_.rows(); }
  Index scenarios() const { return values_.cols(); }
  const Matrix& values() const { return values_; }
  const ScenarioSpace& space() const { return space_; }

  /// Per-scenario totals sum_i X^i(w_j).
  Vector scenarioSums() const { return values_.colwise().sum().transpose(); }
  /// E[X^i] for each institution.
  Vector expectations() const { return values_ * space_.probabilities(); }

  RiskVector shifted(const Vector& cash) const;
  RiskVector withValues(Matrix values) const { return RiskVector(std::move(values), space_); }

 private:
  Matrix values_;
  ScenarioSpace space_;
};

/// X ~ N(mu, Q).
class GaussianSystem {
 public:
  GaussianSystem(Vector mu, Matrix covariance);

  Index size() const { return mu_.size(); }
  const Vector& mu() const { return mu_; }
  const Matrix& covariance() const { return q_; }
  Vector sigmas() const { return q_.diagonal().cwiseSqrt(); }

 private:
  Vector mu_;
  Matrix q_;
};

// ---------------------------------------------------------------------------
// Acceptance criteria
// ---------------------------------------------------------------------------

/// E[Z] >= floor. A tolerance gamma maps to floor = -gamma.
struct ExpectationFloor {
  double floor = 0.0;
};

/// Z >= 0 almost surely.
struct WorstCase {};

/// ES_q(Z) <= 0.
struct ExpectedShortfall {
  double level = 0.05;
};

using AcceptanceCriterion = std::variant<ExpectationFloor, WorstCase, ExpectedShortfall>;

void validate(const AcceptanceCriterion& criterion);

// ---------------------------------------------------------------------------
// Aggregation rules. All variants are oriented "larger is better".
// ---------------------------------------------------------------------------

/// sum_i x_i
struct SumAggregation {};

/// sum_i -(x_i - d_i)^-
struct ShortfallSum {
  Vector critical;
};

/// sum_i -exp(-alpha_i x_i)
struct ExponentialLoss {
  Vector alpha;
};

/// sum_i -alpha_i x_i^- + sum_i beta_i (x_i - v_i)^+
struct GainLossWeighted {
  Vector alpha;
  Vector beta;
  Vector threshold;
};

/// Minus the Chen-Iyengar-Moallemi contagion cost: -(sum_i y_i) with y the
/// least clearing vector of y = (x + Pi y)^+.
struct EisenbergNoe {
  Matrix liabilities;
};

using Aggregation =
    std::variant<SumAggregation, ShortfallSum, ExponentialLoss, GainLossWeighted, EisenbergNoe>;

/// Throws DomainError when parameters break the variant's invariants.
void validate(const Aggregation& aggregation, Index institutions);

/// Spectral radius of a nonnegative matrix (Collatz-Wielandt bounded power iteration).
double spectralRadius(const Matrix& nonnegative);

double aggregate(const Aggregation& aggregation, const Eigen::Ref<const Vector>& x);

/// Lambda applied scenario-by-scenario to the columns of positions.
Vector aggregateScenarios(const Aggregation& aggregation, const Matrix& positions);

/// Least nonnegative solution of y = (x + Pi y)^+, by Picard iteration from 0.
Vector clearingVector(const Matrix& liabilities, const Eigen::Ref<const Vector>& x);

bool isAcceptable(const AcceptanceCriterion& criterion, const Eigen::Ref<const Vector>& z,
                  const ScenarioSpace& space);

/// Componentwise order: x1 >= x2 in every institution and scenario.
bool dominates(const RiskVector& x1, const RiskVector& x2);

// ---------------------------------------------------------------------------
// Valuation and results
// ---------------------------------------------------------------------------

/// pi(Y) = sum_n Y^n, defined only when that sum is scenario-constant.
struct TotalCash {};

using Valuation = std::variant<TotalCash>;

double value(const Valuation& valuation, const Matrix& allocation);

/// Indices ordered by decreasing expected injection; ties keep the lower index first.
std::vector<Index> rankByExpectation(const Vector& expected);

struct Diagnostics {
  int iterations = 0;
  double residual = 0.0;
  bool converged = true;
  std::string method;
};

struct RiskResult {
  double rho = 0.0;
  /// N x M optimal allocation Y*.
  Matrix allocation;
  /// Structured parameters when the class has them (m, alpha, group constants).
  Vector parameters;
  std::vector<Index> ranking;
  Diagnostics diagnostics;
};

}  // namespace sysrisk

#endif  // SYSRISK_CORE_HPP
