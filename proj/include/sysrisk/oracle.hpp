#ifndef SYSRISK_ORACLE_HPP
#define SYSRISK_ORACLE_HPP

#include "sysrisk/closed_forms.hpp"
#include "sysrisk/core.hpp"
#include "sysrisk/finite_alloc.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace sysrisk {

// ---------------------------------------------------------------------------
// Allocation classes on a finite space
// ---------------------------------------------------------------------------

/// C = R^N.
struct Deterministic {};
/// Scenario-dependent Y with scenario-constant total.
struct FullyFlexible {};
/// FullyFlexible with Y^i >= gamma_i.
struct FloorConstrained {
  FloorVector floors;
};
/// Totals fixed per block of a partition.
struct Grouped {
  GroupPartition partition;
};
/// Y = m + alpha 1_D with sum alpha = 0; `event[j]` marks scenario j in D.
struct TwoStateParametric {
  std::vector<bool> event;
};

using AllocationClass = std::variant<Deterministic, FullyFlexible, FloorConstrained, Grouped, TwoStateParametric>;

/// vec(Y) = T z (column-major N x M), cost w'z. `shift` moves every Y^i by +1/N,
/// which raises the cost by exactly one.
struct AffineClass {
  Matrix map;
  Vector cost;
  Vector shift;
  /// Finite lower bounds on Y entries (FloorConstrained only), per institution.
  std::optional<Vector> floors;
};

AffineClass parameterize(const AllocationClass& cls, Index institutions, Index scenarios);

// ---------------------------------------------------------------------------
// Numeric risk measure
// ---------------------------------------------------------------------------

enum class OracleEngine { Auto, LinearProgram, LagrangeNewton, Penalty };

struct OracleOptions {
  OracleEngine engine = OracleEngine::Auto;
  /// Above this many tableau entries Auto skips the LP engine.
  double maxTableauEntries = 4e6;
};

/// Minimize pi(Y) over Y in cls with Lambda(X + Y) acceptable. `parameters` holds z
/// of the class parameterization; `diagnostics.method` names the engine used.
RiskResult numericRho(const RiskVector& x, const AllocationClass& cls, const Aggregation& lambda,
                      const AcceptanceCriterion& acc, const OracleOptions& options = {});

/// Increasing acceptance family x -> ExpectationFloor{-theta(x)}, theta tabulated
/// on ascending knots and interpolated linearly (constant beyond the ends).
class AcceptanceFamily {
 public:
  AcceptanceFamily(std::vector<double> knots, std::vector<double> theta);
  static AcceptanceFamily constant(double theta);

  double theta(double cost) const;
  ExpectationFloor at(double cost) const { return ExpectationFloor{-theta(cost)}; }

 private:
  std::vector<double> knots_;
  std::vector<double> theta_;
};

struct FamilyTrace {
  double cost = 0.0;
  bool feasible = false;
};

/// inf pi(Y) subject to E[Lambda(X + Y)] >= -theta(pi(Y)), by bisection on the cost level.
/// `trace` (optional) receives every feasibility probe.
RiskResult numericRhoFamily(const RiskVector& x, const AllocationClass& cls, const Aggregation& lambda,
                            const AcceptanceFamily& family, std::vector<FamilyTrace>* trace = nullptr,
                            const OracleOptions& options = {});

// ---------------------------------------------------------------------------
// Property harness
// ---------------------------------------------------------------------------

struct PropertyTrial {
  RiskVector x1;
  /// Dominates x1 componentwise.
  RiskVector x2;
  double lambda = 0.5;
};

using RiskEvaluator = std::function<double(const RiskVector&)>;
using InstanceSampler = std::function<PropertyTrial(std::uint64_t trial)>;

struct PropertyCheck {
  std::string property;
  int trials = 0;
  int failures = 0;
  double worstViolation = 0.0;
  /// Trial index of the worst violation, -1 when none.
  long witness = -1;
};

/// Random trials: N in {2,3,4}, M in {2..6}, positions uniform on [-100, 100],
/// probabilities from normalized exponentials, X2 = X1 + U[0, 50]. Counter-based in `trial`.
InstanceSampler defaultSampler(std::uint64_t seed);

/// Monotonicity, quasi-convexity and (when `convex`) convexity of rho over the sampled trials.
std::vector<PropertyCheck> checkStructuralProperties(const RiskEvaluator& rho, const InstanceSampler& sampler,
                                                     int trials, bool convex, double tolerance = 1e-6);

struct InvarianceReport {
  bool holds = true;
  double baseRho = 0.0;
  double worstDeviation = 0.0;
  /// Redistributed positions that produced the worst deviation.
  std::optional<Matrix> witness;
};

/// rho must not change when X is redistributed across institutions with unchanged scenario sums.
InvarianceReport checkSumReduction(const RiskVector& x, const AllocationClass& cls, const Aggregation& lambda,
                                   const AcceptanceCriterion& acc, int transfers = 20, std::uint64_t seed = 7,
                                   double tolerance = 1e-6);

/// |rho(X + v) - (rho(X) - sum v)| <= tolerance.
InvarianceReport checkCashInvariance(const RiskVector& x, const AllocationClass& cls, const Aggregation& lambda,
                                     const AcceptanceCriterion& acc, const Vector& v, double tolerance = 1e-6);

}  // namespace sysrisk

#endif  // SYSRISK_ORACLE_HPP
