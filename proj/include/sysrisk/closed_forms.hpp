#ifndef SYSRISK_CLOSED_FORMS_HPP
#define SYSRISK_CLOSED_FORMS_HPP

#include "sysrisk/core.hpp"

#include <limits>

namespace sysrisk {

/// Discrete Expected Shortfall (Rockafellar-Uryasev): average of the worst q-tail,
/// splitting the atom at the lower q-quantile. Positive values are losses.
double expectedShortfall(const Eigen::Ref<const Vector>& z, const ScenarioSpace& space, double level);

/// Lower bounds gamma_i in [-inf, 0] on Y^i for the constrained class C_gamma.
class FloorVector {
 public:
  static constexpr double kUnbounded = -std::numeric_limits<double>::infinity();

  explicit FloorVector(Vector floors);
  static FloorVector zeros(Index n) { return FloorVector(Vector::Zero(n)); }
  static FloorVector unbounded(Index n) { return FloorVector(Vector::Constant(n, kUnbounded)); }

  Index size() const { return floors_.size(); }
  const Vector& floors() const { return floors_; }
  double operator[](Index i) const { return floors_[i]; }
  bool isUnbounded(Index i) const { return floors_[i] == kUnbounded; }

 private:
  Vector floors_;
};

/// Cash injected after aggregating by sum_i -(X^i)^-.
double rhoAg(const RiskVector& x, const AcceptanceCriterion& criterion);

struct DeterministicWorstCase {
  double rho = 0.0;
  /// m_i = -min_j X^i(w_j), the unique minimizer.
  Vector allocation;
};

/// Worst-case (or ES) acceptance of every institution with deterministic cash.
DeterministicWorstCase rhoDeterministicWC(const RiskVector& x);

/// max_j -sum_i min(X^i(w_j), -gamma_i): scenario-dependent cash bounded below by the floors.
double rhoConstrainedWC(const RiskVector& x, const FloorVector& floors);

/// One optimal Y in C_gamma: Y_i = max(-X^i, gamma_i) with the slack to rho
/// placed on the first institution. Columns sum to rhoConstrainedWC.
Matrix constrainedWCWitness(const RiskVector& x, const FloorVector& floors);

}  // namespace sysrisk

#endif  // SYSRISK_CLOSED_FORMS_HPP
