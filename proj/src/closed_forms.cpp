#include "sysrisk/closed_forms.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace sysrisk {

double expectedShortfall(const Eigen::Ref<const Vector>& z, const ScenarioSpace& space, double level) {
  if (!(level > 0.0 && level < 1.0)) throw DomainError("expectedShortfall: level outside (0,1)");
  if (z.size() != space.size()) throw ShapeError("expectedShortfall: scenario count mismatch");
  std::vector<Index> order(static_cast<std::size_t>(z.size()));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return z[a] < z[b]; });

  double mass = 0.0;
  double tail = 0.0;
  for (const Index j : order) {
    const double take = std::min(space[j], level - mass);
    if (take <= 0.0) break;
    tail += take * z[j];
    mass += take;
  }
  return -tail / level;
}

FloorVector::FloorVector(Vector floors) : floors_(std::move(floors)) {
  for (Index i = 0; i < floors_.size(); ++i) {
    if (std::isnan(floors_[i]) || floors_[i] > 0.0 || floors_[i] == std::numeric_limits<double>::infinity())
      throw DomainError("FloorVector: floors must lie in [-inf, 0]");
  }
}

namespace {

// Institution-ordered column sums. Written out so that every measure built on
// them rounds identically, which keeps the boundary identities exact.
Vector columnTotals(const Matrix& y) {
  Vector out = Vector::Zero(y.cols());
  for (Index j = 0; j < y.cols(); ++j)
    for (Index i = 0; i < y.rows(); ++i) out[j] += y(i, j);
  return out;
}

}  // namespace

double rhoAg(const RiskVector& x, const AcceptanceCriterion& criterion) {
  validate(criterion);
  const Vector aggregated = -columnTotals(-x.values().cwiseMin(0.0));
  if (std::holds_alternative<WorstCase>(criterion)) return -aggregated.minCoeff();
  if (const auto* es = std::get_if<ExpectedShortfall>(&criterion))
    return expectedShortfall(aggregated, x.space(), es->level);
  // E[Lambda(X)] + m >= b
  return std::get<ExpectationFloor>(criterion).floor - x.space().expectation(aggregated);
}

DeterministicWorstCase rhoDeterministicWC(const RiskVector& x) {
  DeterministicWorstCase out;
  out.allocation = -x.values().rowwise().minCoeff();
  out.rho = out.allocation.sum();
  return out;
}

namespace {

// Y*_i(w_j) = -min(X^i(w_j), -gamma_i); -inf floors never bind.
Matrix floorBoundInjection(const RiskVector& x, const FloorVector& floors) {
  if (floors.size() != x.institutions()) throw ShapeError("rhoConstrainedWC: floor count differs from N");
  Matrix y = -x.values();
  for (Index i = 0; i < y.rows(); ++i) {
    if (!floors.isUnbounded(i)) y.row(i) = y.row(i).cwiseMax(floors[i]);
  }
  return y;
}

}  // namespace

double rhoConstrainedWC(const RiskVector& x, const FloorVector& floors) {
  return columnTotals(floorBoundInjection(x, floors)).maxCoeff();
}

Matrix constrainedWCWitness(const RiskVector& x, const FloorVector& floors) {
  Matrix y = floorBoundInjection(x, floors);
  const Eigen::RowVectorXd totals = y.colwise().sum();
  y.row(0) += (Eigen::RowVectorXd::Constant(totals.size(), totals.maxCoeff()) - totals);
  return y;
}

}  // namespace sysrisk
