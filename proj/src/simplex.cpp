#include "sysrisk/simplex.hpp"

#include <cmath>
#include <limits>

namespace sysrisk {

Index LinearProgram::addVariable(double cost, bool nonnegative) {
  cost_.push_back(cost);
  nonnegative_.push_back(nonnegative);
  return static_cast<Index>(cost_.size()) - 1;
}

void LinearProgram::addRow(std::vector<std::pair<Index, double>> coeffs, Sense sense, double rhs) {
  for (const auto& [k, a] : coeffs) {
    if (k < 0 || k >= variables()) throw ShapeError("LinearProgram: row references an unknown variable");
    if (!std::isfinite(a)) throw DomainError("LinearProgram: non-finite coefficient");
  }
  if (!std::isfinite(rhs)) throw DomainError("LinearProgram: non-finite right-hand side");
  rows_.push_back(Row{std::move(coeffs), sense, rhs});
}

namespace {

constexpr double kPivotTol = 1e-11;

class Tableau {
 public:
  Tableau(Matrix body, std::vector<Index> basis) : t_(std::move(body)), basis_(std::move(basis)) {}

  Index rows() const { return t_.rows() - 1; }
  Index cols() const { return t_.cols() - 1; }
  double& at(Index i, Index j) { return t_(i, j); }
  double rhs(Index i) const { return t_(i, cols()); }
  double objective() const { return -t_(rows(), cols()); }
  const std::vector<Index>& basis() const { return basis_; }
  Matrix& data() { return t_; }

  void pivot(Index r, Index c) {
    t_.row(r) /= t_(r, c);
    for (Index i = 0; i <= rows(); ++i) {
      if (i != r && t_(i, c) != 0.0) t_.row(i) -= t_(i, c) * t_.row(r);
    }
    basis_[static_cast<std::size_t>(r)] = c;
  }

  /// Optimize the objective row, letting only columns [0, usable) enter.
  enum class Outcome { Optimal, Unbounded, Limit };
  Outcome optimize(Index usable, int& pivots, int maxPivots) {
    int degenerateRun = 0;
    const double scale = std::max(1.0, t_.row(rows()).head(usable).cwiseAbs().maxCoeff());
    while (pivots < maxPivots) {
      const bool bland = degenerateRun > 50;
      Index enter = -1;
      double best = -kPivotTol * scale;
      for (Index j = 0; j < usable; ++j) {
        const double d = t_(rows(), j);
        if (d < best) {
          enter = j;
          if (bland) break;
          best = d;
        }
      }
      if (enter < 0) return Outcome::Optimal;

      Index leave = -1;
      double ratio = std::numeric_limits<double>::infinity();
      for (Index i = 0; i < rows(); ++i) {
        const double a = t_(i, enter);
        if (a <= kPivotTol) continue;
        const double q = rhs(i) / a;
        if (q < ratio - 1e-14) {
          ratio = q;
          leave = i;
        } else if (q <= ratio + 1e-14 &&
                   basis_[static_cast<std::size_t>(i)] < basis_[static_cast<std::size_t>(leave)]) {
          leave = i;  // Bland tie-break on the leaving variable
        }
      }
      if (leave < 0) return Outcome::Unbounded;
      degenerateRun = ratio <= 1e-14 ? degenerateRun + 1 : 0;
      pivot(leave, enter);
      ++pivots;
    }
    return Outcome::Limit;
  }

 private:
  Matrix t_;
  std::vector<Index> basis_;
};

}  // namespace

LinearProgram::Solution LinearProgram::solve(int maxPivots) const {
  const auto nv = static_cast<Index>(cost_.size());
  const auto m = static_cast<Index>(rows_.size());

  // Column layout: structural (free variables split in two), slacks, artificials.
  std::vector<Index> plusCol(static_cast<std::size_t>(nv));
  std::vector<Index> minusCol(static_cast<std::size_t>(nv), -1);
  Index cols = 0;
  for (Index k = 0; k < nv; ++k) {
    plusCol[static_cast<std::size_t>(k)] = cols++;
    if (!nonnegative_[static_cast<std::size_t>(k)]) minusCol[static_cast<std::size_t>(k)] = cols++;
  }
  const Index structural = cols;
  Index slacks = 0;
  for (const Row& row : rows_) slacks += row.sense == Sense::Equal ? 0 : 1;
  const Index artificialStart = structural + slacks;
  const Index total = artificialStart + m;

  Matrix body = Matrix::Zero(m + 1, total + 1);
  std::vector<Index> basis(static_cast<std::size_t>(m));
  Index slack = structural;
  for (Index i = 0; i < m; ++i) {
    const Row& row = rows_[static_cast<std::size_t>(i)];
    for (const auto& [k, a] : row.coeffs) {
      body(i, plusCol[static_cast<std::size_t>(k)]) += a;
      if (minusCol[static_cast<std::size_t>(k)] >= 0) body(i, minusCol[static_cast<std::size_t>(k)]) -= a;
    }
    if (row.sense == Sense::LessEqual) body(i, slack++) = 1.0;
    if (row.sense == Sense::GreaterEqual) body(i, slack++) = -1.0;
    body(i, total) = row.rhs;
    if (row.rhs < 0.0) body.row(i) *= -1.0;
    body(i, artificialStart + i) = 1.0;
    basis[static_cast<std::size_t>(i)] = artificialStart + i;
  }

  Solution out;
  // Phase 1: minimize the sum of artificials.
  for (Index i = 0; i < m; ++i) body.row(m).head(artificialStart) -= body.row(i).head(artificialStart);
  for (Index i = 0; i < m; ++i) body(m, total) -= body(i, total);
  Tableau tab(std::move(body), std::move(basis));
  auto outcome = tab.optimize(artificialStart, out.pivots, maxPivots);
  if (outcome == Tableau::Outcome::Limit) return out;
  const double rhsScale = 1.0 + [&] {
    double s = 0.0;
    for (const Row& row : rows_) s = std::max(s, std::abs(row.rhs));
    return s;
  }();
  if (tab.objective() > 1e-9 * rhsScale) {
    out.status = Status::Infeasible;
    return out;
  }
  // Drive remaining artificials out of the basis where possible.
  for (Index i = 0; i < m; ++i) {
    if (tab.basis()[static_cast<std::size_t>(i)] < artificialStart) continue;
    for (Index j = 0; j < artificialStart; ++j) {
      if (std::abs(tab.at(i, j)) > 1e-9) {
        tab.pivot(i, j);
        break;
      }
    }
  }

  // Phase 2: reduced costs of the real objective.
  Matrix& t = tab.data();
  t.row(m).setZero();
  for (Index k = 0; k < nv; ++k) {
    t(m, plusCol[static_cast<std::size_t>(k)]) = cost_[static_cast<std::size_t>(k)];
    if (minusCol[static_cast<std::size_t>(k)] >= 0) t(m, minusCol[static_cast<std::size_t>(k)]) = -cost_[static_cast<std::size_t>(k)];
  }
  for (Index i = 0; i < m; ++i) {
    const Index b = tab.basis()[static_cast<std::size_t>(i)];
    const double cb = t(m, b);
    if (cb != 0.0) t.row(m) -= cb * t.row(i);
  }
  outcome = tab.optimize(artificialStart, out.pivots, maxPivots);
  if (outcome == Tableau::Outcome::Unbounded) {
    out.status = Status::Unbounded;
    return out;
  }
  if (outcome == Tableau::Outcome::Limit) return out;

  Vector columns = Vector::Zero(total);
  for (Index i = 0; i < m; ++i) columns[tab.basis()[static_cast<std::size_t>(i)]] = tab.rhs(i);
  out.x.resize(nv);
  for (Index k = 0; k < nv; ++k) {
    out.x[k] = columns[plusCol[static_cast<std::size_t>(k)]];
    if (minusCol[static_cast<std::size_t>(k)] >= 0) out.x[k] -= columns[minusCol[static_cast<std::size_t>(k)]];
  }
  out.objective = 0.0;
  for (Index k = 0; k < nv; ++k) out.objective += cost_[static_cast<std::size_t>(k)] * out.x[k];
  out.status = Status::Optimal;
  return out;
}

}  // namespace sysrisk
