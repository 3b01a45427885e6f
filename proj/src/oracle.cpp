#include "sysrisk/oracle.hpp"

#include "sysrisk/parallel.hpp"
#include "sysrisk/random.hpp"
#include "sysrisk/simplex.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

namespace sysrisk {

namespace {

constexpr Index kMaxDimension = 64;
constexpr double kInf = std::numeric_limits<double>::infinity();

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};

Index entry(Index i, Index j, Index n) { return i + n * j; }

// Per block: the constant c_g (the last member absorbs it), then free per-scenario
// values for every other member.
AffineClass groupedClass(const GroupPartition& partition, Index n, Index m) {
  if (partition.institutions() != n) throw ShapeError("parameterize: partition size differs from N");
  Index dim = 0;
  for (const auto& g : partition.groups()) dim += 1 + static_cast<Index>(g.size() - 1) * m;
  AffineClass a{Matrix::Zero(n * m, dim), Vector::Zero(dim), Vector::Zero(dim), std::nullopt};
  Index col = 0;
  for (const auto& g : partition.groups()) {
    const Index last = g.back();
    const Index cg = col++;
    a.cost[cg] = 1.0;
    a.shift[cg] = static_cast<double>(g.size()) / static_cast<double>(n);
    for (Index j = 0; j < m; ++j) a.map(entry(last, j, n), cg) = 1.0;
    for (std::size_t k = 0; k + 1 < g.size(); ++k) {
      for (Index j = 0; j < m; ++j, ++col) {
        a.map(entry(g[k], j, n), col) = 1.0;
        a.map(entry(last, j, n), col) = -1.0;
        a.shift[col] = 1.0 / static_cast<double>(n);
      }
    }
  }
  return a;
}

}  // namespace

AffineClass parameterize(const AllocationClass& cls, Index n, Index m) {
  if (n < 1 || m < 1) throw ShapeError("parameterize: empty system");
  return std::visit(
      Overloaded{
          [&](const Deterministic&) {
            AffineClass a{Matrix::Zero(n * m, n), Vector::Ones(n), Vector::Constant(n, 1.0 / static_cast<double>(n)),
                          std::nullopt};
            for (Index j = 0; j < m; ++j)
              for (Index i = 0; i < n; ++i) a.map(entry(i, j, n), i) = 1.0;
            return a;
          },
          [&](const FullyFlexible&) { return groupedClass(GroupPartition::single(n), n, m); },
          [&](const FloorConstrained& f) {
            if (f.floors.size() != n) throw ShapeError("parameterize: floors must have length N");
            AffineClass a = groupedClass(GroupPartition::single(n), n, m);
            a.floors = f.floors.floors();
            return a;
          },
          [&](const Grouped& g) { return groupedClass(g.partition, n, m); },
          [&](const TwoStateParametric& t) {
            if (static_cast<Index>(t.event.size()) != m) throw ShapeError("parameterize: event needs one flag per scenario");
            const Index dim = 2 * n - 1;
            AffineClass a{Matrix::Zero(n * m, dim), Vector::Zero(dim), Vector::Zero(dim), std::nullopt};
            a.cost.head(n).setOnes();
            a.shift.head(n).setConstant(1.0 / static_cast<double>(n));
            for (Index j = 0; j < m; ++j) {
              for (Index i = 0; i < n; ++i) a.map(entry(i, j, n), i) = 1.0;
              if (!t.event[static_cast<std::size_t>(j)]) continue;
              for (Index i = 0; i + 1 < n; ++i) {
                a.map(entry(i, j, n), n + i) = 1.0;
                a.map(entry(n - 1, j, n), n + i) = -1.0;
              }
            }
            return a;
          },
      },
      cls);
}

namespace {

/// dLambda/dx (a subgradient at kinks).
Vector aggregateGradient(const Aggregation& lambda, const Eigen::Ref<const Vector>& x) {
  return std::visit(
      Overloaded{
          [&](const SumAggregation&) -> Vector { return Vector::Ones(x.size()); },
          [&](const ShortfallSum& s) -> Vector { return (x.array() < s.critical.array()).cast<double>().matrix(); },
          [&](const ExponentialLoss& e) -> Vector {
            return (e.alpha.array() * (-e.alpha.array() * x.array()).exp()).matrix();
          },
          [&](const GainLossWeighted& g) -> Vector {
            return (g.alpha.array() * (x.array() < 0.0).cast<double>() +
                    g.beta.array() * (x.array() > g.threshold.array()).cast<double>())
                .matrix();
          },
          [&](const EisenbergNoe& e) -> Vector {
            // On the active set S the clearing vector is y_S = (I - Pi_SS)^{-1} x_S.
            const Vector y = clearingVector(e.liabilities, x);
            std::vector<Index> active;
            for (Index i = 0; i < y.size(); ++i)
              if (y[i] > 0.0) active.push_back(i);
            Vector grad = Vector::Zero(x.size());
            if (active.empty()) return grad;
            const auto s = static_cast<Index>(active.size());
            Matrix sys = Matrix::Identity(s, s);
            for (Index a = 0; a < s; ++a)
              for (Index b = 0; b < s; ++b) sys(a, b) -= e.liabilities(active[a], active[b]);
            const Vector g = sys.transpose().partialPivLu().solve(Vector::Ones(s));
            for (Index a = 0; a < s; ++a) grad[active[a]] = -g[a];
            return grad;
          },
      },
      lambda);
}

bool isPiecewiseLinear(const Aggregation& lambda) {
  return std::visit(Overloaded{
                        [](const ExponentialLoss&) { return false; },
                        [](const GainLossWeighted& g) { return (g.beta.array() == 0.0).all(); },
                        [](const auto&) { return true; },
                    },
                    lambda);
}

struct Problem {
  const RiskVector& x;
  const AffineClass& cls;
  const Aggregation& lambda;
  const AcceptanceCriterion& acc;

  Index n() const { return x.institutions(); }
  Index m() const { return x.scenarios(); }
  Index dim() const { return cls.map.cols(); }

  Matrix allocation(const Vector& z) const {
    const Vector y = cls.map * z;
    return Eigen::Map<const Matrix>(y.data(), n(), m());
  }

  /// >= 0 exactly when the allocation is admissible and the aggregate acceptable.
  double margin(const Vector& z) const {
    const Matrix y = allocation(z);
    double out = kInf;
    if (cls.floors) {
      for (Index i = 0; i < n(); ++i)
        if (std::isfinite((*cls.floors)[i])) out = std::min(out, y.row(i).minCoeff() - (*cls.floors)[i]);
    }
    const Vector agg = aggregateScenarios(lambda, x.values() + y);
    const double accept = std::visit(Overloaded{
                                         [&](const ExpectationFloor& a) { return x.space().expectation(agg) - a.floor; },
                                         [&](const WorstCase&) { return agg.minCoeff(); },
                                         [&](const ExpectedShortfall& a) {
                                           return -expectedShortfall(agg, x.space(), a.level);
                                         },
                                     },
                                     acc);
    return std::min(out, accept);
  }

  double cost(const Vector& z) const { return cls.cost.dot(z); }

  /// Smallest delta with margin(z + delta shift) >= 0, by bracketing and bisection.
  /// Returns +inf when no shift makes z feasible.
  double feasibleShift(const Vector& z, double scale) const {
    auto ok = [&](double d) { return margin(z + d * cls.shift) >= 0.0; };
    double lo = 0.0;
    double hi = 0.0;
    double step = std::max(1e-3, 1e-3 * scale);
    if (ok(0.0)) {
      lo = -step;
      while (ok(lo)) {
        hi = lo;
        step *= 2.0;
        lo = hi - step;
        if (step > 1e15) return -kInf;
      }
    } else {
      hi = step;
      while (!ok(hi)) {
        lo = hi;
        step *= 2.0;
        hi = lo + step;
        if (step > 1e15) return kInf;
      }
    }
    for (int iter = 0; iter < 200 && hi - lo > 1e-13 * std::max(1.0, std::abs(hi)); ++iter) {
      const double mid = 0.5 * (lo + hi);
      (ok(mid) ? hi : lo) = mid;
    }
    return hi;
  }
};

double positionScale(const RiskVector& x) { return std::max(1.0, x.values().cwiseAbs().maxCoeff()); }

struct EngineResult {
  Vector z;
  Diagnostics diagnostics;
  bool unbounded = false;
};

// ---------------------------------------------------------------------------
// LP engine: piecewise-linear aggregations, hypograph variable t_j per scenario.
// ---------------------------------------------------------------------------

std::optional<EngineResult> solveLinear(const Problem& prob, double maxEntries, bool forced) {
  using Sense = LinearProgram::Sense;
  const Index n = prob.n();
  const Index m = prob.m();
  const Index dim = prob.dim();
  const Matrix& t = prob.cls.map;
  const Matrix& xv = prob.x.values();
  const Vector& p = prob.x.space().probabilities();

  LinearProgram lp;
  for (Index k = 0; k < dim; ++k) lp.addVariable(prob.cls.cost[k]);

  // Coefficients of x_ij = X_ij + T_(ij) z, as a row over the z variables.
  auto positionTerms = [&](Index i, Index j, double scale, std::vector<std::pair<Index, double>>& row) {
    const Index r = entry(i, j, n);
    for (Index k = 0; k < dim; ++k)
      if (t(r, k) != 0.0) row.emplace_back(k, scale * t(r, k));
  };

  std::vector<Index> hypo(static_cast<std::size_t>(m));
  for (Index j = 0; j < m; ++j) {
    const Index tj = lp.addVariable(0.0);
    hypo[static_cast<std::size_t>(j)] = tj;
    std::visit(Overloaded{
                   [&](const SumAggregation&) {
                     // t_j - sum_i T z <= sum_i X_ij
                     std::vector<std::pair<Index, double>> row{{tj, 1.0}};
                     for (Index i = 0; i < n; ++i) positionTerms(i, j, -1.0, row);
                     lp.addRow(std::move(row), Sense::LessEqual, xv.col(j).sum());
                   },
                   [&](const ShortfallSum& s) {
                     std::vector<std::pair<Index, double>> sum{{tj, 1.0}};
                     for (Index i = 0; i < n; ++i) {
                       const Index u = lp.addVariable(0.0);
                       std::vector<std::pair<Index, double>> row{{u, 1.0}};
                       positionTerms(i, j, -1.0, row);
                       lp.addRow(std::move(row), Sense::LessEqual, xv(i, j) - s.critical[i]);
                       lp.addRow({{u, 1.0}}, Sense::LessEqual, 0.0);
                       sum.emplace_back(u, -1.0);
                     }
                     lp.addRow(std::move(sum), Sense::LessEqual, 0.0);
                   },
                   [&](const GainLossWeighted& g) {
                     std::vector<std::pair<Index, double>> sum{{tj, 1.0}};
                     for (Index i = 0; i < n; ++i) {
                       const Index u = lp.addVariable(0.0);
                       std::vector<std::pair<Index, double>> row{{u, 1.0}};
                       positionTerms(i, j, -g.alpha[i], row);
                       lp.addRow(std::move(row), Sense::LessEqual, g.alpha[i] * xv(i, j));
                       lp.addRow({{u, 1.0}}, Sense::LessEqual, 0.0);
                       sum.emplace_back(u, -1.0);
                     }
                     lp.addRow(std::move(sum), Sense::LessEqual, 0.0);
                   },
                   [&](const EisenbergNoe& e) {
                     // -sum y* = max { -sum y : y >= 0, y >= x + Pi y }.
                     std::vector<Index> y(static_cast<std::size_t>(n));
                     for (Index i = 0; i < n; ++i) y[static_cast<std::size_t>(i)] = lp.addVariable(0.0, true);
                     std::vector<std::pair<Index, double>> sum{{tj, 1.0}};
                     for (Index i = 0; i < n; ++i) {
                       std::vector<std::pair<Index, double>> row;
                       for (Index k = 0; k < n; ++k) {
                         const double c = (i == k ? 1.0 : 0.0) - e.liabilities(i, k);
                         if (c != 0.0) row.emplace_back(y[static_cast<std::size_t>(k)], c);
                       }
                       positionTerms(i, j, -1.0, row);
                       lp.addRow(std::move(row), Sense::GreaterEqual, xv(i, j));
                       sum.emplace_back(y[static_cast<std::size_t>(i)], 1.0);
                     }
                     lp.addRow(std::move(sum), Sense::LessEqual, 0.0);
                   },
                   [&](const ExponentialLoss&) { throw DomainError("LP engine: exponential loss is not piecewise linear"); },
               },
               prob.lambda);
  }

  std::visit(Overloaded{
                 [&](const ExpectationFloor& a) {
                   std::vector<std::pair<Index, double>> row;
                   for (Index j = 0; j < m; ++j) row.emplace_back(hypo[static_cast<std::size_t>(j)], p[j]);
                   lp.addRow(std::move(row), Sense::GreaterEqual, a.floor);
                 },
                 [&](const WorstCase&) {
                   for (Index j = 0; j < m; ++j) lp.addRow({{hypo[static_cast<std::size_t>(j)], 1.0}}, Sense::GreaterEqual, 0.0);
                 },
                 [&](const ExpectedShortfall& a) {
                   // ES_q(Z) = min_v v + E[(-Z - v)^+] / q
                   const Index v = lp.addVariable(0.0);
                   std::vector<std::pair<Index, double>> bound{{v, 1.0}};
                   for (Index j = 0; j < m; ++j) {
                     const Index s = lp.addVariable(0.0, true);
                     lp.addRow({{s, 1.0}, {hypo[static_cast<std::size_t>(j)], 1.0}, {v, 1.0}}, Sense::GreaterEqual, 0.0);
                     bound.emplace_back(s, p[j] / a.level);
                   }
                   lp.addRow(std::move(bound), Sense::LessEqual, 0.0);
                 },
             },
             prob.acc);

  if (prob.cls.floors) {
    for (Index i = 0; i < n; ++i) {
      const double floor = (*prob.cls.floors)[i];
      if (!std::isfinite(floor)) continue;
      for (Index j = 0; j < m; ++j) {
        std::vector<std::pair<Index, double>> row;
        positionTerms(i, j, 1.0, row);
        lp.addRow(std::move(row), Sense::GreaterEqual, floor);
      }
    }
  }

  const double rows = static_cast<double>(lp.rows());
  const double entries = rows * (2.0 * static_cast<double>(lp.variables()) + 2.0 * rows);
  if (!forced && entries > maxEntries) return std::nullopt;

  const LinearProgram::Solution sol = lp.solve();
  EngineResult out;
  out.diagnostics.method = "lp";
  out.diagnostics.iterations = sol.pivots;
  switch (sol.status) {
    case LinearProgram::Status::Infeasible:
      throw InfeasibleError("numericRho: no allocation in the class is acceptable");
    case LinearProgram::Status::Unbounded:
      out.unbounded = true;
      return out;
    case LinearProgram::Status::IterationLimit:
      out.diagnostics.converged = false;
      out.z = Vector::Zero(dim);
      return out;
    case LinearProgram::Status::Optimal:
      break;
  }
  out.z = sol.x.head(dim);
  return out;
}

// ---------------------------------------------------------------------------
// Newton engine: ExponentialLoss with an expectation floor b < 0.
//
// g(z) = log E[sum_i exp(-alpha_i x_i)] - log(-b) is a log-sum-exp of affine
// maps, hence convex, and strictly decreasing along the shift direction. The
// optimal cost equals min over z of Phi(z) = w'z + delta*(z), delta* being the
// root of g(z + delta s) = 0. Phi is convex and flat along s; Newton on Phi
// with Armijo steps is globally convergent.
// ---------------------------------------------------------------------------

struct ExpConstraint {
  Vector a;  // log p_j - alpha_i X_ij
  Matrix u;  // -alpha_i T
  double logTarget = 0.0;

  double value(const Vector& z, Vector* weights = nullptr) const {
    const Eigen::ArrayXd e = (a + u * z).array();
    const double top = e.maxCoeff();
    const Eigen::ArrayXd w = (e - top).exp();
    const double sum = w.sum();
    if (weights) *weights = (w / sum).matrix();
    return top + std::log(sum) - logTarget;
  }
};

std::optional<EngineResult> solveExponential(const Problem& prob, const ExponentialLoss& loss, double floor) {
  const Index n = prob.n();
  const Index m = prob.m();
  const Index dim = prob.dim();
  if (!(floor < 0.0)) throw InfeasibleError("numericRho: exponential aggregate is negative, floor must be below zero");
  // Per-entry floors are not part of the single-constraint Lagrange system.
  if (prob.cls.floors && prob.cls.floors->array().isFinite().any()) return std::nullopt;

  ExpConstraint g;
  g.a.resize(n * m);
  g.u = prob.cls.map;
  for (Index j = 0; j < m; ++j) {
    for (Index i = 0; i < n; ++i) {
      const Index r = entry(i, j, n);
      g.a[r] = std::log(prob.x.space()[j]) - loss.alpha[i] * prob.x.values()(i, j);
      g.u.row(r) *= -loss.alpha[i];
    }
  }
  g.logTarget = std::log(-floor);
  const Vector& s = prob.cls.shift;
  const Vector us = g.u * s;  // strictly negative

  // Root of the convex decreasing map delta -> g(z + delta s). Newton from a
  // point with g > 0 increases monotonically to the root.
  auto root = [&](const Vector& z) {
    double d = 0.0;
    double step = 1.0;
    while (g.value(z + d * s) <= 0.0) {
      d -= step;
      step *= 2.0;
    }
    for (int iter = 0; iter < 200; ++iter) {
      Vector w;
      const double v = g.value(z + d * s, &w);
      if (v <= 1e-15) break;
      const double slope = w.dot(us);
      const double next = d - v / slope;
      if (!(next > d)) break;
      d = next;
    }
    return d;
  };

  Vector z = Vector::Zero(dim);
  z += root(z) * s;
  auto phi = [&](const Vector& v) {
    Vector shifted = v;
    shifted += root(v) * s;
    return std::pair{prob.cost(shifted), shifted};
  };

  EngineResult out;
  out.diagnostics.method = "newton";
  double residual = kInf;
  int iter = 0;
  const Matrix sst = s * s.transpose();
  for (; iter < 100; ++iter) {
    Vector w;
    g.value(z, &w);
    const Vector grad = g.u.transpose() * w;
    const double c = grad.dot(s);  // < 0
    const Vector dphi = prob.cls.cost - grad / c;
    residual = dphi.lpNorm<Eigen::Infinity>();
    if (residual <= 1e-12) break;
    const Matrix h = g.u.transpose() * (Matrix(w.asDiagonal()) - w * w.transpose()) * g.u;
    const Matrix proj = Matrix::Identity(dim, dim) - s * grad.transpose() / c;
    const Matrix hess = -(proj.transpose() * h * proj) / c + sst;
    Vector dir = hess.completeOrthogonalDecomposition().solve(-dphi);
    if (!dir.allFinite() || dir.dot(dphi) >= 0.0) dir = -dphi;

    const double base = prob.cost(z);
    double step = 1.0;
    bool moved = false;
    for (int back = 0; back < 60; ++back, step *= 0.5) {
      auto [val, cand] = phi(z + step * dir);
      if (val <= base + 1e-4 * step * dphi.dot(dir)) {
        z = std::move(cand);
        moved = true;
        break;
      }
    }
    if (!moved) break;
  }
  out.diagnostics.iterations = iter;
  out.diagnostics.residual = residual;
  out.diagnostics.converged = residual <= 1e-6;
  if (!out.diagnostics.converged) return std::nullopt;
  out.z = z;
  return out;
}

// ---------------------------------------------------------------------------
// Penalty engine: exterior quadratic penalty, BFGS per round, then a feasibility
// shift and coordinate pattern search on the shift-restored cost.
// ---------------------------------------------------------------------------

class PenaltyObjective {
 public:
  PenaltyObjective(const Problem& prob, double weight) : prob_(prob), weight_(weight) {
    esLevel_ = std::holds_alternative<ExpectedShortfall>(prob.acc) ? std::get<ExpectedShortfall>(prob.acc).level : 0.0;
  }

  bool hasAuxiliary() const { return esLevel_ > 0.0; }

  /// Variables: z, then v for expected shortfall.
  double operator()(const Vector& var, Vector& grad) const {
    const Index dim = prob_.dim();
    const Index n = prob_.n();
    const Index m = prob_.m();
    const Vector z = var.head(dim);
    const Matrix y = prob_.allocation(z);
    const Matrix pos = prob_.x.values() + y;
    const Vector& p = prob_.x.space().probabilities();
    Matrix dy = Matrix::Zero(n, m);  // d penalty / dY
    grad = Vector::Zero(var.size());
    double value = prob_.cost(z);

    if (prob_.cls.floors) {
      for (Index i = 0; i < n; ++i) {
        const double floor = (*prob_.cls.floors)[i];
        if (!std::isfinite(floor)) continue;
        for (Index j = 0; j < m; ++j) {
          const double viol = floor - y(i, j);
          if (viol <= 0.0) continue;
          value += weight_ * viol * viol;
          dy(i, j) -= 2.0 * weight_ * viol;
        }
      }
    }

    const Vector agg = aggregateScenarios(prob_.lambda, pos);
    std::visit(Overloaded{
                   [&](const ExpectationFloor& a) {
                     const double viol = a.floor - p.dot(agg);
                     if (viol <= 0.0) return;
                     value += weight_ * viol * viol;
                     for (Index j = 0; j < m; ++j)
                       dy.col(j) -= 2.0 * weight_ * viol * p[j] * aggregateGradient(prob_.lambda, pos.col(j));
                   },
                   [&](const WorstCase&) {
                     for (Index j = 0; j < m; ++j) {
                       const double viol = -agg[j];
                       if (viol <= 0.0) continue;
                       value += weight_ * viol * viol;
                       dy.col(j) -= 2.0 * weight_ * viol * aggregateGradient(prob_.lambda, pos.col(j));
                     }
                   },
                   [&](const ExpectedShortfall& a) {
                     const double v = var[dim];
                     double es = v;
                     double dv = 1.0;
                     for (Index j = 0; j < m; ++j) {
                       const double loss = -agg[j] - v;
                       if (loss > 0.0) {
                         es += p[j] * loss / a.level;
                         dv -= p[j] / a.level;
                       }
                     }
                     if (es <= 0.0) return;
                     value += weight_ * es * es;
                     grad[dim] += 2.0 * weight_ * es * dv;
                     for (Index j = 0; j < m; ++j) {
                       if (-agg[j] - v <= 0.0) continue;
                       dy.col(j) -= 2.0 * weight_ * es * (p[j] / a.level) * aggregateGradient(prob_.lambda, pos.col(j));
                     }
                   },
               },
               prob_.acc);

    grad.head(dim) = prob_.cls.cost + prob_.cls.map.transpose() * Eigen::Map<const Vector>(dy.data(), dy.size());
    return value;
  }

 private:
  const Problem& prob_;
  double weight_;
  double esLevel_ = 0.0;
};

Vector bfgs(const PenaltyObjective& f, Vector x, int maxIterations) {
  const Index dim = x.size();
  Vector grad;
  double value = f(x, grad);
  Matrix inv = Matrix::Identity(dim, dim);
  for (int iter = 0; iter < maxIterations; ++iter) {
    if (grad.lpNorm<Eigen::Infinity>() <= 1e-10) break;
    Vector dir = -inv * grad;
    if (dir.dot(grad) >= 0.0) {
      inv.setIdentity();
      dir = -grad;
    }
    double step = 1.0;
    Vector trial;
    Vector trialGrad;
    double trialValue = kInf;
    bool accepted = false;
    for (int back = 0; back < 60; ++back, step *= 0.5) {
      trial = x + step * dir;
      trialValue = f(trial, trialGrad);
      if (trialValue <= value + 1e-4 * step * grad.dot(dir)) {
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
    const Vector sVec = trial - x;
    const Vector yVec = trialGrad - grad;
    const double sy = sVec.dot(yVec);
    if (sy > 1e-14 * sVec.norm() * yVec.norm()) {
      const double rho = 1.0 / sy;
      const Matrix left = Matrix::Identity(dim, dim) - rho * sVec * yVec.transpose();
      inv = left * inv * left.transpose() + rho * sVec * sVec.transpose();
    }
    const double drop = value - trialValue;
    x = std::move(trial);
    grad = std::move(trialGrad);
    value = trialValue;
    if (drop <= 1e-15 * std::max(1.0, std::abs(value))) break;
  }
  return x;
}

EngineResult solvePenalty(const Problem& prob) {
  const double scale = positionScale(prob.x);
  const Index dim = prob.dim();
  const bool es = std::holds_alternative<ExpectedShortfall>(prob.acc);
  Vector var = Vector::Zero(dim + (es ? 1 : 0));

  double weight = 10.0;
  for (int round = 0; round < 8; ++round, weight *= 10.0) var = bfgs(PenaltyObjective(prob, weight), var, 500);
  Vector z = var.head(dim);

  EngineResult out;
  out.diagnostics.method = "penalty";
  auto restored = [&](const Vector& v) { return prob.cost(v) + prob.feasibleShift(v, scale); };
  double best = restored(z);
  if (!std::isfinite(best)) {
    out.diagnostics.converged = false;
    out.diagnostics.residual = kInf;
    out.z = z;
    return out;
  }

  // Pattern search on Phi(z) = cost after restoring feasibility along the shift.
  int sweeps = 0;
  for (double step = std::max(1.0, 0.1 * scale); step >= 1e-7; step *= 0.5) {
    for (bool improved = true; improved && sweeps < 10000; ++sweeps) {
      improved = false;
      for (Index k = 0; k < dim; ++k) {
        for (const double sign : {1.0, -1.0}) {
          Vector cand = z;
          cand[k] += sign * step;
          const double val = restored(cand);
          if (val < best - 1e-14 * std::max(1.0, std::abs(best))) {
            best = val;
            z = std::move(cand);
            improved = true;
          }
        }
      }
    }
  }
  z += prob.feasibleShift(z, scale) * prob.cls.shift;

  // Largest first-order decrease still available along a coordinate.
  const double h = 1e-7;
  double residual = 0.0;
  for (Index k = 0; k < dim; ++k) {
    for (const double sign : {1.0, -1.0}) {
      Vector cand = z;
      cand[k] += sign * h;
      residual = std::max(residual, (best - restored(cand)) / h);
    }
  }
  out.diagnostics.iterations = sweeps;
  out.diagnostics.residual = residual;
  out.diagnostics.converged = residual <= 1e-6;
  out.z = z;
  return out;
}

RiskResult finish(const Problem& prob, const EngineResult& engine) {
  RiskResult r;
  r.diagnostics = engine.diagnostics;
  if (engine.unbounded) {
    r.rho = -kInf;
    return r;
  }
  r.parameters = engine.z;
  r.allocation = prob.allocation(engine.z);
  r.rho = prob.cost(engine.z);
  r.ranking = rankByExpectation(r.allocation * prob.x.space().probabilities());
  return r;
}

}  // namespace

RiskResult numericRho(const RiskVector& x, const AllocationClass& cls, const Aggregation& lambda,
                      const AcceptanceCriterion& acc, const OracleOptions& options) {
  validate(lambda, x.institutions());
  validate(acc);
  const AffineClass affine = parameterize(cls, x.institutions(), x.scenarios());
  if (affine.map.cols() > kMaxDimension)
    throw ShapeError("numericRho: class has more than 64 free variables");
  const Problem prob{x, affine, lambda, acc};

  const auto* loss = std::get_if<ExponentialLoss>(&lambda);
  if (loss && !std::holds_alternative<ExpectationFloor>(acc))
    throw InfeasibleError("numericRho: exponential aggregate is negative in every scenario");

  OracleEngine engine = options.engine;
  if (engine == OracleEngine::Auto) {
    if (loss) {
      engine = OracleEngine::LagrangeNewton;
    } else if (isPiecewiseLinear(lambda)) {
      engine = OracleEngine::LinearProgram;
    } else {
      engine = OracleEngine::Penalty;
    }
  }
  if (engine == OracleEngine::LinearProgram) {
    if (!isPiecewiseLinear(lambda)) throw DomainError("numericRho: LP engine needs a piecewise-linear aggregation");
    if (auto r = solveLinear(prob, options.maxTableauEntries, options.engine == OracleEngine::LinearProgram))
      return finish(prob, *r);
    engine = OracleEngine::Penalty;
  }
  if (engine == OracleEngine::LagrangeNewton) {
    if (!loss) throw DomainError("numericRho: Newton engine needs an exponential aggregation");
    if (auto r = solveExponential(prob, *loss, std::get<ExpectationFloor>(acc).floor)) return finish(prob, *r);
  }
  return finish(prob, solvePenalty(prob));
}

// ---------------------------------------------------------------------------
// Quasi-convex families
// ---------------------------------------------------------------------------

AcceptanceFamily::AcceptanceFamily(std::vector<double> knots, std::vector<double> theta)
    : knots_(std::move(knots)), theta_(std::move(theta)) {
  if (knots_.empty() || knots_.size() != theta_.size())
    throw ShapeError("AcceptanceFamily: knots and theta must be nonempty and of equal length");
  for (std::size_t k = 0; k < knots_.size(); ++k) {
    if (!std::isfinite(knots_[k]) || !std::isfinite(theta_[k])) throw DomainError("AcceptanceFamily: non-finite entry");
    if (k > 0 && !(knots_[k] > knots_[k - 1])) throw DomainError("AcceptanceFamily: knots must increase strictly");
    if (k > 0 && theta_[k] < theta_[k - 1]) throw DomainError("AcceptanceFamily: theta must be nondecreasing");
  }
}

AcceptanceFamily AcceptanceFamily::constant(double theta) { return AcceptanceFamily({0.0}, {theta}); }

double AcceptanceFamily::theta(double cost) const {
  if (cost <= knots_.front()) return theta_.front();
  if (cost >= knots_.back()) return theta_.back();
  const auto hi = static_cast<std::size_t>(std::upper_bound(knots_.begin(), knots_.end(), cost) - knots_.begin());
  const std::size_t lo = hi - 1;
  const double w = (cost - knots_[lo]) / (knots_[hi] - knots_[lo]);
  return theta_[lo] + w * (theta_[hi] - theta_[lo]);
}

RiskResult numericRhoFamily(const RiskVector& x, const AllocationClass& cls, const Aggregation& lambda,
                            const AcceptanceFamily& family, std::vector<FamilyTrace>* trace,
                            const OracleOptions& options) {
  auto solveAt = [&](double cost) -> std::optional<RiskResult> {
    try {
      return numericRho(x, cls, lambda, family.at(cost), options);
    } catch (const InfeasibleError&) {
      return std::nullopt;
    }
  };
  // The feasible costs form an up-set: a larger budget only relaxes the floor.
  auto feasible = [&](double cost) {
    const auto r = solveAt(cost);
    const bool ok = r && r->rho <= cost + 1e-12 * std::max(1.0, std::abs(cost));
    if (trace) trace->push_back(FamilyTrace{cost, ok});
    return ok;
  };

  double start = 0.0;
  if (const auto r = solveAt(0.0); r && std::isfinite(r->rho)) start = r->rho;
  double step = std::max(1.0, std::abs(start));
  double lo = start;
  double hi = start;
  if (feasible(start)) {
    do {
      hi = lo;
      lo = hi - step;
      step *= 2.0;
      if (step > 1e15) throw DomainError("numericRhoFamily: risk measure unbounded below");
    } while (feasible(lo));
  } else {
    do {
      lo = hi;
      hi = lo + step;
      step *= 2.0;
      if (step > 1e15) throw InfeasibleError("numericRhoFamily: no feasible cost level");
    } while (!feasible(hi));
  }
  int iterations = 0;
  for (; iterations < 200 && hi - lo > 1e-11 * std::max(1.0, std::abs(hi)); ++iterations) {
    const double mid = 0.5 * (lo + hi);
    (feasible(mid) ? hi : lo) = mid;
  }

  auto witness = solveAt(hi);
  if (!witness) throw InfeasibleError("numericRhoFamily: bracket endpoint lost feasibility");
  RiskResult out = std::move(*witness);
  if (out.allocation.size() > 0)
    out.allocation.array() += (hi - out.rho) / static_cast<double>(x.institutions());
  out.rho = hi;
  out.diagnostics.method = "bisection/" + out.diagnostics.method;
  out.diagnostics.iterations = iterations;
  out.diagnostics.residual = hi - lo;
  return out;
}

// ---------------------------------------------------------------------------
// Property harness
// ---------------------------------------------------------------------------

InstanceSampler defaultSampler(std::uint64_t seed) {
  return [seed](std::uint64_t trial) {
    SplitMix64 rng = streamFor(seed, trial);
    const auto n = static_cast<Index>(2 + rng.next() % 3);
    const auto m = static_cast<Index>(2 + rng.next() % 5);
    Vector p(m);
    for (Index j = 0; j < m; ++j) p[j] = -std::log(rng.uniform());
    p /= p.sum();
    Matrix x1(n, m);
    Matrix bump(n, m);
    for (Index j = 0; j < m; ++j)
      for (Index i = 0; i < n; ++i) x1(i, j) = rng.uniform(-100.0, 100.0);
    for (Index j = 0; j < m; ++j)
      for (Index i = 0; i < n; ++i) bump(i, j) = rng.uniform(0.0, 50.0);
    const ScenarioSpace space(p);
    return PropertyTrial{RiskVector(x1, space), RiskVector(x1 + bump, space), rng.uniform()};
  };
}

std::vector<PropertyCheck> checkStructuralProperties(const RiskEvaluator& rho, const InstanceSampler& sampler,
                                                     int trials, bool convex, double tolerance) {
  struct Outcome {
    bool evaluated = false;
    double monotone = 0.0;
    double quasiConvex = 0.0;
    double convexity = 0.0;
  };
  std::vector<Outcome> outcomes(static_cast<std::size_t>(std::max(trials, 0)));
  parallelFor(outcomes.size(), [&](std::size_t t) {
    const PropertyTrial trial = sampler(t);
    const double l = trial.lambda;
    try {
      const double r1 = rho(trial.x1);
      const double r2 = rho(trial.x2);
      const RiskVector mixed = trial.x1.withValues(l * trial.x1.values() + (1.0 - l) * trial.x2.values());
      const double rm = rho(mixed);
      outcomes[t] = Outcome{true, r2 - r1, rm - std::max(r1, r2), rm - (l * r1 + (1.0 - l) * r2)};
    } catch (const InfeasibleError&) {
      // rho = +inf on this instance: nothing to compare
    }
  });

  std::vector<PropertyCheck> checks{{"monotonicity"}, {"quasi-convexity"}};
  if (convex) checks.push_back({"convexity"});
  for (std::size_t t = 0; t < outcomes.size(); ++t) {
    const Outcome& o = outcomes[t];
    if (!o.evaluated) continue;
    const double excess[] = {o.monotone, o.quasiConvex, o.convexity};
    for (std::size_t c = 0; c < checks.size(); ++c) {
      PropertyCheck& check = checks[c];
      ++check.trials;
      if (excess[c] > tolerance) ++check.failures;
      if (excess[c] > check.worstViolation) {
        check.worstViolation = excess[c];
        check.witness = static_cast<long>(t);
      }
    }
  }
  return checks;
}

InvarianceReport checkSumReduction(const RiskVector& x, const AllocationClass& cls, const Aggregation& lambda,
                                   const AcceptanceCriterion& acc, int transfers, std::uint64_t seed,
                                   double tolerance) {
  InvarianceReport report;
  report.baseRho = numericRho(x, cls, lambda, acc).rho;
  const Index n = x.institutions();
  const Index m = x.scenarios();
  const double scale = positionScale(x);

  std::vector<Matrix> moved(static_cast<std::size_t>(std::max(transfers, 0)));
  std::vector<double> deviation(moved.size(), 0.0);
  parallelFor(moved.size(), [&](std::size_t t) {
    NormalStream normals(seed, t);
    Matrix d(n, m);
    for (Index j = 0; j < m; ++j)
      for (Index i = 0; i < n; ++i) d(i, j) = 0.25 * scale * normals.next();
    d.rowwise() -= d.colwise().mean();  // scenario sums unchanged
    moved[t] = x.values() + d;
    deviation[t] = std::abs(numericRho(x.withValues(moved[t]), cls, lambda, acc).rho - report.baseRho);
  });
  for (std::size_t t = 0; t < moved.size(); ++t) {
    if (deviation[t] > report.worstDeviation) {
      report.worstDeviation = deviation[t];
      report.witness = moved[t];
    }
  }
  report.holds = report.worstDeviation <= tolerance * std::max(1.0, std::abs(report.baseRho));
  return report;
}

InvarianceReport checkCashInvariance(const RiskVector& x, const AllocationClass& cls, const Aggregation& lambda,
                                     const AcceptanceCriterion& acc, const Vector& v, double tolerance) {
  if (v.size() != x.institutions()) throw ShapeError("checkCashInvariance: v must have length N");
  InvarianceReport report;
  report.baseRho = numericRho(x, cls, lambda, acc).rho;
  const RiskVector moved = x.shifted(v);
  const double shifted = numericRho(moved, cls, lambda, acc).rho;
  report.worstDeviation = std::abs(shifted - (report.baseRho - v.sum()));
  report.holds = report.worstDeviation <= tolerance * std::max(1.0, std::abs(report.baseRho));
  if (!report.holds) report.witness = moved.values();
  return report;
}

}  // namespace sysrisk
