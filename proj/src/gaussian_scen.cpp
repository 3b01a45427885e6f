#include "sysrisk/gaussian_scen.hpp"

#include "sysrisk/gaussian_det.hpp"
#include "sysrisk/normal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace sysrisk {

namespace {

// Standardized trigger: D = {Z2' <= k'} with Z2' = +-(S - muS)/sigmaS.
struct Trigger {
  double k;
  double r;
  bool degenerate;  // sigmaS == 0: D is sure or impossible
  bool sure;
};

Trigger standardize(const MarginalVsSum& law, double d, TriggerSide side) {
  Trigger t{};
  if (law.sigmaS <= 1e-14 * std::max(1.0, law.sigmaX)) {
    t.degenerate = true;
    const bool below = law.muS <= d;
    t.sure = side == TriggerSide::AtOrBelow ? below : !below;
    return t;
  }
  const double k = (d - law.muS) / law.sigmaS;
  t.k = side == TriggerSide::AtOrBelow ? k : -k;
  t.r = side == TriggerSide::AtOrBelow ? law.corr : -law.corr;
  return t;
}

void requireSizes(const GaussianSystem& sys, Index m, Index alpha, Index dvec) {
  const Index n = sys.size();
  if (m != n || alpha != n || dvec != n) throw ShapeError("two-state: m, alpha and d must have length N");
}

}  // namespace

std::vector<MarginalVsSum> marginalVsSum(const GaussianSystem& sys) {
  const Matrix& q = sys.covariance();
  const Vector cov = q.rowwise().sum();
  const double varS = std::max(0.0, cov.sum());
  const double muS = sys.mu().sum();
  std::vector<MarginalVsSum> out(static_cast<std::size_t>(sys.size()));
  for (Index i = 0; i < sys.size(); ++i) {
    MarginalVsSum& law = out[static_cast<std::size_t>(i)];
    law.muX = sys.mu()[i];
    law.sigmaX = std::sqrt(q(i, i));
    law.muS = muS;
    law.sigmaS = std::sqrt(varS);
    law.corr = law.sigmaS > 0.0 ? std::clamp(cov[i] / (law.sigmaX * law.sigmaS), -1.0, 1.0) : 0.0;
  }
  return out;
}

double binormCdf(double h, double k, double r) { return normal::bivariateCdf(h, k, r); }

double triggeredCdf(const MarginalVsSum& law, double c, double d, TriggerSide side) {
  const double h = (c - law.muX) / law.sigmaX;
  const Trigger t = standardize(law, d, side);
  if (t.degenerate) return t.sure ? normal::cdf(h) : 0.0;
  return normal::bivariateCdf(h, t.k, t.r);
}

double triggeredShortfall(const MarginalVsSum& law, double c, double d, TriggerSide side) {
  const double h = (c - law.muX) / law.sigmaX;
  const Trigger t = standardize(law, d, side);
  double prob = 0.0;
  double moment = 0.0;  // E[Z 1{Z <= h} 1_D] for the standardized marginal
  if (t.degenerate) {
    if (!t.sure) return 0.0;
    prob = normal::cdf(h);
    moment = -normal::pdf(h);
  } else {
    prob = normal::bivariateCdf(h, t.k, t.r);
    moment = normal::truncatedFirstMoment(h, t.k, t.r);
  }
  // c F - E[X 1{X <= c} 1_D] with X = mu + sigma Z
  return (c - law.muX) * prob - law.sigmaX * moment;
}

double psiTwoState(const Eigen::Ref<const Vector>& m, const Eigen::Ref<const Vector>& alpha, const GaussianSystem& sys,
                   const Eigen::Ref<const Vector>& dvec, double d, TriggerSide side) {
  requireSizes(sys, m.size(), alpha.size(), dvec.size());
  const auto laws = marginalVsSum(sys);
  double psi = 0.0;
  for (Index i = 0; i < sys.size(); ++i) {
    const auto& law = laws[static_cast<std::size_t>(i)];
    const double a = dvec[i] - m[i];
    psi += shortfallExpectation(m[i], law.muX, law.sigmaX, dvec[i]) + triggeredShortfall(law, a - alpha[i], d, side) -
           triggeredShortfall(law, a, d, side);
  }
  return psi;
}

PsiGradient psiGradient(const Eigen::Ref<const Vector>& m, const Eigen::Ref<const Vector>& alpha,
                        const GaussianSystem& sys, const Eigen::Ref<const Vector>& dvec, double d, TriggerSide side) {
  requireSizes(sys, m.size(), alpha.size(), dvec.size());
  const auto laws = marginalVsSum(sys);
  PsiGradient g{Vector(sys.size()), Vector(sys.size())};
  for (Index i = 0; i < sys.size(); ++i) {
    const auto& law = laws[static_cast<std::size_t>(i)];
    const double a = dvec[i] - m[i];
    const double shifted = triggeredCdf(law, a - alpha[i], d, side);
    g.dm[i] = -normal::cdf((a - law.muX) / law.sigmaX) + triggeredCdf(law, a, d, side) - shifted;
    g.dalpha[i] = -shifted;
  }
  return g;
}

namespace {

// Unknowns: m (N), alpha_1..alpha_{N-1}, lambda.  alpha_N = -sum of the others.
struct LagrangeSystem {
  const GaussianSystem& sys;
  const Vector& dvec;
  double gamma;
  double d;
  TriggerSide side;

  Index n() const { return sys.size(); }

  Vector alphaOf(const Vector& z) const {
    Vector alpha(n());
    alpha.head(n() - 1) = z.segment(n(), n() - 1);
    alpha[n() - 1] = -alpha.head(n() - 1).sum();
    return alpha;
  }

  Vector residual(const Vector& z) const {
    const Vector m = z.head(n());
    const Vector alpha = alphaOf(z);
    const double lambda = z[2 * n() - 1];
    const PsiGradient g = psiGradient(m, alpha, sys, dvec, d, side);
    Vector res(2 * n());
    res.head(n()) = Vector::Ones(n()) + lambda * g.dm;
    for (Index i = 0; i + 1 < n(); ++i) res[n() + i] = g.dalpha[i] - g.dalpha[n() - 1];
    res[2 * n() - 1] = psiTwoState(m, alpha, sys, dvec, d, side) - gamma;
    return res;
  }

  Matrix jacobian(const Vector& z) const {
    const Index dim = z.size();
    Matrix jac(dim, dim);
    for (Index c = 0; c < dim; ++c) {
      const double step = 1e-7 * std::max(1.0, std::abs(z[c]));
      Vector up = z;
      Vector down = z;
      up[c] += step;
      down[c] -= step;
      jac.col(c) = (residual(up) - residual(down)) / (2.0 * step);
    }
    return jac;
  }
};

}  // namespace

TwoStateSolution solveTwoState(const GaussianSystem& sys, const Eigen::Ref<const Vector>& dvec, double gamma, double d,
                               const TwoStateOptions& options) {
  const Index n = sys.size();
  if (n < 2) throw ShapeError("solveTwoState: at least two institutions required");
  if (dvec.size() != n) throw ShapeError("solveTwoState: d has wrong length");
  if (!std::isfinite(d)) throw DomainError("solveTwoState: non-finite trigger level");

  const DetGaussianSolution det = optimalDeterministic(sys, dvec, gamma);
  const Vector dv = dvec;
  const LagrangeSystem problem{sys, dv, gamma, d, options.side};

  const double lambda0 = 1.0 / normal::cdf(det.R);
  auto initial = [&]() {
    Vector z(2 * n);
    z.head(n) = det.m;
    z.segment(n, n - 1).setZero();
    z[n] = 1e-3;  // alpha = 1e-3 (1, -1, 0, ...) steps off the symmetric start
    z[2 * n - 1] = lambda0;
    return z;
  };

  Vector z = initial();
  Vector res = problem.residual(z);
  double norm = res.lpNorm<Eigen::Infinity>();
  Vector best = z;
  double bestNorm = norm;
  double maxStep = 1.0;
  int iter = 0;

  // Polish well below the reporting tolerance: the optimum can be very flat in alpha.
  const double target = std::min(options.tolerance, 1e-13);
  int stalled = 0;
  for (; iter < options.maxIterations && norm > target && stalled < 3; ++iter) {
    const Matrix jac = problem.jacobian(z);
    const Vector step = jac.fullPivLu().solve(-res);
    if (!step.allFinite()) break;

    double t = maxStep;
    Vector trial;
    Vector trialRes;
    double trialNorm = std::numeric_limits<double>::infinity();
    for (int halving = 0; halving < 40; ++halving, t *= 0.5) {
      trial = z + t * step;
      trialRes = problem.residual(trial);
      trialNorm = trialRes.lpNorm<Eigen::Infinity>();
      if (trialNorm < (1.0 - 1e-4 * t) * norm) break;
    }
    if (!(trialNorm < norm) && t < 1e-10) break;

    z = std::move(trial);
    res = std::move(trialRes);
    norm = trialNorm;

    if (!(z[2 * n - 1] > 0.0)) {
      // lambda <= 0 cannot satisfy 1 + lambda dPsi/dm = 0 with dPsi/dm < 0: restart more cautiously.
      maxStep *= 0.5;
      z = initial();
      res = problem.residual(z);
      norm = res.lpNorm<Eigen::Infinity>();
    }
    const bool polishing = bestNorm <= options.tolerance;
    if (norm < bestNorm) {
      stalled = polishing && norm > 0.5 * bestNorm ? stalled + 1 : 0;
      best = z;
      bestNorm = norm;
    } else if (polishing) {
      ++stalled;
    }
  }

  TwoStateSolution sol;
  sol.m = best.head(n);
  sol.alpha = problem.alphaOf(best);
  sol.rho = sol.m.sum();
  sol.lambdaMult = best[2 * n - 1];
  sol.d = d;
  sol.side = options.side;
  sol.residual = bestNorm;
  sol.iterations = iter;
  sol.converged = bestNorm <= options.tolerance;
  return sol;
}

}  // namespace sysrisk
