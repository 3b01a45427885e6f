#ifndef SYSRISK_GAUSSIAN_SCEN_HPP
#define SYSRISK_GAUSSIAN_SCEN_HPP

#include "sysrisk/core.hpp"

#include <vector>

namespace sysrisk {

/// Which side of the trigger level d carries the extra cash alpha.
/// AtOrBelow: D = {S <= d}. Above: D = {S > d}. Both parameterize the same
/// allocation class, so rho agrees; only the reported (m, alpha) differ.
enum class TriggerSide { AtOrBelow, Above };

/// Joint Gaussian law of (X_i, S) with S = sum_j X_j.
struct MarginalVsSum {
  double muX = 0.0;
  double sigmaX = 1.0;
  double muS = 0.0;
  double sigmaS = 1.0;
  double corr = 0.0;
};

std::vector<MarginalVsSum> marginalVsSum(const GaussianSystem& sys);

/// P(Z1 <= h, Z2 <= k), standard bivariate normal with correlation r.
double binormCdf(double h, double k, double r);

/// F(c) = P(X_i <= c, D).
double triggeredCdf(const MarginalVsSum& law, double c, double d, TriggerSide side);

/// G(c) = E[(c - X_i)^+ 1_D]; G' = F.
double triggeredShortfall(const MarginalVsSum& law, double c, double d, TriggerSide side);

/// Psi(m, alpha) = E[sum_i (X^i + m_i + alpha_i 1_D - d_i)^-].
double psiTwoState(const Eigen::Ref<const Vector>& m, const Eigen::Ref<const Vector>& alpha, const GaussianSystem& sys,
                   const Eigen::Ref<const Vector>& dvec, double d, TriggerSide side = TriggerSide::AtOrBelow);

struct PsiGradient {
  Vector dm;
  Vector dalpha;
};

PsiGradient psiGradient(const Eigen::Ref<const Vector>& m, const Eigen::Ref<const Vector>& alpha,
                        const GaussianSystem& sys, const Eigen::Ref<const Vector>& dvec, double d,
                        TriggerSide side = TriggerSide::AtOrBelow);

struct TwoStateOptions {
  TriggerSide side = TriggerSide::AtOrBelow;
  int maxIterations = 200;
  double tolerance = 1e-8;
};

struct TwoStateSolution {
  Vector m;
  /// Sums to zero.
  Vector alpha;
  double rho = 0.0;
  double lambdaMult = 0.0;
  double d = 0.0;
  TriggerSide side = TriggerSide::AtOrBelow;
  /// Max norm of the first-order system at the returned iterate.
  double residual = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Minimize sum m_i subject to Psi = gamma over Y = m + alpha 1_D, sum alpha = 0.
/// Newton on the Lagrange system with a finite-difference Jacobian and backtracking.
/// Non-convergence is reported through `converged`, not thrown.
TwoStateSolution solveTwoState(const GaussianSystem& sys, const Eigen::Ref<const Vector>& dvec, double gamma, double d,
                               const TwoStateOptions& options = {});

}  // namespace sysrisk

#endif  // SYSRISK_GAUSSIAN_SCEN_HPP
