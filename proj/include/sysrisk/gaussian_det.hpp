#ifndef SYSRISK_GAUSSIAN_DET_HPP
#define SYSRISK_GAUSSIAN_DET_HPP

#include "sysrisk/core.hpp"

namespace sysrisk {

/// Optimal deterministic cash for X ~ N(mu, Q) under sum_i E[(X^i + m_i - d_i)^-] <= gamma.
struct DetGaussianSolution {
  Vector m;
  /// Lagrange root, always negative.
  double R = 0.0;
  double rho = 0.0;
  double gamma = 0.0;
  Vector d;
};

/// P(R) = R Phi(R) + phi(R) = E[(R - Z)^+] for standard normal Z.
double shortfallProfile(double r);

/// Root R < 0 of P(R) = gamma / sum(sigmas).
/// Throws InfeasibleError when gamma / sum(sigmas) >= 1/sqrt(2 pi).
double solveR(double gamma, const Eigen::Ref<const Vector>& sigmas);

DetGaussianSolution optimalDeterministic(const GaussianSystem& sys, const Eigen::Ref<const Vector>& d, double gamma);

/// psi(m) = E[(X + m - d)^-] for X ~ N(mu, sigma^2).
double shortfallExpectation(double m, double mu, double sigma, double d);

struct DetSensitivities {
  /// dm_i / dmu_i (identically -1).
  Vector dMu;
  /// dm_i / dsigma_i with the other sigmas held fixed.
  Vector dSigma;
};

DetSensitivities sensitivities(const DetGaussianSolution& sol, const GaussianSystem& sys);

}  // namespace sysrisk

#endif  // SYSRISK_GAUSSIAN_DET_HPP
