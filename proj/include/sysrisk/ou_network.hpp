#ifndef SYSRISK_OU_NETWORK_HPP
#define SYSRISK_OU_NETWORK_HPP

#include "sysrisk/core.hpp"

#include <cstdint>
#include <string>

namespace sysrisk {

/// dX^i = sum_j p_ij (X^j - X^i) dt + sigma_i (rho_i dW^0 + sqrt(1 - rho_i^2) dW^i).
class NetworkModel {
 public:
  NetworkModel(Matrix p, Vector sigma, Vector rhoCommon, Vector x0, double t);

  /// All-to-all p_ij = p/N with identical institutions.
  static NetworkModel homogeneous(Index n, double p, double sigma, double rho, double x0, double t);

  Index size() const { return sigma_.size(); }
  const Matrix& preferences() const { return p_; }
  const Vector& sigma() const { return sigma_; }
  const Vector& rhoCommon() const { return rho_; }
  const Vector& x0() const { return x0_; }
  double horizon() const { return t_; }

  /// L = diag(rowsum p) - p, so the drift is -L X.
  Matrix drift() const;
  /// Instantaneous covariance sigma_i sigma_j (rho_i rho_j + delta_ij (1 - rho_i^2)).
  Matrix diffusionCovariance() const;

 private:
  Matrix p_;
  Vector sigma_;
  Vector rho_;
  Vector x0_;
  double t_ = 0.0;
};

struct Moments {
  double mean = 0.0;
  double variance = 0.0;
};

/// Marginal law in the homogeneous network with aggregate rate p (p_ij = p/N).
Moments homogeneousMoments(double p, double sigma, double rho, Index n, double t, double x0 = 0.0);

struct CentralClearingMoments {
  /// Periphery variance v(t) and centre variance v1(t) from the 4x4 moment ODE.
  double v = 0.0;
  double v1 = 0.0;
  /// The same quantities from the O(1/N) expansion.
  double vSeries = 0.0;
  double v1Series = 0.0;
  /// "eigen" or "rk4".
  std::string method;
};

CentralClearingMoments centralClearingMoments(double p, double sigma, double sigmaC, double rho, double rhoC, Index n,
                                              double t);

/// Fixed-step RK4 on dQ/dt = -LQ - QL' + Sigma and dmu/dt = -L mu, 10^4 steps.
GaussianSystem heterogeneousCovariance(const NetworkModel& model);

/// Q(t) in closed form from the eigendecomposition of the symmetric drift.
Matrix covarianceByEigen(const NetworkModel& model);

struct SampleMoments {
  Vector mean;
  Matrix covariance;
  Vector meanStdError;
  /// Standard error of each covariance entry.
  Matrix covarianceStdError;
  Index paths = 0;
};

/// Euler-Maruyama paths; path k draws from a counter-based stream keyed by (seed, k),
/// so the output is independent of the worker count.
SampleMoments simulatePaths(const NetworkModel& model, Index paths, Index steps, std::uint64_t seed);

struct ThreeBankRow {
  double covariance = 0.0;  // 2 rho rho1 sigma^2 t
  Vector detM;
  double detRho = 0.0;
  Vector m;
  double alpha = 0.0;
  double rho = 0.0;
  bool converged = false;
};

/// Bank 1 decoupled; banks 2 and 3 lend to each other (p23 = p/2). The pair
/// (X^1, X^2 + X^3) is solved with the deterministic and two-state allocations.
/// Trigger D = {X^1 + X^2 + X^3 > d}, the side matching the published (m, alpha).
ThreeBankRow threeBankExample(double rho1, double sigma2t, double gamma, double d, double rho = 0.8);

}  // namespace sysrisk

#endif  // SYSRISK_OU_NETWORK_HPP
