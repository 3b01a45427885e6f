#include "sysrisk/gaussian_det.hpp"

#include "sysrisk/normal.hpp"

#include <cmath>

namespace sysrisk {

double shortfallProfile(double r) { return normal::partialExpectation(r); }

double solveR(double gamma, const Eigen::Ref<const Vector>& sigmas) {
  if (!std::isfinite(gamma) || !sigmas.allFinite()) throw DomainError("solveR: non-finite input");
  if (sigmas.size() == 0 || (sigmas.array() <= 0.0).any()) throw DomainError("solveR: sigmas must be positive");
  const double target = gamma / sigmas.sum();
  if (!(target > 0.0)) throw DomainError("solveR: gamma must be positive");
  if (target >= normal::kInvSqrt2Pi)
    throw InfeasibleError("solveR: gamma / sum(sigma) >= 1/sqrt(2 pi); no negative root exists (the root only tends to 0- in the limit)");

  // P is increasing with P' = Phi > 0; safeguarded Newton inside a shrinking bracket.
  double lo = -40.0;
  double hi = 0.0;
  double r = -1.0;
  for (int iter = 0; iter < 200; ++iter) {
    const double f = shortfallProfile(r) - target;
    if (std::abs(f) <= 1e-15 * std::max(1.0, target)) break;
    (f > 0.0 ? hi : lo) = r;
    const double slope = normal::cdf(r);
    double next = slope > 0.0 ? r - f / slope : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - r) <= 1e-16 * std::max(1.0, std::abs(r))) {
      r = next;
      break;
    }
    r = next;
  }
  return r;
}

DetGaussianSolution optimalDeterministic(const GaussianSystem& sys, const Eigen::Ref<const Vector>& d, double gamma) {
  if (d.size() != sys.size()) throw ShapeError("optimalDeterministic: d has wrong length");
  if (!d.allFinite()) throw DomainError("optimalDeterministic: non-finite critical level");
  const Vector sigma = sys.sigmas();
  DetGaussianSolution sol;
  sol.R = solveR(gamma, sigma);
  sol.m = d - sys.mu() - sol.R * sigma;
  sol.rho = sol.m.sum();
  sol.gamma = gamma;
  sol.d = d;
  return sol;
}

double shortfallExpectation(double m, double mu, double sigma, double d) {
  if (!(sigma > 0.0)) throw DomainError("shortfallExpectation: sigma must be positive");
  const double z = (d - mu - m) / sigma;
  return sigma * normal::pdf(z) - (m + mu - d) * normal::cdf(z);
}

DetSensitivities sensitivities(const DetGaussianSolution& sol, const GaussianSystem& sys) {
  const Vector sigma = sys.sigmas();
  const double total = sigma.sum();
  const double r = sol.R;
  const double hazard = normal::pdf(r) / normal::cdf(r);
  DetSensitivities out;
  out.dMu = Vector::Constant(sys.size(), -1.0);
  const Eigen::ArrayXd share = sigma.array() / total;
  out.dSigma = ((share - 1.0) * r + share * hazard).matrix();
  return out;
}

}  // namespace sysrisk
