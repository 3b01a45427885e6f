#include "sysrisk/ou_network.hpp"

#include "sysrisk/gaussian_det.hpp"
#include "sysrisk/gaussian_scen.hpp"
#include "sysrisk/parallel.hpp"
#include "sysrisk/random.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <complex>
#include <numbers>

namespace sysrisk {

NetworkModel::NetworkModel(Matrix p, Vector sigma, Vector rhoCommon, Vector x0, double t)
    : p_(std::move(p)), sigma_(std::move(sigma)), rho_(std::move(rhoCommon)), x0_(std::move(x0)), t_(t) {
  const Index n = sigma_.size();
  if (n < 1) throw ShapeError("NetworkModel: at least one institution required");
  if (p_.rows() != n || p_.cols() != n || rho_.size() != n || x0_.size() != n)
    throw ShapeError("NetworkModel: inconsistent dimensions");
  if (!p_.allFinite() || !sigma_.allFinite() || !rho_.allFinite() || !x0_.allFinite() || !std::isfinite(t_))
    throw DomainError("NetworkModel: non-finite parameter");
  if ((p_.array() < 0.0).any()) throw DomainError("NetworkModel: preferences must be nonnegative");
  if ((p_ - p_.transpose()).cwiseAbs().maxCoeff() > tol::kOrder * std::max(1.0, p_.cwiseAbs().maxCoeff()))
    throw DomainError("NetworkModel: preferences must be symmetric");
  if ((sigma_.array() < 0.0).any()) throw DomainError("NetworkModel: sigma must be nonnegative");
  if ((rho_.array().abs() > 1.0).any()) throw DomainError("NetworkModel: |rhoCommon| must not exceed one");
  if (!(t_ > 0.0)) throw DomainError("NetworkModel: horizon must be positive");
}

NetworkModel NetworkModel::homogeneous(Index n, double p, double sigma, double rho, double x0, double t) {
  Matrix pref = Matrix::Constant(n, n, p / static_cast<double>(n));
  pref.diagonal().setZero();
  return NetworkModel(std::move(pref), Vector::Constant(n, sigma), Vector::Constant(n, rho), Vector::Constant(n, x0), t);
}

Matrix NetworkModel::drift() const {
  Matrix l = -p_;
  l.diagonal() = p_.rowwise().sum() - p_.diagonal();
  return l;
}

Matrix NetworkModel::diffusionCovariance() const {
  Matrix s = (sigma_.cwiseProduct(rho_)) * (sigma_.cwiseProduct(rho_)).transpose();
  // rho_i^2 + (1 - rho_i^2) = 1 on the diagonal; set it directly so it does not depend on rho.
  s.diagonal() = sigma_.cwiseAbs2();
  return s;
}

namespace {

// (1 - e^{-2pt}) / (2p), continuous at p = 0.
double relaxedTime(double p, double t) { return p == 0.0 ? t : -std::expm1(-2.0 * p * t) / (2.0 * p); }

// (e^z - 1) / z, continuous at z = 0.
std::complex<double> phi1(std::complex<double> z) {
  if (std::abs(z) < 1e-8) return 1.0 + 0.5 * z;
  return (std::exp(z) - 1.0) / z;
}

template <typename Rhs, typename State>
State rk4(const Rhs& rhs, State y, double t, int steps) {
  const double h = t / steps;
  for (int s = 0; s < steps; ++s) {
    const State k1 = rhs(y);
    const State k2 = rhs(State(y + 0.5 * h * k1));
    const State k3 = rhs(State(y + 0.5 * h * k2));
    const State k4 = rhs(State(y + h * k3));
    y += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return y;
}

}  // namespace

Moments homogeneousMoments(double p, double sigma, double rho, Index n, double t, double x0) {
  if (!(p >= 0.0) || !(t > 0.0) || n < 1) throw DomainError("homogeneousMoments: need p >= 0, t > 0, N >= 1");
  if (std::abs(rho) > 1.0) throw DomainError("homogeneousMoments: |rho| must not exceed one");
  const double invN = 1.0 / static_cast<double>(n);
  const double s2 = sigma * sigma;
  const double idio = 1.0 - rho * rho;
  return {x0, s2 * idio * (1.0 - invN) * relaxedTime(p, t) + s2 * (rho * rho + idio * invN) * t};
}

CentralClearingMoments centralClearingMoments(double p, double sigma, double sigmaC, double rho, double rhoC, Index n,
                                              double t) {
  if (!(p > 0.0) || !(t > 0.0) || n < 2) throw DomainError("centralClearingMoments: need p > 0, t > 0, N >= 2");
  const double nn = static_cast<double>(n);
  Eigen::Matrix4d a;
  a << -2, 0, 2, 0,                              //
      0, -2 * (nn - 1), 2 * (nn - 1), 0,         //
      1, 1, -nn, nn - 2,                         //
      0, 0, 2, -2;
  const Eigen::Vector4d b(sigma * sigma, sigmaC * sigmaC, sigma * sigmaC * rho * rhoC, sigma * sigma * rho * rho);

  CentralClearingMoments out;
  // Y(t) = int_0^t e^{pA(t-s)} B ds = V diag(t phi1(p lambda t)) V^{-1} B.
  const Eigen::EigenSolver<Eigen::Matrix4d> solver(a);
  const Eigen::Matrix4cd v = solver.eigenvectors();
  const Eigen::JacobiSVD<Eigen::Matrix4cd> svd(v);
  const double cond = svd.singularValues()(0) / svd.singularValues()(3);
  Eigen::Vector4d y;
  if (solver.info() == Eigen::Success && std::isfinite(cond) && cond < 1e8) {
    Eigen::Vector4cd coeff = v.partialPivLu().solve(b.cast<std::complex<double>>());
    for (int k = 0; k < 4; ++k) coeff[k] *= t * phi1(p * t * solver.eigenvalues()[k]);
    y = (v * coeff).real();
    out.method = "eigen";
  } else {
    y = rk4([&](const Eigen::Vector4d& s) -> Eigen::Vector4d { return p * (a * s) + b; }, Eigen::Vector4d::Zero().eval(),
            t, 10000);
    out.method = "rk4";
  }
  out.v = y[0];
  out.v1 = y[1];

  const double s2 = sigma * sigma;
  const double cross = sigma * sigmaC * rho * rhoC;
  const double relaxed = relaxedTime(p, t);
  const double lead = (s2 + 2.0 * cross - 3.0 * s2 * rho * rho) * t;
  out.v1Series = s2 * rho * rho * t + (lead + 2.0 / p * (sigmaC * sigmaC - cross)) / nn;
  out.vSeries = s2 * (1.0 - rho * rho) * relaxed + s2 * rho * rho * t + (lead - s2 * (1.0 - rho * rho) * relaxed) / nn;
  return out;
}

GaussianSystem heterogeneousCovariance(const NetworkModel& model) {
  const Matrix l = model.drift();
  const Matrix sig = model.diffusionCovariance();
  const Index n = model.size();
  int steps = 10000;
  for (int attempt = 0; attempt <= 3; ++attempt, steps *= 2) {
    const Matrix q = rk4([&](const Matrix& s) -> Matrix { return -l * s - s * l.transpose() + sig; },
                         Matrix(Matrix::Zero(n, n)), model.horizon(), steps);
    const Matrix sym = 0.5 * (q + q.transpose());
    const Eigen::SelfAdjointEigenSolver<Matrix> eig(sym, Eigen::EigenvaluesOnly);
    const double scale = std::max(1.0, sym.diagonal().cwiseAbs().maxCoeff());
    if (sym.allFinite() && eig.eigenvalues().minCoeff() >= -1e-10 * scale) {
      const Vector mu = rk4([&](const Vector& m) -> Vector { return -l * m; }, model.x0(), model.horizon(), steps);
      return GaussianSystem(mu, sym);
    }
  }
  throw ConvergenceError("heterogeneousCovariance: covariance integration unstable");
}

Matrix covarianceByEigen(const NetworkModel& model) {
  const Eigen::SelfAdjointEigenSolver<Matrix> eig(model.drift());
  const Matrix& v = eig.eigenvectors();
  const Vector& lam = eig.eigenvalues();
  const double t = model.horizon();
  Matrix core = v.transpose() * model.diffusionCovariance() * v;
  for (Index i = 0; i < core.rows(); ++i) {
    for (Index j = 0; j < core.cols(); ++j) {
      const double rate = lam[i] + lam[j];
      core(i, j) *= std::abs(rate * t) < 1e-12 ? t : -std::expm1(-rate * t) / rate;
    }
  }
  return v * core * v.transpose();
}


SampleMoments simulatePaths(const NetworkModel& model, Index paths, Index steps, std::uint64_t seed) {
  if (paths < 1 || steps < 1) throw DomainError("simulatePaths: paths and steps must be positive");
  const Index n = model.size();
  const Matrix l = model.drift();
  const double dt = model.horizon() / static_cast<double>(steps);
  const double sqrtDt = std::sqrt(dt);
  const Vector common = model.sigma().cwiseProduct(model.rhoCommon()) * sqrtDt;
  const Vector idio =
      (model.sigma().array() * (1.0 - model.rhoCommon().array().square()).max(0.0).sqrt()).matrix() * sqrtDt;
  const bool coupled = (l.array() != 0.0).any();

  Matrix terminal(n, paths);
  constexpr Index kChunk = 256;
  const auto chunks = static_cast<std::size_t>((paths + kChunk - 1) / kChunk);
  parallelFor(chunks, [&](std::size_t c) {
    Vector x(n);
    Vector z(n);
    const Index begin = static_cast<Index>(c) * kChunk;
    const Index end = std::min(paths, begin + kChunk);
    for (Index k = begin; k < end; ++k) {
      NormalStream normals(seed, static_cast<std::uint64_t>(k));
      x = model.x0();
      for (Index s = 0; s < steps; ++s) {
        const double z0 = normals.next();
        for (Index i = 0; i < n; ++i) z[i] = normals.next();
        if (coupled) x.noalias() -= dt * (l * x);
        x += common * z0 + idio.cwiseProduct(z);
      }
      terminal.col(k) = x;
    }
  });

  // Serial reduction keeps the result bitwise independent of scheduling.
  SampleMoments out;
  out.paths = paths;
  const double count = static_cast<double>(paths);
  out.mean = terminal.rowwise().mean();
  const Matrix centered = terminal.colwise() - out.mean;
  const double dof = paths > 1 ? count - 1.0 : 1.0;
  out.covariance = centered * centered.transpose() / dof;
  out.meanStdError = (out.covariance.diagonal() / count).cwiseSqrt();
  out.covarianceStdError.resize(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      const Eigen::ArrayXd prod = centered.row(i).array() * centered.row(j).array();
      const double spread = (prod - prod.mean()).square().sum() / dof;
      out.covarianceStdError(i, j) = std::sqrt(spread / count);
    }
  }
  return out;
}

ThreeBankRow threeBankExample(double rho1, double sigma2t, double gamma, double d, double rho) {
  if (!(sigma2t > 0.0)) throw DomainError("threeBankExample: sigma^2 t must be positive");
  // Horizon t = 1, so sigma^2 = sigma2t. The pair covariance does not depend on p.
  Matrix pref = Matrix::Zero(3, 3);
  pref(1, 2) = pref(2, 1) = 0.5;
  const NetworkModel model(pref, Vector::Constant(3, std::sqrt(sigma2t)), Vector((Vector(3) << rho1, rho, rho).finished()),
                           Vector::Zero(3), 1.0);
  const GaussianSystem triple = heterogeneousCovariance(model);
  Matrix aggregate(2, 3);
  aggregate << 1, 0, 0, 0, 1, 1;
  Matrix q = aggregate * triple.covariance() * aggregate.transpose();
  q(1, 0) = q(0, 1);
  const GaussianSystem pair(aggregate * triple.mu(), q);

  const Vector zero = Vector::Zero(2);
  const DetGaussianSolution det = optimalDeterministic(pair, zero, gamma);
  TwoStateOptions options;
  options.side = TriggerSide::Above;
  const TwoStateSolution scen = solveTwoState(pair, zero, gamma, d, options);
  return ThreeBankRow{q(0, 1), det.m, det.rho, scen.m, scen.alpha[0], scen.rho, scen.converged};
}

}  // namespace sysrisk
