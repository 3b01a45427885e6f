#include "doctest.h"
#include "sysrisk/ou_network.hpp"
#include "sysrisk/random.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <cstdlib>

using namespace sysrisk;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

NetworkModel randomModel(SplitMix64& rng, Index n) {
  Matrix p(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) p(i, j) = i == j ? 0.0 : rng.uniform(0.0, 1.5);
  p = 0.5 * (p + p.transpose()).eval();
  Vector sigma(n), rho(n), x0(n);
  for (Index i = 0; i < n; ++i) {
    sigma[i] = rng.uniform(0.3, 2.0);
    rho[i] = rng.uniform(-0.9, 0.9);
    x0[i] = rng.uniform(-1, 1);
  }
  return NetworkModel(p, sigma, rho, x0, rng.uniform(0.5, 2.0));
}

/// The central-clearing moment ODE integrated with a plain RK4 loop.
Eigen::Vector4d clearingOde(double p, double sigma, double sigmaC, double rho, double rhoC, double n, double t) {
  Eigen::Matrix4d a;
  a << -2, 0, 2, 0, 0, -2 * (n - 1), 2 * (n - 1), 0, 1, 1, -n, n - 2, 0, 0, 2, -2;
  const Eigen::Vector4d b(sigma * sigma, sigmaC * sigmaC, sigma * sigmaC * rho * rhoC, sigma * sigma * rho * rho);
  Eigen::Vector4d y = Eigen::Vector4d::Zero();
  const int steps = 40000;
  const double h = t / steps;
  auto f = [&](const Eigen::Vector4d& s) -> Eigen::Vector4d { return p * (a * s) + b; };
  for (int k = 0; k < steps; ++k) {
    const Eigen::Vector4d k1 = f(y), k2 = f(y + 0.5 * h * k1), k3 = f(y + 0.5 * h * k2), k4 = f(y + h * k3);
    y += h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
  }
  return y;
}

}  // namespace

TEST_CASE("homogeneous variance limits") {
  CHECK(homogeneousMoments(0.0, 1.3, 0.6, 10, 2.0).variance == doctest::Approx(1.69 * 2.0).epsilon(1e-14));
  const double limit = 1.69 * (0.36 + 0.64 / 10.0) * 2.0;
  CHECK(std::abs(homogeneousMoments(1e6, 1.3, 0.6, 10, 2.0).variance - limit) < 1e-6);
  // Tiny p must not lose digits to cancellation.
  CHECK(homogeneousMoments(1e-12, 1.3, 0.6, 10, 2.0).variance == doctest::Approx(1.69 * 2.0).epsilon(1e-10));
  CHECK(homogeneousMoments(1.0, 1.0, 0.5, 4, 1.0, 3.0).mean == 3.0);
}

TEST_CASE("covariance ODE special cases") {
  const NetworkModel free(Matrix::Zero(3, 3), vec({1, 2, 0.5}), Vector::Zero(3), Vector::Zero(3), 1.5);
  const GaussianSystem q = heterogeneousCovariance(free);
  CHECK((q.covariance() - Matrix(vec({1.5, 6.0, 0.375}).asDiagonal())).cwiseAbs().maxCoeff() < 1e-12);

  const NetworkModel hom = NetworkModel::homogeneous(6, 1.3, 0.9, 0.4, 0.0, 1.7);
  const double var = homogeneousMoments(1.3, 0.9, 0.4, 6, 1.7).variance;
  const GaussianSystem h = heterogeneousCovariance(hom);
  for (Index i = 0; i < 6; ++i) CHECK(std::abs(h.covariance()(i, i) - var) < 1e-8);
}

TEST_CASE("three-bank aggregated covariance") {
  const double rho = 0.8, rho1 = -0.3, s2t = 1.7;
  Matrix p = Matrix::Zero(3, 3);
  p(1, 2) = p(2, 1) = 0.5;
  const NetworkModel model(p, Vector::Constant(3, std::sqrt(s2t)), vec({rho1, rho, rho}), Vector::Zero(3), 1.0);
  const Matrix q = heterogeneousCovariance(model).covariance();
  Matrix agg(2, 3);
  agg << 1, 0, 0, 0, 1, 1;
  const Matrix pairCov = agg * q * agg.transpose();
  Matrix expected(2, 2);
  expected << 1, 2 * rho * rho1, 2 * rho * rho1, 2 * (1 + rho * rho);
  CHECK((pairCov - s2t * expected).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("RK4 and eigen covariances agree; sum and mean conservation") {
  SplitMix64 rng(4);
  for (int t = 0; t < 10; ++t) {
    const NetworkModel model = randomModel(rng, 2 + static_cast<Index>(rng.next() % 5));
    const GaussianSystem rk = heterogeneousCovariance(model);
    const Matrix eig = covarianceByEigen(model);
    CHECK((rk.covariance() - eig).cwiseAbs().maxCoeff() < 1e-8);
    CHECK((rk.covariance() - rk.covariance().transpose()).cwiseAbs().maxCoeff() == 0.0);
    CHECK(Eigen::SelfAdjointEigenSolver<Matrix>(rk.covariance()).eigenvalues().minCoeff() > -1e-12);
    const Vector ones = Vector::Ones(model.size());
    const double total = std::pow(model.sigma().dot(model.rhoCommon()), 2) +
                         model.sigma().cwiseAbs2().dot((1.0 - model.rhoCommon().array().square()).matrix());
    CHECK(ones.dot(rk.covariance() * ones) == doctest::Approx(total * model.horizon()).epsilon(1e-8));
    CHECK(rk.mu().sum() == doctest::Approx(model.x0().sum()).epsilon(1e-12));
    CHECK((ones.transpose() * model.drift()).cwiseAbs().maxCoeff() < 1e-14);
  }
}

TEST_CASE("central clearing moments") {
  // Exact solution against an independent RK4 integration.
  for (Index n : {3, 10, 50}) {
    const auto c = centralClearingMoments(0.8, 1.1, 0.7, 0.3, -0.4, n, 1.3);
    const Eigen::Vector4d ref = clearingOde(0.8, 1.1, 0.7, 0.3, -0.4, static_cast<double>(n), 1.3);
    CHECK(c.v == doctest::Approx(ref[0]).epsilon(1e-10));
    CHECK(c.v1 == doctest::Approx(ref[1]).epsilon(1e-10));
  }
  // Periphery series error is O(1/N^2): N^2 |v - series| settles to a constant.
  double previous = 0.0;
  for (Index n : {25, 50, 100, 200, 400}) {
    const auto c = centralClearingMoments(1.0, 1.0, 1.0, 0.0, 0.0, n, 1.0);
    const double scaled = static_cast<double>(n * n) * std::abs(c.v - c.vSeries);
    CHECK(scaled < 1.0);
    if (previous > 0.0) CHECK(std::abs(scaled / previous - 1.0) < 0.01);
    previous = scaled;
  }
  // Same parameters at the centre: the homogeneous variance is matched to O(1/N).
  for (Index n : {20, 40, 80, 160}) {
    const auto c = centralClearingMoments(1.0, 0.9, 0.9, 0.6, 0.6, n, 1.0);
    const double hom = homogeneousMoments(1.0, 0.9, 0.6, n, 1.0).variance;
    CHECK(static_cast<double>(n) * std::abs(c.v - hom) < 0.05);
  }
  // The sign of sigma_c rho_c - sigma rho decides which network has the larger variance.
  for (double sc : {0.5, 1.5}) {
    const auto c = centralClearingMoments(1.0, 1.0, sc, 0.5, 0.6, 200, 1.0);
    const double hom = homogeneousMoments(1.0, 1.0, 0.5, 200, 1.0).variance;
    CHECK((c.v > hom) == (sc * 0.6 > 1.0 * 0.5));
  }
  CHECK_THROWS_AS(centralClearingMoments(0.0, 1, 1, 0, 0, 10, 1), DomainError);
}

TEST_CASE("Euler-Maruyama paths") {
  const NetworkModel still(Matrix::Zero(2, 2), Vector::Zero(2), Vector::Zero(2), vec({1.5, -2.0}), 1.0);
  const SampleMoments s = simulatePaths(still, 100, 10, 1);
  CHECK(s.mean.isApprox(vec({1.5, -2.0})));
  CHECK(s.covariance.cwiseAbs().maxCoeff() == 0.0);

  const NetworkModel hom = NetworkModel::homogeneous(10, 1.0, 1.0, 0.8, 0.0, 1.0);
  const SampleMoments mc = simulatePaths(hom, 20000, 1000, 7);
  const double var = homogeneousMoments(1.0, 1.0, 0.8, 10, 1.0).variance;
  for (Index i = 0; i < 10; ++i) {
    CHECK(std::abs(mc.covariance(i, i) - var) < 3.0 * mc.covarianceStdError(i, i));
    CHECK(std::abs(mc.mean[i]) < 3.0 * mc.meanStdError[i]);
  }
}

TEST_CASE("simulation is reproducible and independent of the worker count") {
  SplitMix64 rng(9);
  const NetworkModel model = randomModel(rng, 3);
  setenv("SYSRISK_THREADS", "1", 1);
  const SampleMoments a = simulatePaths(model, 1000, 50, 42);
  setenv("SYSRISK_THREADS", "3", 1);
  const SampleMoments b = simulatePaths(model, 1000, 50, 42);
  unsetenv("SYSRISK_THREADS");
  CHECK(a.mean == b.mean);
  CHECK(a.covariance == b.covariance);
  const SampleMoments c = simulatePaths(model, 1000, 50, 43);
  CHECK(a.mean != c.mean);
}

TEST_CASE("three-bank example columns") {
  const ThreeBankRow lo = threeBankExample(-0.5, 1.0, 0.7, 2.0);
  const ThreeBankRow mid = threeBankExample(0.0, 1.0, 0.7, 2.0);
  const ThreeBankRow hi = threeBankExample(0.5, 1.0, 0.7, 2.0);
  // Deterministic column depends on marginals only.
  CHECK(lo.detM == mid.detM);
  CHECK(hi.detRho == mid.detRho);
  CHECK(mid.detRho == doctest::Approx(0.977045).epsilon(1e-5));
  CHECK(std::abs(mid.detM[0] - 0.3486) < 1.5e-3);
  CHECK(lo.converged);
  CHECK(lo.rho <= lo.detRho + 1e-9);
  CHECK(lo.rho < mid.rho);
  CHECK(mid.rho < hi.rho);
}
