#ifndef SYSRISK_NORMAL_HPP
#define SYSRISK_NORMAL_HPP

#include <array>
#include <cmath>
#include <numbers>

namespace sysrisk::normal {

inline constexpr double kInvSqrt2Pi = 0.3989422804014326779399460599343818684759;

/// Standard normal density.
inline double pdf(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }

/// Standard normal distribution function, accurate in both tails.
inline double cdf(double x) { return 0.5 * std::erfc(-x * std::numbers::sqrt2 / 2.0); }

/// E[(c - Z)^+] = c Phi(c) + phi(c) for standard normal Z.
inline double partialExpectation(double c) { return c * cdf(c) + pdf(c); }

/// P(Z1 <= h, Z2 <= k) for a standard bivariate normal with correlation r.
/// Infinite limits are allowed; |r| = 1 collapses to the univariate case.
double bivariateCdf(double h, double k, double r);

/// E[Z1 1{Z1 <= h, Z2 <= k}] for a standard bivariate normal with correlation r.
double truncatedFirstMoment(double h, double k, double r);

/// Nodes and weights of the n-point Gauss-Legendre rule on [-1, 1].
template <std::size_t N>
struct GaussLegendre {
  std::array<double, N> nodes{};
  std::array<double, N> weights{};
};

/// Computed once by Newton iteration on P_n.
const GaussLegendre<64>& gaussLegendre64();

/// Integrate f over [a, b] with `panels` 64-point Gauss-Legendre panels.
template <typename F>
double integrate(F&& f, double a, double b, int panels = 1) {
  const auto& rule = gaussLegendre64();
  const double width = (b - a) / panels;
  double total = 0.0;
  for (int p = 0; p < panels; ++p) {
    const double lo = a + p * width;
    const double half = 0.5 * width;
    const double mid = lo + half;
    double acc = 0.0;
    for (std::size_t i = 0; i < rule.nodes.size(); ++i) acc += rule.weights[i] * f(mid + half * rule.nodes[i]);
    total += half * acc;
  }
  return total;
}

}  // namespace sysrisk::normal

#endif  // SYSRISK_NORMAL_HPP
