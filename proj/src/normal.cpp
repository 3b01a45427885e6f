#include "sysrisk/normal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace sysrisk::normal {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

GaussLegendre<64> buildRule() {
  constexpr int n = 64;
  GaussLegendre<64> rule;
  for (int i = 0; i < n / 2; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0;
      double p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = pk;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    rule.nodes[i] = -x;
    rule.nodes[n - 1 - i] = x;
    rule.weights[i] = w;
    rule.weights[n - 1 - i] = w;
  }
  return rule;
}

// P(Z1 > h, Z2 > k) following Genz's bvnu, with the 64-point rule throughout.
double upperOrthant(double h, double k, double r) {
  const auto& rule = gaussLegendre64();
  double hk = h * k;
  double bvn = 0.0;
  if (std::abs(r) < 0.925) {
    const double hs = 0.5 * (h * h + k * k);
    const double asr = 0.5 * std::asin(r);
    for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
      const double sn = std::sin(asr * (1.0 + rule.nodes[i]));
      bvn += rule.weights[i] * std::exp((sn * hk - hs) / (1.0 - sn * sn));
    }
    return bvn * asr / kTwoPi + cdf(-h) * cdf(-k);
  }

  if (r < 0.0) {
    k = -k;
    hk = -hk;
  }
  if (std::abs(r) < 1.0) {
    const double as = (1.0 - r) * (1.0 + r);
    double a = std::sqrt(as);
    const double bs = (h - k) * (h - k);
    const double c = (4.0 - hk) / 8.0;
    const double d = (12.0 - hk) / 80.0;
    double asr = -0.5 * (bs / as + hk);
    if (asr > -100.0) bvn = a * std::exp(asr) * (1.0 - c * (bs - as) * (1.0 - d * bs) / 3.0 + c * d * as * as);
    if (hk > -100.0) {
      const double b = std::sqrt(bs);
      const double sp = std::sqrt(kTwoPi) * cdf(-b / a);
      bvn -= std::exp(-0.5 * hk) * sp * b * (1.0 - c * bs * (1.0 - d * bs) / 3.0);
    }
    a *= 0.5;
    double acc = 0.0;
    for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
      const double xs = std::pow(a * (1.0 + rule.nodes[i]), 2);
      asr = -0.5 * (bs / xs + hk);
      if (asr <= -100.0) continue;
      const double sp = 1.0 + c * xs * (1.0 + 5.0 * d * xs);
      const double rs = std::sqrt(1.0 - xs);
      const double ep = std::exp(-0.5 * hk * xs / ((1.0 + rs) * (1.0 + rs))) / rs;
      acc += rule.weights[i] * std::exp(asr) * (sp - ep);
    }
    bvn = (a * acc - bvn) / kTwoPi;
  }
  if (r > 0.0) return bvn + cdf(-std::max(h, k));
  if (h >= k) return -bvn;
  const double span = h < 0.0 ? cdf(k) - cdf(h) : cdf(-h) - cdf(-k);
  return span - bvn;
}

}  // namespace

const GaussLegendre<64>& gaussLegendre64() {
  static const GaussLegendre<64> rule = buildRule();
  return rule;
}

double bivariateCdf(double h, double k, double r) {
  if (std::isnan(h) || std::isnan(k) || std::isnan(r)) throw std::domain_error("bivariateCdf: NaN argument");
  if (r < -1.0 || r > 1.0) throw std::domain_error("bivariateCdf: correlation outside [-1, 1]");
  if (h == -std::numeric_limits<double>::infinity() || k == -std::numeric_limits<double>::infinity()) return 0.0;
  if (h == std::numeric_limits<double>::infinity()) return cdf(k);
  if (k == std::numeric_limits<double>::infinity()) return cdf(h);
  if (r == 1.0) return cdf(std::min(h, k));
  if (r == -1.0) return std::max(0.0, cdf(h) - cdf(-k));
  if (r == 0.0) return cdf(h) * cdf(k);
  return std::clamp(upperOrthant(-h, -k, r), 0.0, 1.0);
}

double truncatedFirstMoment(double h, double k, double r) {
  if (std::isnan(h) || std::isnan(k) || std::isnan(r)) throw std::domain_error("truncatedFirstMoment: NaN argument");
  constexpr double inf = std::numeric_limits<double>::infinity();
  if (h == -inf || k == -inf) return 0.0;
  const double s2 = (1.0 - r) * (1.0 + r);
  if (s2 <= 0.0) {
    if (r > 0.0) return -pdf(std::min(h, k));
    // Z2 = -Z1: region -k <= Z1 <= h
    return h + k > 0.0 ? pdf(k) - pdf(h) : 0.0;
  }
  const double s = std::sqrt(s2);
  const double termH = h == inf ? 0.0 : pdf(h) * (k == inf ? 1.0 : cdf((k - r * h) / s));
  const double termK = k == inf ? 0.0 : pdf(k) * (h == inf ? 1.0 : cdf((h - r * k) / s));
  return -termH - r * termK;
}

}  // namespace sysrisk::normal
