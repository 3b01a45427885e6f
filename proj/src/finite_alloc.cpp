#include "sysrisk/finite_alloc.hpp"

#include "sysrisk/parallel.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <sstream>

namespace sysrisk {

namespace {

double logSumExp(const Eigen::ArrayXd& terms) {
  const double top = terms.maxCoeff();
  return top + std::log((terms - top).exp().sum());
}

}  // namespace

GroupPartition::GroupPartition(std::vector<std::vector<Index>> groups, Index institutions)
    : groups_(std::move(groups)), n_(institutions) {
  if (n_ < 1) throw ShapeError("GroupPartition: at least one institution required");
  std::vector<int> seen(static_cast<std::size_t>(n_), 0);
  for (auto& g : groups_) {
    if (g.empty()) throw DomainError("GroupPartition: empty block");
    std::sort(g.begin(), g.end());
    for (const Index i : g) {
      if (i < 0 || i >= n_) throw DomainError("GroupPartition: institution index out of range");
      if (seen[static_cast<std::size_t>(i)]++) throw DomainError("GroupPartition: blocks overlap");
    }
  }
  if (std::find(seen.begin(), seen.end(), 0) != seen.end())
    throw DomainError("GroupPartition: blocks do not cover every institution");
  std::sort(groups_.begin(), groups_.end(), [](const auto& a, const auto& b) { return a.front() < b.front(); });
}

GroupPartition GroupPartition::singletons(Index n) {
  std::vector<std::vector<Index>> groups;
  for (Index i = 0; i < n; ++i) groups.push_back({i});
  return GroupPartition(std::move(groups), n);
}

GroupPartition GroupPartition::single(Index n) {
  std::vector<Index> all(static_cast<std::size_t>(n));
  std::iota(all.begin(), all.end(), Index{0});
  return GroupPartition({all}, n);
}

GroupPartition GroupPartition::fromLabels(const std::vector<int>& labels) {
  std::vector<std::vector<Index>> groups;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto label = static_cast<std::size_t>(labels[i]);
    if (labels[i] < 0 || label > groups.size()) throw DomainError("GroupPartition: not a restricted growth string");
    if (label == groups.size()) groups.emplace_back();
    groups[label].push_back(static_cast<Index>(i));
  }
  return GroupPartition(std::move(groups), static_cast<Index>(labels.size()));
}

GroupPartition GroupPartition::parse(std::string_view text, Index institutions) {
  std::vector<std::vector<Index>> groups;
  std::size_t pos = 0;
  auto skipSpace = [&] {
    while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
  };
  skipSpace();
  while (pos < text.size()) {
    if (text[pos] != '{') throw DomainError("GroupPartition: expected '{' in \"" + std::string(text) + "\"");
    ++pos;
    std::vector<Index> block;
    for (;;) {
      skipSpace();
      if (pos < text.size() && text[pos] == '}') {
        ++pos;
        break;
      }
      if (pos < text.size() && text[pos] == ',') {
        ++pos;
        continue;
      }
      std::size_t end = pos;
      while (end < text.size() && std::isdigit(static_cast<unsigned char>(text[end]))) ++end;
      if (end == pos) throw DomainError("GroupPartition: malformed block in \"" + std::string(text) + "\"");
      block.push_back(std::stol(std::string(text.substr(pos, end - pos))) - 1);
      pos = end;
    }
    groups.push_back(std::move(block));
    skipSpace();
  }
  return GroupPartition(std::move(groups), institutions);
}

std::string GroupPartition::str() const {
  std::ostringstream out;
  for (const auto& g : groups_) {
    out << '{';
    for (std::size_t k = 0; k < g.size(); ++k) out << (k ? " " : "") << g[k] + 1;
    out << '}';
  }
  return out.str();
}

bool GroupPartition::refines(const GroupPartition& coarser) const {
  if (coarser.n_ != n_) return false;
  std::vector<std::size_t> owner(static_cast<std::size_t>(n_));
  for (std::size_t b = 0; b < coarser.groups_.size(); ++b)
    for (const Index i : coarser.groups_[b]) owner[static_cast<std::size_t>(i)] = b;
  return std::all_of(groups_.begin(), groups_.end(), [&](const auto& g) {
    return std::all_of(g.begin(), g.end(),
                       [&](Index i) { return owner[static_cast<std::size_t>(i)] == owner[static_cast<std::size_t>(g.front())]; });
  });
}

GroupedSolution solveGrouped(const RiskVector& x, const Eigen::Ref<const Vector>& alphas, double gamma,
                             const GroupPartition& partition) {
  const Index n = x.institutions();
  if (alphas.size() != n) throw ShapeError("solveGrouped: alphas must have length N");
  if (partition.institutions() != n) throw ShapeError("solveGrouped: partition size differs from N");
  if (!alphas.allFinite() || (alphas.array() <= 0.0).any()) throw DomainError("solveGrouped: alphas must be positive");
  if (!(gamma > 0.0) || !std::isfinite(gamma)) throw DomainError("solveGrouped: gamma must be positive");

  const Matrix& values = x.values();
  const Eigen::ArrayXd logP = x.space().probabilities().array().log();
  const Eigen::ArrayXd logAlpha = alphas.array().log();
  const double betaN = alphas.cwiseInverse().sum();
  const Index m = x.scenarios();

  GroupedSolution sol{partition, Vector(static_cast<Index>(partition.size())), Matrix(n, m), 0.0, betaN / gamma};
  for (std::size_t g = 0; g < partition.size(); ++g) {
    const auto& members = partition[g];
    const Index ref = members.front();
    double beta = 0.0;
    double recenter = 0.0;  // sum_k (1/alpha_k) ln(alpha_r / alpha_k)
    double logWeights = 0.0;  // sum_k (ln alpha_k) / alpha_k
    Eigen::ArrayXd groupSum = Eigen::ArrayXd::Zero(m);
    for (const Index k : members) {
      beta += 1.0 / alphas[k];
      recenter += (logAlpha[ref] - logAlpha[k]) / alphas[k];
      logWeights += logAlpha[k] / alphas[k];
      groupSum += values.row(k).transpose().array();
    }
    // ln d_g in log-sum-exp form, then c_g = -beta_g ln(gamma / (alpha_r beta_N d_g)).
    const double logD = logSumExp(logP - groupSum / beta - recenter / beta);
    const double c = -beta * (std::log(gamma) - logAlpha[ref] - std::log(betaN) - logD);
    sol.groupConstants[static_cast<Index>(g)] = c;

    // Common per-scenario marginal kappa_j = alpha_k exp(-alpha_k (X^k + y^k)).
    const Eigen::ArrayXd logKappa = (logWeights - groupSum - c) / beta;
    for (const Index k : members) {
      sol.allocation.row(k) =
          (-values.row(k).transpose().array() - (logKappa - logAlpha[k]) / alphas[k]).matrix().transpose();
    }
  }
  sol.rho = sol.groupConstants.sum();
  return sol;
}

std::vector<Index> rankInstitutions(const GroupedSolution& sol, const ScenarioSpace& space) {
  if (sol.allocation.cols() != space.size()) throw ShapeError("rankInstitutions: scenario count mismatch");
  return rankByExpectation(sol.allocation * space.probabilities());
}

std::vector<GroupPartition> enumeratePartitions(Index n) {
  if (n < 1) throw ShapeError("enumeratePartitions: n must be positive");
  if (n > 8) throw ShapeError("enumeratePartitions: n > 8 exceeds the Bell-number cap");
  const auto size = static_cast<std::size_t>(n);
  std::vector<GroupPartition> out;
  std::vector<int> labels(size, 0);
  std::vector<int> prefixMax(size, 0);  // max of labels[0..i]
  for (;;) {
    out.push_back(GroupPartition::fromLabels(labels));
    // Increment the rightmost position that may still grow.
    std::size_t i = size - 1;
    while (i > 0 && labels[i] > prefixMax[i - 1]) --i;
    if (i == 0) break;
    ++labels[i];
    prefixMax[i] = std::max(prefixMax[i - 1], labels[i]);
    for (std::size_t j = i + 1; j < size; ++j) {
      labels[j] = 0;
      prefixMax[j] = prefixMax[i];
    }
  }
  return out;
}

std::vector<SweepRow> groupSweep(const RiskVector& x, const Eigen::Ref<const Vector>& alphas, double gamma) {
  const auto partitions = enumeratePartitions(x.institutions());
  const Vector a = alphas;
  std::vector<SweepRow> rows(partitions.size(), SweepRow{partitions.front(), 0.0, Vector()});
  parallelFor(partitions.size(), [&](std::size_t p) {
    const GroupedSolution sol = solveGrouped(x, a, gamma, partitions[p]);
    rows[p] = SweepRow{partitions[p], sol.rho, sol.groupConstants};
  });
  std::stable_sort(rows.begin(), rows.end(), [](const SweepRow& l, const SweepRow& r) { return l.rho < r.rho; });
  return rows;
}

}  // namespace sysrisk
