#ifndef SYSRISK_FINITE_ALLOC_HPP
#define SYSRISK_FINITE_ALLOC_HPP

#include "sysrisk/core.hpp"

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace sysrisk {

/// Disjoint nonempty blocks covering {0..N-1}. Stored canonically: members
/// ascending, blocks ordered by their lowest member.
class GroupPartition {
 public:
  GroupPartition(std::vector<std::vector<Index>> groups, Index institutions);

  static GroupPartition singletons(Index n);
  static GroupPartition single(Index n);
  /// Restricted growth string: label[i] <= 1 + max(label[0..i-1]).
  static GroupPartition fromLabels(const std::vector<int>& labels);
  /// Parse "{1 3}{2}{4}" (1-based).
  static GroupPartition parse(std::string_view text, Index institutions);

  Index institutions() const { return n_; }
  std::size_t size() const { return groups_.size(); }
  const std::vector<std::vector<Index>>& groups() const { return groups_; }
  const std::vector<Index>& operator[](std::size_t g) const { return groups_[g]; }

  /// "{1 3}{2}{4}", 1-based.
  std::string str() const;

  /// True if every block of this partition lies inside a block of `coarser`.
  bool refines(const GroupPartition& coarser) const;

  bool operator==(const GroupPartition& other) const = default;

 private:
  std::vector<std::vector<Index>> groups_;
  Index n_ = 0;
};

struct GroupedSolution {
  GroupPartition partition;
  /// c_g: scenario-constant cash of each block.
  Vector groupConstants;
  /// N x M optimal Y.
  Matrix allocation;
  double rho = 0.0;
  /// beta_N / gamma.
  double lambdaMult = 0.0;
};

/// Minimize sum_g c_g subject to E[sum_i exp(-alpha_i (X^i + Y^i))] = gamma with
/// sum_{k in g} Y^k = c_g deterministic per block. Closed form, log-space throughout.
GroupedSolution solveGrouped(const RiskVector& x, const Eigen::Ref<const Vector>& alphas, double gamma,
                             const GroupPartition& partition);

/// Indices by decreasing E[Y*_i]; ties keep the lower index first.
std::vector<Index> rankInstitutions(const GroupedSolution& sol, const ScenarioSpace& space);

/// All set partitions of {0..n-1} in restricted-growth-string order. n <= 8.
std::vector<GroupPartition> enumeratePartitions(Index n);

struct SweepRow {
  GroupPartition partition;
  double rho = 0.0;
  Vector groupConstants;
};

/// Every partition's rho, ascending (ties keep enumeration order). Parallel over partitions.
std::vector<SweepRow> groupSweep(const RiskVector& x, const Eigen::Ref<const Vector>& alphas, double gamma);

}  // namespace sysrisk

#endif  // SYSRISK_FINITE_ALLOC_HPP
