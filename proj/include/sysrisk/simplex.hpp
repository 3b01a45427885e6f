#ifndef SYSRISK_SIMPLEX_HPP
#define SYSRISK_SIMPLEX_HPP

#include "sysrisk/core.hpp"

#include <utility>
#include <vector>

namespace sysrisk {

/// Small dense linear programs: min c'x subject to linear rows, with free or
/// nonnegative variables. Two-phase tableau simplex, Dantzig pricing with a
/// switch to Bland's rule after a run of degenerate pivots.
class LinearProgram {
 public:
  enum class Sense { LessEqual, GreaterEqual, Equal };
  enum class Status { Optimal, Infeasible, Unbounded, IterationLimit };

  struct Solution {
    Status status = Status::IterationLimit;
    Vector x;
    double objective = 0.0;
    int pivots = 0;
  };

  /// Returns the new variable's index.
  Index addVariable(double cost, bool nonnegative = false);
  /// Row sum_k coeffs[k].second * x[coeffs[k].first] (sense) rhs.
  void addRow(std::vector<std::pair<Index, double>> coeffs, Sense sense, double rhs);

  Index variables() const { return static_cast<Index>(cost_.size()); }
  Index rows() const { return static_cast<Index>(rows_.size()); }

  Solution solve(int maxPivots = 200000) const;

 private:
  struct Row {
    std::vector<std::pair<Index, double>> coeffs;
    Sense sense;
    double rhs;
  };
  std::vector<double> cost_;
  std::vector<bool> nonnegative_;
  std::vector<Row> rows_;
};

}  // namespace sysrisk

#endif  // SYSRISK_SIMPLEX_HPP
