#pragma once

#include <Eigen/Dense>

namespace mms {

struct LpResult {
  enum class Status { Optimal, Unbounded, IterationLimit };
  Status status = Status::Optimal;
  double objective = 0.0;
  Eigen::VectorXd x;       ///< primal solution
  Eigen::VectorXd duals;   ///< shadow prices of the <= rows (nonnegative at optimum)
};

/// maximize c.x subject to A x <= b, x >= 0, with b >= 0 (the slack basis is feasible).
/// Dense tableau simplex with Bland's rule, so degenerate pivots cannot cycle.
LpResult solve_packing_lp(const Eigen::MatrixXd& A, const Eigen::VectorXd& b, const Eigen::VectorXd& c,
                          int max_iterations = 100000);

}  // namespace mms
