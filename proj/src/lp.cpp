#include "mmslab/lp.hpp"

#include <stdexcept>

namespace mms {

LpResult solve_packing_lp(const Eigen::MatrixXd& A, const Eigen::VectorXd& b, const Eigen::VectorXd& c,
                          int max_iterations) {
  const Eigen::Index m = A.rows(), n = A.cols();
  if (b.size() != m || c.size() != n) throw std::invalid_argument("LP shape mismatch");
  if ((b.array() < 0).any()) throw std::invalid_argument("packing LP needs b >= 0");
  constexpr double eps = 1e-12;

  // Tableau columns: n structural, m slack, rhs. Last row holds reduced costs.
  Eigen::MatrixXd T = Eigen::MatrixXd::Zero(m + 1, n + m + 1);
  T.topLeftCorner(m, n) = A;
  T.block(0, n, m, m).setIdentity();
  T.col(n + m).head(m) = b;
  T.row(m).head(n) = -c.transpose();
  std::vector<Eigen::Index> basis(m);
  for (Eigen::Index i = 0; i < m; ++i) basis[i] = n + i;

  LpResult res;
  int it = 0;
  for (; it < max_iterations; ++it) {
    Eigen::Index enter = -1;
    for (Eigen::Index j = 0; j < n + m; ++j)
      if (T(m, j) < -eps) {
        enter = j;
        break;
      }
    if (enter < 0) break;
    Eigen::Index leave = -1;
    double best = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) {
      if (T(i, enter) <= eps) continue;
      const double r = T(i, n + m) / T(i, enter);
      if (leave < 0 || r < best - eps || (r <= best + eps && basis[i] < basis[leave])) {
        leave = i;
        best = r;
      }
    }
    if (leave < 0) {
      res.status = LpResult::Status::Unbounded;
      return res;
    }
    T.row(leave) /= T(leave, enter);
    for (Eigen::Index i = 0; i <= m; ++i)
      if (i != leave && T(i, enter) != 0.0) T.row(i) -= T(i, enter) * T.row(leave);
    basis[leave] = enter;
  }
  if (it == max_iterations) res.status = LpResult::Status::IterationLimit;
  res.x = Eigen::VectorXd::Zero(n);
  for (Eigen::Index i = 0; i < m; ++i)
    if (basis[i] < n) res.x[basis[i]] = T(i, n + m);
  res.duals = T.row(m).segment(n, m).transpose();
  res.objective = T(m, n + m);
  return res;
}

}  // namespace mms
