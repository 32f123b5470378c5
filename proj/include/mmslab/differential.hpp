#pragma once

#include "mmslab/space.hpp"

#include <Eigen/Sparse>

namespace mms {

using SparseRM = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// Discrete gradient on a chart-backed space, one sparse operator per ambient coordinate.
///
/// Periodic axes use second-order centred differences. Sphere factors fit a
/// tangent-plane linear model to the nearest lattice neighbours by least squares.
/// The resulting ambient vector is tangent on every factor.
class GradientStencil {
 public:
  explicit GradientStencil(const MetricMeasureSpace& space, int sphere_neighbors = 10);

  const MetricMeasureSpace& space() const { return *space_; }
  const std::vector<SparseRM>& components() const { return comps_; }

  /// Row-major table: row p holds the ambient gradient at point p.
  RowMatrix gradient(const Eigen::VectorXd& f) const;
  Eigen::VectorXd modulus(const Eigen::VectorXd& f) const;

  /// Derivation matrix D with (D f)(p) = b(p) . grad f(p), for tabulated field values.
  SparseRM derivation_matrix(const RowMatrix& field_values) const;

  /// Divergence defined by discrete integration by parts against the weights:
  /// sum_p w_p (D f)(p) = - sum_q w_q div(q) f(q) for every f.
  Eigen::VectorXd adjoint_divergence(const SparseRM& derivation) const;

 private:
  const MetricMeasureSpace* space_;
  std::vector<SparseRM> comps_;
};

}  // namespace mms
