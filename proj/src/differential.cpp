#include "mmslab/differential.hpp"

#include <algorithm>
#include <numeric>

namespace mms {

GradientStencil::GradientStencil(const MetricMeasureSpace& space, int sphere_neighbors)
    : space_(&space) {
  if (space.is_graph()) throw std::invalid_argument("gradient stencil needs a chart-backed space");
  const Index n = space.size();
  const int dim = space.ambient_dim();
  const auto& factors = space.factors();
  const auto sizes = space.factor_sizes();
  const auto& offs = space.factor_offsets();

  // Strides of each factor inside the mixed-radix point index.
  std::vector<Index> stride(factors.size(), 1);
  for (int f = static_cast<int>(factors.size()) - 2; f >= 0; --f) stride[f] = stride[f + 1] * sizes[f + 1];

  // Per sphere factor: neighbour lists and least-squares rows in ambient form.
  struct SphereRows {
    std::vector<std::vector<Index>> nbr;
    std::vector<std::vector<Eigen::Vector3d>> coef;  // contribution of (f_q - f_p) to the gradient
  };
  std::vector<SphereRows> sphere_rows(factors.size());
  for (std::size_t f = 0; f < factors.size(); ++f) {
    const auto* lat = std::get_if<SphereLattice>(&factors[f]);
    if (!lat) continue;
    const auto& pts = lat->points;
    const Index m = static_cast<Index>(pts.size());
    const int k = std::min<int>(sphere_neighbors, static_cast<int>(m) - 1);
    auto& rows = sphere_rows[f];
    rows.nbr.resize(m);
    rows.coef.resize(m);
    std::vector<std::pair<double, Index>> cand(m);
    for (Index p = 0; p < m; ++p) {
      for (Index q = 0; q < m; ++q) cand[q] = {-pts[p].dot(pts[q]), q};
      std::partial_sort(cand.begin(), cand.begin() + k + 1, cand.end());
      const Eigen::Vector3d x = pts[p];
      Eigen::Vector3d e1 = (std::abs(x.z()) < 0.9 ? Eigen::Vector3d::UnitZ() : Eigen::Vector3d::UnitX()).cross(x).normalized();
      Eigen::Vector3d e2 = x.cross(e1);
      Eigen::MatrixXd V(k, 2);
      std::vector<Index> nb;
      int r = 0;
      for (int c = 0; c <= k && r < k; ++c) {
        const Index q = cand[c].second;
        if (q == p) continue;
        const Eigen::Vector3d y = pts[q];
        double ang = std::atan2(x.cross(y).norm(), x.dot(y));
        Eigen::Vector3d t = y - x.dot(y) * x;
        t = t.normalized() * ang;
        V(r, 0) = t.dot(e1);
        V(r, 1) = t.dot(e2);
        nb.push_back(q);
        ++r;
      }
      const Eigen::Matrix2d N = V.transpose() * V;
      const Eigen::MatrixXd P = N.inverse() * V.transpose();  // 2 x k
      rows.nbr[p] = nb;
      rows.coef[p].resize(k);
      for (int c = 0; c < k; ++c) rows.coef[p][c] = P(0, c) * e1 + P(1, c) * e2;
    }
  }

  std::vector<std::vector<Eigen::Triplet<double>>> trip(dim);
  for (Index p = 0; p < n; ++p) {
    Index rem = p;
    std::vector<Index> fidx(factors.size());
    for (int f = static_cast<int>(factors.size()) - 1; f >= 0; --f) {
      fidx[f] = rem % sizes[f];
      rem /= sizes[f];
    }
    for (std::size_t f = 0; f < factors.size(); ++f) {
      const int off = offs[f];
      if (const auto* ax = std::get_if<PeriodicAxis>(&factors[f])) {
        const Index N = ax->resolution;
        const Index up = p + (((fidx[f] + 1) % N) - fidx[f]) * stride[f];
        const Index dn = p + (((fidx[f] + N - 1) % N) - fidx[f]) * stride[f];
        const double s = N / 2.0;
        trip[off].emplace_back(p, up, s);
        trip[off].emplace_back(p, dn, -s);
      } else {
        const auto& rows = sphere_rows[f];
        const Index ip = fidx[f];
        for (std::size_t c = 0; c < rows.nbr[ip].size(); ++c) {
          const Index q = p + (rows.nbr[ip][c] - ip) * stride[f];
          for (int a = 0; a < 3; ++a) {
            trip[off + a].emplace_back(p, q, rows.coef[ip][c][a]);
            trip[off + a].emplace_back(p, p, -rows.coef[ip][c][a]);
          }
        }
      }
    }
  }
  comps_.resize(dim);
  for (int a = 0; a < dim; ++a) {
    comps_[a].resize(n, n);
    comps_[a].setFromTriplets(trip[a].begin(), trip[a].end());
  }
}

RowMatrix GradientStencil::gradient(const Eigen::VectorXd& f) const {
  const Index n = space_->size();
  if (f.size() != n) throw std::invalid_argument("function size mismatch");
  RowMatrix g(n, space_->ambient_dim());
  for (int a = 0; a < space_->ambient_dim(); ++a) g.col(a) = comps_[a] * f;
  return g;
}

Eigen::VectorXd GradientStencil::modulus(const Eigen::VectorXd& f) const {
  return gradient(f).rowwise().norm();
}

SparseRM GradientStencil::derivation_matrix(const RowMatrix& b) const {
  const Index n = space_->size();
  if (b.rows() != n || b.cols() != space_->ambient_dim())
    throw std::invalid_argument("field table shape mismatch");
  SparseRM D(n, n);
  for (int a = 0; a < space_->ambient_dim(); ++a) {
    SparseRM scaled = comps_[a];
    for (Index r = 0; r < n; ++r)
      for (SparseRM::InnerIterator it(scaled, r); it; ++it) it.valueRef() *= b(r, a);
    D += scaled;
  }
  D.prune(0.0);
  return D;
}

Eigen::VectorXd GradientStencil::adjoint_divergence(const SparseRM& D) const {
  const auto& w = space_->weights();
  Eigen::VectorXd acc = D.transpose() * w;
  return -(acc.array() / w.array()).matrix();
}

}  // namespace mms
