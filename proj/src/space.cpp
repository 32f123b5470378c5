#include "mmslab/space.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <queue>
#include <stdexcept>

namespace mms {
namespace {

constexpr double kTieTol = 1e-12;

double sphere_arc(const double* a, const double* b) {
  const double cx = a[1] * b[2] - a[2] * b[1];
  const double cy = a[2] * b[0] - a[0] * b[2];
  const double cz = a[0] * b[1] - a[1] * b[0];
  const double dot = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
  return std::atan2(std::sqrt(cx * cx + cy * cy + cz * cz), dot);
}

double wrap_diff(double d) { return d - std::nearbyint(d); }

int factor_ambient(const Factor& f) { return std::holds_alternative<PeriodicAxis>(f) ? 1 : 3; }

Index factor_count(const Factor& f) {
  if (const auto* p = std::get_if<PeriodicAxis>(&f)) return p->resolution;
  return static_cast<Index>(std::get<SphereLattice>(f).points.size());
}

}  // namespace

MetricMeasureSpace::MetricMeasureSpace(std::string chart, std::vector<Factor> factors)
    : chart_(std::move(chart)), factors_(std::move(factors)) {
  if (factors_.empty()) throw std::invalid_argument("chart space needs at least one factor");
  finish_chart_setup();
}

MetricMeasureSpace::MetricMeasureSpace(Index num_points, std::vector<GraphEdge> edges,
                                       Eigen::VectorXd weights, int nominal_dimension)
    : chart_("graph"), edges_(std::move(edges)), num_points_(num_points),
      nominal_dimension_(nominal_dimension) {
  if (num_points < 2) throw std::invalid_argument("graph needs at least two points");
  if (weights.size() != num_points) throw std::invalid_argument("graph weight count mismatch");
  if ((weights.array() < 0).any()) throw std::invalid_argument("negative graph weight");
  const double total = weights.sum();
  if (!(total > 0)) throw std::invalid_argument("graph weights sum to zero");
  weights_ = weights / total;

  const double inf = std::numeric_limits<double>::infinity();
  Eigen::MatrixXd d = Eigen::MatrixXd::Constant(num_points, num_points, inf);
  std::vector<std::vector<std::pair<Index, double>>> adj(num_points);
  for (const auto& e : edges_) {
    if (e.a < 0 || e.b < 0 || e.a >= num_points || e.b >= num_points || e.a == e.b)
      throw std::invalid_argument("graph edge endpoint out of range");
    if (!(e.length > 0)) throw std::invalid_argument("graph edge length must be positive");
    adj[e.a].push_back({e.b, e.length});
    adj[e.b].push_back({e.a, e.length});
  }
  using Item = std::pair<double, Index>;
  for (Index s = 0; s < num_points; ++s) {
    std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
    d(s, s) = 0.0;
    pq.push({0.0, s});
    while (!pq.empty()) {
      auto [du, u] = pq.top();
      pq.pop();
      if (du > d(s, u)) continue;
      for (auto [v, len] : adj[u]) {
        if (du + len < d(s, v)) {
          d(s, v) = du + len;
          pq.push({d(s, v), v});
        }
      }
    }
  }
  if (!d.allFinite()) throw ConstructionError("graph is disconnected");
  d = 0.5 * (d + d.transpose()).eval();
  diameter_ = d.maxCoeff();
  double h = 0.0;
  for (Index i = 0; i < num_points; ++i) {
    double nn = inf;
    for (Index j = 0; j < num_points; ++j)
      if (j != i) nn = std::min(nn, d(i, j));
    h = std::max(h, nn);
  }
  grid_spacing_ = h;
  dist_ = std::move(d);
}

void MetricMeasureSpace::finish_chart_setup() {
  ambient_dim_ = 0;
  num_points_ = 1;
  nominal_dimension_ = 0;
  factor_offsets_.clear();
  for (const auto& f : factors_) {
    factor_offsets_.push_back(ambient_dim_);
    ambient_dim_ += factor_ambient(f);
    num_points_ *= factor_count(f);
    nominal_dimension_ += std::holds_alternative<PeriodicAxis>(f) ? 1 : 2;
  }
  coords_.resize(num_points_, ambient_dim_);
  const auto sizes = factor_sizes();
  for (Index i = 0; i < num_points_; ++i) {
    Index rem = i;
    for (int f = static_cast<int>(factors_.size()) - 1; f >= 0; --f) {
      const Index k = rem % sizes[f];
      rem /= sizes[f];
      const int off = factor_offsets_[f];
      if (const auto* p = std::get_if<PeriodicAxis>(&factors_[f])) {
        coords_(i, off) = static_cast<double>(k) / p->resolution;
      } else {
        const auto& v = std::get<SphereLattice>(factors_[f]).points[k];
        coords_(i, off) = v.x();
        coords_(i, off + 1) = v.y();
        coords_(i, off + 2) = v.z();
      }
    }
  }
  weights_ = Eigen::VectorXd::Constant(num_points_, 1.0 / static_cast<double>(num_points_));

  double diam_sq = 0.0;
  double h = 0.0;
  for (const auto& f : factors_) {
    if (const auto* p = std::get_if<PeriodicAxis>(&f)) {
      const double half = std::floor(p->resolution / 2.0) / p->resolution;
      diam_sq += half * half;
      h = std::max(h, 1.0 / p->resolution);
    } else {
      const auto& pts = std::get<SphereLattice>(f).points;
      double dmax = 0.0, hmax = 0.0;
      for (std::size_t a = 0; a < pts.size(); ++a) {
        double nn = std::numeric_limits<double>::infinity();
        for (std::size_t b = 0; b < pts.size(); ++b) {
          if (a == b) continue;
          const double d = sphere_arc(pts[a].data(), pts[b].data());
          dmax = std::max(dmax, d);
          nn = std::min(nn, d);
        }
        hmax = std::max(hmax, nn);
      }
      diam_sq += dmax * dmax;
      h = std::max(h, hmax);
    }
  }
  diameter_ = std::sqrt(diam_sq);
  grid_spacing_ = h;

  if (num_points_ <= kDenseDistanceLimit) {
    Eigen::MatrixXd d(num_points_, num_points_);
    for (Index i = 0; i < num_points_; ++i) {
      d(i, i) = 0.0;
      for (Index j = i + 1; j < num_points_; ++j) {
        const double v = chart_distance(coords(i), coords(j));
        d(i, j) = v;
        d(j, i) = v;
      }
    }
    dist_ = std::move(d);
  }
}

double MetricMeasureSpace::factor_distance_sq(std::size_t f, const double* a, const double* b) const {
  const int off = factor_offsets_[f];
  if (std::holds_alternative<PeriodicAxis>(factors_[f])) {
    const double d = wrap_diff(a[off] - b[off]);
    return d * d;
  }
  const double d = sphere_arc(a + off, b + off);
  return d * d;
}

double MetricMeasureSpace::distance(Index i, Index j) const {
  if (i < 0 || j < 0 || i >= num_points_ || j >= num_points_)
    throw std::out_of_range("point id out of range");
  if (dist_) return (*dist_)(i, j);
  return chart_distance(coords(i), coords(j));
}

double MetricMeasureSpace::chart_distance(std::span<const double> a, std::span<const double> b) const {
  if (is_graph()) throw std::logic_error("graph spaces have no chart");
  double s = 0.0;
  for (std::size_t f = 0; f < factors_.size(); ++f) s += factor_distance_sq(f, a.data(), b.data());
  return std::sqrt(s);
}

bool MetricMeasureSpace::is_periodic_grid() const {
  if (factors_.empty()) return false;
  return std::all_of(factors_.begin(), factors_.end(),
                     [](const Factor& f) { return std::holds_alternative<PeriodicAxis>(f); });
}

std::vector<int> MetricMeasureSpace::grid_shape() const {
  if (!is_periodic_grid()) throw std::logic_error("not a periodic grid");
  std::vector<int> shape;
  for (const auto& f : factors_) shape.push_back(std::get<PeriodicAxis>(f).resolution);
  return shape;
}

Index MetricMeasureSpace::grid_index(std::span<const int> multi) const {
  const auto shape = grid_shape();
  if (multi.size() != shape.size()) throw std::invalid_argument("multi-index rank mismatch");
  Index idx = 0;
  for (std::size_t a = 0; a < shape.size(); ++a) {
    int c = multi[a] % shape[a];
    if (c < 0) c += shape[a];
    idx = idx * shape[a] + c;
  }
  return idx;
}

std::vector<int> MetricMeasureSpace::grid_multi_index(Index i) const {
  const auto shape = grid_shape();
  std::vector<int> m(shape.size());
  for (int a = static_cast<int>(shape.size()) - 1; a >= 0; --a) {
    m[a] = static_cast<int>(i % shape[a]);
    i /= shape[a];
  }
  return m;
}

std::vector<Index> MetricMeasureSpace::factor_sizes() const {
  std::vector<Index> s;
  for (const auto& f : factors_) s.push_back(factor_count(f));
  return s;
}

void MetricMeasureSpace::canonicalize(std::span<double> x) const {
  for (std::size_t f = 0; f < factors_.size(); ++f) {
    const int off = factor_offsets_[f];
    if (std::holds_alternative<PeriodicAxis>(factors_[f])) {
      x[off] -= std::floor(x[off]);
      if (x[off] >= 1.0) x[off] = 0.0;
    } else {
      const double n = std::sqrt(x[off] * x[off] + x[off + 1] * x[off + 1] + x[off + 2] * x[off + 2]);
      x[off] /= n;
      x[off + 1] /= n;
      x[off + 2] /= n;
    }
  }
}

Index MetricMeasureSpace::nearest_point(std::span<const double> x) const {
  if (is_graph()) throw std::logic_error("graph spaces have no chart");
  const auto sizes = factor_sizes();
  Index idx = 0;
  for (std::size_t f = 0; f < factors_.size(); ++f) {
    const int off = factor_offsets_[f];
    Index k = 0;
    if (const auto* p = std::get_if<PeriodicAxis>(&factors_[f])) {
      double u = x[off] - std::floor(x[off]);
      k = static_cast<Index>(std::nearbyint(u * p->resolution)) % p->resolution;
    } else {
      const auto& pts = std::get<SphereLattice>(factors_[f]).points;
      double best = -2.0;
      for (std::size_t j = 0; j < pts.size(); ++j) {
        const double dot = pts[j].x() * x[off] + pts[j].y() * x[off + 1] + pts[j].z() * x[off + 2];
        if (dot > best) {
          best = dot;
          k = static_cast<Index>(j);
        }
      }
    }
    idx = idx * sizes[f] + k;
  }
  return idx;
}

void MetricMeasureSpace::log_map(std::span<const double> a, std::span<const double> b,
                                 std::span<double> v) const {
  for (std::size_t f = 0; f < factors_.size(); ++f) {
    const int off = factor_offsets_[f];
    if (std::holds_alternative<PeriodicAxis>(factors_[f])) {
      v[off] = wrap_diff(b[off] - a[off]);
    } else {
      const Eigen::Vector3d p(a[off], a[off + 1], a[off + 2]);
      const Eigen::Vector3d q(b[off], b[off + 1], b[off + 2]);
      const double theta = sphere_arc(p.data(), q.data());
      Eigen::Vector3d w = q - p.dot(q) * p;
      const double nw = w.norm();
      if (nw < 1e-15) w.setZero(); else w *= theta / nw;
      v[off] = w.x();
      v[off + 1] = w.y();
      v[off + 2] = w.z();
    }
  }
}

void MetricMeasureSpace::geodesic_point(std::span<const double> a, std::span<const double> b,
                                        double s, std::span<double> out) const {
  for (std::size_t f = 0; f < factors_.size(); ++f) {
    const int off = factor_offsets_[f];
    if (std::holds_alternative<PeriodicAxis>(factors_[f])) {
      out[off] = a[off] + s * wrap_diff(b[off] - a[off]);
    } else {
      const Eigen::Vector3d p(a[off], a[off + 1], a[off + 2]);
      const Eigen::Vector3d q(b[off], b[off + 1], b[off + 2]);
      const double theta = sphere_arc(p.data(), q.data());
      Eigen::Vector3d r;
      if (theta < 1e-12) {
        r = p;
      } else {
        const double st = std::sin(theta);
        r = (std::sin((1 - s) * theta) / st) * p + (std::sin(s * theta) / st) * q;
      }
      out[off] = r.x();
      out[off + 1] = r.y();
      out[off + 2] = r.z();
    }
  }
  canonicalize(out);
}

void MetricMeasureSpace::geodesic_velocity(std::span<const double> a, std::span<const double> b,
                                           double s, std::span<double> out) const {
  for (std::size_t f = 0; f < factors_.size(); ++f) {
    const int off = factor_offsets_[f];
    if (std::holds_alternative<PeriodicAxis>(factors_[f])) {
      out[off] = wrap_diff(b[off] - a[off]);
    } else {
      const Eigen::Vector3d p(a[off], a[off + 1], a[off + 2]);
      const Eigen::Vector3d q(b[off], b[off + 1], b[off + 2]);
      const double theta = sphere_arc(p.data(), q.data());
      Eigen::Vector3d r = Eigen::Vector3d::Zero();
      if (theta >= 1e-12) {
        const double st = std::sin(theta);
        r = (-theta * std::cos((1 - s) * theta) / st) * p + (theta * std::cos(s * theta) / st) * q;
      }
      out[off] = r.x();
      out[off + 1] = r.y();
      out[off + 2] = r.z();
    }
  }
}

void MetricMeasureSpace::project_tangent(std::span<const double> x, std::span<double> v) const {
  for (std::size_t f = 0; f < factors_.size(); ++f) {
    if (std::holds_alternative<PeriodicAxis>(factors_[f])) continue;
    const int off = factor_offsets_[f];
    const double dot = x[off] * v[off] + x[off + 1] * v[off + 1] + x[off + 2] * v[off + 2];
    for (int c = 0; c < 3; ++c) v[off + c] -= dot * x[off + c];
  }
}

MetricMeasureSpace build_torus_grid(int dims, int resolution) {
  if (dims < 1 || dims > 3) throw std::invalid_argument("torus dimension must be 1..3");
  return build_torus_grid(std::vector<int>(dims, resolution));
}

MetricMeasureSpace build_torus_grid(const std::vector<int>& shape) {
  if (shape.empty() || shape.size() > 8) throw std::invalid_argument("torus rank must be 1..8");
  std::vector<Factor> f;
  for (int r : shape) {
    if (r < 4) throw std::invalid_argument("torus resolution must be at least 4");
    f.push_back(PeriodicAxis{r});
  }
  return MetricMeasureSpace("torus-" + std::to_string(shape.size()), std::move(f));
}

MetricMeasureSpace build_sphere_mesh(int num_points) {
  if (num_points < 12) throw std::invalid_argument("sphere mesh needs at least 12 points");
  SphereLattice lat;
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  for (int i = 0; i < num_points; ++i) {
    const double z = 1.0 - (2.0 * i + 1.0) / num_points;
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double phi = golden * i;
    lat.points.emplace_back(r * std::cos(phi), r * std::sin(phi), z);
  }
  return MetricMeasureSpace("sphere", {Factor{std::move(lat)}});
}

MetricMeasureSpace build_product_with_circle(std::shared_ptr<const MetricMeasureSpace> base,
                                             int circle_resolution) {
  if (!base) throw std::invalid_argument("null base space");
  if (base->is_graph()) throw std::invalid_argument("circle product needs a chart-backed base");
  if (circle_resolution < 4) throw std::invalid_argument("circle resolution must be at least 4");
  auto factors = base->factors();
  factors.push_back(PeriodicAxis{circle_resolution});
  MetricMeasureSpace out("product-circle(" + base->chart() + ")", std::move(factors));
  out.base_ = std::move(base);
  out.circle_resolution_ = circle_resolution;
  return out;
}

MetricMeasureSpace build_graph(Index num_points, std::vector<GraphEdge> edges,
                               Eigen::VectorXd weights, int nominal_dimension) {
  return MetricMeasureSpace(num_points, std::move(edges), std::move(weights), nominal_dimension);
}

BallIndex::BallIndex(const MetricMeasureSpace& space) : space_(&space) {
  const Index n = space.size();
  periodic_ = space.is_periodic_grid();
  if (periodic_) {
    shape_ = space.grid_shape();
    const int dims = static_cast<int>(shape_.size());
    std::vector<std::pair<double, Index>> order(n);
    for (Index k = 0; k < n; ++k) {
      const auto m = space.grid_multi_index(k);
      double s = 0.0;
      for (int a = 0; a < dims; ++a) {
        const double d = wrap_diff(static_cast<double>(m[a]) / shape_[a]);
        s += d * d;
      }
      order[k] = {std::sqrt(s), k};
    }
    std::stable_sort(order.begin(), order.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    offsets_.resize(static_cast<std::size_t>(n) * dims);
    offset_dist_.resize(n);
    for (Index k = 0; k < n; ++k) {
      const auto m = space.grid_multi_index(order[k].second);
      for (int a = 0; a < dims; ++a) offsets_[k * dims + a] = m[a];
      offset_dist_[k] = order[k].first;
    }
  } else {
    order_.resize(n, n);
    sorted_dist_.resize(n, n);
    std::vector<std::pair<double, Index>> row(n);
    for (Index x = 0; x < n; ++x) {
      for (Index y = 0; y < n; ++y) row[y] = {space.distance(x, y), y};
      std::stable_sort(row.begin(), row.end(),
                       [](const auto& a, const auto& b) { return a.first < b.first; });
      for (Index k = 0; k < n; ++k) {
        order_(x, k) = row[k].second;
        sorted_dist_(x, k) = row[k].first;
      }
    }
  }
}

std::vector<Index> ball(const MetricMeasureSpace& space, Index center, double radius) {
  if (center < 0 || center >= space.size()) throw std::out_of_range("unknown point id");
  if (!(radius > 0)) throw std::invalid_argument("ball radius must be positive");
  std::vector<Index> out;
  for (Index y = 0; y < space.size(); ++y)
    if (space.distance(center, y) < radius) out.push_back(y);
  return out;
}

double ball_mass(const MetricMeasureSpace& space, Index center, double radius) {
  double m = 0.0;
  for (Index y : ball(space, center, radius)) m += space.weight(y);
  return m;
}

AhlforsReport check_ahlfors(const MetricMeasureSpace& space, double n,
                            const std::vector<double>& r_grid, const std::vector<Index>& x_sample) {
  if (!(n > 0)) throw std::invalid_argument("Ahlfors exponent must be positive");
  if (r_grid.empty() || x_sample.empty()) throw std::invalid_argument("empty Ahlfors sample");
  AhlforsReport rep;
  rep.n = n;
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0, dbl = 1.0;
  for (Index x : x_sample) {
    for (double r : r_grid) {
      const double m = ball_mass(space, x, r);
      const double ratio = m / std::pow(r, n);
      lo = std::min(lo, ratio);
      hi = std::max(hi, ratio);
      dbl = std::max(dbl, ball_mass(space, x, 2 * r) / m);
    }
  }
  rep.c1 = lo;
  rep.c2 = hi;
  rep.worst_ratio_low = lo;
  rep.worst_ratio_high = hi;
  rep.c_doubling = dbl;
  rep.ratio_flagged = hi / lo > 100.0;
  return rep;
}

std::vector<double> default_ahlfors_radii(const MetricMeasureSpace& space, int count) {
  const double a = 2 * space.grid_spacing();
  const double b = space.diameter() / 2;
  if (!(b > a) || count < 1) throw std::invalid_argument("no admissible Ahlfors radii");
  std::vector<double> r(count);
  for (int k = 0; k < count; ++k)
    r[k] = count == 1 ? a : a * std::pow(b / a, static_cast<double>(k) / (count - 1));
  return r;
}

Eigen::VectorXd maximal_function(const MetricMeasureSpace& space, const Eigen::VectorXd& f) {
  return maximal_function(BallIndex(space), f);
}

Eigen::VectorXd maximal_function(const BallIndex& balls, const Eigen::VectorXd& f) {
  const auto& space = balls.space();
  const Index n = space.size();
  if (f.size() != n) throw std::invalid_argument("function size mismatch");
  const Eigen::VectorXd af = f.cwiseAbs();
  const auto& w = space.weights();
  Eigen::VectorXd out(n);
  for (Index x = 0; x < n; ++x) {
    double num = 0.0, den = 0.0, best = 0.0, last = -1.0;
    bool open = false;
    balls.visit_sorted(x, [&](Index y, double d) {
      // Close the current tie group before admitting a strictly farther point.
      if (open && d > last + kTieTol) best = std::max(best, num / den);
      num += af[y] * w[y];
      den += w[y];
      last = d;
      open = true;
      return true;
    });
    out[x] = std::max(best, num / den);
  }
  return out;
}

DistancePowerIntegral distance_power_integral(const MetricMeasureSpace& space, Index x,
                                              double alpha) {
  DistancePowerIntegral r;
  for (Index y = 0; y < space.size(); ++y) {
    if (y == x) continue;
    r.value += std::pow(space.distance(x, y), -alpha) * space.weight(y);
  }
  r.divergent_in_limit = alpha >= space.nominal_dimension();
  return r;
}

}  // namespace mms
