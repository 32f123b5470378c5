#pragma once

#include <Eigen/Dense>

#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace mms {

using Index = Eigen::Index;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Raised when a model space, operator or field cannot be built from its inputs.
class ConstructionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A unit-circumference periodic axis sampled at `resolution` equispaced points.
struct PeriodicAxis {
  int resolution = 0;
};

/// Unit 2-sphere sampled by a fixed point lattice; coordinates are unit vectors.
struct SphereLattice {
  std::vector<Eigen::Vector3d> points;
};

using Factor = std::variant<PeriodicAxis, SphereLattice>;

struct GraphEdge {
  Index a = 0;
  Index b = 0;
  double length = 0.0;
};

/// Finite metric measure space (points, geodesic distance, probability weights).
///
/// Chart-backed spaces are Cartesian products of factors: tori are products of
/// periodic axes, the sphere is a single lattice factor and the circle product
/// appends one periodic axis to its base. Points are enumerated in mixed radix
/// with the first factor varying slowest, so a product point (x, s) has index
/// `x * circle_resolution + s`. Graph spaces carry an explicit edge list and
/// shortest-path distances instead of chart coordinates.
class MetricMeasureSpace {
 public:
  static constexpr Index kDenseDistanceLimit = 4096;

  /// Chart-backed space from factors; weights are uniform.
  MetricMeasureSpace(std::string chart, std::vector<Factor> factors);
  /// Graph-backed space from edges and point weights (normalized on entry).
  MetricMeasureSpace(Index num_points, std::vector<GraphEdge> edges, Eigen::VectorXd weights,
                     int nominal_dimension);

  Index size() const { return num_points_; }
  const std::string& chart() const { return chart_; }
  bool is_graph() const { return factors_.empty(); }
  const std::vector<Factor>& factors() const { return factors_; }
  const std::vector<GraphEdge>& edges() const { return edges_; }

  /// Number of ambient chart coordinates per point (0 for graphs).
  int ambient_dim() const { return ambient_dim_; }
  std::span<const double> coords(Index i) const {
    return {coords_.data() + i * ambient_dim_, static_cast<std::size_t>(ambient_dim_)};
  }
  const RowMatrix& coordinate_table() const { return coords_; }

  const Eigen::VectorXd& weights() const { return weights_; }
  double weight(Index i) const { return weights_[i]; }
  double diameter() const { return diameter_; }
  double grid_spacing() const { return grid_spacing_; }
  int nominal_dimension() const { return nominal_dimension_; }

  double distance(Index i, Index j) const;
  /// Geodesic distance between arbitrary chart points.
  double chart_distance(std::span<const double> a, std::span<const double> b) const;

  /// True when every factor is a periodic axis (flat torus grid of any shape).
  bool is_periodic_grid() const;
  /// Per-axis resolutions of a periodic grid, slowest axis first.
  std::vector<int> grid_shape() const;
  /// Mixed-radix index of a periodic multi-index (components reduced mod resolution).
  Index grid_index(std::span<const int> multi) const;
  std::vector<int> grid_multi_index(Index i) const;

  /// Map chart coordinates back into the canonical domain (wrap / normalize).
  void canonicalize(std::span<double> x) const;
  /// Nearest lattice point to chart coordinates.
  Index nearest_point(std::span<const double> x) const;
  /// Tangent vector at `a` whose exponential reaches `b` (minimal geodesic, length d(a,b)).
  void log_map(std::span<const double> a, std::span<const double> b, std::span<double> v) const;
  /// Point at parameter s on the minimal geodesic from a to b.
  void geodesic_point(std::span<const double> a, std::span<const double> b, double s,
                      std::span<double> out) const;
  /// Velocity at parameter s of the constant-speed minimal geodesic from a to b.
  void geodesic_velocity(std::span<const double> a, std::span<const double> b, double s,
                         std::span<double> out) const;
  /// Orthogonal projection of an ambient vector onto the tangent space at x.
  void project_tangent(std::span<const double> x, std::span<double> v) const;

  /// Offset of each factor's coordinates inside a point's ambient coordinates.
  const std::vector<int>& factor_offsets() const { return factor_offsets_; }
  /// Number of lattice points contributed by each factor.
  std::vector<Index> factor_sizes() const;

  /// Base space and circle resolution for product-with-circle spaces.
  const std::shared_ptr<const MetricMeasureSpace>& base() const { return base_; }
  int circle_resolution() const { return circle_resolution_; }

 private:
  friend MetricMeasureSpace build_product_with_circle(std::shared_ptr<const MetricMeasureSpace>,
                                                      int);
  void finish_chart_setup();
  double factor_distance_sq(std::size_t f, const double* a, const double* b) const;

  std::string chart_;
  std::vector<Factor> factors_;
  std::vector<int> factor_offsets_;
  std::vector<GraphEdge> edges_;
  Index num_points_ = 0;
  int ambient_dim_ = 0;
  int nominal_dimension_ = 0;
  RowMatrix coords_;
  Eigen::VectorXd weights_;
  std::optional<Eigen::MatrixXd> dist_;
  double diameter_ = 0.0;
  double grid_spacing_ = 0.0;
  std::shared_ptr<const MetricMeasureSpace> base_;
  int circle_resolution_ = 0;
};

MetricMeasureSpace build_torus_grid(int dims, int resolution);
/// Anisotropic torus grid; `shape` lists the per-axis resolutions.
MetricMeasureSpace build_torus_grid(const std::vector<int>& shape);
MetricMeasureSpace build_sphere_mesh(int num_points);
MetricMeasureSpace build_product_with_circle(std::shared_ptr<const MetricMeasureSpace> base,
                                             int circle_resolution);
MetricMeasureSpace build_graph(Index num_points, std::vector<GraphEdge> edges,
                               Eigen::VectorXd weights, int nominal_dimension = 1);

/// Points sorted by distance from each center; periodic grids share one offset table.
class BallIndex {
 public:
  explicit BallIndex(const MetricMeasureSpace& space);

  /// Visits (y, d(x, y)) in nondecreasing distance order until `visit` returns false.
  template <class Visitor>
  void visit_sorted(Index x, Visitor&& visit) const {
    if (periodic_) {
      const int dims = static_cast<int>(shape_.size());
      int base[8];
      Index rem = x;
      for (int a = dims - 1; a >= 0; --a) {
        base[a] = static_cast<int>(rem % shape_[a]);
        rem /= shape_[a];
      }
      for (std::size_t k = 0; k < offset_dist_.size(); ++k) {
        Index y = 0;
        const int* o = &offsets_[k * dims];
        for (int a = 0; a < dims; ++a) {
          int c = base[a] + o[a];
          if (c >= shape_[a]) c -= shape_[a];
          y = y * shape_[a] + c;
        }
        if (!visit(y, offset_dist_[k])) return;
      }
    } else {
      const Index n = order_.cols();
      for (Index k = 0; k < n; ++k) {
        const Index y = order_(x, k);
        if (!visit(y, sorted_dist_(x, k))) return;
      }
    }
  }

  const MetricMeasureSpace& space() const { return *space_; }

 private:
  const MetricMeasureSpace* space_;
  bool periodic_ = false;
  std::vector<int> shape_;
  std::vector<int> offsets_;        // periodic: flattened nonnegative offsets
  std::vector<double> offset_dist_;
  Eigen::Matrix<Index, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> order_;
  RowMatrix sorted_dist_;
};

/// Open ball {y : d(center, y) < radius}.
std::vector<Index> ball(const MetricMeasureSpace& space, Index center, double radius);
double ball_mass(const MetricMeasureSpace& space, Index center, double radius);

struct AhlforsReport {
  double n = 0.0;
  double c1 = 0.0;
  double c2 = 0.0;
  double worst_ratio_low = 0.0;
  double worst_ratio_high = 0.0;
  double c_doubling = 1.0;
  /// c2 / c1 exceeds 100: the exponent does not describe the sampled balls.
  bool ratio_flagged = false;
};

AhlforsReport check_ahlfors(const MetricMeasureSpace& space, double n,
                            const std::vector<double>& r_grid, const std::vector<Index>& x_sample);
/// Log-spaced radii inside [2h, D/2], the band where ball counting is meaningful.
std::vector<double> default_ahlfors_radii(const MetricMeasureSpace& space, int count);

/// Hardy-Littlewood maximal function: sup over every distinct ball of the weighted average.
Eigen::VectorXd maximal_function(const MetricMeasureSpace& space, const Eigen::VectorXd& f);
Eigen::VectorXd maximal_function(const BallIndex& balls, const Eigen::VectorXd& f);

struct DistancePowerIntegral {
  double value = 0.0;
  /// alpha >= nominal dimension: the continuum integral diverges.
  bool divergent_in_limit = false;
};

DistancePowerIntegral distance_power_integral(const MetricMeasureSpace& space, Index x,
                                              double alpha);

}  // namespace mms
