#pragma once

#include "mmslab/fields.hpp"
#include "mmslab/green.hpp"

#include <cstdint>
#include <limits>

namespace mms {

/// Trajectories X_t(x) of a vector field sampled on a time grid.
struct FlowMap {
  const MetricMeasureSpace* space = nullptr;
  std::vector<Index> starts;           ///< lattice point of each trajectory
  std::vector<double> times;
  std::vector<RowMatrix> positions;    ///< per time node: starts x ambient_dim chart coordinates
  std::string integrator = "rk4";
  double step = 0.0;
  double compressibility = std::numeric_limits<double>::quiet_NaN();

  int dim() const { return space->ambient_dim(); }
  std::span<const double> position(std::size_t k, std::size_t i) const {
    return {positions[k].data() + i * dim(), static_cast<std::size_t>(dim())};
  }
  /// Slot of lattice point p among the starts, or -1.
  Index slot_of(Index p) const;
  /// True when the starts are exactly 0, 1, ..., n-1.
  bool covers_space() const;
};

struct RlfResidualReport {
  double max_residual = 0.0;
  double max_ratio = 0.0;   ///< worst residual / (second-order Taylor bound)
  bool pass = false;
};

/// Largest admissible step: min(grid spacing / sup|b|, 0.01 T).
double max_flow_step(const MetricMeasureSpace& space, const VectorField& b, const std::vector<double>& t_grid);

/// Classical RK4 on the chart with wrap/renormalization after every step.
/// Throws std::invalid_argument when `step` exceeds max_flow_step and ConstructionError
/// when `check_rlf` is set and the residual gate fails.
FlowMap integrate_flow(const MetricMeasureSpace& space, const VectorField& b, const std::vector<double>& t_grid,
                       double step, std::vector<Index> starts = {}, bool check_rlf = true);

/// |f(X_{t+h}) - f(X_t) - h (b.grad f)(X_t)| against 2 h^2 max|d^2/dt^2 f(X_t)| over node endpoints.
RlfResidualReport rlf_residual(const FlowMap& flow, const VectorField& b,
                               const std::vector<std::shared_ptr<const SmoothFunction>>& tests);

/// Pushed uniform mass over its t = 0 deposit, maximized over time nodes and lattice points.
/// Mass is deposited through a normalized Gaussian partition of unity of width 1.5 h.
double compressibility(const FlowMap& flow);

struct QFunctional {
  double t = 0.0;
  double r = 0.0;
  double A = 0.0;
  double n = 0.0;
  Eigen::VectorXd values;
};

/// Ball average over B(x, r) of log(1 + (d(X_t x, X_t y) / r)^{n-2} / A), at time node k.
QFunctional q_functional(const FlowMap& flow, std::size_t k, double r, double A, double n);

/// Shifted Green kernel evaluated between chart points.
///
/// Translation-invariant kernels are interpolated multilinearly in the offset; other kernels
/// are looked up at the nearest lattice points, and coincident lookups are reported as such.
class ShiftedGreenLookup {
 public:
  ShiftedGreenLookup(const GreenFunction& G, double A_bar);
  /// G_bar between chart points; nullopt when nearest-point lookup lands on the diagonal.
  std::optional<double> operator()(std::span<const double> a, std::span<const double> b) const;
  bool interpolated() const { return G_->translation_invariant(); }

 private:
  const GreenFunction* G_;
  double A_bar_;
  std::vector<int> shape_;
};

struct PhiFunctional {
  double t = 0.0;
  double r = 0.0;
  Eigen::VectorXd values;
  long skipped_pairs = 0;
};

/// Ball average over B(x, r) of log(1 + 1 / (r^{n-2} G_bar(X_t x, X_t y))); skipped pairs count as 0.
PhiFunctional phi_functional(const FlowMap& flow, const ShiftedGreenLookup& Gbar, std::size_t k, double r, double n);

/// Log-spaced radii in (grid spacing, D]: from 1.5 h to D.
std::vector<double> default_r_grid(const MetricMeasureSpace& space, int count = 12);

struct QStarReport {
  std::vector<double> r_grid;
  Eigen::VectorXd q_star;
  double l2 = 0.0;
  Eigen::VectorXd q_star_initial;   ///< the same supremum restricted to t = 0
  // Joint Q <= Phi evaluation, filled when a Green lookup is supplied.
  long phi_checks = 0;
  long phi_violations = 0;
  double worst_q_minus_phi = -std::numeric_limits<double>::infinity();
  long skipped_pairs = 0;
};

/// Pointwise sup of Q_{t,r} over the flow's time nodes and `r_grid`; when `Gbar` is given,
/// Phi_{t,r} is evaluated on the same (x, t, r) grid and Q <= Phi is counted.
QStarReport q_star(const FlowMap& flow, const std::vector<double>& r_grid, double A, double n,
                   const ShiftedGreenLookup* Gbar = nullptr);

/// ||Q*||_2 / (L * int ||g|| + 1).
double qstar_bound_ratio(double q_star_l2, double L, double g_integral);

struct GreenFlowReport {
  int pairs = 0;
  int checks = 0;
  int passed = 0;
  double pass_rate = 0.0;
  double max_abs_error = 0.0;
};

/// Centred time differences of G(X_t x, X_t y) against b.grad G_{X_t x}(X_t y) + b.grad G_{X_t y}(X_t x),
/// both from the closed-form periodic kernel at the exact trajectory positions.
GreenFlowReport verify_green_derivative_along_flow(const FlowMap& flow, const SpectralBasis& basis, double epsilon,
                                                   const VectorField& b,
                                                   const std::vector<std::pair<Index, Index>>& pairs);

struct LusinReport {
  double epsilon = 0.0;
  double threshold = 0.0;           ///< ||Q*||_2 / sqrt(eps)
  double q_star_l2 = 0.0;
  std::vector<char> retained;       ///< membership in E per lattice point
  Index retained_count = 0;
  double excluded_mass = 0.0;
  // Filled by verify_lipschitz_on_set.
  double C_fit = 0.0;
  double lip_constant = 0.0;        ///< C exp(2 C ||Q*||_2 / sqrt(eps))
  double max_pair_ratio = 0.0;      ///< max d(X_t x, X_t y) / d(x, y) over sampled E pairs and nodes
  std::pair<Index, Index> worst_pair{-1, -1};
  double worst_time = 0.0;
  double max_straddle_ratio = 0.0;  ///< the same over pairs with exactly one point outside E
  long pairs_checked = 0;
  bool all_within = false;
};

/// E = {Q* <= ||Q*||_2 / sqrt(eps)} and its excluded mass.
LusinReport lusin_set(const MetricMeasureSpace& space, const Eigen::VectorXd& q_star, double epsilon);

/// Fits the smallest C with d(X_t x, X_t y) <= C e^{C (Q*(x) + Q*(y))} d(x, y) on E x E (subsampled to
/// `max_pairs`), then checks every sampled pair against lip_constant.
void verify_lipschitz_on_set(const FlowMap& flow, const Eigen::VectorXd& q_star, LusinReport& report,
                             std::uint64_t seed, std::size_t max_pairs = 100000);

struct LiftOptions {
  double step = 1e-3;
  double epsilon = 0.1;
  double green_epsilon = 0.0;
  int r_count = 12;
  std::uint64_t seed = 1;
};

struct LiftReport {
  double tensor_error = 0.0;        ///< product eigenvalues vs sums lambda_i + 4 pi^2 k^2
  double eigen_residual = 0.0;      ///< max |L u - lambda u| over product eigenpairs
  double div_error = 0.0;
  double sym_error = 0.0;
  double projection_error = 0.0;    ///< pi_1 of the lifted flow vs the base flow
  double circle_drift = 0.0;
  double A = 0.0;
  QStarReport product_q;
  LusinReport product_lusin;
  Eigen::VectorXd base_q_star;      ///< max over the circle of the product Q*
  LusinReport base_lusin;
};

/// Lifts a field on a two-dimensional chart to base x circle, checks the lift identities and runs
/// the Q* / Lusin pipeline on the product with n = 3, reporting the base conclusion.
LiftReport lift_and_verify_n2(std::shared_ptr<const MetricMeasureSpace> base, FieldPtr b,
                              const std::vector<double>& t_grid, int circle_resolution, const LiftOptions& opt);

/// Evenly spaced grid 0, T/m, ..., T.
std::vector<double> uniform_time_grid(double T, int intervals);

}  // namespace mms
