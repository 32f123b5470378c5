#pragma once

#include "mmslab/flows.hpp"

namespace mms {

/// Probability measure on the lattice points of a space.
struct DiscreteMeasure {
  const MetricMeasureSpace* space = nullptr;
  Eigen::VectorXd weights;

  /// max weight / point measure.
  double density_bound() const;
  std::vector<Index> support() const;
};

/// Normalizes nonnegative weights to a probability measure; throws on negative or zero mass.
DiscreteMeasure make_measure(const MetricMeasureSpace& space, Eigen::VectorXd weights);
DiscreteMeasure uniform_measure(const MetricMeasureSpace& space);
/// exp(-d(center, .)^2 / (2 sigma^2)) restricted to d < cutoff, normalized.
DiscreteMeasure gaussian_bump(const MetricMeasureSpace& space, Index center, double sigma, double cutoff);

/// Atoms at arbitrary chart positions.
struct AtomCloud {
  RowMatrix positions;
  Eigen::VectorXd mass;
};

AtomCloud atoms_of(const DiscreteMeasure& mu);
/// Nearest-point re-binning; mass is conserved exactly.
DiscreteMeasure rebin(const MetricMeasureSpace& space, const AtomCloud& atoms);

/// Balanced transportation problem solved by the transportation simplex (MODI).
struct TransportPlan {
  double cost = 0.0;
  Eigen::MatrixXd coupling;
  Eigen::VectorXd u, v;   ///< duals with u_i + v_j <= C_ij and equality on basic cells
  int pivots = 0;
};

TransportPlan solve_transport(const Eigen::MatrixXd& cost, const Eigen::VectorXd& a, const Eigen::VectorXd& b);

/// Optimal coupling for the cost d^2 between the supports of two measures.
struct TransportSolution {
  double cost = 0.0;                 ///< W_2^2
  std::vector<Index> support_mu;     ///< lattice points or atom indices
  std::vector<Index> support_nu;
  Eigen::MatrixXd coupling;          ///< support_mu x support_nu
  Eigen::VectorXd phi, psi;          ///< phi(x) + psi(y) <= d^2(x, y), phi(first) = 0
  double duality_gap = 0.0;

  double w2() const { return std::sqrt(std::max(cost, 0.0)); }
};

constexpr std::size_t kTransportSupportLimit = 600;

TransportSolution wasserstein2(const MetricMeasureSpace& space, const DiscreteMeasure& mu, const DiscreteMeasure& nu);
TransportSolution wasserstein2(const MetricMeasureSpace& space, const AtomCloud& mu, const AtomCloud& nu);

enum class CeMethod { Pushforward, Upwind };

struct MeasureTrajectory {
  std::vector<double> times;
  std::vector<DiscreteMeasure> measures;
  std::string source;
  std::vector<AtomCloud> atoms;      ///< exact pushed atoms (pushforward only)
};

/// Pushforward moves the atoms of mu0 along `flow` and re-bins; upwind runs a conservative
/// first-order finite-volume scheme on a torus grid with Courant number <= cfl.
MeasureTrajectory continuity_equation_solve(const MetricMeasureSpace& space, const VectorField& b,
                                            const DiscreteMeasure& mu0, const std::vector<double>& t_grid,
                                            CeMethod method, const FlowMap* flow = nullptr, double cfl = 0.5);

/// Pushforward trajectory of an atom cloud placed at lattice points covered by `flow`.
MeasureTrajectory pushforward(const FlowMap& flow, const DiscreteMeasure& mu0);

struct DerivativeReport {
  std::vector<double> times;
  std::vector<double> lhs;
  std::vector<double> rhs;
  std::vector<double> threshold;
  double max_discrepancy = 0.0;      ///< max |lhs - rhs| (one-sided excess for the joint check)
  double worst_relative = 0.0;       ///< max discrepancy / threshold
  bool pass = false;
};

/// First variation of a coupling: sum pi(x, y) b(x) . (-log_x y), the integral of b.grad phi.
double coupling_first_variation(const MetricMeasureSpace& space, const VectorField& b, double t,
                                const AtomCloud& mu, const AtomCloud& nu, const TransportSolution& sol);

/// Centred differences of W_2^2(mu_t, nu) / 2 against the integral of b.grad phi_t, on the exact atoms.
DerivativeReport verify_w2_derivative(const MetricMeasureSpace& space, const MeasureTrajectory& traj,
                                      const VectorField& b, const AtomCloud& nu);

/// One-sided check d/dt W_2^2(mu_t, nu_t) / 2 <= int b.grad phi dmu_t + int b.grad psi dnu_t.
DerivativeReport verify_joint_derivative(const MetricMeasureSpace& space, const MeasureTrajectory& mu,
                                         const MeasureTrajectory& nu, const VectorField& b);

struct ContractionReport {
  std::vector<double> times;
  std::vector<double> w2;
  std::vector<double> bound;          ///< e^{L t} W_2(mu_0, nu_0)
  std::vector<double> ratio;          ///< w2 / bound
  double tol = 0.0;                   ///< 5 h / W_2(mu_0, nu_0)
  double max_ratio = 0.0;
  double min_ratio = 0.0;
  bool bound_holds = false;
  int pairs = 0;
  double pair_max_ratio = 0.0;        ///< max d(X_t x, X_t y) / (e^{L t} d(x, y))
  bool pairs_hold = false;
};

/// W_2 between pushed atom clouds against e^{L t} W_2(mu_0, nu_0), plus the pointwise
/// trajectory version on `num_pairs` sampled start pairs.
ContractionReport verify_contraction(const FlowMap& flow, const DiscreteMeasure& mu0, const DiscreteMeasure& nu0,
                                     double L_sym, int num_pairs, std::uint64_t seed);

struct GeodesicReport {
  std::vector<double> s;
  std::vector<double> lhs;
  std::vector<double> rhs;
  double max_relative = 0.0;          ///< max |lhs - rhs| / max |rhs|
  bool pass = false;
};

/// Displacement interpolation eta_s between eta0 and eta1: centred s-differences of
/// int b . v_s d eta_s against int sym(grad b)(v_s, v_s) d eta_s, with v_s the geodesic velocities.
GeodesicReport verify_geodesic_differentiation(const MetricMeasureSpace& space, const VectorField& b, double t,
                                               const AtomCloud& eta0, const AtomCloud& eta1,
                                               const std::vector<double>& s_grid);

/// max over test functions and interior nodes of
/// |d/dt sum f mu_t - sum (b.grad f) mu_t| / (5 h Lip(f) sup|b|), on the exact atoms.
double weak_continuity_residual(const MetricMeasureSpace& space, const MeasureTrajectory& traj,
                                const VectorField& b,
                                const std::vector<std::shared_ptr<const SmoothFunction>>& tests);

}  // namespace mms
