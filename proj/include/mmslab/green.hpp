#pragma once

#include "mmslab/spectral.hpp"

namespace mms {

/// G^eps(x,y) = sum_{i>=1} exp(-lambda_i eps) u_i(x) u_i(y) / lambda_i, tabulated.
///
/// On a periodic grid with a complete exact basis the kernel depends only on
/// y - x, so one offset table is stored; otherwise the full matrix is kept.
class GreenFunction {
 public:
  GreenFunction(const SpectralBasis& basis, double epsilon);

  double epsilon() const { return epsilon_; }
  const MetricMeasureSpace& space() const { return *space_; }
  bool translation_invariant() const { return invariant_; }

  double operator()(Index x, Index y) const;
  Eigen::VectorXd column(Index x) const;
  /// Offset table g with G(x, y) = g[offset(y - x)] (translation-invariant case only).
  const Eigen::VectorXd& offset_table() const { return table_; }

 private:
  const MetricMeasureSpace* space_;
  double epsilon_;
  bool invariant_ = false;
  std::vector<int> shape_;
  Eigen::VectorXd table_;
  Eigen::MatrixXd dense_;
};

/// Direct spectral sum for one pair.
double green(const SpectralBasis& basis, double epsilon, Index x, Index y);
/// Spectral column G^eps(x, .).
Eigen::VectorXd green_column(const SpectralBasis& basis, double epsilon, Index x);

/// |sum_y G(x,y) (Delta f)(y) w(y) - (mean f - f(x))|, maximized over all x.
double verify_green_action(const GreenFunction& G, const LaplacianOperator& L, const Eigen::VectorXd& f);
/// max_y |(Delta G^eps_x)(y) - (1 - p_eps(x, y))|.
double verify_green_laplacian(const SpectralBasis& basis, const LaplacianOperator& L, double epsilon, Index x);
/// max_y |G^eps_x - P_{eps/2} G^{eps/2}_x|.
double verify_green_semigroup(const SpectralBasis& basis, double epsilon, Index x);

/// G(x,y) as the integral of p_t(x,y) - 1 over log-spaced t in [t0, t1] (trapezoid).
double green_time_integral(const SpectralBasis& basis, Index x, Index y, double t0 = 1e-6,
                           double t1 = 50.0, int nodes = 6000);

struct ShiftedGreen {
  double A = 0.0;
  double A_bar = 0.0;
  double alpha = 0.0;      ///< min off-diagonal G + A_bar
  double min_G = 0.0;      ///< min off-diagonal G
  double n = 0.0;
  /// G_bar(x,y) = G(x,y) + A_bar.
  double shifted(const GreenFunction& G, Index x, Index y) const { return G(x, y) + A_bar; }
};

/// Fits A_bar (10% above the smallest positive shift) and the smallest A with
/// |G| <= A d^{2-n}, G_bar <= A d^{2-n}, G_bar >= d^{2-n}/A on every off-diagonal pair.
/// Throws ConstructionError when A would exceed 1e6 or n <= 2.
ShiftedGreen fit_comparability_constants(const GreenFunction& G, double n);

/// Range of G(x,y) d(x,y)^{n-2} over off-diagonal pairs with d <= d_max.
std::pair<double, double> green_distance_profile(const GreenFunction& G, double n, double d_max);

/// Discrete slope of G_x at each y: max over z with d(z,y) < 1.5 h of |G_x(z) - G_x(y)| / d(z,y).
Eigen::VectorXd green_gradient(const GreenFunction& G, Index x);
/// Discrete slope of an arbitrary function with the same neighbourhood rule.
Eigen::VectorXd discrete_slope(const MetricMeasureSpace& space, const Eigen::VectorXd& f);
/// Smallest C with slope G_x(y) <= C / d(x,y)^{n-1} over y != x.
double fit_green_slope_constant(const GreenFunction& G, Index x, double n);

struct W1pReport {
  std::vector<double> eps;
  std::vector<double> norms;       ///< ||G^eps_x - G_x||_p + ||slope(G^eps_x - G_x)||_p
  std::vector<double> slope_norms; ///< ||slope G^eps_x||_p
  double slope_norm_limit = 0.0;   ///< ||slope G_x||_p
  bool strictly_decreasing = false;
  bool monotone_within_10pct = false;
  bool final_below_1e6 = false;    ///< last norm < 1e-6 (see README for why this is not expected)
};

W1pReport verify_w1p_convergence(const SpectralBasis& basis, Index x, double p,
                                 const std::vector<double>& eps_sequence);

/// Closed-form G^eps(0, z) and its gradient at any chart offset z, for complete exact bases.
class PeriodicGreenEvaluator {
 public:
  PeriodicGreenEvaluator(const SpectralBasis& basis, double epsilon);
  double value(std::span<const double> z) const;
  void gradient(std::span<const double> z, std::span<double> g) const;
  /// G(a, b) for chart points a, b.
  double operator()(std::span<const double> a, std::span<const double> b) const;

 private:
  struct Term {
    double weight;
    std::vector<FourierMode1D> modes;
  };
  int dim_;
  std::vector<Term> terms_;
};

}  // namespace mms
