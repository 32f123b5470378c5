#pragma once

#include "mmslab/differential.hpp"
#include "mmslab/green.hpp"
#include "mmslab/smooth.hpp"
#include "mmslab/spectral.hpp"

#include <map>
#include <memory>

namespace mms {

/// Time-dependent tangent vector field given in ambient chart coordinates.
///
/// Values are ambient vectors (one component per chart coordinate) that are
/// tangent on sphere factors. `divergence` is the closed-form chart divergence.
class VectorField {
 public:
  virtual ~VectorField() = default;
  virtual std::string name() const = 0;
  virtual int ambient_dim() const = 0;
  virtual void value(std::span<const double> x, double t, std::span<double> out) const = 0;
  virtual double divergence(std::span<const double> x, double t) const = 0;
  /// Row-major ambient Jacobian J[i*d + j] = d b_i / d x_j of the field's ambient extension.
  /// The default uses centred differences with step 1e-6.
  virtual void jacobian(std::span<const double> x, double t, std::span<double> J) const;
  /// Partial time derivative; zero for autonomous fields.
  virtual void time_derivative(std::span<const double> x, double t, std::span<double> out) const;

  double t_end() const { return t_end_; }
  void set_t_end(double T) { t_end_ = T; }
  void check_time(double t) const;

  RowMatrix tabulate(const MetricMeasureSpace& space, double t) const;
  /// Space-time sup of |b| over the lattice and the given times.
  double sup_norm(const MetricMeasureSpace& space, const std::vector<double>& t_grid) const;

 private:
  double t_end_ = 1.0;
};

using FieldPtr = std::shared_ptr<const VectorField>;
using FieldParams = std::map<std::string, std::vector<double>>;

/// Finite sum of products of real Fourier modes over the periodic chart coordinates.
class FourierSeries : public SmoothFunction {
 public:
  struct Term {
    double coef = 0.0;
    std::vector<FourierMode1D> modes;  // one per ambient coordinate
  };
  FourierSeries(int ambient_dim, std::vector<Term> terms);
  /// sum_i coef_i u_i over the closed-form modes of an exact basis.
  static FourierSeries from_basis(const SpectralBasis& basis, const Eigen::VectorXd& coef);

  double value(std::span<const double> x) const override;
  void gradient(std::span<const double> x, std::span<double> g) const override;
  void hessian(std::span<const double> x, std::span<double> h) const override;
  int ambient_dim() const override { return dim_; }
  double laplacian(std::span<const double> x) const;
  FourierSeries heat_flow(double tau) const;

 private:
  int dim_;
  std::vector<Term> terms_;
};

FieldPtr make_constant_field(std::vector<double> v);
/// speed * (axis x y) on the sphere factor whose coordinates start at `offset`.
FieldPtr make_rotation_field(int ambient_dim, int offset, Eigen::Vector3d axis, double speed);
/// b = (s / 2 pi) sin(2 pi x_2) e_1 on a torus chart; sup |sym grad b| = s/2.
FieldPtr make_shear_field(int ambient_dim, double s);
/// b = grad P_tau f0 for a Fourier series f0.
FieldPtr make_gradient_heat_field(const FourierSeries& f0, double tau);
/// Divergence-free swirl around `center` in the (x_1, x_2) plane with speed
/// amp min(R, rho)^{1-alpha} cut off smoothly on rho < R < 2 rho (R = distance to center).
FieldPtr make_cdl_singular_field(std::vector<double> center, double alpha, double rho, double amp = 1.0);
/// (b(x), 0): a base field lifted to base x circle.
FieldPtr make_lifted_field(FieldPtr base, int extra_dims = 1);
FieldPtr make_scaled_field(FieldPtr b, double lambda);

/// Named field for `space`; fields on circle products are built on the base and lifted.
/// Names: constant, rotation, shear, gradient_heat, cdl_singular, zero.
FieldPtr builtin_field(const std::string& name, const FieldParams& params, const MetricMeasureSpace& space);

/// b . grad f at the lattice points with stencil partials.
Eigen::VectorXd apply_derivation(const GradientStencil& stencil, const VectorField& b,
                                 const Eigen::VectorXd& f, double t);
/// b . grad f at the lattice points with the closed-form gradient of f.
Eigen::VectorXd apply_derivation(const MetricMeasureSpace& space, const VectorField& b,
                                 const SmoothFunction& f, double t);

/// Closed-form chart divergence at the lattice points.
Eigen::VectorXd divergence(const MetricMeasureSpace& space, const VectorField& b, double t);
/// Discrete divergence by integration by parts against the weights.
Eigen::VectorXd discrete_divergence(const GradientStencil& stencil, const VectorField& b, double t);
/// |sum (b.grad f) w + sum (div b) f w| with stencil derivation and closed-form divergence.
double adjoint_residual(const GradientStencil& stencil, const VectorField& b, const Eigen::VectorXd& f, double t);

/// Pointwise operator norm of the tangent-projected symmetrized Jacobian.
Eigen::VectorXd sym_modulus_chart(const MetricMeasureSpace& space, const VectorField& b, double t);
/// v^T sym(J)(x) w for tangent vectors v, w at chart point x.
double sym_bilinear(const VectorField& b, std::span<const double> x, double t,
                    std::span<const double> v, std::span<const double> w);

struct RegularityModuli {
  double t = 0.0;
  Eigen::VectorXd div;
  Eigen::VectorXd sym_modulus;
  Eigen::VectorXd g_combined;   ///< |sym grad b| + |div b|
  double g_l2 = 0.0;
  double sym_sup = 0.0;
};

RegularityModuli compute_moduli(const MetricMeasureSpace& space, const VectorField& b, double t);
/// int_0^T ||g_s||_{L^2} ds by the trapezoid rule on t_grid.
double g_time_integral(const MetricMeasureSpace& space, const VectorField& b, const std::vector<double>& t_grid);

struct ProbeEnvelopeReport {
  Eigen::VectorXd envelope;     ///< per point, constant on each cell
  std::vector<int> cell_of;
  int probes = 0;
  bool feasible = true;
  double l2_probe = 0.0;
  double l2_chart = 0.0;
  double max_violation = 0.0;   ///< largest |B_k| - sum h |grad f||grad g| w (should be <= 0)
};

/// Smallest-mass cellwise envelope h with |B(f,g)| <= sum h |grad f| |grad g| w over the probe pairs,
/// where B(f,g) = -1/2 sum [(b.grad g) Delta f + (b.grad f) Delta g - div b grad f.grad g] w.
/// Probes are the first `num_modes` nontrivial eigenfunctions and `num_bumps` heat bumps p_tau(z, .).
ProbeEnvelopeReport sym_modulus_probe(const SpectralBasis& basis, const LaplacianOperator& L,
                                      const VectorField& b, double t, int num_modes, int num_bumps,
                                      int num_cells, double bump_tau, const GradientStencil* stencil = nullptr);

/// Deterministic farthest-point partition into `num_cells` cells (cell index per point).
std::vector<int> farthest_point_cells(const MetricMeasureSpace& space, int num_cells);

struct PairEstimateReport {
  double C = 0.0;               ///< max ratio over the sample
  std::vector<double> ratios;
};

/// sum_{z != x,y} f(z) d(x,z)^{1-n} d(y,z)^{1-n} w(z) against d(x,y)^{2-n} (Mf(x) + Mf(y)).
PairEstimateReport verify_pair_kernel_estimate(const MetricMeasureSpace& space, const Eigen::VectorXd& f,
                                               double n, const std::vector<std::pair<Index, Index>>& pairs);

struct KeyEstimateReport {
  double C = 0.0;
  double max_lhs = 0.0;
  double max_lhs_scaled = 0.0;  ///< max LHS d^{n-1} / ||b||_inf (degenerate g = 0 case)
  std::vector<double> ratios;
};

/// |b.grad G_x (y) + b.grad G_y (x)| against d(x,y)^{2-n} (Mg(x) + Mg(y)), g = |sym grad b| + |div b|.
KeyEstimateReport verify_key_maximal_estimate(const GradientStencil& stencil, const GreenFunction& G,
                                              const VectorField& b, double t, double n,
                                              const std::vector<std::pair<Index, Index>>& pairs);

}  // namespace mms
