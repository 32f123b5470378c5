#pragma once

#include "mmslab/differential.hpp"
#include "mmslab/space.hpp"

#include <optional>

namespace mms {

enum class LaplacianScheme {
  GraphGaussian,     ///< "graph-gaussian-weights": Gaussian edge weights on the full point set
  TorusFourierExact, ///< "torus-fourier-exact": diagonal in the real Fourier basis of a periodic grid
  ProductKron,       ///< "product-kron": sum over factors; sphere factors Gaussian, periodic factors exact
};

std::string to_string(LaplacianScheme s);
LaplacianScheme scheme_from_string(const std::string& s);

/// Real Fourier mode on a periodic axis of resolution N.
struct FourierMode1D {
  enum class Kind { Const, Cos, Sin, Nyquist };
  int freq = 0;
  Kind kind = Kind::Const;
  double eigenvalue() const;
  double value(double x) const;
  double derivative(double x) const;
  double second_derivative(double x) const;
};

/// The N real Fourier modes of a periodic axis ordered by eigenvalue, then const/cos/sin.
std::vector<FourierMode1D> fourier_modes(int resolution);

/// One factor's eigenpairs (orthonormal for the factor's uniform measure).
struct FactorBasis {
  bool periodic = false;
  std::vector<FourierMode1D> modes;  // periodic factors only
  Eigen::VectorXd eigenvalues;
  Eigen::MatrixXd vectors;           // factor points x factor modes
};

/// Discrete -Delta, self-adjoint for <f, g> = sum f g w.
class LaplacianOperator {
 public:
  const MetricMeasureSpace& space() const { return *space_; }
  LaplacianScheme scheme() const { return scheme_; }
  double bandwidth() const { return bandwidth_; }
  /// Scale applied to the Gaussian kernel so the calibration mode has its analytic eigenvalue.
  double calibration() const { return calibration_; }

  Eigen::VectorXd apply(const Eigen::VectorXd& f) const;
  /// Dense matrix of the operator (row p gives (-Delta f)(p)).
  Eigen::MatrixXd dense() const;

  /// Factor matrices for sum-over-factors schemes (empty for the Gaussian scheme).
  const std::vector<Eigen::MatrixXd>& factor_matrices() const { return factor_ops_; }
  const Eigen::MatrixXd& full_matrix() const { return full_; }

 private:
  friend LaplacianOperator assemble_laplacian(const MetricMeasureSpace&, LaplacianScheme, double);
  const MetricMeasureSpace* space_ = nullptr;
  LaplacianScheme scheme_ = LaplacianScheme::GraphGaussian;
  double bandwidth_ = 0.0;
  double calibration_ = 1.0;
  Eigen::MatrixXd full_;
  std::vector<Eigen::MatrixXd> factor_ops_;
};

/// Builds -Delta. For the Gaussian scheme `bandwidth` sets exp(-d^2/bandwidth^2) cut at
/// 3 bandwidth; on sum-over-factors schemes it applies to sphere factors only.
LaplacianOperator assemble_laplacian(const MetricMeasureSpace& space, LaplacianScheme scheme,
                                     double bandwidth = 0.0);

/// Gaussian-kernel -Delta on a single factor lattice or any space, uncalibrated (scale 1).
Eigen::MatrixXd gaussian_laplacian(const MetricMeasureSpace& space, double bandwidth);

struct SpectralBasis {
  const MetricMeasureSpace* space = nullptr;
  LaplacianScheme scheme = LaplacianScheme::GraphGaussian;
  Eigen::VectorXd eigenvalues;
  Eigen::MatrixXd eigenfunctions;  // points x modes, orthonormal in L^2(w)
  /// For sum-over-factors schemes: per mode, the index of its factor mode in each factor.
  std::vector<std::vector<int>> mode_index;
  std::vector<FactorBasis> factors;

  Index size() const { return eigenfunctions.rows(); }
  Index k_max() const { return eigenvalues.size(); }
  /// True when every mode has a closed form (all factors periodic).
  bool analytic() const;
  /// Closed-form value and ambient gradient of mode i at chart point x.
  double mode_value(Index i, std::span<const double> x) const;
  void mode_gradient(Index i, std::span<const double> x, std::span<double> g) const;

  Eigen::VectorXd coefficients(const Eigen::VectorXd& f) const;
  Eigen::VectorXd synthesize(const Eigen::VectorXd& coef) const;
  /// Exact gradient table of sum_i coef_i u_i at the lattice points (analytic bases only).
  RowMatrix gradient_table(const Eigen::VectorXd& coef) const;
};

/// Eigenpairs of -Delta with lambda_0 = 0, u_0 = 1 and the first nonzero entry of each u_i positive.
SpectralBasis eigendecompose(const LaplacianOperator& L, Index k_max);

double heat_kernel(const SpectralBasis& basis, double t, Index x, Index y);
/// Column p_t(x, .) over all points.
Eigen::VectorXd heat_kernel_column(const SpectralBasis& basis, double t, Index x);
Eigen::VectorXd heat_semigroup_apply(const SpectralBasis& basis, double t, const Eigen::VectorXd& f);
/// sum_x p_t(x,x) w(x) and sum_i exp(-lambda_i t).
std::pair<double, double> heat_trace(const SpectralBasis& basis, double t);

struct HeatKernelReport {
  double C1 = 0.0;         ///< smallest constant for both two-sided bounds at the chosen C3
  double C1_low = 0.0;     ///< constant needed by the lower bound alone
  double C1_high = 0.0;    ///< constant needed by the upper bound alone
  double C2 = 0.0;         ///< gradient bound constant from discrete slopes
  double C3 = 0.0;
  double max_rel_dev_closed_form = 0.0;  ///< vs the theta series on periodic grids (0 otherwise)
  double mass_residual = 0.0;
  double min_kernel = 0.0;               ///< smallest sampled p_t (negative only from truncation)
};

HeatKernelReport verify_gaussian_bounds(const SpectralBasis& basis, const MetricMeasureSpace& space,
                                        double n, const std::vector<double>& t_grid,
                                        const std::vector<std::pair<Index, Index>>& pairs);

/// Closed-form heat kernel of the flat torus grid from the separable theta series,
/// truncated to the grid's own Fourier band.
double torus_heat_kernel_closed_form(const MetricMeasureSpace& space, double t, Index x, Index y);

struct BakryEmeryReport {
  double worst_excess = 0.0;       ///< max over samples, times and points of |grad P_t f|^2 - e^{-2Kt} P_t |grad f|^2
  double worst_relative = 0.0;     ///< worst_excess / ||grad f||_inf^2
};

/// Gradients come from the closed-form modes on analytic bases and from `stencil` otherwise.
BakryEmeryReport verify_bakry_emery(const SpectralBasis& basis, double K,
                                    const std::vector<Eigen::VectorXd>& f_sample,
                                    const std::vector<double>& t_grid,
                                    const GradientStencil* stencil = nullptr);

struct EigenfunctionBoundsReport {
  double max_sup_ratio = 0.0;       ///< ||u_i||_inf / ((C1 e / c1)(C3 + lambda_i)^{n/2})
  double max_grad_ratio = 0.0;      ///< ||grad u_i||_inf / (sqrt((lambda_i + |K|)/2) ||u_i||_inf)
  /// Same gradient ratio against e sqrt((lambda_i + |K|)/2) ||u_i||_inf, the bound the
  /// heat-flow argument yields once exp(lambda_i t) at t = 1/(lambda_i + |K|) is kept.
  double max_grad_ratio_with_e = 0.0;
  std::vector<double> sup_norms;
  std::vector<double> grad_norms;
};

EigenfunctionBoundsReport eigenfunction_bounds(const SpectralBasis& basis, double n, double K,
                                               double c1, double C1, double C3,
                                               const GradientStencil* stencil = nullptr,
                                               Index max_modes = -1);

}  // namespace mms
