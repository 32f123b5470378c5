#include "mmslab/spectral.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

namespace mms {
namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kTwoPi = 2.0 * kPi;

void fix_sign(Eigen::Ref<Eigen::VectorXd> v) {
  for (Index i = 0; i < v.size(); ++i) {
    if (std::abs(v[i]) > 1e-12 * v.cwiseAbs().maxCoeff()) {
      if (v[i] < 0) v = -v;
      return;
    }
  }
}

// Applies A along one factor of a mixed-radix tensor: out += (I (x) A (x) I) f.
void apply_factor(const Eigen::MatrixXd& A, Index inner, const Eigen::VectorXd& f, Eigen::VectorXd& out) {
  using RM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const Index m = A.rows();
  const Index block = m * inner;
  const Index outer = f.size() / block;
  for (Index o = 0; o < outer; ++o) {
    Eigen::Map<const RM> F(f.data() + o * block, m, inner);
    Eigen::Map<RM> O(out.data() + o * block, m, inner);
    O.noalias() += A * F;
  }
}

double rayleigh(const Eigen::MatrixXd& L, const Eigen::VectorXd& f, const Eigen::VectorXd& w) {
  const Eigen::VectorXd Lf = L * f;
  return (Lf.array() * f.array() * w.array()).sum() / (f.array().square() * w.array()).sum();
}

Eigen::MatrixXd exact_axis_matrix(int N) {
  const auto modes = fourier_modes(N);
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(N, N);
  for (const auto& m : modes) {
    Eigen::VectorXd u(N);
    for (int p = 0; p < N; ++p) u[p] = m.value(static_cast<double>(p) / N);
    A.noalias() += (m.eigenvalue() / N) * u * u.transpose();
  }
  return A;
}

Eigen::MatrixXd sphere_factor_matrix(const SphereLattice& lat, double bandwidth, double& scale) {
  MetricMeasureSpace s("sphere", {Factor{lat}});
  Eigen::MatrixXd L = gaussian_laplacian(s, bandwidth);
  const Eigen::VectorXd z = s.coordinate_table().col(2);
  scale = 2.0 / rayleigh(L, z, s.weights());
  return scale * L;
}

}  // namespace

std::string to_string(LaplacianScheme s) {
  switch (s) {
    case LaplacianScheme::GraphGaussian: return "graph-gaussian-weights";
    case LaplacianScheme::TorusFourierExact: return "torus-fourier-exact";
    case LaplacianScheme::ProductKron: return "product-kron";
  }
  return "unknown";
}

LaplacianScheme scheme_from_string(const std::string& s) {
  if (s == "graph-gaussian-weights") return LaplacianScheme::GraphGaussian;
  if (s == "torus-fourier-exact") return LaplacianScheme::TorusFourierExact;
  if (s == "product-kron") return LaplacianScheme::ProductKron;
  throw std::invalid_argument("unknown Laplacian scheme '" + s + "'");
}

double FourierMode1D::eigenvalue() const { return kTwoPi * kTwoPi * freq * freq; }

double FourierMode1D::value(double x) const {
  switch (kind) {
    case Kind::Const: return 1.0;
    case Kind::Cos: return std::numbers::sqrt2 * std::cos(kTwoPi * freq * x);
    case Kind::Sin: return std::numbers::sqrt2 * std::sin(kTwoPi * freq * x);
    case Kind::Nyquist: return std::cos(kTwoPi * freq * x);
  }
  return 0.0;
}

double FourierMode1D::derivative(double x) const {
  const double w = kTwoPi * freq;
  switch (kind) {
    case Kind::Const: return 0.0;
    case Kind::Cos: return -std::numbers::sqrt2 * w * std::sin(w * x);
    case Kind::Sin: return std::numbers::sqrt2 * w * std::cos(w * x);
    case Kind::Nyquist: return -w * std::sin(w * x);
  }
  return 0.0;
}

double FourierMode1D::second_derivative(double x) const {
  const double w = kTwoPi * freq;
  return -w * w * value(x);
}

std::vector<FourierMode1D> fourier_modes(int N) {
  if (N < 1) throw std::invalid_argument("resolution must be positive");
  std::vector<FourierMode1D> m;
  m.push_back({0, FourierMode1D::Kind::Const});
  for (int k = 1; 2 * k < N; ++k) {
    m.push_back({k, FourierMode1D::Kind::Cos});
    m.push_back({k, FourierMode1D::Kind::Sin});
  }
  if (N % 2 == 0 && N >= 2) m.push_back({N / 2, FourierMode1D::Kind::Nyquist});
  return m;
}

Eigen::MatrixXd gaussian_laplacian(const MetricMeasureSpace& space, double bandwidth) {
  if (!(bandwidth > 0)) throw std::invalid_argument("bandwidth must be positive");
  const Index n = space.size();
  const auto& w = space.weights();
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(n, n);
  const double cut = 3.0 * bandwidth;
  for (Index x = 0; x < n; ++x) {
    for (Index j = 0; j < n; ++j) {
      if (j == x) continue;
      const double d = space.distance(x, j);
      if (d > cut) continue;
      const double k = std::exp(-d * d / (bandwidth * bandwidth));
      L(x, j) = -k * w[j];
      L(x, x) += k * w[j];
    }
  }
  return L;
}

LaplacianOperator assemble_laplacian(const MetricMeasureSpace& space, LaplacianScheme scheme,
                                     double bandwidth) {
  LaplacianOperator op;
  op.space_ = &space;
  op.scheme_ = scheme;
  op.bandwidth_ = bandwidth;
  switch (scheme) {
    case LaplacianScheme::TorusFourierExact:
      if (!space.is_periodic_grid()) throw std::invalid_argument("exact Fourier scheme needs a torus grid");
      for (int N : space.grid_shape()) op.factor_ops_.push_back(exact_axis_matrix(N));
      break;
    case LaplacianScheme::ProductKron:
      if (space.is_graph()) throw std::invalid_argument("factor-wise scheme needs a chart-backed space");
      for (const auto& f : space.factors()) {
        if (const auto* ax = std::get_if<PeriodicAxis>(&f)) {
          op.factor_ops_.push_back(exact_axis_matrix(ax->resolution));
        } else {
          if (!(bandwidth >= space.grid_spacing()))
            throw std::invalid_argument("bandwidth below the grid spacing");
          op.factor_ops_.push_back(sphere_factor_matrix(std::get<SphereLattice>(f), bandwidth, op.calibration_));
        }
      }
      break;
    case LaplacianScheme::GraphGaussian: {
      if (!(bandwidth >= space.grid_spacing()) && !space.is_graph())
        throw std::invalid_argument("bandwidth below the grid spacing");
      op.full_ = gaussian_laplacian(space, bandwidth);
      if (!space.is_graph()) {
        Eigen::VectorXd f(space.size());
        double target = 0.0;
        const auto& first = space.factors().front();
        if (std::holds_alternative<PeriodicAxis>(first)) {
          for (Index i = 0; i < space.size(); ++i) f[i] = std::cos(kTwoPi * space.coords(i)[0]);
          target = kTwoPi * kTwoPi;
        } else {
          for (Index i = 0; i < space.size(); ++i) f[i] = space.coords(i)[2];
          target = 2.0;
        }
        const double r = rayleigh(op.full_, f, space.weights());
        if (!(r > 0)) throw ConstructionError("calibration mode has zero energy; bandwidth too small");
        op.calibration_ = target / r;
        op.full_ *= op.calibration_;
      }
      break;
    }
  }
  return op;
}

Eigen::VectorXd LaplacianOperator::apply(const Eigen::VectorXd& f) const {
  if (f.size() != space_->size()) throw std::invalid_argument("function size mismatch");
  if (scheme_ == LaplacianScheme::GraphGaussian) return full_ * f;
  Eigen::VectorXd out = Eigen::VectorXd::Zero(f.size());
  const auto sizes = space_->factor_sizes();
  Index inner = space_->size();
  for (std::size_t k = 0; k < factor_ops_.size(); ++k) {
    inner /= sizes[k];
    apply_factor(factor_ops_[k], inner, f, out);
  }
  return out;
}

Eigen::MatrixXd LaplacianOperator::dense() const {
  if (scheme_ == LaplacianScheme::GraphGaussian) return full_;
  const Index n = space_->size();
  Eigen::MatrixXd M(n, n);
  Eigen::VectorXd e = Eigen::VectorXd::Zero(n);
  for (Index j = 0; j < n; ++j) {
    e[j] = 1.0;
    M.col(j) = apply(e);
    e[j] = 0.0;
  }
  return M;
}

bool SpectralBasis::analytic() const {
  if (factors.empty()) return false;
  return std::all_of(factors.begin(), factors.end(), [](const FactorBasis& f) { return f.periodic; });
}

double SpectralBasis::mode_value(Index i, std::span<const double> x) const {
  if (!analytic()) throw std::logic_error("basis has no closed form");
  const auto& offs = space->factor_offsets();
  double v = 1.0;
  for (std::size_t f = 0; f < factors.size(); ++f) v *= factors[f].modes[mode_index[i][f]].value(x[offs[f]]);
  return v;
}

void SpectralBasis::mode_gradient(Index i, std::span<const double> x, std::span<double> g) const {
  if (!analytic()) throw std::logic_error("basis has no closed form");
  const auto& offs = space->factor_offsets();
  const std::size_t nf = factors.size();
  double vals[8], ders[8];
  for (std::size_t f = 0; f < nf; ++f) {
    const auto& m = factors[f].modes[mode_index[i][f]];
    vals[f] = m.value(x[offs[f]]);
    ders[f] = m.derivative(x[offs[f]]);
  }
  for (std::size_t f = 0; f < nf; ++f) {
    double p = ders[f];
    for (std::size_t h = 0; h < nf; ++h)
      if (h != f) p *= vals[h];
    g[offs[f]] = p;
  }
}

Eigen::VectorXd SpectralBasis::coefficients(const Eigen::VectorXd& f) const {
  if (f.size() != size()) throw std::invalid_argument("function size mismatch");
  const Eigen::VectorXd wf = f.cwiseProduct(space->weights());
  return eigenfunctions.transpose() * wf;
}

Eigen::VectorXd SpectralBasis::synthesize(const Eigen::VectorXd& coef) const {
  return eigenfunctions * coef;
}

RowMatrix SpectralBasis::gradient_table(const Eigen::VectorXd& coef) const {
  const Index n = size();
  const int dim = space->ambient_dim();
  RowMatrix G = RowMatrix::Zero(n, dim);
  std::vector<double> g(dim);
  for (Index i = 0; i < coef.size(); ++i) {
    if (coef[i] == 0.0) continue;
    for (Index p = 0; p < n; ++p) {
      mode_gradient(i, space->coords(p), g);
      for (int a = 0; a < dim; ++a) G(p, a) += coef[i] * g[a];
    }
  }
  return G;
}

SpectralBasis eigendecompose(const LaplacianOperator& L, Index k_max) {
  const auto& space = L.space();
  const Index n = space.size();
  if (k_max <= 0 || k_max > n) throw std::invalid_argument("k_max must lie in 1..npoints");
  SpectralBasis B;
  B.space = &space;
  B.scheme = L.scheme();

  if (L.scheme() == LaplacianScheme::GraphGaussian) {
    const Eigen::ArrayXd sw = space.weights().array().sqrt();
    Eigen::MatrixXd S = sw.matrix().asDiagonal() * L.full_matrix() * sw.inverse().matrix().asDiagonal();
    S = 0.5 * (S + S.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S);
    if (es.info() != Eigen::Success) throw ConstructionError("eigensolver did not converge");
    B.eigenvalues = es.eigenvalues().head(k_max);
    B.eigenfunctions = sw.inverse().matrix().asDiagonal() * es.eigenvectors().leftCols(k_max);
    if (k_max > 1 && B.eigenvalues[1] <= 1e-10 * std::max(1.0, es.eigenvalues().maxCoeff()))
      throw ConstructionError("lambda_1 vanishes: operator graph is disconnected");
    B.eigenvalues[0] = 0.0;
    B.eigenfunctions.col(0).setOnes();
    for (Index i = 1; i < k_max; ++i) fix_sign(B.eigenfunctions.col(i));
    return B;
  }

  // Sum over factors: tensor products of factor eigenpairs.
  const auto sizes = space.factor_sizes();
  const std::size_t nf = sizes.size();
  for (std::size_t f = 0; f < nf; ++f) {
    FactorBasis fb;
    const Index m = sizes[f];
    if (const auto* ax = std::get_if<PeriodicAxis>(&space.factors()[f])) {
      fb.periodic = true;
      fb.modes = fourier_modes(ax->resolution);
      fb.eigenvalues.resize(m);
      fb.vectors.resize(m, m);
      for (Index j = 0; j < m; ++j) {
        fb.eigenvalues[j] = fb.modes[j].eigenvalue();
        for (Index p = 0; p < m; ++p) fb.vectors(p, j) = fb.modes[j].value(static_cast<double>(p) / m);
      }
    } else {
      Eigen::MatrixXd A = L.factor_matrices()[f];
      A = 0.5 * (A + A.transpose()).eval();
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A);
      if (es.info() != Eigen::Success) throw ConstructionError("eigensolver did not converge");
      fb.eigenvalues = es.eigenvalues();
      fb.vectors = std::sqrt(static_cast<double>(m)) * es.eigenvectors();
      if (m > 1 && fb.eigenvalues[1] <= 1e-10 * std::max(1.0, fb.eigenvalues.maxCoeff()))
        throw ConstructionError("lambda_1 vanishes: sphere factor operator is disconnected");
      fb.eigenvalues[0] = 0.0;
      fb.vectors.col(0).setOnes();
      for (Index j = 1; j < m; ++j) fix_sign(fb.vectors.col(j));
    }
    B.factors.push_back(std::move(fb));
  }

  std::vector<std::vector<int>> tuples(n, std::vector<int>(nf));
  std::vector<double> lam(n);
  for (Index p = 0; p < n; ++p) {
    Index rem = p;
    double s = 0.0;
    for (int f = static_cast<int>(nf) - 1; f >= 0; --f) {
      tuples[p][f] = static_cast<int>(rem % sizes[f]);
      rem /= sizes[f];
    }
    for (std::size_t f = 0; f < nf; ++f) s += B.factors[f].eigenvalues[tuples[p][f]];
    lam[p] = s;
  }
  std::vector<Index> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](Index a, Index b) {
    const double tol = 1e-12 * std::max(1.0, std::abs(lam[a]));
    if (std::abs(lam[a] - lam[b]) > tol) return lam[a] < lam[b];
    return tuples[a] < tuples[b];
  });

  B.eigenvalues.resize(k_max);
  B.eigenfunctions.resize(n, k_max);
  B.mode_index.resize(k_max);
  std::vector<std::vector<int>> point_idx(n, std::vector<int>(nf));
  for (Index p = 0; p < n; ++p) {
    Index rem = p;
    for (int f = static_cast<int>(nf) - 1; f >= 0; --f) {
      point_idx[p][f] = static_cast<int>(rem % sizes[f]);
      rem /= sizes[f];
    }
  }
  for (Index j = 0; j < k_max; ++j) {
    const auto& t = tuples[order[j]];
    B.mode_index[j] = t;
    B.eigenvalues[j] = lam[order[j]];
    for (Index p = 0; p < n; ++p) {
      double v = 1.0;
      for (std::size_t f = 0; f < nf; ++f) v *= B.factors[f].vectors(point_idx[p][f], t[f]);
      B.eigenfunctions(p, j) = v;
    }
  }
  if (k_max > 1 && B.eigenvalues[1] <= 0.0) throw ConstructionError("lambda_1 vanishes");
  return B;
}

double heat_kernel(const SpectralBasis& b, double t, Index x, Index y) {
  if (!(t > 0)) throw std::invalid_argument("heat kernel needs t > 0");
  const Eigen::ArrayXd e = (-b.eigenvalues.array() * t).exp();
  return (e * b.eigenfunctions.row(x).transpose().array() * b.eigenfunctions.row(y).transpose().array()).sum();
}

Eigen::VectorXd heat_kernel_column(const SpectralBasis& b, double t, Index x) {
  if (!(t > 0)) throw std::invalid_argument("heat kernel needs t > 0");
  const Eigen::VectorXd c =
      ((-b.eigenvalues.array() * t).exp() * b.eigenfunctions.row(x).transpose().array()).matrix();
  return b.eigenfunctions * c;
}

Eigen::VectorXd heat_semigroup_apply(const SpectralBasis& b, double t, const Eigen::VectorXd& f) {
  if (t < 0) throw std::invalid_argument("heat flow needs t >= 0");
  Eigen::VectorXd c = b.coefficients(f);
  c.array() *= (-b.eigenvalues.array() * t).exp();
  return b.synthesize(c);
}

std::pair<double, double> heat_trace(const SpectralBasis& b, double t) {
  const Eigen::ArrayXd e = (-b.eigenvalues.array() * t).exp();
  double lhs = 0.0;
  for (Index x = 0; x < b.size(); ++x)
    lhs += (e * b.eigenfunctions.row(x).transpose().array().square()).sum() * b.space->weight(x);
  return {lhs, e.sum()};
}

double torus_heat_kernel_closed_form(const MetricMeasureSpace& space, double t, Index x, Index y) {
  const auto shape = space.grid_shape();
  const auto mx = space.grid_multi_index(x);
  const auto my = space.grid_multi_index(y);
  double p = 1.0;
  for (std::size_t a = 0; a < shape.size(); ++a) {
    const int N = shape[a];
    const double z = static_cast<double>(mx[a] - my[a]) / N;
    double s = 1.0;
    for (int k = 1; 2 * k < N; ++k) s += 2.0 * std::exp(-kTwoPi * kTwoPi * k * k * t) * std::cos(kTwoPi * k * z);
    if (N % 2 == 0) {
      const int k = N / 2;
      s += std::exp(-kTwoPi * kTwoPi * k * k * t) * std::cos(kTwoPi * k * z);
    }
    p *= s;
  }
  return p;
}

HeatKernelReport verify_gaussian_bounds(const SpectralBasis& basis, const MetricMeasureSpace& space,
                                        double n, const std::vector<double>& t_grid,
                                        const std::vector<std::pair<Index, Index>>& pairs) {
  HeatKernelReport rep;
  rep.min_kernel = std::numeric_limits<double>::infinity();
  struct Sample {
    double p, m, d, t, slope;
  };
  std::vector<Sample> samples;
  const double h = space.grid_spacing();
  (void)n;
  for (double t : t_grid) {
    const double sq = std::sqrt(t);
    for (auto [x, y] : pairs) {
      const Eigen::VectorXd col = heat_kernel_column(basis, t, x);
      double mass = 0.0;
      for (Index j = 0; j < space.size(); ++j) mass += col[j] * space.weight(j);
      rep.mass_residual = std::max(rep.mass_residual, std::abs(mass - 1.0));
      double slope = 0.0;
      for (Index z = 0; z < space.size(); ++z) {
        const double dz = space.distance(y, z);
        if (z == y || dz >= 1.5 * h) continue;
        slope = std::max(slope, std::abs(col[z] - col[y]) / dz);
      }
      Sample s{col[y], ball_mass(space, x, sq), space.distance(x, y), t, slope};
      rep.min_kernel = std::min(rep.min_kernel, s.p);
      if (space.is_periodic_grid() && basis.analytic() && basis.k_max() == basis.size()) {
        const double ref = torus_heat_kernel_closed_form(space, t, x, y);
        rep.max_rel_dev_closed_form = std::max(rep.max_rel_dev_closed_form, std::abs(s.p - ref) / std::abs(ref));
      }
      samples.push_back(s);
    }
  }
  const double inf = std::numeric_limits<double>::infinity();
  double best = inf;
  for (double C3 : {0.0, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0}) {
    double lo = 1.0, hi = 1.0;
    for (const auto& s : samples) {
      const double lower_need = s.p > 0 ? std::exp(-s.d * s.d / (3 * s.t) - C3 * s.t) / (s.m * s.p) : inf;
      const double upper_need = s.p * s.m * std::exp(s.d * s.d / (5 * s.t) - C3 * s.t);
      lo = std::max(lo, lower_need);
      hi = std::max(hi, upper_need);
    }
    if (std::max(lo, hi) < best) {
      best = std::max(lo, hi);
      rep.C1 = best;
      rep.C1_low = lo;
      rep.C1_high = hi;
      rep.C3 = C3;
    }
  }
  for (const auto& s : samples)
    rep.C2 = std::max(rep.C2, s.slope * s.m * std::sqrt(s.t) * std::exp(s.d * s.d / (5 * s.t) - rep.C3 * s.t));
  return rep;
}

BakryEmeryReport verify_bakry_emery(const SpectralBasis& basis, double K,
                                    const std::vector<Eigen::VectorXd>& f_sample,
                                    const std::vector<double>& t_grid, const GradientStencil* stencil) {
  if (!basis.analytic() && !stencil) throw std::invalid_argument("non-analytic basis needs a stencil");
  BakryEmeryReport rep;
  for (const auto& f : f_sample) {
    const Eigen::VectorXd c = basis.coefficients(f);
    Eigen::VectorXd grad_sq;
    if (basis.analytic())
      grad_sq = basis.gradient_table(c).rowwise().squaredNorm();
    else
      grad_sq = stencil->gradient(f).rowwise().squaredNorm();
    const double scale = std::max(grad_sq.maxCoeff(), 1e-300);
    for (double t : t_grid) {
      Eigen::VectorXd ct = c;
      ct.array() *= (-basis.eigenvalues.array() * t).exp();
      Eigen::VectorXd lhs;
      if (basis.analytic())
        lhs = basis.gradient_table(ct).rowwise().squaredNorm();
      else
        lhs = stencil->gradient(basis.synthesize(ct)).rowwise().squaredNorm();
      const Eigen::VectorXd rhs = std::exp(-2 * K * t) * heat_semigroup_apply(basis, t, grad_sq);
      const double ex = std::max(0.0, (lhs - rhs).maxCoeff());
      rep.worst_excess = std::max(rep.worst_excess, ex);
      rep.worst_relative = std::max(rep.worst_relative, ex / scale);
    }
  }
  return rep;
}

EigenfunctionBoundsReport eigenfunction_bounds(const SpectralBasis& basis, double n, double K,
                                               double c1, double C1, double C3,
                                               const GradientStencil* stencil, Index max_modes) {
  if (!basis.analytic() && !stencil) throw std::invalid_argument("non-analytic basis needs a stencil");
  EigenfunctionBoundsReport rep;
  const Index m = max_modes < 0 ? basis.k_max() : std::min(max_modes, basis.k_max());
  for (Index i = 0; i < m; ++i) {
    const double lam = basis.eigenvalues[i];
    const double sup = basis.eigenfunctions.col(i).cwiseAbs().maxCoeff();
    double grad = 0.0;
    if (basis.analytic()) {
      Eigen::VectorXd e = Eigen::VectorXd::Zero(basis.k_max());
      e[i] = 1.0;
      grad = std::sqrt(basis.gradient_table(e).rowwise().squaredNorm().maxCoeff());
    } else {
      grad = stencil->modulus(basis.eigenfunctions.col(i)).maxCoeff();
    }
    rep.sup_norms.push_back(sup);
    rep.grad_norms.push_back(grad);
    const double sup_bound = (C1 * std::numbers::e / c1) * std::pow(C3 + lam, n / 2.0);
    if (sup_bound > 0) rep.max_sup_ratio = std::max(rep.max_sup_ratio, sup / sup_bound);
    const double gb = std::sqrt((lam + std::abs(K)) / 2.0) * sup;
    if (gb > 0) {
      rep.max_grad_ratio = std::max(rep.max_grad_ratio, grad / gb);
      rep.max_grad_ratio_with_e = std::max(rep.max_grad_ratio_with_e, grad / (std::numbers::e * gb));
    }
  }
  return rep;
}

}  // namespace mms
