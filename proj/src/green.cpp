#include "mmslab/green.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mms {
namespace {

Eigen::VectorXd green_weights(const SpectralBasis& b, double eps) {
  Eigen::VectorXd w = Eigen::VectorXd::Zero(b.k_max());
  for (Index i = 1; i < b.k_max(); ++i) {
    if (!(b.eigenvalues[i] > 0)) throw ConstructionError("Green function needs lambda_1 > 0");
    w[i] = std::exp(-b.eigenvalues[i] * eps) / b.eigenvalues[i];
  }
  return w;
}

double lp_norm(const Eigen::VectorXd& f, const Eigen::VectorXd& w, double p) {
  return std::pow((f.cwiseAbs().array().pow(p) * w.array()).sum(), 1.0 / p);
}

}  // namespace

GreenFunction::GreenFunction(const SpectralBasis& basis, double epsilon)
    : space_(basis.space), epsilon_(epsilon) {
  if (epsilon < 0) throw std::invalid_argument("epsilon must be nonnegative");
  const Eigen::VectorXd w = green_weights(basis, epsilon);
  const Index n = basis.size();
  invariant_ = space_->is_periodic_grid() && basis.analytic() && basis.k_max() == n;
  if (invariant_) {
    shape_ = space_->grid_shape();
    const Eigen::VectorXd c = (w.array() * basis.eigenfunctions.row(0).transpose().array()).matrix();
    Eigen::VectorXd g = basis.eigenfunctions * c;
    table_.resize(n);
    std::vector<int> neg(shape_.size());
    for (Index k = 0; k < n; ++k) {
      const auto m = space_->grid_multi_index(k);
      for (std::size_t a = 0; a < m.size(); ++a) neg[a] = -m[a];
      table_[k] = 0.5 * (g[k] + g[space_->grid_index(neg)]);
    }
  } else {
    dense_ = basis.eigenfunctions * w.asDiagonal() * basis.eigenfunctions.transpose();
    dense_ = 0.5 * (dense_ + dense_.transpose()).eval();
  }
}

double GreenFunction::operator()(Index x, Index y) const {
  if (!invariant_) return dense_(x, y);
  Index idx = 0;
  Index rx = x, ry = y;
  Index mult = 1;
  for (int a = static_cast<int>(shape_.size()) - 1; a >= 0; --a) {
    const int N = shape_[a];
    int d = static_cast<int>(ry % N) - static_cast<int>(rx % N);
    if (d < 0) d += N;
    idx += d * mult;
    mult *= N;
    rx /= N;
    ry /= N;
  }
  return table_[idx];
}

Eigen::VectorXd GreenFunction::column(Index x) const {
  if (!invariant_) return dense_.col(x);
  Eigen::VectorXd c(space_->size());
  for (Index y = 0; y < space_->size(); ++y) c[y] = (*this)(x, y);
  return c;
}

double green(const SpectralBasis& basis, double epsilon, Index x, Index y) {
  const Eigen::VectorXd w = green_weights(basis, epsilon);
  return (w.array() * basis.eigenfunctions.row(x).transpose().array() *
          basis.eigenfunctions.row(y).transpose().array()).sum();
}

Eigen::VectorXd green_column(const SpectralBasis& basis, double epsilon, Index x) {
  const Eigen::VectorXd w = green_weights(basis, epsilon);
  return basis.eigenfunctions * (w.array() * basis.eigenfunctions.row(x).transpose().array()).matrix();
}

double verify_green_action(const GreenFunction& G, const LaplacianOperator& L, const Eigen::VectorXd& f) {
  const auto& space = G.space();
  const auto& w = space.weights();
  const Eigen::VectorXd lap = -L.apply(f);
  const Eigen::VectorXd wl = lap.cwiseProduct(w);
  const double mean = f.dot(w);
  double worst = 0.0;
  for (Index x = 0; x < space.size(); ++x) {
    const double lhs = G.column(x).dot(wl);
    worst = std::max(worst, std::abs(lhs - (mean - f[x])));
  }
  return worst;
}

double verify_green_laplacian(const SpectralBasis& basis, const LaplacianOperator& L, double epsilon, Index x) {
  if (!(epsilon > 0)) throw std::invalid_argument("epsilon must be positive");
  const Eigen::VectorXd g = green_column(basis, epsilon, x);
  const Eigen::VectorXd lap = -L.apply(g);
  const Eigen::VectorXd p = heat_kernel_column(basis, epsilon, x);
  return (lap - (Eigen::VectorXd::Ones(p.size()) - p)).cwiseAbs().maxCoeff();
}

double verify_green_semigroup(const SpectralBasis& basis, double epsilon, Index x) {
  const Eigen::VectorXd g = green_column(basis, epsilon, x);
  const Eigen::VectorXd h = heat_semigroup_apply(basis, epsilon / 2, green_column(basis, epsilon / 2, x));
  return (g - h).cwiseAbs().maxCoeff();
}

double green_time_integral(const SpectralBasis& basis, Index x, Index y, double t0, double t1, int nodes) {
  const Index k = basis.k_max();
  Eigen::ArrayXd c(k - 1), lam(k - 1);
  for (Index i = 1; i < k; ++i) {
    c[i - 1] = basis.eigenfunctions(x, i) * basis.eigenfunctions(y, i);
    lam[i - 1] = basis.eigenvalues[i];
  }
  auto F = [&](double t) { return (c * (-lam * t).exp()).sum(); };
  const double s0 = std::log(t0), s1 = std::log(t1);
  const double ds = (s1 - s0) / (nodes - 1);
  double sum = 0.0;
  for (int j = 0; j < nodes; ++j) {
    const double t = std::exp(s0 + j * ds);
    const double v = F(t) * t;
    sum += (j == 0 || j == nodes - 1) ? 0.5 * v : v;
  }
  // The piece on [0, t0] by one trapezoid.
  return sum * ds + 0.5 * t0 * (c.sum() + F(t0));
}

ShiftedGreen fit_comparability_constants(const GreenFunction& G, double n) {
  if (!(n > 2)) throw ConstructionError("comparability with d^{2-n} needs n > 2; lift to the circle product");
  const auto& space = G.space();
  struct P {
    double g, d;
  };
  std::vector<P> pairs;
  if (G.translation_invariant()) {
    for (Index k = 1; k < space.size(); ++k) pairs.push_back({G(0, k), space.distance(0, k)});
  } else {
    for (Index x = 0; x < space.size(); ++x)
      for (Index y = x + 1; y < space.size(); ++y) pairs.push_back({G(x, y), space.distance(x, y)});
  }
  ShiftedGreen s;
  s.n = n;
  s.min_G = std::numeric_limits<double>::infinity();
  double max_abs = 0.0;
  for (const auto& p : pairs) {
    s.min_G = std::min(s.min_G, p.g);
    max_abs = std::max(max_abs, std::abs(p.g));
  }
  s.A_bar = s.min_G < 0 ? 1.1 * (-s.min_G) : 1e-3 * max_abs;
  s.alpha = s.min_G + s.A_bar;
  double A = 1.0;
  for (const auto& p : pairs) {
    const double dn = std::pow(p.d, n - 2);
    const double gb = p.g + s.A_bar;
    A = std::max({A, std::abs(p.g) * dn, gb * dn, 1.0 / (gb * dn)});
  }
  if (!(A <= 1e6)) throw ConstructionError("comparability constant exceeds 1e6: inconsistent basis or exponent");
  s.A = A;
  return s;
}

std::pair<double, double> green_distance_profile(const GreenFunction& G, double n, double d_max) {
  const auto& space = G.space();
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  auto visit = [&](Index x, Index y) {
    const double d = space.distance(x, y);
    if (d > d_max) return;
    const double v = G(x, y) * std::pow(d, n - 2);
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  };
  if (G.translation_invariant()) {
    for (Index k = 1; k < space.size(); ++k) visit(0, k);
  } else {
    for (Index x = 0; x < space.size(); ++x)
      for (Index y = x + 1; y < space.size(); ++y) visit(x, y);
  }
  return {lo, hi};
}

Eigen::VectorXd discrete_slope(const MetricMeasureSpace& space, const Eigen::VectorXd& f) {
  const double r = 1.5 * space.grid_spacing();
  Eigen::VectorXd s = Eigen::VectorXd::Zero(space.size());
  if (space.is_periodic_grid()) {
    // Neighbour offsets are shared by every point of a periodic grid.
    const auto shape = space.grid_shape();
    std::vector<std::pair<std::vector<int>, double>> offs;
    for (Index k = 1; k < space.size(); ++k) {
      const double d = space.distance(0, k);
      if (d < r) offs.push_back({space.grid_multi_index(k), d});
    }
    std::vector<int> m(shape.size());
    for (Index y = 0; y < space.size(); ++y) {
      const auto my = space.grid_multi_index(y);
      double best = 0.0;
      for (const auto& [o, d] : offs) {
        for (std::size_t a = 0; a < m.size(); ++a) m[a] = my[a] + o[a];
        best = std::max(best, std::abs(f[space.grid_index(m)] - f[y]) / d);
      }
      s[y] = best;
    }
    return s;
  }
  for (Index y = 0; y < space.size(); ++y) {
    double best = 0.0;
    for (Index z = 0; z < space.size(); ++z) {
      if (z == y) continue;
      const double d = space.distance(y, z);
      if (d < r) best = std::max(best, std::abs(f[z] - f[y]) / d);
    }
    s[y] = best;
  }
  return s;
}

Eigen::VectorXd green_gradient(const GreenFunction& G, Index x) {
  Eigen::VectorXd s = discrete_slope(G.space(), G.column(x));
  s[x] = 0.0;
  return s;
}

double fit_green_slope_constant(const GreenFunction& G, Index x, double n) {
  const Eigen::VectorXd s = green_gradient(G, x);
  double C = 0.0;
  for (Index y = 0; y < s.size(); ++y) {
    if (y == x) continue;
    C = std::max(C, s[y] * std::pow(G.space().distance(x, y), n - 1));
  }
  return C;
}

W1pReport verify_w1p_convergence(const SpectralBasis& basis, Index x, double p,
                                 const std::vector<double>& eps_sequence) {
  if (p < 1) throw std::invalid_argument("p must be at least 1");
  const auto& space = *basis.space;
  const auto& w = space.weights();
  W1pReport rep;
  const Eigen::VectorXd g0 = green_column(basis, 0.0, x);
  rep.slope_norm_limit = lp_norm(discrete_slope(space, g0), w, p);
  for (double e : eps_sequence) {
    const Eigen::VectorXd ge = green_column(basis, e, x);
    const Eigen::VectorXd diff = ge - g0;
    rep.eps.push_back(e);
    rep.norms.push_back(lp_norm(diff, w, p) + lp_norm(discrete_slope(space, diff), w, p));
    rep.slope_norms.push_back(lp_norm(discrete_slope(space, ge), w, p));
  }
  rep.strictly_decreasing = true;
  rep.monotone_within_10pct = true;
  for (std::size_t k = 1; k < rep.norms.size(); ++k) {
    if (!(rep.norms[k] < rep.norms[k - 1])) rep.strictly_decreasing = false;
    if (rep.norms[k] > 1.1 * rep.norms[k - 1]) rep.monotone_within_10pct = false;
  }
  rep.final_below_1e6 = !rep.norms.empty() && rep.norms.back() < 1e-6;
  return rep;
}

PeriodicGreenEvaluator::PeriodicGreenEvaluator(const SpectralBasis& basis, double epsilon)
    : dim_(basis.space->ambient_dim()) {
  if (!basis.analytic() || !basis.space->is_periodic_grid() || basis.k_max() != basis.size())
    throw std::invalid_argument("closed-form Green evaluation needs an exact torus basis");
  const Eigen::VectorXd w = green_weights(basis, epsilon);
  std::vector<double> zero(dim_, 0.0);
  for (Index i = 1; i < basis.k_max(); ++i) {
    const double u0 = basis.mode_value(i, zero);
    if (std::abs(u0) < 1e-14) continue;
    Term t;
    t.weight = w[i] * u0;
    for (std::size_t f = 0; f < basis.factors.size(); ++f)
      t.modes.push_back(basis.factors[f].modes[basis.mode_index[i][f]]);
    terms_.push_back(std::move(t));
  }
}

double PeriodicGreenEvaluator::value(std::span<const double> z) const {
  double s = 0.0;
  for (const auto& t : terms_) {
    double v = t.weight;
    for (int a = 0; a < dim_; ++a) v *= t.modes[a].value(z[a]);
    s += v;
  }
  return s;
}

void PeriodicGreenEvaluator::gradient(std::span<const double> z, std::span<double> g) const {
  std::fill(g.begin(), g.end(), 0.0);
  double vals[8], ders[8];
  for (const auto& t : terms_) {
    for (int a = 0; a < dim_; ++a) {
      vals[a] = t.modes[a].value(z[a]);
      ders[a] = t.modes[a].derivative(z[a]);
    }
    for (int a = 0; a < dim_; ++a) {
      double p = t.weight * ders[a];
      for (int c = 0; c < dim_; ++c)
        if (c != a) p *= vals[c];
      g[a] += p;
    }
  }
}

double PeriodicGreenEvaluator::operator()(std::span<const double> a, std::span<const double> b) const {
  std::vector<double> z(dim_);
  for (int k = 0; k < dim_; ++k) z[k] = b[k] - a[k];
  return value(z);
}

}  // namespace mms
