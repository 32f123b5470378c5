#include "mmslab/flows.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace mms {
namespace {

double wrap(double d) { return d - std::nearbyint(d); }

void check_grid(const std::vector<double>& t) {
  if (t.size() < 2 || t.front() != 0.0) throw std::invalid_argument("time grid must start at 0 with two nodes");
  for (std::size_t k = 1; k < t.size(); ++k)
    if (!(t[k] > t[k - 1])) throw std::invalid_argument("time grid must be strictly increasing");
}

void require_full(const FlowMap& flow) {
  if (!flow.covers_space()) throw std::invalid_argument("flow starts must cover every lattice point in order");
}

// Smallest C > 0 with C exp(C s) >= rho.
double solve_lusin_constant(double rho, double s) {
  if (rho <= 0.0) return 0.0;
  if (s <= 0.0) return rho;
  double lo = rho * std::exp(-rho * s), hi = rho;
  for (int it = 0; it < 100; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid * std::exp(mid * s) >= rho) hi = mid;
    else lo = mid;
  }
  return hi;
}

struct QAccumulator {
  Eigen::MatrixXd q;       // points x radii
  Eigen::MatrixXd q_cmp;   // Q restricted to the pairs seen by Phi
  Eigen::MatrixXd phi;
  long skipped = 0;
};

// Q (and optionally Phi) at time node k for every point and every radius in r (ascending).
QAccumulator accumulate(const FlowMap& flow, const BallIndex& balls, std::size_t k, const std::vector<double>& r,
                        double A, double n, const ShiftedGreenLookup* Gbar) {
  const auto& space = *flow.space;
  const Index N = space.size();
  const int R = static_cast<int>(r.size());
  const auto& w = space.weights();
  const double e = n - 2.0;
  std::vector<double> rpow(R);
  for (int j = 0; j < R; ++j) rpow[j] = std::pow(r[j], e);
  QAccumulator acc;
  acc.q = Eigen::MatrixXd::Zero(N, R);
  if (Gbar) {
    acc.q_cmp = Eigen::MatrixXd::Zero(N, R);
    acc.phi = Eigen::MatrixXd::Zero(N, R);
  }
  const double rmax = r.back();
  std::vector<double> mass(R);
  for (Index x = 0; x < N; ++x) {
    std::fill(mass.begin(), mass.end(), 0.0);
    const auto px = flow.position(k, x);
    balls.visit_sorted(x, [&](Index y, double d0) {
      if (d0 >= rmax) return false;
      int j0 = 0;
      while (j0 < R && r[j0] <= d0) ++j0;
      const double wy = w[y];
      for (int j = j0; j < R; ++j) mass[j] += wy;
      if (y == x) return true;
      const auto py = flow.position(k, y);
      const double dt = space.chart_distance(px, py);
      const double de = e == 1.0 ? dt : std::pow(dt, e);
      std::optional<double> g;
      if (Gbar) g = (*Gbar)(px, py);
      for (int j = j0; j < R; ++j) {
        const double qv = wy * std::log1p(de / rpow[j] / A);
        acc.q(x, j) += qv;
        if (Gbar && g) {
          acc.q_cmp(x, j) += qv;
          acc.phi(x, j) += wy * std::log1p(1.0 / (rpow[j] * *g));
        }
      }
      if (Gbar && !g) acc.skipped += R - j0;
      return true;
    });
    for (int j = 0; j < R; ++j) {
      if (mass[j] <= 0.0) throw std::logic_error("empty ball in Q evaluation");
      acc.q(x, j) /= mass[j];
      if (Gbar) {
        acc.q_cmp(x, j) /= mass[j];
        acc.phi(x, j) /= mass[j];
      }
    }
  }
  return acc;
}

// Second time derivative of f along the flow through x at time t.
double second_derivative_along(const SmoothFunction& f, const VectorField& b, std::span<const double> x, double t) {
  const int d = b.ambient_dim();
  std::vector<double> bv(d), g(d), H(d * d), J(d * d), bt(d);
  b.value(x, t, bv);
  f.gradient(x, g);
  f.hessian(x, H);
  b.jacobian(x, t, J);
  b.time_derivative(x, t, bt);
  double s = 0.0;
  for (int i = 0; i < d; ++i) {
    double jb = bt[i];
    for (int j = 0; j < d; ++j) {
      s += H[i * d + j] * bv[i] * bv[j];
      jb += J[i * d + j] * bv[j];
    }
    s += g[i] * jb;
  }
  return s;
}

}  // namespace

Index FlowMap::slot_of(Index p) const {
  if (covers_space()) return p;
  auto it = std::find(starts.begin(), starts.end(), p);
  return it == starts.end() ? -1 : static_cast<Index>(it - starts.begin());
}

bool FlowMap::covers_space() const {
  if (static_cast<Index>(starts.size()) != space->size()) return false;
  for (std::size_t i = 0; i < starts.size(); ++i)
    if (starts[i] != static_cast<Index>(i)) return false;
  return true;
}

std::vector<double> uniform_time_grid(double T, int intervals) {
  if (!(T > 0) || intervals < 1) throw std::invalid_argument("time grid needs T > 0 and one interval");
  std::vector<double> t(intervals + 1);
  for (int k = 0; k <= intervals; ++k) t[k] = T * k / intervals;
  t.back() = T;
  return t;
}

double max_flow_step(const MetricMeasureSpace& space, const VectorField& b, const std::vector<double>& t_grid) {
  check_grid(t_grid);
  const double sup = b.sup_norm(space, t_grid);
  const double cap = 0.01 * t_grid.back();
  return sup > 0.0 ? std::min(space.grid_spacing() / sup, cap) : cap;
}

FlowMap integrate_flow(const MetricMeasureSpace& space, const VectorField& b, const std::vector<double>& t_grid,
                       double step, std::vector<Index> starts, bool check_rlf) {
  if (space.is_graph()) throw std::invalid_argument("flows need a chart-backed space");
  if (b.ambient_dim() != space.ambient_dim()) throw std::invalid_argument("field and space ranks differ");
  if (!(step > 0)) throw std::invalid_argument("step must be positive");
  if (step > max_flow_step(space, b, t_grid) * (1 + 1e-12)) throw std::invalid_argument("flow step too large");
  if (starts.empty()) {
    starts.resize(space.size());
    for (Index p = 0; p < space.size(); ++p) starts[p] = p;
  }
  const int d = space.ambient_dim();
  const Index m = static_cast<Index>(starts.size());
  FlowMap flow;
  flow.space = &space;
  flow.starts = starts;
  flow.times = t_grid;
  flow.step = step;
  RowMatrix X(m, d);
  for (Index i = 0; i < m; ++i) {
    const auto c = space.coords(starts[i]);
    std::copy(c.begin(), c.end(), X.row(i).data());
  }
  flow.positions.push_back(X);
  std::vector<double> k1(d), k2(d), k3(d), k4(d), tmp(d);
  for (std::size_t k = 0; k + 1 < t_grid.size(); ++k) {
    const double span = t_grid[k + 1] - t_grid[k];
    const int sub = std::max(1, static_cast<int>(std::ceil(span / step - 1e-9)));
    const double h = span / sub;
    for (Index i = 0; i < m; ++i) {
      double* x = X.row(i).data();
      for (int s = 0; s < sub; ++s) {
        const double t = t_grid[k] + s * h;
        b.value({x, static_cast<std::size_t>(d)}, t, k1);
        for (int a = 0; a < d; ++a) tmp[a] = x[a] + 0.5 * h * k1[a];
        b.value(tmp, t + 0.5 * h, k2);
        for (int a = 0; a < d; ++a) tmp[a] = x[a] + 0.5 * h * k2[a];
        b.value(tmp, t + 0.5 * h, k3);
        for (int a = 0; a < d; ++a) tmp[a] = x[a] + h * k3[a];
        b.value(tmp, t + h, k4);
        for (int a = 0; a < d; ++a) x[a] += h / 6.0 * (k1[a] + 2 * k2[a] + 2 * k3[a] + k4[a]);
        space.canonicalize({x, static_cast<std::size_t>(d)});
      }
    }
    flow.positions.push_back(X);
  }
  if (check_rlf) {
    const auto rep = rlf_residual(flow, b, default_test_functions(space, 10, 17));
    if (!rep.pass) throw ConstructionError("regular Lagrangian flow residual gate failed");
  }
  return flow;
}

RlfResidualReport rlf_residual(const FlowMap& flow, const VectorField& b,
                               const std::vector<std::shared_ptr<const SmoothFunction>>& tests) {
  const int d = flow.dim();
  RlfResidualReport rep;
  std::vector<double> bv(d), g(d), mid(d);
  for (const auto& f : tests) {
    for (std::size_t k = 0; k + 1 < flow.times.size(); ++k) {
      const double h = flow.times[k + 1] - flow.times[k];
      const double t = flow.times[k];
      for (std::size_t i = 0; i < flow.starts.size(); ++i) {
        const auto x0 = flow.position(k, i);
        const auto x1 = flow.position(k + 1, i);
        b.value(x0, t, bv);
        f->gradient(x0, g);
        double bf = 0.0;
        for (int a = 0; a < d; ++a) {
          bf += bv[a] * g[a];
          mid[a] = x0[a] + 0.5 * h * bv[a];
        }
        const double res = std::abs(f->value(x1) - f->value(x0) - h * bf);
        const double acc = std::max({std::abs(second_derivative_along(*f, b, x0, t)),
                                     std::abs(second_derivative_along(*f, b, x1, t + h)),
                                     std::abs(second_derivative_along(*f, b, mid, t + 0.5 * h))});
        const double bound = 2.0 * h * h * acc + 1e-10;
        rep.max_residual = std::max(rep.max_residual, res);
        rep.max_ratio = std::max(rep.max_ratio, res / bound);
      }
    }
  }
  rep.pass = rep.max_ratio <= 1.0;
  return rep;
}

double compressibility(const FlowMap& flow) {
  require_full(flow);
  const auto& space = *flow.space;
  const Index n = space.size();
  const auto& w = space.weights();
  const double sigma = 1.5 * space.grid_spacing();
  std::vector<std::pair<Index, double>> nb;
  auto deposit = [&](std::size_t k) {
    Eigen::VectorXd dep = Eigen::VectorXd::Zero(n);
    for (Index i = 0; i < n; ++i) {
      const auto x = flow.position(k, i);
      nb.clear();
      double tot = 0.0;
      for (Index p = 0; p < n; ++p) {
        const double dd = space.chart_distance(x, space.coords(p));
        if (dd > 3 * sigma) continue;
        const double K = std::exp(-dd * dd / (sigma * sigma));
        nb.emplace_back(p, K);
        tot += K;
      }
      for (auto [p, K] : nb) dep[p] += w[i] * K / tot;
    }
    return dep;
  };
  const Eigen::VectorXd ref = deposit(0);
  double L = 0.0;
  for (std::size_t k = 0; k < flow.times.size(); ++k) L = std::max(L, (deposit(k).array() / ref.array()).maxCoeff());
  return L;
}

QFunctional q_functional(const FlowMap& flow, std::size_t k, double r, double A, double n) {
  require_full(flow);
  if (!(r > flow.space->grid_spacing())) throw std::invalid_argument("radius must exceed the grid spacing");
  const BallIndex balls(*flow.space);
  QFunctional out{flow.times.at(k), r, A, n, {}};
  out.values = accumulate(flow, balls, k, {r}, A, n, nullptr).q.col(0);
  return out;
}

ShiftedGreenLookup::ShiftedGreenLookup(const GreenFunction& G, double A_bar) : G_(&G), A_bar_(A_bar) {
  if (G.translation_invariant()) shape_ = G.space().grid_shape();
}

std::optional<double> ShiftedGreenLookup::operator()(std::span<const double> a, std::span<const double> b) const {
  if (!shape_.empty()) {
    const int d = static_cast<int>(shape_.size());
    int base[8], corner[8];
    double frac[8];
    for (int k = 0; k < d; ++k) {
      double u = (b[k] - a[k]) * shape_[k];
      u -= std::floor(u / shape_[k]) * shape_[k];
      base[k] = static_cast<int>(std::floor(u));
      frac[k] = u - base[k];
    }
    const auto& table = G_->offset_table();
    double s = 0.0;
    for (int c = 0; c < (1 << d); ++c) {
      double wt = 1.0;
      for (int k = 0; k < d; ++k) {
        const bool up = (c >> k) & 1;
        corner[k] = base[k] + (up ? 1 : 0);
        wt *= up ? frac[k] : 1.0 - frac[k];
      }
      if (wt != 0.0) s += wt * table[G_->space().grid_index(std::span<const int>(corner, d))];
    }
    return s + A_bar_;
  }
  const auto& space = G_->space();
  const Index p = space.nearest_point(a), q = space.nearest_point(b);
  if (p == q) return std::nullopt;
  return (*G_)(p, q) + A_bar_;
}

PhiFunctional phi_functional(const FlowMap& flow, const ShiftedGreenLookup& Gbar, std::size_t k, double r,
                             double n) {
  require_full(flow);
  if (!(r > flow.space->grid_spacing())) throw std::invalid_argument("radius must exceed the grid spacing");
  const BallIndex balls(*flow.space);
  auto acc = accumulate(flow, balls, k, {r}, 1.0, n, &Gbar);
  return {flow.times.at(k), r, acc.phi.col(0), acc.skipped};
}

std::vector<double> default_r_grid(const MetricMeasureSpace& space, int count) {
  if (count < 2) throw std::invalid_argument("radius grid needs two values");
  const double lo = 1.5 * space.grid_spacing(), hi = space.diameter();
  std::vector<double> r(count);
  for (int j = 0; j < count; ++j) r[j] = lo * std::pow(hi / lo, static_cast<double>(j) / (count - 1));
  r.back() = hi;
  return r;
}

QStarReport q_star(const FlowMap& flow, const std::vector<double>& r_grid, double A, double n,
                   const ShiftedGreenLookup* Gbar) {
  require_full(flow);
  if (r_grid.empty() || !std::is_sorted(r_grid.begin(), r_grid.end()) || r_grid.front() <= flow.space->grid_spacing())
    throw std::invalid_argument("radius grid must ascend inside (grid spacing, D]");
  const BallIndex balls(*flow.space);
  const Index N = flow.space->size();
  QStarReport rep;
  rep.r_grid = r_grid;
  rep.q_star = Eigen::VectorXd::Zero(N);
  for (std::size_t k = 0; k < flow.times.size(); ++k) {
    const auto acc = accumulate(flow, balls, k, r_grid, A, n, Gbar);
    const Eigen::VectorXd qmax = acc.q.rowwise().maxCoeff();
    rep.q_star = rep.q_star.cwiseMax(qmax);
    if (k == 0) rep.q_star_initial = qmax;
    if (Gbar) {
      const Eigen::MatrixXd diff = acc.q_cmp - acc.phi;
      rep.phi_checks += diff.size();
      rep.phi_violations += (diff.array() > 1e-12).count();
      rep.worst_q_minus_phi = std::max(rep.worst_q_minus_phi, diff.maxCoeff());
      rep.skipped_pairs += acc.skipped;
    }
  }
  rep.l2 = std::sqrt((rep.q_star.array().square() * flow.space->weights().array()).sum());
  return rep;
}

double qstar_bound_ratio(double q_star_l2, double L, double g_integral) {
  return q_star_l2 / (L * g_integral + 1.0);
}

GreenFlowReport verify_green_derivative_along_flow(const FlowMap& flow, const SpectralBasis& basis, double epsilon,
                                                   const VectorField& b,
                                                   const std::vector<std::pair<Index, Index>>& pairs) {
  const auto& space = *flow.space;
  const PeriodicGreenEvaluator g(basis, epsilon);
  const GreenFunction G(basis, epsilon);
  const double gsup = G.offset_table().cwiseAbs().maxCoeff();
  const double scale = 0.1 * gsup / space.diameter();
  const int d = flow.dim();
  std::vector<double> z(d), zm(d), gp(d), gm(d), bx(d), by(d);
  auto offset = [&](std::size_t k, Index sx, Index sy, std::vector<double>& out) {
    const auto px = flow.position(k, sx), py = flow.position(k, sy);
    for (int a = 0; a < d; ++a) out[a] = wrap(py[a] - px[a]);
  };
  GreenFlowReport rep;
  for (auto [x, y] : pairs) {
    if (space.distance(x, y) <= 3 * space.grid_spacing()) continue;
    const Index sx = flow.slot_of(x), sy = flow.slot_of(y);
    if (sx < 0 || sy < 0) throw std::invalid_argument("pair not covered by the flow");
    ++rep.pairs;
    for (std::size_t k = 1; k + 1 < flow.times.size(); ++k) {
      offset(k + 1, sx, sy, z);
      const double up = g.value(z);
      offset(k - 1, sx, sy, z);
      const double dn = g.value(z);
      const double lhs = (up - dn) / (flow.times[k + 1] - flow.times[k - 1]);
      offset(k, sx, sy, z);
      for (int a = 0; a < d; ++a) zm[a] = -z[a];
      g.gradient(z, gp);
      g.gradient(zm, gm);
      b.value(flow.position(k, sx), flow.times[k], bx);
      b.value(flow.position(k, sy), flow.times[k], by);
      double rhs = 0.0;
      for (int a = 0; a < d; ++a) rhs += by[a] * gp[a] + bx[a] * gm[a];
      const double err = std::abs(lhs - rhs);
      rep.max_abs_error = std::max(rep.max_abs_error, err);
      ++rep.checks;
      if (std::abs(rhs) > scale ? err <= 0.1 * std::abs(rhs) : err <= 0.05) ++rep.passed;
    }
  }
  rep.pass_rate = rep.checks ? static_cast<double>(rep.passed) / rep.checks : 1.0;
  return rep;
}

LusinReport lusin_set(const MetricMeasureSpace& space, const Eigen::VectorXd& q_star, double epsilon) {
  if (!(epsilon > 0 && epsilon < 1)) throw std::invalid_argument("epsilon must lie in (0, 1)");
  if (q_star.size() != space.size()) throw std::invalid_argument("Q* size mismatch");
  LusinReport rep;
  rep.epsilon = epsilon;
  rep.q_star_l2 = std::sqrt((q_star.array().square() * space.weights().array()).sum());
  rep.threshold = rep.q_star_l2 / std::sqrt(epsilon);
  rep.retained.resize(space.size());
  for (Index p = 0; p < space.size(); ++p) {
    rep.retained[p] = q_star[p] <= rep.threshold;
    if (rep.retained[p]) ++rep.retained_count;
    else rep.excluded_mass += space.weight(p);
  }
  return rep;
}

void verify_lipschitz_on_set(const FlowMap& flow, const Eigen::VectorXd& q_star, LusinReport& rep,
                             std::uint64_t seed, std::size_t max_pairs) {
  require_full(flow);
  const auto& space = *flow.space;
  std::vector<Index> in, out;
  for (Index p = 0; p < space.size(); ++p) (rep.retained[p] ? in : out).push_back(p);
  if (in.empty()) throw std::invalid_argument("retained set is empty");

  auto pair_ratio = [&](Index x, Index y, double& when) {
    const double d0 = space.distance(x, y);
    double best = 0.0;
    for (std::size_t k = 0; k < flow.times.size(); ++k) {
      const double r = space.chart_distance(flow.position(k, x), flow.position(k, y)) / d0;
      if (r > best) {
        best = r;
        when = flow.times[k];
      }
    }
    return best;
  };

  std::vector<std::pair<Index, Index>> pairs;
  const std::size_t m = in.size();
  if (m * (m - 1) / 2 <= max_pairs) {
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = i + 1; j < m; ++j) pairs.emplace_back(in[i], in[j]);
  } else {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, m - 1);
    while (pairs.size() < max_pairs) {
      const std::size_t i = pick(rng), j = pick(rng);
      if (i != j) pairs.emplace_back(in[i], in[j]);
    }
  }
  std::vector<double> ratios(pairs.size());
  rep.C_fit = 0.0;
  rep.max_pair_ratio = 0.0;
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    auto [x, y] = pairs[p];
    double when = 0.0;
    ratios[p] = pair_ratio(x, y, when);
    if (ratios[p] > rep.max_pair_ratio) {
      rep.max_pair_ratio = ratios[p];
      rep.worst_pair = {x, y};
      rep.worst_time = when;
    }
    rep.C_fit = std::max(rep.C_fit, solve_lusin_constant(ratios[p], q_star[x] + q_star[y]));
  }
  rep.pairs_checked = static_cast<long>(pairs.size());
  rep.lip_constant = rep.C_fit * std::exp(2 * rep.C_fit * rep.threshold);
  rep.all_within = true;
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    auto [x, y] = pairs[p];
    if (ratios[p] > rep.C_fit * std::exp(rep.C_fit * (q_star[x] + q_star[y])) * (1 + 1e-9) ||
        ratios[p] > rep.lip_constant * (1 + 1e-9))
      rep.all_within = false;
  }
  rep.max_straddle_ratio = 0.0;
  if (!out.empty()) {
    std::mt19937_64 rng(seed + 1);
    std::uniform_int_distribution<std::size_t> pi(0, in.size() - 1), po(0, out.size() - 1);
    const std::size_t count = std::min<std::size_t>(max_pairs / 10 + 1, in.size() * out.size());
    for (std::size_t c = 0; c < count; ++c) {
      double when = 0.0;
      rep.max_straddle_ratio = std::max(rep.max_straddle_ratio, pair_ratio(in[pi(rng)], out[po(rng)], when));
    }
  }
}

LiftReport lift_and_verify_n2(std::shared_ptr<const MetricMeasureSpace> base, FieldPtr b,
                              const std::vector<double>& t_grid, int circle_resolution, const LiftOptions& opt) {
  if (base->is_graph() || base->nominal_dimension() != 2 || base->base())
    throw std::invalid_argument("lift needs a two-dimensional chart base");
  if (circle_resolution < 8) throw std::invalid_argument("circle resolution must be at least 8");
  auto product = std::make_shared<const MetricMeasureSpace>(build_product_with_circle(base, circle_resolution));
  const FieldPtr lifted = make_lifted_field(b, 1);
  const bool flat = base->is_periodic_grid();
  const auto scheme = flat ? LaplacianScheme::TorusFourierExact : LaplacianScheme::ProductKron;
  LiftReport rep;

  const auto Lb = assemble_laplacian(*base, scheme);
  const auto Lp = assemble_laplacian(*product, scheme);
  const SpectralBasis Bb = eigendecompose(Lb, base->size());
  const SpectralBasis Bp = eigendecompose(Lp, product->size());
  std::vector<double> expect;
  for (Index i = 0; i < Bb.k_max(); ++i)
    for (const auto& m : fourier_modes(circle_resolution)) expect.push_back(Bb.eigenvalues[i] + m.eigenvalue());
  std::sort(expect.begin(), expect.end());
  for (Index i = 0; i < Bp.k_max(); ++i) {
    rep.tensor_error = std::max(rep.tensor_error, std::abs(Bp.eigenvalues[i] - expect[i]));
    const Eigen::VectorXd u = Bp.eigenfunctions.col(i);
    rep.eigen_residual =
        std::max(rep.eigen_residual, (Lp.apply(u) - Bp.eigenvalues[i] * u).cwiseAbs().maxCoeff());
  }

  const double t0 = t_grid.front();
  const Eigen::VectorXd div_b = divergence(*base, *b, t0), div_l = divergence(*product, *lifted, t0);
  const Eigen::VectorXd sym_b = sym_modulus_chart(*base, *b, t0), sym_l = sym_modulus_chart(*product, *lifted, t0);
  for (Index p = 0; p < product->size(); ++p) {
    const Index x = p / circle_resolution;
    rep.div_error = std::max(rep.div_error, std::abs(div_l[p] - div_b[x]));
    rep.sym_error = std::max(rep.sym_error, std::abs(sym_l[p] - sym_b[x]));
  }

  const FlowMap Xb = integrate_flow(*base, *b, t_grid, opt.step);
  const FlowMap Xp = integrate_flow(*product, *lifted, t_grid, opt.step);
  const int db = base->ambient_dim();
  for (std::size_t k = 0; k < t_grid.size(); ++k)
    for (Index p = 0; p < product->size(); ++p) {
      const auto xp = Xp.position(k, p);
      const auto xb = Xb.position(k, p / circle_resolution);
      for (int a = 0; a < db; ++a) rep.projection_error = std::max(rep.projection_error, std::abs(xp[a] - xb[a]));
      rep.circle_drift = std::max(rep.circle_drift, std::abs(xp[db] - product->coords(p)[db]));
    }

  const GreenFunction G(Bp, opt.green_epsilon);
  const ShiftedGreen sg = fit_comparability_constants(G, 3.0);
  rep.A = sg.A;
  const ShiftedGreenLookup lookup(G, sg.A_bar);
  rep.product_q = q_star(Xp, default_r_grid(*product, opt.r_count), sg.A, 3.0, &lookup);
  rep.product_lusin = lusin_set(*product, rep.product_q.q_star, opt.epsilon);
  verify_lipschitz_on_set(Xp, rep.product_q.q_star, rep.product_lusin, opt.seed);

  rep.base_q_star = Eigen::VectorXd::Zero(base->size());
  for (Index p = 0; p < product->size(); ++p) {
    const Index x = p / circle_resolution;
    rep.base_q_star[x] = std::max(rep.base_q_star[x], rep.product_q.q_star[p]);
  }
  rep.base_lusin = lusin_set(*base, rep.base_q_star, opt.epsilon);
  verify_lipschitz_on_set(Xb, rep.base_q_star, rep.base_lusin, opt.seed);
  return rep;
}

}  // namespace mms
