#include "mmslab/transport.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace mms {
namespace {

struct Cell {
  Index i, j;
  double flow;
};

// Matrix-minimum start: every allocation retires exactly one row or column, so the
// m + k - 1 chosen cells form a spanning tree of the bipartite row/column graph.
std::vector<Cell> initial_basis(const Eigen::MatrixXd& C, Eigen::VectorXd a, Eigen::VectorXd b) {
  const Index m = C.rows(), k = C.cols();
  std::vector<Index> order(m * k);
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Index p, Index q) { return C(p / k, p % k) < C(q / k, q % k); });
  std::vector<char> row_on(m, 1), col_on(k, 1);
  Index rows_left = m, cols_left = k;
  std::vector<Cell> basis;
  for (Index p : order) {
    if (static_cast<Index>(basis.size()) == m + k - 1) break;
    const Index i = p / k, j = p % k;
    if (!row_on[i] || !col_on[j]) continue;
    const double f = std::max(0.0, std::min(a[i], b[j]));
    basis.push_back({i, j, f});
    a[i] -= f;
    b[j] -= f;
    const bool retire_row = (a[i] <= b[j] && rows_left > 1) || cols_left == 1;
    if (retire_row) {
      row_on[i] = 0;
      --rows_left;
    } else {
      col_on[j] = 0;
      --cols_left;
    }
  }
  return basis;
}

double squared(double x) { return x * x; }

}  // namespace

double DiscreteMeasure::density_bound() const {
  return (weights.array() / space->weights().array()).maxCoeff();
}

std::vector<Index> DiscreteMeasure::support() const {
  std::vector<Index> s;
  for (Index p = 0; p < weights.size(); ++p)
    if (weights[p] > 0.0) s.push_back(p);
  return s;
}

DiscreteMeasure make_measure(const MetricMeasureSpace& space, Eigen::VectorXd weights) {
  if (weights.size() != space.size()) throw std::invalid_argument("measure size mismatch");
  if ((weights.array() < 0).any()) throw std::invalid_argument("measure weights must be nonnegative");
  const double total = weights.sum();
  if (!(total > 0)) throw std::invalid_argument("measure has zero total mass");
  return {&space, weights / total};
}

DiscreteMeasure uniform_measure(const MetricMeasureSpace& space) { return {&space, space.weights()}; }

DiscreteMeasure gaussian_bump(const MetricMeasureSpace& space, Index center, double sigma, double cutoff) {
  Eigen::VectorXd w = Eigen::VectorXd::Zero(space.size());
  for (Index p = 0; p < space.size(); ++p) {
    const double d = space.distance(center, p);
    if (d < cutoff) w[p] = std::exp(-d * d / (2 * sigma * sigma)) * space.weight(p);
  }
  return make_measure(space, w);
}

AtomCloud atoms_of(const DiscreteMeasure& mu) {
  const auto s = mu.support();
  AtomCloud a;
  a.positions.resize(static_cast<Index>(s.size()), mu.space->ambient_dim());
  a.mass.resize(static_cast<Index>(s.size()));
  for (std::size_t k = 0; k < s.size(); ++k) {
    const auto c = mu.space->coords(s[k]);
    std::copy(c.begin(), c.end(), a.positions.row(k).data());
    a.mass[k] = mu.weights[s[k]];
  }
  return a;
}

DiscreteMeasure rebin(const MetricMeasureSpace& space, const AtomCloud& atoms) {
  Eigen::VectorXd w = Eigen::VectorXd::Zero(space.size());
  const int d = space.ambient_dim();
  for (Index k = 0; k < atoms.mass.size(); ++k)
    w[space.nearest_point({atoms.positions.row(k).data(), static_cast<std::size_t>(d)})] += atoms.mass[k];
  return {&space, w};
}

TransportPlan solve_transport(const Eigen::MatrixXd& C, const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const Index m = C.rows(), k = C.cols();
  if (a.size() != m || b.size() != k || m == 0 || k == 0) throw std::invalid_argument("transport shape mismatch");
  if (!(a.sum() > 0) || !(b.sum() > 0)) throw std::invalid_argument("transport marginals have zero mass");
  if (std::abs(a.sum() - b.sum()) > 1e-9 * a.sum()) throw std::invalid_argument("transport marginals unbalanced");
  std::vector<Cell> basis = initial_basis(C, a, b);
  const Index nodes = m + k;
  const double tol = 1e-13 * (1.0 + C.cwiseAbs().maxCoeff());
  TransportPlan plan;
  plan.u.resize(m);
  plan.v.resize(k);
  std::vector<std::vector<int>> adj(nodes);
  std::vector<int> parent_edge(nodes), depth(nodes);
  std::vector<Index> parent(nodes), queue;
  const int max_pivots = 200000;
  for (;;) {
    for (auto& l : adj) l.clear();
    for (std::size_t e = 0; e < basis.size(); ++e) {
      adj[basis[e].i].push_back(static_cast<int>(e));
      adj[m + basis[e].j].push_back(static_cast<int>(e));
    }
    // Potentials and a rooted spanning tree from node 0.
    std::fill(parent_edge.begin(), parent_edge.end(), -2);
    parent_edge[0] = -1;
    parent[0] = -1;
    depth[0] = 0;
    plan.u[0] = 0.0;
    queue.assign(1, 0);
    for (std::size_t q = 0; q < queue.size(); ++q) {
      const Index node = queue[q];
      for (int e : adj[node]) {
        const Cell& c = basis[e];
        const Index other = node < m ? m + c.j : c.i;
        if (parent_edge[other] != -2) continue;
        parent_edge[other] = e;
        parent[other] = node;
        depth[other] = depth[node] + 1;
        if (node < m) plan.v[c.j] = C(c.i, c.j) - plan.u[c.i];
        else plan.u[c.i] = C(c.i, c.j) - plan.v[c.j];
        queue.push_back(other);
      }
    }
    if (static_cast<Index>(queue.size()) != nodes) throw std::logic_error("transport basis is not a spanning tree");

    Index ei = -1, ej = -1;
    double best = -tol;
    for (Index i = 0; i < m; ++i)
      for (Index j = 0; j < k; ++j) {
        const double r = C(i, j) - plan.u[i] - plan.v[j];
        if (r < best) {
          best = r;
          ei = i;
          ej = j;
        }
      }
    if (ei < 0) break;
    if (++plan.pivots > max_pivots) throw std::runtime_error("transport simplex did not converge");

    // Tree path from column node ej to row node ei; edges alternate -, +, -, ...
    std::vector<int> from_col, from_row;
    Index p = m + ej, q = ei;
    while (depth[p] > depth[q]) {
      from_col.push_back(parent_edge[p]);
      p = parent[p];
    }
    while (depth[q] > depth[p]) {
      from_row.push_back(parent_edge[q]);
      q = parent[q];
    }
    while (p != q) {
      from_col.push_back(parent_edge[p]);
      p = parent[p];
      from_row.push_back(parent_edge[q]);
      q = parent[q];
    }
    std::vector<int> cycle = from_col;
    cycle.insert(cycle.end(), from_row.rbegin(), from_row.rend());
    double theta = std::numeric_limits<double>::infinity();
    int leave = -1;
    for (std::size_t s = 0; s < cycle.size(); s += 2)
      if (basis[cycle[s]].flow < theta) {
        theta = basis[cycle[s]].flow;
        leave = cycle[s];
      }
    for (std::size_t s = 0; s < cycle.size(); ++s) basis[cycle[s]].flow += (s % 2 == 0 ? -theta : theta);
    basis[leave] = {ei, ej, theta};
  }
  plan.coupling = Eigen::MatrixXd::Zero(m, k);
  for (const auto& c : basis) plan.coupling(c.i, c.j) += std::max(c.flow, 0.0);
  plan.cost = (plan.coupling.array() * C.array()).sum();
  return plan;
}

namespace {

TransportSolution finish(const Eigen::MatrixXd& C, const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                         std::vector<Index> smu, std::vector<Index> snu) {
  TransportPlan plan = solve_transport(C, a, b);
  TransportSolution sol;
  sol.cost = plan.cost;
  sol.support_mu = std::move(smu);
  sol.support_nu = std::move(snu);
  sol.coupling = std::move(plan.coupling);
  const double shift = plan.u[0];
  sol.phi = plan.u.array() - shift;
  sol.psi = plan.v.array() + shift;
  sol.duality_gap = std::abs(sol.phi.dot(a) + sol.psi.dot(b) - sol.cost);
  return sol;
}

void check_support(std::size_t a, std::size_t b) {
  if (a + b > kTransportSupportLimit) throw std::invalid_argument("transport supports exceed the dense budget");
}

}  // namespace

TransportSolution wasserstein2(const MetricMeasureSpace& space, const DiscreteMeasure& mu, const DiscreteMeasure& nu) {
  const auto smu = mu.support(), snu = nu.support();
  if (smu.empty() || snu.empty()) throw std::invalid_argument("measure has zero total mass");
  check_support(smu.size(), snu.size());
  const Index m = static_cast<Index>(smu.size()), k = static_cast<Index>(snu.size());
  Eigen::MatrixXd C(m, k);
  Eigen::VectorXd a(m), b(k);
  for (Index i = 0; i < m; ++i) {
    a[i] = mu.weights[smu[i]];
    for (Index j = 0; j < k; ++j) C(i, j) = squared(space.distance(smu[i], snu[j]));
  }
  for (Index j = 0; j < k; ++j) b[j] = nu.weights[snu[j]];
  return finish(C, a, b, smu, snu);
}

TransportSolution wasserstein2(const MetricMeasureSpace& space, const AtomCloud& mu, const AtomCloud& nu) {
  std::vector<Index> smu, snu;
  for (Index i = 0; i < mu.mass.size(); ++i)
    if (mu.mass[i] > 0) smu.push_back(i);
  for (Index j = 0; j < nu.mass.size(); ++j)
    if (nu.mass[j] > 0) snu.push_back(j);
  if (smu.empty() || snu.empty()) throw std::invalid_argument("measure has zero total mass");
  check_support(smu.size(), snu.size());
  const int d = space.ambient_dim();
  const Index m = static_cast<Index>(smu.size()), k = static_cast<Index>(snu.size());
  Eigen::MatrixXd C(m, k);
  Eigen::VectorXd a(m), b(k);
  for (Index i = 0; i < m; ++i) {
    a[i] = mu.mass[smu[i]];
    const std::span<const double> x(mu.positions.row(smu[i]).data(), d);
    for (Index j = 0; j < k; ++j)
      C(i, j) = squared(space.chart_distance(x, {nu.positions.row(snu[j]).data(), static_cast<std::size_t>(d)}));
  }
  for (Index j = 0; j < k; ++j) b[j] = nu.mass[snu[j]];
  return finish(C, a, b, smu, snu);
}

MeasureTrajectory pushforward(const FlowMap& flow, const DiscreteMeasure& mu0) {
  const auto& space = *flow.space;
  const auto supp = mu0.support();
  std::vector<Index> slots;
  for (Index p : supp) {
    const Index s = flow.slot_of(p);
    if (s < 0) throw std::invalid_argument("flow does not cover the initial support");
    slots.push_back(s);
  }
  const int d = space.ambient_dim();
  MeasureTrajectory traj;
  traj.times = flow.times;
  traj.source = "pushforward";
  for (std::size_t k = 0; k < flow.times.size(); ++k) {
    AtomCloud a;
    a.positions.resize(static_cast<Index>(supp.size()), d);
    a.mass.resize(static_cast<Index>(supp.size()));
    for (std::size_t i = 0; i < supp.size(); ++i) {
      const auto x = flow.position(k, slots[i]);
      std::copy(x.begin(), x.end(), a.positions.row(i).data());
      a.mass[i] = mu0.weights[supp[i]];
    }
    traj.measures.push_back(rebin(space, a));
    traj.atoms.push_back(std::move(a));
  }
  return traj;
}

MeasureTrajectory continuity_equation_solve(const MetricMeasureSpace& space, const VectorField& b,
                                            const DiscreteMeasure& mu0, const std::vector<double>& t_grid,
                                            CeMethod method, const FlowMap* flow, double cfl) {
  if (std::abs(mu0.weights.sum() - 1.0) > 1e-12 || (mu0.weights.array() < 0).any())
    throw std::invalid_argument("initial measure is not a probability measure");
  if (method == CeMethod::Pushforward) {
    if (!flow) throw std::invalid_argument("pushforward needs a flow map");
    if (flow->times.size() != t_grid.size()) throw std::invalid_argument("flow and trajectory grids differ");
    for (std::size_t k = 0; k < t_grid.size(); ++k)
      if (std::abs(flow->times[k] - t_grid[k]) > 1e-12) throw std::invalid_argument("flow and trajectory grids differ");
    return pushforward(*flow, mu0);
  }
  if (!space.is_periodic_grid()) throw std::invalid_argument("upwind scheme needs a torus grid");
  if (!(cfl > 0 && cfl <= 1)) throw std::invalid_argument("Courant number must lie in (0, 1]");
  const auto shape = space.grid_shape();
  const int dims = static_cast<int>(shape.size());
  const Index n = space.size();
  std::vector<std::vector<Index>> up(dims, std::vector<Index>(n));
  for (Index p = 0; p < n; ++p) {
    auto mi = space.grid_multi_index(p);
    for (int a = 0; a < dims; ++a) {
      ++mi[a];
      up[a][p] = space.grid_index(mi);
      --mi[a];
    }
  }
  // Face velocity between p and its upper neighbour along axis a.
  RowMatrix face(n, dims);
  std::vector<double> mid(dims), bv(dims);
  auto faces = [&](double t) {
    for (Index p = 0; p < n; ++p) {
      const auto c = space.coords(p);
      for (int a = 0; a < dims; ++a) {
        std::copy(c.begin(), c.end(), mid.begin());
        mid[a] += 0.5 / shape[a];
        b.value(mid, t, bv);
        face(p, a) = bv[a];
      }
    }
  };
  auto rate = [&]() {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(n);
    for (Index p = 0; p < n; ++p)
      for (int a = 0; a < dims; ++a) {
        out[p] += std::max(face(p, a), 0.0) * shape[a];
        out[up[a][p]] += std::max(-face(p, a), 0.0) * shape[a];
      }
    return out.maxCoeff();
  };
  MeasureTrajectory traj;
  traj.times = t_grid;
  traj.source = "upwind";
  Eigen::VectorXd mu = mu0.weights;
  traj.measures.push_back({&space, mu});
  for (std::size_t k = 0; k + 1 < t_grid.size(); ++k) {
    const double span = t_grid[k + 1] - t_grid[k];
    faces(t_grid[k]);
    const double r0 = rate();
    const int sub = std::max(1, static_cast<int>(std::ceil(span * r0 / cfl - 1e-12)));
    const double dt = span / sub;
    for (int s = 0; s < sub; ++s) {
      if (s > 0) faces(t_grid[k] + s * dt);
      if (dt * rate() > cfl * (1 + 1e-9)) throw std::runtime_error("upwind step violates the Courant limit");
      Eigen::VectorXd next = mu;
      for (Index p = 0; p < n; ++p)
        for (int a = 0; a < dims; ++a) {
          const double v = face(p, a);
          const Index q = up[a][p];
          const double flux = dt * shape[a] * (v > 0 ? v * mu[p] : v * mu[q]);
          next[p] -= flux;
          next[q] += flux;
        }
      mu = next;
    }
    traj.measures.push_back({&space, mu});
  }
  return traj;
}

double coupling_first_variation(const MetricMeasureSpace& space, const VectorField& b, double t,
                                const AtomCloud& mu, const AtomCloud& nu, const TransportSolution& sol) {
  const int d = space.ambient_dim();
  std::vector<double> bv(d), v(d);
  double s = 0.0;
  for (std::size_t i = 0; i < sol.support_mu.size(); ++i) {
    const std::span<const double> x(mu.positions.row(sol.support_mu[i]).data(), d);
    b.value(x, t, bv);
    for (std::size_t j = 0; j < sol.support_nu.size(); ++j) {
      const double pij = sol.coupling(i, j);
      if (pij <= 0.0) continue;
      space.log_map(x, {nu.positions.row(sol.support_nu[j]).data(), static_cast<std::size_t>(d)}, v);
      for (int a = 0; a < d; ++a) s -= pij * bv[a] * v[a];
    }
  }
  return s;
}

DerivativeReport verify_w2_derivative(const MetricMeasureSpace& space, const MeasureTrajectory& traj,
                                      const VectorField& b, const AtomCloud& nu) {
  if (traj.atoms.size() != traj.times.size()) throw std::invalid_argument("trajectory carries no exact atoms");
  const double bsup = b.sup_norm(space, traj.times);
  const double h = space.grid_spacing();
  std::vector<TransportSolution> sols;
  for (const auto& a : traj.atoms) sols.push_back(wasserstein2(space, a, nu));
  DerivativeReport rep;
  rep.pass = true;
  for (std::size_t k = 1; k + 1 < traj.times.size(); ++k) {
    const double lhs = 0.5 * (sols[k + 1].cost - sols[k - 1].cost) / (traj.times[k + 1] - traj.times[k - 1]);
    const double rhs = coupling_first_variation(space, b, traj.times[k], traj.atoms[k], nu, sols[k]);
    const double thr = 5 * h * bsup * sols[k].w2() + 1e-12;
    const double err = std::abs(lhs - rhs);
    rep.times.push_back(traj.times[k]);
    rep.lhs.push_back(lhs);
    rep.rhs.push_back(rhs);
    rep.threshold.push_back(thr);
    rep.max_discrepancy = std::max(rep.max_discrepancy, err);
    rep.worst_relative = std::max(rep.worst_relative, err / thr);
    if (err > thr) rep.pass = false;
  }
  return rep;
}

DerivativeReport verify_joint_derivative(const MetricMeasureSpace& space, const MeasureTrajectory& mu,
                                         const MeasureTrajectory& nu, const VectorField& b) {
  if (mu.atoms.size() != mu.times.size() || nu.atoms.size() != nu.times.size())
    throw std::invalid_argument("trajectories carry no exact atoms");
  if (mu.times != nu.times) throw std::invalid_argument("trajectory grids differ");
  const double bsup = b.sup_norm(space, mu.times);
  const double h = space.grid_spacing();
  std::vector<TransportSolution> sols;
  for (std::size_t k = 0; k < mu.times.size(); ++k) sols.push_back(wasserstein2(space, mu.atoms[k], nu.atoms[k]));
  DerivativeReport rep;
  rep.pass = true;
  rep.max_discrepancy = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 1; k + 1 < mu.times.size(); ++k) {
    const double t = mu.times[k];
    const double lhs = 0.5 * (sols[k + 1].cost - sols[k - 1].cost) / (mu.times[k + 1] - mu.times[k - 1]);
    TransportSolution rev = sols[k];
    std::swap(rev.support_mu, rev.support_nu);
    rev.coupling.transposeInPlace();
    const double rhs = coupling_first_variation(space, b, t, mu.atoms[k], nu.atoms[k], sols[k]) +
                       coupling_first_variation(space, b, t, nu.atoms[k], mu.atoms[k], rev);
    const double thr = 5 * h * bsup * sols[k].w2() + 1e-12;
    rep.times.push_back(t);
    rep.lhs.push_back(lhs);
    rep.rhs.push_back(rhs);
    rep.threshold.push_back(thr);
    rep.max_discrepancy = std::max(rep.max_discrepancy, lhs - rhs);
    rep.worst_relative = std::max(rep.worst_relative, (lhs - rhs) / thr);
    if (lhs - rhs > thr) rep.pass = false;
  }
  return rep;
}

ContractionReport verify_contraction(const FlowMap& flow, const DiscreteMeasure& mu0, const DiscreteMeasure& nu0,
                                     double L_sym, int num_pairs, std::uint64_t seed) {
  const auto& space = *flow.space;
  const auto tm = pushforward(flow, mu0), tn = pushforward(flow, nu0);
  ContractionReport rep;
  const double w0 = wasserstein2(space, tm.atoms[0], tn.atoms[0]).w2();
  if (!(w0 > 0)) throw std::invalid_argument("contraction check needs distinct initial measures");
  rep.tol = 5 * space.grid_spacing() / w0;
  rep.min_ratio = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < flow.times.size(); ++k) {
    const double t = flow.times[k];
    const double w = k == 0 ? w0 : wasserstein2(space, tm.atoms[k], tn.atoms[k]).w2();
    const double bound = std::exp(L_sym * t) * w0;
    rep.times.push_back(t);
    rep.w2.push_back(w);
    rep.bound.push_back(bound);
    rep.ratio.push_back(w / bound);
    rep.max_ratio = std::max(rep.max_ratio, w / bound);
    rep.min_ratio = std::min(rep.min_ratio, w / bound);
  }
  rep.bound_holds = rep.max_ratio <= 1 + rep.tol;

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, flow.starts.size() - 1);
  while (rep.pairs < num_pairs) {
    const std::size_t i = pick(rng), j = pick(rng);
    if (i == j) continue;
    const double d0 = space.distance(flow.starts[i], flow.starts[j]);
    ++rep.pairs;
    for (std::size_t k = 0; k < flow.times.size(); ++k) {
      const double dt = space.chart_distance(flow.position(k, i), flow.position(k, j));
      rep.pair_max_ratio = std::max(rep.pair_max_ratio, dt / (std::exp(L_sym * flow.times[k]) * d0));
    }
  }
  rep.pairs_hold = rep.pair_max_ratio <= 1 + 1e-3;
  return rep;
}

GeodesicReport verify_geodesic_differentiation(const MetricMeasureSpace& space, const VectorField& b, double t,
                                               const AtomCloud& eta0, const AtomCloud& eta1,
                                               const std::vector<double>& s_grid) {
  if (eta0.mass.size() > 200 || eta1.mass.size() > 200) throw std::invalid_argument("geodesic check supports <= 200 atoms");
  if (s_grid.size() < 3) throw std::invalid_argument("s grid needs three nodes");
  const auto sol = wasserstein2(space, eta0, eta1);
  const int d = space.ambient_dim();
  std::vector<double> x(d), v(d), bv(d);
  auto visit = [&](double s, auto&& fn) {
    for (std::size_t i = 0; i < sol.support_mu.size(); ++i)
      for (std::size_t j = 0; j < sol.support_nu.size(); ++j) {
        const double pij = sol.coupling(i, j);
        if (pij <= 0.0) continue;
        const std::span<const double> a(eta0.positions.row(sol.support_mu[i]).data(), d);
        const std::span<const double> c(eta1.positions.row(sol.support_nu[j]).data(), d);
        space.geodesic_point(a, c, s, x);
        space.geodesic_velocity(a, c, s, v);
        fn(pij);
      }
  };
  auto action = [&](double s) {
    double sum = 0.0;
    visit(s, [&](double pij) {
      b.value(x, t, bv);
      for (int a = 0; a < d; ++a) sum += pij * bv[a] * v[a];
    });
    return sum;
  };
  auto form = [&](double s) {
    double sum = 0.0;
    visit(s, [&](double pij) { sum += pij * sym_bilinear(b, x, t, v, v); });
    return sum;
  };
  GeodesicReport rep;
  double scale = 0.0, worst = 0.0;
  for (std::size_t k = 1; k + 1 < s_grid.size(); ++k) {
    const double lhs = (action(s_grid[k + 1]) - action(s_grid[k - 1])) / (s_grid[k + 1] - s_grid[k - 1]);
    const double rhs = form(s_grid[k]);
    rep.s.push_back(s_grid[k]);
    rep.lhs.push_back(lhs);
    rep.rhs.push_back(rhs);
    scale = std::max(scale, std::abs(rhs));
    worst = std::max(worst, std::abs(lhs - rhs));
  }
  rep.max_relative = worst / std::max(scale, 1e-9);
  rep.pass = rep.max_relative <= 0.15;
  return rep;
}

double weak_continuity_residual(const MetricMeasureSpace& space, const MeasureTrajectory& traj,
                                const VectorField& b,
                                const std::vector<std::shared_ptr<const SmoothFunction>>& tests) {
  if (traj.atoms.size() != traj.times.size()) throw std::invalid_argument("trajectory carries no exact atoms");
  const int d = space.ambient_dim();
  const double bsup = b.sup_norm(space, traj.times);
  std::vector<double> g(d), bv(d);
  double worst = 0.0;
  for (const auto& f : tests) {
    double lip = 0.0;
    for (Index p = 0; p < space.size(); ++p) {
      f->gradient(space.coords(p), g);
      double s = 0.0;
      for (double c : g) s += c * c;
      lip = std::max(lip, std::sqrt(s));
    }
    auto integral = [&](std::size_t k) {
      double s = 0.0;
      for (Index i = 0; i < traj.atoms[k].mass.size(); ++i)
        s += traj.atoms[k].mass[i] * f->value({traj.atoms[k].positions.row(i).data(), static_cast<std::size_t>(d)});
      return s;
    };
    for (std::size_t k = 1; k + 1 < traj.times.size(); ++k) {
      const double lhs = (integral(k + 1) - integral(k - 1)) / (traj.times[k + 1] - traj.times[k - 1]);
      double rhs = 0.0;
      for (Index i = 0; i < traj.atoms[k].mass.size(); ++i) {
        const std::span<const double> x(traj.atoms[k].positions.row(i).data(), d);
        b.value(x, traj.times[k], bv);
        f->gradient(x, g);
        for (int a = 0; a < d; ++a) rhs += traj.atoms[k].mass[i] * bv[a] * g[a];
      }
      const double bound = 5 * space.grid_spacing() * lip * bsup;
      if (bound > 0) worst = std::max(worst, std::abs(lhs - rhs) / bound);
      else worst = std::max(worst, std::abs(lhs - rhs) > 1e-12 ? 1e300 : 0.0);
    }
  }
  return worst;
}

}  // namespace mms
