#include "mmslab/transport.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace mms;

namespace {

double circle_dist(double a, double b) {
  const double d = std::abs(a - b);
  return std::min(d, 1.0 - d);
}

Eigen::VectorXd dirac(const MetricMeasureSpace& s, Index p) {
  Eigen::VectorXd w = Eigen::VectorXd::Zero(s.size());
  w[p] = 1.0;
  return w;
}

AtomCloud single_atom(std::vector<double> x) {
  AtomCloud a;
  a.positions.resize(1, static_cast<Index>(x.size()));
  for (std::size_t i = 0; i < x.size(); ++i) a.positions(0, static_cast<Index>(i)) = x[i];
  a.mass = Eigen::VectorXd::Ones(1);
  return a;
}

}  // namespace

TEST_CASE("Dirac masses cost the squared distance") {
  const auto T2 = build_torus_grid(2, 10);
  const auto mu = make_measure(T2, dirac(T2, 3)), nu = make_measure(T2, dirac(T2, 67));
  const auto s = wasserstein2(T2, mu, nu);
  CHECK(s.cost == doctest::Approx(std::pow(T2.distance(3, 67), 2)));
  CHECK(s.coupling.size() == 1);
  CHECK(wasserstein2(T2, mu, mu).cost == doctest::Approx(0.0).scale(1.0));
}

TEST_CASE("two-point measures on T1 pick the cheaper pairing") {
  const auto T1 = build_torus_grid(1, 40);
  std::mt19937_64 rng(12);
  std::uniform_int_distribution<Index> pick(0, 39);
  for (int trial = 0; trial < 40; ++trial) {
    const Index a = pick(rng), b = pick(rng), c = pick(rng), d = pick(rng);
    if (a == b || c == d) continue;
    Eigen::VectorXd wm = Eigen::VectorXd::Zero(40), wn = Eigen::VectorXd::Zero(40);
    wm[a] = wm[b] = 0.5;
    wn[c] = wn[d] = 0.5;
    auto dd = [&](Index i, Index j) { return std::pow(circle_dist(T1.coords(i)[0], T1.coords(j)[0]), 2); };
    // Couplings with uniform marginals on two points form a segment: enumerate it finely plus both ends.
    double best = std::numeric_limits<double>::infinity();
    for (int k = 0; k <= 1000; ++k) {
      const double q = 0.5 * k / 1000.0;
      best = std::min(best, q * dd(a, c) + (0.5 - q) * dd(a, d) + (0.5 - q) * dd(b, c) + q * dd(b, d));
    }
    CHECK(wasserstein2(T1, make_measure(T1, wm), make_measure(T1, wn)).cost == doctest::Approx(best).epsilon(1e-12));
  }
}

TEST_CASE("transport plans carry a dual certificate") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.05, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const int m = 3 + trial % 5, n = 2 + trial % 7;
    Eigen::MatrixXd C(m, n);
    for (auto& v : C.reshaped()) v = u(rng);
    Eigen::VectorXd a(m), b(n);
    for (auto& v : a) v = u(rng);
    for (auto& v : b) v = u(rng);
    a /= a.sum();
    b /= b.sum();
    const auto P = solve_transport(C, a, b);
    CHECK((P.coupling.rowwise().sum() - a).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((P.coupling.colwise().sum().transpose() - b).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(P.coupling.minCoeff() >= -1e-15);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) CHECK(P.u[i] + P.v[j] <= C(i, j) + 1e-12);
    CHECK(P.u.dot(a) + P.v.dot(b) == doctest::Approx(P.cost).epsilon(1e-12));
    CHECK((P.coupling.array() * C.array()).sum() == doctest::Approx(P.cost).epsilon(1e-12));
  }
}

TEST_CASE("W2 is symmetric, has zero gap and obeys the triangle inequality") {
  const auto T2 = build_torus_grid(2, 16);
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<Index> pick(0, T2.size() - 1);
  for (int trial = 0; trial < 6; ++trial) {
    const auto a = gaussian_bump(T2, pick(rng), 0.06, 0.15);
    const auto b = gaussian_bump(T2, pick(rng), 0.05, 0.15);
    const auto c = gaussian_bump(T2, pick(rng), 0.07, 0.15);
    const auto ab = wasserstein2(T2, a, b), ba = wasserstein2(T2, b, a);
    CHECK(ab.cost == doctest::Approx(ba.cost).epsilon(1e-12));
    CHECK(std::abs(ab.duality_gap) < 1e-10);
    CHECK(ab.w2() <= wasserstein2(T2, a, c).w2() + wasserstein2(T2, c, b).w2() + 1e-12);
    CHECK(ab.phi[0] == 0.0);
  }
}

TEST_CASE("measure construction") {
  const auto T2 = build_torus_grid(2, 8);
  Eigen::VectorXd w = Eigen::VectorXd::Zero(T2.size());
  CHECK_THROWS_AS(make_measure(T2, w), std::invalid_argument);
  w[0] = -1;
  w[1] = 2;
  CHECK_THROWS_AS(make_measure(T2, w), std::invalid_argument);
  const auto u = uniform_measure(T2);
  CHECK(u.density_bound() == doctest::Approx(1.0));
  const auto g = gaussian_bump(T2, 9, 0.1, 0.2);
  CHECK(g.weights.sum() == doctest::Approx(1.0));
  for (Index p : g.support()) CHECK(T2.distance(9, p) < 0.2);
  const auto back = rebin(T2, atoms_of(g));
  CHECK((back.weights - g.weights).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("continuity equation with a constant field translates the measure") {
  const auto T2 = build_torus_grid(2, 16);
  const auto b = builtin_field("constant", {{"v", {0.25, 0.0}}}, T2);
  const auto tg = uniform_time_grid(1.0, 20);
  const auto F = integrate_flow(T2, *b, tg, 0.01);
  const auto mu0 = gaussian_bump(T2, T2.grid_index(std::vector<int>{4, 4}), 0.08, 0.25);
  const auto push = continuity_equation_solve(T2, *b, mu0, tg, CeMethod::Pushforward, &F);
  const auto up = continuity_equation_solve(T2, *b, mu0, tg, CeMethod::Upwind);
  // exact translation by 0.25 = 4 cells in x1
  Eigen::VectorXd shifted = Eigen::VectorXd::Zero(T2.size());
  for (Index p = 0; p < T2.size(); ++p) {
    auto m = T2.grid_multi_index(p);
    m[0] += 4;
    shifted[T2.grid_index(m)] = mu0.weights[p];
  }
  const auto ref = make_measure(T2, shifted);
  CHECK(wasserstein2(T2, push.measures.back(), ref).w2() <= T2.grid_spacing());
  CHECK(wasserstein2(T2, up.measures.back(), ref).w2() <= 3 * T2.grid_spacing());
  for (std::size_t k = 0; k < tg.size(); ++k) {
    CHECK(std::abs(push.measures[k].weights.sum() - 1.0) < 1e-12);
    CHECK(std::abs(up.measures[k].weights.sum() - 1.0) < 1e-12);
    CHECK(up.measures[k].weights.minCoeff() >= 0.0);
  }
  for (std::size_t k = 0; k < tg.size(); k += 5)
    CHECK(wasserstein2(T2, push.measures[k], up.measures[k]).w2() <= 3 * T2.grid_spacing());
}

TEST_CASE("zero field leaves measures unchanged for both methods") {
  const auto T2 = build_torus_grid(2, 12);
  const auto b = builtin_field("zero", {}, T2);
  const auto tg = uniform_time_grid(0.5, 5);
  const auto F = integrate_flow(T2, *b, tg, 0.005);
  const auto mu0 = gaussian_bump(T2, 30, 0.1, 0.3);
  for (auto m : {CeMethod::Pushforward, CeMethod::Upwind}) {
    const auto tr = continuity_equation_solve(T2, *b, mu0, tg, m, &F);
    for (const auto& mu : tr.measures) CHECK((mu.weights - mu0.weights).cwiseAbs().maxCoeff() < 1e-15);
  }
  const auto d = verify_w2_derivative(T2, pushforward(F, mu0), *b, atoms_of(gaussian_bump(T2, 80, 0.1, 0.3)));
  CHECK(d.pass);
  CHECK(d.max_discrepancy < 1e-12);
}

TEST_CASE("W2 derivative of a translation against its own start") {
  const auto T2 = build_torus_grid(2, 16);
  const auto b = builtin_field("constant", {{"v", {0.2, 0.1}}}, T2);
  const auto tg = uniform_time_grid(0.5, 50);
  const auto F = integrate_flow(T2, *b, tg, 0.005);
  const auto mu0 = gaussian_bump(T2, 40, 0.08, 0.2);
  const auto tr = pushforward(F, mu0);
  const auto rep = verify_w2_derivative(T2, tr, *b, atoms_of(mu0));
  CHECK(rep.pass);
  // d/dt W2^2/2 = t |v|^2 for the exact translation
  for (std::size_t k = 0; k < rep.times.size(); ++k)
    if (rep.times[k] > 0.05) CHECK(rep.lhs[k] == doctest::Approx(rep.times[k] * 0.05).epsilon(0.1));
  const auto joint = verify_joint_derivative(T2, tr, pushforward(F, gaussian_bump(T2, 200, 0.08, 0.2)), *b);
  CHECK(joint.pass);
  CHECK(std::abs(joint.max_discrepancy) < 1e-9);
}

TEST_CASE("contraction of the shear flow and isometry of rotation") {
  const auto T2 = build_torus_grid(2, 16);
  const auto sh = builtin_field("shear", {{"s", {0.5}}}, T2);
  const auto tg = uniform_time_grid(1.0, 20);
  const auto F = integrate_flow(T2, *sh, tg, 0.01);
  const auto mu = gaussian_bump(T2, T2.grid_index(std::vector<int>{4, 4}), 0.08, 0.25);
  const auto nu = gaussian_bump(T2, T2.grid_index(std::vector<int>{10, 9}), 0.06, 0.2);
  const auto cr = verify_contraction(F, mu, nu, 0.25, 1000, 3);
  CHECK(cr.bound_holds);
  CHECK(cr.pairs_hold);
  CHECK(cr.pairs == 1000);
  CHECK(cr.tol == doctest::Approx(5 * T2.grid_spacing() / cr.w2.front()));

  const auto S = build_sphere_mesh(300);
  const auto rot = builtin_field("rotation", {}, S);
  const auto Fr = integrate_flow(S, *rot, tg, 0.01);
  const auto cr2 = verify_contraction(Fr, gaussian_bump(S, 0, 0.3, 0.8), gaussian_bump(S, 150, 0.3, 0.8), 0.0, 500, 4);
  CHECK(cr2.min_ratio >= 1 - cr2.tol);
  CHECK(cr2.max_ratio <= 1 + cr2.tol);
  CHECK(cr2.pair_max_ratio <= 1 + 1e-6);
}

TEST_CASE("geodesic differentiation for a single shear geodesic") {
  const auto T2 = build_torus_grid(2, 32);
  const auto sh = builtin_field("shear", {{"s", {0.5}}}, T2);
  std::vector<double> sg;
  for (int i = 0; i <= 20; ++i) sg.push_back(i / 20.0);
  const auto e0 = single_atom({0.1, 0.2}), e1 = single_atom({0.3, 0.45});
  const auto g = verify_geodesic_differentiation(T2, *sh, 0.0, e0, e1, sg);
  CHECK(g.pass);
  // RHS closed form: v = (0.2, 0.25), sym J = [[0, c/2], [c/2, 0]] with c = s cos(2 pi y_s)
  for (std::size_t k = 0; k < g.s.size(); ++k) {
    const double y = 0.2 + 0.25 * g.s[k];
    CHECK(g.rhs[k] == doctest::Approx(0.5 * std::cos(2 * std::numbers::pi * y) * 0.2 * 0.25).epsilon(1e-9).scale(1e-3));
  }
  const auto c = builtin_field("constant", {{"v", {0.3, 0.1}}}, T2);
  const auto gc = verify_geodesic_differentiation(T2, *c, 0.0, e0, e1, sg);
  CHECK(std::abs(gc.max_relative) < 1e-9);
}
