#include "mmslab/space.hpp"

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

}  // namespace

TEST_CASE("torus distances are wrapped Euclidean") {
  const auto T2 = build_torus_grid(2, 8);
  CHECK(T2.size() == 64);
  CHECK(T2.grid_spacing() == doctest::Approx(0.125));
  CHECK(T2.diameter() == doctest::Approx(std::sqrt(0.5)));
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<Index> pick(0, T2.size() - 1);
  for (int k = 0; k < 200; ++k) {
    const Index i = pick(rng), j = pick(rng);
    const auto a = T2.coords(i), b = T2.coords(j);
    const double dx = circle_dist(a[0], b[0]), dy = circle_dist(a[1], b[1]);
    CHECK(T2.distance(i, j) == doctest::Approx(std::hypot(dx, dy)).epsilon(1e-14));
    CHECK(T2.distance(i, j) == doctest::Approx(T2.distance(j, i)));
  }
}

TEST_CASE("mixed radix indexing puts the first axis slowest") {
  const auto T = build_torus_grid(std::vector<int>{4, 6});
  CHECK(T.grid_shape() == std::vector<int>{4, 6});
  const std::vector<int> m{1, 5};
  const Index i = T.grid_index(m);
  CHECK(i == 1 * 6 + 5);
  CHECK(T.grid_multi_index(i) == m);
  const std::vector<int> wrapped{-3, 11};
  CHECK(T.grid_index(wrapped) == i);
}

TEST_CASE("sphere lattice uses great-circle distance") {
  const auto S = build_sphere_mesh(200);
  CHECK(S.size() == 200);
  for (Index i = 0; i < 200; i += 17) {
    const auto a = S.coords(i);
    CHECK(std::hypot(a[0], a[1], a[2]) == doctest::Approx(1.0));
    for (Index j = 0; j < 200; j += 23) {
      const auto b = S.coords(j);
      const double c = std::clamp(a[0] * b[0] + a[1] * b[1] + a[2] * b[2], -1.0, 1.0);
      CHECK(S.distance(i, j) == doctest::Approx(std::acos(c)).epsilon(1e-12));
    }
  }
  CHECK(S.diameter() <= std::numbers::pi + 1e-12);
  CHECK_THROWS_AS(build_sphere_mesh(5), std::invalid_argument);
}

TEST_CASE("product with a circle indexes (x, s) as x * resolution + s") {
  auto base = std::make_shared<const MetricMeasureSpace>(build_torus_grid(2, 4));
  const auto P = build_product_with_circle(base, 6);
  CHECK(P.size() == 96);
  CHECK(P.circle_resolution() == 6);
  CHECK(P.nominal_dimension() == 3);
  const Index x = 5, s = 4;
  const auto c = P.coords(x * 6 + s);
  CHECK(c[0] == doctest::Approx(base->coords(x)[0]));
  CHECK(c[1] == doctest::Approx(base->coords(x)[1]));
  CHECK(c[2] == doctest::Approx(4.0 / 6.0));
  // d^2 splits into base and circle parts
  const Index p = 3 * 6 + 1, q = 9 * 6 + 5;
  const double dc = circle_dist(P.coords(p)[2], P.coords(q)[2]);
  CHECK(P.distance(p, q) == doctest::Approx(std::hypot(base->distance(3, 9), dc)));
}

TEST_CASE("graph distances are shortest paths") {
  Eigen::VectorXd w = Eigen::VectorXd::Ones(4);
  const auto g = build_graph(4, {{0, 1, 1.0}, {1, 2, 1.0}, {2, 3, 1.0}, {0, 3, 5.0}}, w, 1);
  CHECK(g.distance(0, 3) == doctest::Approx(3.0));
  CHECK(g.distance(1, 3) == doctest::Approx(2.0));
  CHECK(g.weights().sum() == doctest::Approx(1.0));
  CHECK(g.is_graph());
}

TEST_CASE("balls are open and agree with brute force") {
  const auto T2 = build_torus_grid(2, 10);
  for (double r : {0.05, 0.1, 0.1000001, 0.23, 0.5}) {
    const auto B = ball(T2, 7, r);
    Index count = 0;
    for (Index y = 0; y < T2.size(); ++y) count += T2.distance(7, y) < r;
    CHECK(static_cast<Index>(B.size()) == count);
    CHECK(ball_mass(T2, 7, r) == doctest::Approx(double(count) / T2.size()));
  }
  CHECK(ball(T2, 0, 0.099).size() == 1);
  CHECK(ball(T2, 0, 0.1000001).size() == 5);
}

TEST_CASE("BallIndex visits in nondecreasing distance order") {
  for (const auto& space : {build_torus_grid(2, 6), build_sphere_mesh(60)}) {
    const BallIndex idx(space);
    for (Index x : {Index(0), Index(13), Index(35)}) {
      double last = -1.0;
      Index seen = 0;
      idx.visit_sorted(x, [&](Index y, double d) {
        CHECK(d >= last);
        CHECK(d == doctest::Approx(space.distance(x, y)));
        last = d;
        ++seen;
        return true;
      });
      CHECK(seen == space.size());
    }
  }
}

TEST_CASE("maximal function matches an enumeration of all arcs on T1") {
  const auto T1 = build_torus_grid(1, 12);
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0, 1);
  Eigen::VectorXd f(12);
  for (auto& v : f) v = u(rng);
  const Eigen::VectorXd M = maximal_function(T1, f);
  // Balls on T1 centred at x are the symmetric arcs {x-k..x+k} and the whole circle.
  for (Index x = 0; x < 12; ++x) {
    double best = 0.0;
    for (int k = 0; k <= 6; ++k) {
      double s = 0.0;
      int n = 0;
      for (int j = -k; j <= k; ++j) {
        if (k == 6 && j == k) break;  // the antipode is reached once
        s += f[(x + j + 12) % 12];
        ++n;
      }
      best = std::max(best, s / n);
    }
    CHECK(M[x] == doctest::Approx(best).epsilon(1e-13));
  }
}

TEST_CASE("maximal function is sublinear, dominates f and fixes constants") {
  const auto T2 = build_torus_grid(2, 8);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 5; ++trial) {
    Eigen::VectorXd f(T2.size()), g(T2.size());
    for (Index p = 0; p < T2.size(); ++p) {
      f[p] = u(rng);
      g[p] = u(rng);
    }
    const Eigen::VectorXd Mf = maximal_function(T2, f), Mg = maximal_function(T2, g);
    const Eigen::VectorXd Mfg = maximal_function(T2, f + g);
    CHECK((Mf - f).minCoeff() >= -1e-14);
    CHECK((Mfg - Mf - Mg).maxCoeff() <= 1e-12);
  }
  const Eigen::VectorXd c = Eigen::VectorXd::Constant(T2.size(), 2.5);
  CHECK((maximal_function(T2, c).array() - 2.5).abs().maxCoeff() < 1e-14);
}

TEST_CASE("Ahlfors check recovers the dimension of flat tori") {
  const auto T2 = build_torus_grid(2, 32);
  const auto radii = default_ahlfors_radii(T2, 6);
  for (double r : radii) {
    CHECK(r >= 2 * T2.grid_spacing() - 1e-12);
    CHECK(r <= T2.diameter() / 2 + 1e-12);
  }
  const auto good = check_ahlfors(T2, 2.0, radii, {0, 100, 517});
  CHECK_FALSE(good.ratio_flagged);
  CHECK(good.c2 / good.c1 < 3.0);
  const auto bad = check_ahlfors(T2, 6.0, radii, {0, 100, 517});
  CHECK(bad.c2 / bad.c1 > good.c2 / good.c1);
  CHECK(good.c_doubling >= 1.0);
}

TEST_CASE("distance power integral is a weighted sum over the other points") {
  const auto T2 = build_torus_grid(2, 6);
  double s = 0.0;
  for (Index y = 1; y < T2.size(); ++y) s += std::pow(T2.distance(0, y), -1.5) * T2.weight(y);
  const auto r = distance_power_integral(T2, 0, 1.5);
  CHECK(r.value == doctest::Approx(s));
  CHECK_FALSE(r.divergent_in_limit);
  CHECK(distance_power_integral(T2, 0, 2.0).divergent_in_limit);
}

TEST_CASE("canonicalize, log map and geodesics on the torus") {
  const auto T2 = build_torus_grid(2, 8);
  std::vector<double> x{1.25, -0.3};
  T2.canonicalize(x);
  CHECK(x[0] == doctest::Approx(0.25));
  CHECK(x[1] == doctest::Approx(0.7));
  const std::vector<double> a{0.9, 0.1}, b{0.1, 0.95};
  std::vector<double> v(2), mid(2);
  T2.log_map(a, b, v);
  CHECK(v[0] == doctest::Approx(0.2));
  CHECK(v[1] == doctest::Approx(-0.15));
  CHECK(std::hypot(v[0], v[1]) == doctest::Approx(T2.chart_distance(a, b)));
  T2.geodesic_point(a, b, 0.5, mid);
  CHECK(T2.chart_distance(a, mid) == doctest::Approx(0.5 * T2.chart_distance(a, b)));
  CHECK(T2.nearest_point(std::vector<double>{0.99, 0.01}) == 0);
}

TEST_CASE("sphere geodesics stay on the sphere and have constant speed") {
  const auto S = build_sphere_mesh(50);
  const std::vector<double> a{1, 0, 0}, b{0, 0.6, 0.8};
  const double D = S.chart_distance(a, b);
  CHECK(D == doctest::Approx(std::numbers::pi / 2));
  std::vector<double> p(3), v(3);
  for (double s : {0.0, 0.3, 0.7, 1.0}) {
    S.geodesic_point(a, b, s, p);
    CHECK(std::hypot(p[0], p[1], p[2]) == doctest::Approx(1.0));
    CHECK(S.chart_distance(a, p) == doctest::Approx(s * D));
    S.geodesic_velocity(a, b, s, v);
    CHECK(std::hypot(v[0], v[1], v[2]) == doctest::Approx(D));
    CHECK(v[0] * p[0] + v[1] * p[1] + v[2] * p[2] == doctest::Approx(0.0).epsilon(1e-12));
  }
}
