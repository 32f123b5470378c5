#include "mmslab/green.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace mms;

namespace {

SpectralBasis exact_basis(const MetricMeasureSpace& s) {
  return eigendecompose(assemble_laplacian(s, LaplacianScheme::TorusFourierExact), s.size());
}

// Mean-zero solve of (-Delta) g = delta_y / w_y - 1 by a bordered system, no eigenvectors.
Eigen::MatrixXd bordered_green(const Eigen::MatrixXd& K, const Eigen::VectorXd& w) {
  const Index n = K.rows();
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n + 1, n + 1);
  A.topLeftCorner(n, n) = K;
  A.block(0, n, n, 1).setOnes();
  A.block(n, 0, 1, n) = w.transpose();
  Eigen::MatrixXd G(n, n);
  for (Index y = 0; y < n; ++y) {
    Eigen::VectorXd r = Eigen::VectorXd::Constant(n + 1, -1.0);
    r[y] += 1.0 / w[y];
    r[n] = 0.0;
    G.col(y) = A.fullPivLu().solve(r).head(n);
  }
  return G;
}

}  // namespace

TEST_CASE("3-point graph Green function equals the mean-zero inverse") {
  Eigen::VectorXd w(3);
  w << 0.2, 0.3, 0.5;
  const auto g = build_graph(3, {{0, 1, 1.0}, {1, 2, 1.5}, {0, 2, 2.0}}, w, 1);
  const auto L = assemble_laplacian(g, LaplacianScheme::GraphGaussian, 1.5);
  const auto B = eigendecompose(L, 3);
  const GreenFunction G(B, 0.0);

  // Frozen from a 30-digit bordered solve with the same edge weights exp(-d^2 / 1.5^2).
  const double frozen[3][3] = {{12.535992766647791, -0.7449721578674991, -4.567413811938617},
                               {-0.7449721578674991, 5.425794050766308, -2.957487567312785},
                               {-4.567413811938617, -2.957487567312785, 3.601458065163118}};
  Eigen::MatrixXd K(3, 3);
  const double d[3][3] = {{0, 1, 2}, {1, 0, 1.5}, {2, 1.5, 0}};
  for (int x = 0; x < 3; ++x) {
    K(x, x) = 0.0;
    for (int j = 0; j < 3; ++j)
      if (j != x) {
        const double k = std::exp(-d[x][j] * d[x][j] / 2.25);
        K(x, j) = -k * w[j];
        K(x, x) += k * w[j];
      }
  }
  CHECK((K - L.dense()).cwiseAbs().maxCoeff() < 1e-14);
  const Eigen::MatrixXd Gb = bordered_green(K, w);
  for (int x = 0; x < 3; ++x)
    for (int y = 0; y < 3; ++y) {
      CHECK(std::abs(G(x, y) - frozen[x][y]) < 1e-10);
      CHECK(std::abs(G(x, y) - Gb(x, y)) < 1e-10);
      CHECK(std::abs(green(B, 0.0, x, y) - Gb(x, y)) < 1e-10);
    }
}

TEST_CASE("T1 Green function matches the band-limited Fourier sum") {
  const auto T1 = build_torus_grid(1, 32);
  const auto B = exact_basis(T1);
  const GreenFunction G(B, 0.0);
  CHECK(G.translation_invariant());
  // Frozen: sum_{k=1}^{15} 2 cos(2 pi k j/32) / (4 pi^2 k^2) + (-1)^j / (4 pi^2 16^2).
  CHECK(std::abs(G(0, 0) - 0.08016498656573967) < 1e-13);
  CHECK(std::abs(G(0, 1) - 0.06856840680853755) < 1e-13);
  CHECK(std::abs(G(0, 8) + 0.010428850072599584) < 1e-13);
  CHECK(std::abs(G(3, 19) + 0.041672826941123206) < 1e-13);
  CHECK(std::abs(G.column(0).dot(T1.weights())) < 1e-14);
}

TEST_CASE("Green identities on T3") {
  const auto T3 = build_torus_grid(3, 8);
  const auto L = assemble_laplacian(T3, LaplacianScheme::TorusFourierExact);
  const auto B = eigendecompose(L, T3.size());
  const GreenFunction G(B, 0.0);
  std::mt19937_64 rng(9);
  std::normal_distribution<double> nrm;
  for (int k = 0; k < 10; ++k) {
    Eigen::VectorXd f(T3.size());
    for (auto& v : f) v = nrm(rng);
    CHECK(verify_green_action(G, L, f) < 1e-9);
  }
  for (Index x : {0, 77, 300}) {
    CHECK(verify_green_laplacian(B, L, 0.01, x) < 1e-9);
    CHECK(verify_green_semigroup(B, 0.02, x) < 1e-10);
  }
  std::uniform_int_distribution<Index> pick(0, T3.size() - 1);
  for (int k = 0; k < 30; ++k) {
    const Index x = pick(rng), y = pick(rng);
    CHECK(G(x, y) == doctest::Approx(G(y, x)).epsilon(1e-13));
    CHECK(G(x, y) == doctest::Approx(green(B, 0.0, x, y)).epsilon(1e-10));
  }
}

TEST_CASE("time-integral quadrature agrees with the spectral Green function") {
  const auto T2 = build_torus_grid(2, 10);
  const auto B = exact_basis(T2);
  for (Index y : {1, 23, 55}) CHECK(std::abs(green_time_integral(B, 0, y) - green(B, 0.0, 0, y)) < 1e-4);
}

TEST_CASE("comparability constants on T3") {
  double prev = 0.0;
  for (int res : {8, 12}) {
    const auto T3 = build_torus_grid(3, res);
    const auto B = exact_basis(T3);
    const GreenFunction G(B, 0.0);
    const auto sg = fit_comparability_constants(G, 3.0);
    CHECK(std::isfinite(sg.A));
    CHECK(sg.A_bar == doctest::Approx(1.1 * std::abs(sg.min_G)));
    CHECK(sg.alpha > 0.0);
    // every off-diagonal pair obeys the fitted two-sided bound
    for (Index y = 1; y < T3.size(); ++y) {
      const double d = T3.distance(0, y), gb = sg.shifted(G, 0, y);
      CHECK(std::abs(G(0, y)) <= sg.A / d * (1 + 1e-12));
      CHECK(gb <= sg.A / d * (1 + 1e-12));
      CHECK(gb >= 1.0 / (sg.A * d) * (1 - 1e-12));
    }
    if (prev > 0) CHECK(std::abs(sg.A - prev) / prev < 0.3);
    prev = sg.A;
    const auto [lo, hi] = green_distance_profile(G, 3.0, 1.5 * T3.grid_spacing());
    CHECK(lo >= 0.04);
    CHECK(hi <= 0.16);
    CHECK(std::isfinite(fit_green_slope_constant(G, 0, 3.0)));
  }
  const auto T2 = build_torus_grid(2, 8);
  CHECK_THROWS_AS(fit_comparability_constants(GreenFunction(exact_basis(T2), 0.0), 2.0), ConstructionError);
}

TEST_CASE("discrete slope of a linear-in-the-chart profile") {
  const auto T1 = build_torus_grid(1, 20);
  Eigen::VectorXd f(20);
  for (Index i = 0; i < 20; ++i) f[i] = std::sin(2 * std::numbers::pi * T1.coords(i)[0]);
  const Eigen::VectorXd s = discrete_slope(T1, f);
  CHECK(s.maxCoeff() <= 2 * std::numbers::pi + 1e-12);
  CHECK(s.maxCoeff() > 0.9 * 2 * std::numbers::pi);
}

TEST_CASE("regularized Green functions converge in W1p") {
  const auto T3 = build_torus_grid(3, 8);
  const auto B = exact_basis(T3);
  const auto rep = verify_w1p_convergence(B, 0, 1.2, {0.04, 0.02, 0.01, 0.005});
  CHECK(rep.monotone_within_10pct);
  CHECK(rep.norms.back() < rep.norms.front());
  CHECK_FALSE(rep.final_below_1e6);
}

TEST_CASE("closed-form periodic evaluator agrees with the table on lattice points") {
  const auto T2 = build_torus_grid(2, 12);
  const auto B = exact_basis(T2);
  for (double eps : {0.0, 0.01}) {
    const GreenFunction G(B, eps);
    const PeriodicGreenEvaluator E(B, eps);
    for (Index y : {1, 17, 70})
      CHECK(E(T2.coords(0), T2.coords(y)) == doctest::Approx(G(0, y)).epsilon(1e-12));
    // gradient against centred differences
    const std::vector<double> z{0.21, 0.37};
    std::vector<double> g(2);
    E.gradient(z, g);
    const double h = 1e-6;
    for (int a = 0; a < 2; ++a) {
      auto zp = z, zm = z;
      zp[a] += h;
      zm[a] -= h;
      CHECK(g[a] == doctest::Approx((E.value(zp) - E.value(zm)) / (2 * h)).epsilon(1e-6));
    }
  }
}
