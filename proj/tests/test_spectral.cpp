#include "mmslab/spectral.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace mms;

namespace {

constexpr double kPi = std::numbers::pi;

// sum_k exp(-4 pi^2 k^2 t) over |k| < N/2 plus the Nyquist term, evaluated directly.
double theta_band(int N, double t, double x) {
  double s = 1.0;
  for (int k = 1; k < N / 2; ++k) s += 2.0 * std::exp(-4 * kPi * kPi * k * k * t) * std::cos(2 * kPi * k * x);
  if (N % 2 == 0) s += std::exp(-kPi * kPi * N * N * t) * std::cos(kPi * N * x);
  return s;
}

SpectralBasis exact_basis(const MetricMeasureSpace& s) {
  return eigendecompose(assemble_laplacian(s, LaplacianScheme::TorusFourierExact), s.size());
}

}  // namespace

TEST_CASE("T1 exact heat kernel on the diagonal") {
  const auto T1 = build_torus_grid(1, 32);
  const auto B = exact_basis(T1);
  // Frozen from a 30-digit evaluation of the full theta series at t = 0.01.
  CHECK(std::abs(heat_kernel(B, 0.01, 0, 0) - 2.8209479178171357) < 1e-12);
  for (double t : {0.001, 0.01, 0.1})
    for (Index y : {0, 3, 16, 27})
      CHECK(heat_kernel(B, t, 0, y) == doctest::Approx(theta_band(32, t, T1.coords(y)[0])).epsilon(1e-12));
  CHECK(torus_heat_kernel_closed_form(T1, 0.01, 0, 5) == doctest::Approx(theta_band(32, 0.01, 5.0 / 32)));
}

TEST_CASE("exact torus eigenvalues are 4 pi^2 |k|^2 with the right multiplicities") {
  const auto T2 = build_torus_grid(2, 8);
  const auto B = exact_basis(T2);
  std::vector<double> expect;
  for (int a = -3; a <= 4; ++a)
    for (int b = -3; b <= 4; ++b) expect.push_back(4 * kPi * kPi * (a * a + b * b));
  std::sort(expect.begin(), expect.end());
  REQUIRE(B.k_max() == 64);
  for (Index i = 0; i < 64; ++i) CHECK(B.eigenvalues[i] == doctest::Approx(expect[i]).epsilon(1e-12));
  CHECK(B.eigenvalues[0] == 0.0);
  CHECK(B.analytic());
}

TEST_CASE("eigenfunctions are orthonormal in L2(m) and solve the eigenproblem") {
  const auto S = build_sphere_mesh(150);
  const auto T2 = build_torus_grid(2, 8);
  for (const auto* sp : {&S, &T2}) {
    const auto scheme = sp->is_periodic_grid() ? LaplacianScheme::TorusFourierExact : LaplacianScheme::GraphGaussian;
    const auto L = assemble_laplacian(*sp, scheme, sp->is_periodic_grid() ? 0.0 : 0.35);
    const auto B = eigendecompose(L, 30);
    const Eigen::MatrixXd& U = B.eigenfunctions;
    const Eigen::MatrixXd gram = U.transpose() * sp->weights().asDiagonal() * U;
    CHECK((gram - Eigen::MatrixXd::Identity(30, 30)).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(std::abs(B.eigenvalues[0]) < 1e-10);
    CHECK((U.col(0).array() - 1.0).abs().maxCoeff() < 1e-10);
    for (Index i = 0; i < 30; ++i) {
      const Eigen::VectorXd u = U.col(i);
      CHECK((L.apply(u) - B.eigenvalues[i] * u).cwiseAbs().maxCoeff() < 1e-8 * (1 + B.eigenvalues[i]));
      if (i > 0) CHECK(B.eigenvalues[i] >= B.eigenvalues[i - 1] - 1e-12);
    }
  }
}

TEST_CASE("Gaussian sphere Laplacian is calibrated on the first harmonics") {
  const auto S = build_sphere_mesh(400);
  const auto L = assemble_laplacian(S, LaplacianScheme::GraphGaussian, 0.3);
  const auto B = eigendecompose(L, 9);
  // l = 1 has eigenvalue 2 with multiplicity 3 on the unit sphere.
  for (Index i = 1; i <= 3; ++i) CHECK(B.eigenvalues[i] == doctest::Approx(2.0).epsilon(0.05));
  CHECK(B.eigenvalues[4] > 4.0);
}

TEST_CASE("heat kernel properties hold for random points and times") {
  const auto S = build_sphere_mesh(120);
  const auto B = eigendecompose(assemble_laplacian(S, LaplacianScheme::GraphGaussian, 0.4), S.size());
  std::mt19937_64 rng(21);
  std::uniform_int_distribution<Index> pick(0, S.size() - 1);
  std::uniform_real_distribution<double> tt(0.01, 0.5);
  for (int k = 0; k < 20; ++k) {
    const Index x = pick(rng), y = pick(rng);
    const double s = tt(rng), t = tt(rng);
    CHECK(heat_kernel(B, t, x, y) == doctest::Approx(heat_kernel(B, t, y, x)).epsilon(1e-12));
    const Eigen::VectorXd px = heat_kernel_column(B, s, x), py = heat_kernel_column(B, t, y);
    const double ck = (px.array() * py.array() * S.weights().array()).sum();
    CHECK(std::abs(ck - heat_kernel(B, s + t, x, y)) < 1e-9);
    CHECK(std::abs(px.dot(S.weights()) - 1.0) < 1e-10);
  }
  const auto [a, b] = heat_trace(B, 0.05);
  CHECK(std::abs(a - b) < 1e-9);
}

TEST_CASE("semigroup preserves the mean and is contractive in L2") {
  const auto T2 = build_torus_grid(2, 12);
  const auto B = exact_basis(T2);
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g;
  Eigen::VectorXd f(T2.size());
  for (auto& v : f) v = g(rng);
  const auto w = T2.weights();
  double last = std::sqrt((f.array().square() * w.array()).sum());
  for (double t : {0.001, 0.01, 0.1}) {
    const Eigen::VectorXd Pf = heat_semigroup_apply(B, t, f);
    CHECK(Pf.dot(w) == doctest::Approx(f.dot(w)).epsilon(1e-12));
    const double n2 = std::sqrt((Pf.array().square() * w.array()).sum());
    CHECK(n2 <= last + 1e-12);
    last = n2;
  }
  const Eigen::VectorXd a = heat_semigroup_apply(B, 0.03, heat_semigroup_apply(B, 0.02, f));
  CHECK((a - heat_semigroup_apply(B, 0.05, f)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("flat on-diagonal asymptotic on T2") {
  const auto T2 = build_torus_grid(2, 64);
  for (double t : {0.002, 0.005, 0.01}) {
    const double p = torus_heat_kernel_closed_form(T2, t, 0, 0);
    CHECK(p * 4 * kPi * t == doctest::Approx(1.0).epsilon(0.01));
  }
}

TEST_CASE("Gaussian bound constants on flat tori") {
  const auto T2 = build_torus_grid(2, 24);
  const auto B = exact_basis(T2);
  std::mt19937_64 rng(8);
  std::uniform_int_distribution<Index> pick(0, T2.size() - 1);
  std::vector<std::pair<Index, Index>> pairs;
  for (int k = 0; k < 100; ++k) pairs.emplace_back(pick(rng), pick(rng));
  const auto rep = verify_gaussian_bounds(B, T2, 2.0, {0.005, 0.01, 0.02, 0.05, 0.1}, pairs);
  CHECK(rep.C1 <= 10.0);
  CHECK(rep.C1 >= 1.0);
  CHECK(rep.max_rel_dev_closed_form < 1e-7);
  CHECK(rep.mass_residual < 1e-10);
  CHECK(rep.min_kernel > 0.0);

  const auto T1 = build_torus_grid(1, 64);
  const auto r1 = verify_gaussian_bounds(exact_basis(T1), T1, 1.0, {0.005, 0.01, 0.05}, {{0, 0}, {5, 5}});
  CHECK(r1.C1_low <= 4.0);
}

TEST_CASE("Bakry-Emery holds with K = 0 on the flat torus") {
  const auto T2 = build_torus_grid(2, 16);
  const auto B = exact_basis(T2);
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g;
  std::vector<Eigen::VectorXd> fs;
  for (int k = 0; k < 3; ++k) {
    Eigen::VectorXd f(T2.size());
    for (auto& v : f) v = g(rng);
    fs.push_back(heat_semigroup_apply(B, 0.002, f));
  }
  const auto rep = verify_bakry_emery(B, 0.0, fs, {0.001, 0.01, 0.05});
  CHECK(rep.worst_relative <= 1e-9);
}

TEST_CASE("eigenfunction gradient bound needs the factor e") {
  const auto T1 = build_torus_grid(1, 16);
  const auto B = exact_basis(T1);
  const auto rep = eigenfunction_bounds(B, 1.0, 0.0, 1.0, 1.0, 1.0);
  // cos modes: |u'| = 2 pi k sqrt 2, sqrt(lambda / 2) ||u|| = 2 pi k: ratio sqrt 2.
  CHECK(rep.max_grad_ratio == doctest::Approx(std::sqrt(2.0)).epsilon(1e-6));
  CHECK(rep.max_grad_ratio_with_e == doctest::Approx(std::sqrt(2.0) / std::exp(1.0)).epsilon(1e-6));
}

TEST_CASE("scheme names round-trip and bad inputs throw") {
  for (auto s : {LaplacianScheme::GraphGaussian, LaplacianScheme::TorusFourierExact, LaplacianScheme::ProductKron})
    CHECK(scheme_from_string(to_string(s)) == s);
  CHECK_THROWS_AS(scheme_from_string("spectral"), std::invalid_argument);
  const auto T2 = build_torus_grid(2, 8);
  CHECK_THROWS_AS(assemble_laplacian(T2, LaplacianScheme::GraphGaussian, 0.01), std::invalid_argument);
}
