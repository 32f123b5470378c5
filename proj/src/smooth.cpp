#include "mmslab/smooth.hpp"

#include <cmath>
#include <numbers>

namespace mms {
namespace {
constexpr double kTwoPi = 2.0 * std::numbers::pi;
}

Eigen::VectorXd SmoothFunction::sample(const MetricMeasureSpace& space) const {
  Eigen::VectorXd v(space.size());
  for (Index i = 0; i < space.size(); ++i) v[i] = value(space.coords(i));
  return v;
}

TrigPolynomial::TrigPolynomial(int ambient_dim, std::vector<Term> terms)
    : dim_(ambient_dim), terms_(std::move(terms)) {
  for (const auto& t : terms_)
    if (static_cast<int>(t.k.size()) != dim_) throw std::invalid_argument("frequency rank mismatch");
}

TrigPolynomial TrigPolynomial::random(int ambient_dim, const std::vector<int>& active, int max_freq,
                                      double tau, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<Term> terms;
  const int m = static_cast<int>(active.size());
  std::vector<int> k(m, -max_freq);
  while (true) {
    Term t;
    t.k.assign(ambient_dim, 0);
    double k2 = 0.0;
    for (int a = 0; a < m; ++a) {
      t.k[active[a]] = k[a];
      k2 += k[a] * k[a];
    }
    const double damp = std::exp(-kTwoPi * kTwoPi * k2 * tau);
    t.a = g(rng) * damp;
    t.b = g(rng) * damp;
    terms.push_back(std::move(t));
    int a = m - 1;
    while (a >= 0 && k[a] == max_freq) k[a--] = -max_freq;
    if (a < 0) break;
    ++k[a];
  }
  return TrigPolynomial(ambient_dim, std::move(terms));
}

double TrigPolynomial::value(std::span<const double> x) const {
  double s = 0.0;
  for (const auto& t : terms_) {
    double ph = 0.0;
    for (int a = 0; a < dim_; ++a) ph += t.k[a] * x[a];
    ph *= kTwoPi;
    s += t.a * std::cos(ph) + t.b * std::sin(ph);
  }
  return s;
}

void TrigPolynomial::gradient(std::span<const double> x, std::span<double> g) const {
  std::fill(g.begin(), g.end(), 0.0);
  for (const auto& t : terms_) {
    double ph = 0.0;
    for (int a = 0; a < dim_; ++a) ph += t.k[a] * x[a];
    ph *= kTwoPi;
    const double d = -t.a * std::sin(ph) + t.b * std::cos(ph);
    for (int a = 0; a < dim_; ++a) g[a] += kTwoPi * t.k[a] * d;
  }
}

void TrigPolynomial::hessian(std::span<const double> x, std::span<double> h) const {
  std::fill(h.begin(), h.end(), 0.0);
  for (const auto& t : terms_) {
    double ph = 0.0;
    for (int a = 0; a < dim_; ++a) ph += t.k[a] * x[a];
    ph *= kTwoPi;
    const double d2 = -(t.a * std::cos(ph) + t.b * std::sin(ph));
    for (int a = 0; a < dim_; ++a)
      for (int c = 0; c < dim_; ++c) h[a * dim_ + c] += kTwoPi * kTwoPi * t.k[a] * t.k[c] * d2;
  }
}

TrigPolynomial TrigPolynomial::heat_flow(double tau) const {
  auto terms = terms_;
  for (auto& t : terms) {
    double k2 = 0.0;
    for (int v : t.k) k2 += v * v;
    const double damp = std::exp(-kTwoPi * kTwoPi * k2 * tau);
    t.a *= damp;
    t.b *= damp;
  }
  return TrigPolynomial(dim_, std::move(terms));
}

double TrigPolynomial::laplacian(std::span<const double> x) const {
  double s = 0.0;
  for (const auto& t : terms_) {
    double ph = 0.0, k2 = 0.0;
    for (int a = 0; a < dim_; ++a) {
      ph += t.k[a] * x[a];
      k2 += t.k[a] * t.k[a];
    }
    ph *= kTwoPi;
    s -= kTwoPi * kTwoPi * k2 * (t.a * std::cos(ph) + t.b * std::sin(ph));
  }
  return s;
}

SphereQuadratic::SphereQuadratic(int ambient_dim, int offset, double c, Eigen::Vector3d g,
                                 Eigen::Matrix3d H)
    : dim_(ambient_dim), off_(offset), c_(c), g_(g), H_(0.5 * (H + H.transpose())) {}

SphereQuadratic SphereQuadratic::random(int ambient_dim, int offset, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::Vector3d g(n(rng), n(rng), n(rng));
  Eigen::Matrix3d H;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) H(i, j) = 0.5 * n(rng);
  return SphereQuadratic(ambient_dim, offset, n(rng), g, H);
}

double SphereQuadratic::value(std::span<const double> x) const {
  const Eigen::Vector3d y(x[off_], x[off_ + 1], x[off_ + 2]);
  return c_ + g_.dot(y) + y.dot(H_ * y);
}

void SphereQuadratic::gradient(std::span<const double> x, std::span<double> g) const {
  std::fill(g.begin(), g.end(), 0.0);
  const Eigen::Vector3d y(x[off_], x[off_ + 1], x[off_ + 2]);
  const Eigen::Vector3d d = g_ + 2.0 * H_ * y;
  for (int a = 0; a < 3; ++a) g[off_ + a] = d[a];
}

void SphereQuadratic::hessian(std::span<const double>, std::span<double> h) const {
  std::fill(h.begin(), h.end(), 0.0);
  for (int a = 0; a < 3; ++a)
    for (int c = 0; c < 3; ++c) h[(off_ + a) * dim_ + off_ + c] = 2.0 * H_(a, c);
}

ProductFunction::ProductFunction(std::shared_ptr<const SmoothFunction> f,
                                 std::shared_ptr<const SmoothFunction> g)
    : f_(std::move(f)), g_(std::move(g)) {
  if (f_->ambient_dim() != g_->ambient_dim()) throw std::invalid_argument("ambient rank mismatch");
}

double ProductFunction::value(std::span<const double> x) const { return f_->value(x) * g_->value(x); }

void ProductFunction::gradient(std::span<const double> x, std::span<double> out) const {
  const int d = ambient_dim();
  std::vector<double> gf(d), gg(d);
  f_->gradient(x, gf);
  g_->gradient(x, gg);
  const double fv = f_->value(x), gv = g_->value(x);
  for (int a = 0; a < d; ++a) out[a] = fv * gg[a] + gv * gf[a];
}

void ProductFunction::hessian(std::span<const double> x, std::span<double> out) const {
  const int d = ambient_dim();
  std::vector<double> gf(d), gg(d), hf(d * d), hg(d * d);
  f_->gradient(x, gf);
  g_->gradient(x, gg);
  f_->hessian(x, hf);
  g_->hessian(x, hg);
  const double fv = f_->value(x), gv = g_->value(x);
  for (int a = 0; a < d; ++a)
    for (int c = 0; c < d; ++c)
      out[a * d + c] = fv * hg[a * d + c] + gv * hf[a * d + c] + gf[a] * gg[c] + gg[a] * gf[c];
}

std::vector<std::shared_ptr<const SmoothFunction>> default_test_functions(
    const MetricMeasureSpace& space, int count, std::uint64_t seed) {
  if (space.is_graph()) throw std::invalid_argument("test functions need a chart");
  std::mt19937_64 rng(seed);
  std::vector<int> periodic;
  int sphere_off = -1;
  for (std::size_t f = 0; f < space.factors().size(); ++f) {
    if (std::holds_alternative<PeriodicAxis>(space.factors()[f]))
      periodic.push_back(space.factor_offsets()[f]);
    else if (sphere_off < 0)
      sphere_off = space.factor_offsets()[f];
  }
  const int dim = space.ambient_dim();
  const int max_freq = periodic.size() >= 3 ? 1 : 2;
  std::vector<std::shared_ptr<const SmoothFunction>> out;
  for (int i = 0; i < count; ++i) {
    std::shared_ptr<const SmoothFunction> f;
    if (!periodic.empty())
      f = std::make_shared<TrigPolynomial>(TrigPolynomial::random(dim, periodic, max_freq, 0.005, rng));
    if (sphere_off >= 0) {
      auto q = std::make_shared<SphereQuadratic>(SphereQuadratic::random(dim, sphere_off, rng));
      f = f ? std::shared_ptr<const SmoothFunction>(std::make_shared<ProductFunction>(f, q)) : q;
    }
    out.push_back(f);
  }
  return out;
}

}  // namespace mms
