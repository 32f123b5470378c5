#include "mmslab/fields.hpp"

#include "mmslab/lp.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace mms {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double wrap(double d) { return d - std::nearbyint(d); }

class ConstantField : public VectorField {
 public:
  explicit ConstantField(std::vector<double> v) : v_(std::move(v)) {}
  std::string name() const override { return "constant"; }
  int ambient_dim() const override { return static_cast<int>(v_.size()); }
  void value(std::span<const double>, double, std::span<double> out) const override {
    std::copy(v_.begin(), v_.end(), out.begin());
  }
  double divergence(std::span<const double>, double) const override { return 0.0; }
  void jacobian(std::span<const double>, double, std::span<double> J) const override {
    std::fill(J.begin(), J.end(), 0.0);
  }

 private:
  std::vector<double> v_;
};

class RotationField : public VectorField {
 public:
  RotationField(int dim, int off, Eigen::Vector3d axis, double speed)
      : dim_(dim), off_(off), w_(axis.normalized() * speed) {}
  std::string name() const override { return "rotation"; }
  int ambient_dim() const override { return dim_; }
  void value(std::span<const double> x, double, std::span<double> out) const override {
    std::fill(out.begin(), out.end(), 0.0);
    const Eigen::Vector3d y(x[off_], x[off_ + 1], x[off_ + 2]);
    const Eigen::Vector3d v = w_.cross(y);
    for (int a = 0; a < 3; ++a) out[off_ + a] = v[a];
  }
  double divergence(std::span<const double>, double) const override { return 0.0; }
  void jacobian(std::span<const double>, double, std::span<double> J) const override {
    std::fill(J.begin(), J.end(), 0.0);
    const int o = off_;
    J[(o + 0) * dim_ + o + 1] = -w_.z();
    J[(o + 0) * dim_ + o + 2] = w_.y();
    J[(o + 1) * dim_ + o + 0] = w_.z();
    J[(o + 1) * dim_ + o + 2] = -w_.x();
    J[(o + 2) * dim_ + o + 0] = -w_.y();
    J[(o + 2) * dim_ + o + 1] = w_.x();
  }

 private:
  int dim_, off_;
  Eigen::Vector3d w_;
};

class ShearField : public VectorField {
 public:
  ShearField(int dim, double s) : dim_(dim), s_(s) {
    if (dim < 2) throw std::invalid_argument("shear needs at least two periodic axes");
  }
  std::string name() const override { return "shear"; }
  int ambient_dim() const override { return dim_; }
  void value(std::span<const double> x, double, std::span<double> out) const override {
    std::fill(out.begin(), out.end(), 0.0);
    out[0] = s_ / kTwoPi * std::sin(kTwoPi * x[1]);
  }
  double divergence(std::span<const double>, double) const override { return 0.0; }
  void jacobian(std::span<const double> x, double, std::span<double> J) const override {
    std::fill(J.begin(), J.end(), 0.0);
    J[1] = s_ * std::cos(kTwoPi * x[1]);
  }

 private:
  int dim_;
  double s_;
};

class GradientHeatField : public VectorField {
 public:
  GradientHeatField(FourierSeries f) : f_(std::move(f)) {}
  std::string name() const override { return "gradient_heat"; }
  int ambient_dim() const override { return f_.ambient_dim(); }
  void value(std::span<const double> x, double, std::span<double> out) const override { f_.gradient(x, out); }
  double divergence(std::span<const double> x, double) const override { return f_.laplacian(x); }
  void jacobian(std::span<const double> x, double, std::span<double> J) const override { f_.hessian(x, J); }

 private:
  FourierSeries f_;
};

class CdlSingularField : public VectorField {
 public:
  CdlSingularField(std::vector<double> c, double alpha, double rho, double amp)
      : c_(std::move(c)), alpha_(alpha), rho_(rho), amp_(amp) {}
  std::string name() const override { return "cdl_singular"; }
  int ambient_dim() const override { return static_cast<int>(c_.size()); }

  void value(std::span<const double> x, double, std::span<double> out) const override {
    std::fill(out.begin(), out.end(), 0.0);
    double d[3] = {0, 0, 0};
    const double R = disp(x, d);
    if (R == 0.0) return;
    const double F = speed(R) / R;
    out[0] = -F * d[1];
    out[1] = F * d[0];
  }
  double divergence(std::span<const double>, double) const override { return 0.0; }
  void jacobian(std::span<const double> x, double, std::span<double> J) const override {
    const int n = ambient_dim();
    std::fill(J.begin(), J.end(), 0.0);
    double d[3] = {0, 0, 0};
    const double R = disp(x, d);
    if (R == 0.0) return;
    const double s = speed(R), ds = speed_derivative(R);
    const double F = s / R;
    const double dF = (ds * R - s) / (R * R);
    const double w[2] = {-d[1], d[0]};
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < n; ++j) J[i * n + j] = w[i] * dF * d[j] / R;
    J[0 * n + 1] += -F;
    J[1 * n + 0] += F;
  }

 private:
  double disp(std::span<const double> x, double* d) const {
    double s = 0.0;
    for (std::size_t a = 0; a < c_.size(); ++a) {
      d[a] = wrap(x[a] - c_[a]);
      s += d[a] * d[a];
    }
    return std::sqrt(s);
  }
  double cutoff(double R, double& dchi) const {
    dchi = 0.0;
    if (R <= rho_) return 1.0;
    if (R >= 2 * rho_) return 0.0;
    const double u = (R - rho_) / rho_;
    dchi = -(30 * u * u - 60 * u * u * u + 30 * u * u * u * u) / rho_;
    return 1.0 - (10 * u * u * u - 15 * u * u * u * u + 6 * u * u * u * u * u);
  }
  double speed(double R) const {
    double dchi;
    return amp_ * std::pow(std::min(R, rho_), 1 - alpha_) * cutoff(R, dchi);
  }
  double speed_derivative(double R) const {
    double dchi;
    const double chi = cutoff(R, dchi);
    if (R < rho_) return amp_ * (1 - alpha_) * std::pow(R, -alpha_) * chi;
    return amp_ * std::pow(rho_, 1 - alpha_) * dchi;
  }
  std::vector<double> c_;
  double alpha_, rho_, amp_;
};

class LiftedField : public VectorField {
 public:
  LiftedField(FieldPtr b, int extra) : b_(std::move(b)), extra_(extra) { set_t_end(b_->t_end()); }
  std::string name() const override { return b_->name() + "-lifted"; }
  int ambient_dim() const override { return b_->ambient_dim() + extra_; }
  void value(std::span<const double> x, double t, std::span<double> out) const override {
    const int d = b_->ambient_dim();
    b_->value(x.first(d), t, out.first(d));
    std::fill(out.begin() + d, out.end(), 0.0);
  }
  double divergence(std::span<const double> x, double t) const override {
    return b_->divergence(x.first(b_->ambient_dim()), t);
  }
  void jacobian(std::span<const double> x, double t, std::span<double> J) const override {
    const int d = b_->ambient_dim(), n = ambient_dim();
    std::vector<double> Jb(d * d);
    b_->jacobian(x.first(d), t, Jb);
    std::fill(J.begin(), J.end(), 0.0);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) J[i * n + j] = Jb[i * d + j];
  }

 private:
  FieldPtr b_;
  int extra_;
};

class ScaledField : public VectorField {
 public:
  ScaledField(FieldPtr b, double l) : b_(std::move(b)), l_(l) { set_t_end(b_->t_end()); }
  std::string name() const override { return b_->name() + "-scaled"; }
  int ambient_dim() const override { return b_->ambient_dim(); }
  void value(std::span<const double> x, double t, std::span<double> out) const override {
    b_->value(x, t, out);
    for (auto& v : out) v *= l_;
  }
  double divergence(std::span<const double> x, double t) const override { return l_ * b_->divergence(x, t); }
  void jacobian(std::span<const double> x, double t, std::span<double> J) const override {
    b_->jacobian(x, t, J);
    for (auto& v : J) v *= l_;
  }

 private:
  FieldPtr b_;
  double l_;
};

double param(const FieldParams& p, const std::string& key, double def) {
  auto it = p.find(key);
  if (it == p.end()) return def;
  if (it->second.size() != 1) throw std::invalid_argument("field parameter '" + key + "' must be a scalar");
  return it->second[0];
}

std::vector<double> vparam(const FieldParams& p, const std::string& key, std::vector<double> def) {
  auto it = p.find(key);
  return it == p.end() ? def : it->second;
}

// Tangent projector on sphere factors, identity on periodic ones.
Eigen::MatrixXd tangent_projector(const MetricMeasureSpace& space, std::span<const double> x) {
  const int d = space.ambient_dim();
  Eigen::MatrixXd P = Eigen::MatrixXd::Identity(d, d);
  for (std::size_t f = 0; f < space.factors().size(); ++f) {
    if (std::holds_alternative<PeriodicAxis>(space.factors()[f])) continue;
    const int o = space.factor_offsets()[f];
    const Eigen::Vector3d y(x[o], x[o + 1], x[o + 2]);
    P.block<3, 3>(o, o) -= y * y.transpose();
  }
  return P;
}

double pnorm_l2(const Eigen::VectorXd& f, const Eigen::VectorXd& w) {
  return std::sqrt((f.array().square() * w.array()).sum());
}

}  // namespace

void VectorField::jacobian(std::span<const double> x, double t, std::span<double> J) const {
  const int d = ambient_dim();
  const double h = 1e-6;
  std::vector<double> xp(x.begin(), x.end()), xm(x.begin(), x.end()), bp(d), bm(d);
  for (int j = 0; j < d; ++j) {
    xp[j] = x[j] + h;
    xm[j] = x[j] - h;
    value(xp, t, bp);
    value(xm, t, bm);
    for (int i = 0; i < d; ++i) J[i * d + j] = (bp[i] - bm[i]) / (2 * h);
    xp[j] = x[j];
    xm[j] = x[j];
  }
}

void VectorField::time_derivative(std::span<const double>, double, std::span<double> out) const {
  std::fill(out.begin(), out.end(), 0.0);
}

void VectorField::check_time(double t) const {
  if (t < -1e-12 || t > t_end_ + 1e-12) throw std::out_of_range("time outside the field's span");
}

RowMatrix VectorField::tabulate(const MetricMeasureSpace& space, double t) const {
  if (space.ambient_dim() != ambient_dim()) throw std::invalid_argument("field and space ranks differ");
  RowMatrix B(space.size(), ambient_dim());
  for (Index p = 0; p < space.size(); ++p)
    value(space.coords(p), t, std::span<double>(B.data() + p * ambient_dim(), ambient_dim()));
  return B;
}

double VectorField::sup_norm(const MetricMeasureSpace& space, const std::vector<double>& t_grid) const {
  double s = 0.0;
  for (double t : t_grid) s = std::max(s, tabulate(space, t).rowwise().norm().maxCoeff());
  return s;
}

FourierSeries::FourierSeries(int ambient_dim, std::vector<Term> terms) : dim_(ambient_dim), terms_(std::move(terms)) {
  for (const auto& t : terms_)
    if (static_cast<int>(t.modes.size()) != dim_) throw std::invalid_argument("mode rank mismatch");
}

FourierSeries FourierSeries::from_basis(const SpectralBasis& basis, const Eigen::VectorXd& coef) {
  if (!basis.analytic()) throw std::invalid_argument("Fourier series needs an exact torus basis");
  std::vector<Term> terms;
  for (Index i = 0; i < coef.size(); ++i) {
    if (coef[i] == 0.0) continue;
    Term t;
    t.coef = coef[i];
    for (std::size_t f = 0; f < basis.factors.size(); ++f) t.modes.push_back(basis.factors[f].modes[basis.mode_index[i][f]]);
    terms.push_back(std::move(t));
  }
  return FourierSeries(basis.space->ambient_dim(), std::move(terms));
}

double FourierSeries::value(std::span<const double> x) const {
  double s = 0.0;
  for (const auto& t : terms_) {
    double v = t.coef;
    for (int a = 0; a < dim_; ++a) v *= t.modes[a].value(x[a]);
    s += v;
  }
  return s;
}

void FourierSeries::gradient(std::span<const double> x, std::span<double> g) const {
  std::fill(g.begin(), g.end(), 0.0);
  for (const auto& t : terms_)
    for (int a = 0; a < dim_; ++a) {
      double v = t.coef * t.modes[a].derivative(x[a]);
      for (int c = 0; c < dim_; ++c)
        if (c != a) v *= t.modes[c].value(x[c]);
      g[a] += v;
    }
}

void FourierSeries::hessian(std::span<const double> x, std::span<double> h) const {
  std::fill(h.begin(), h.end(), 0.0);
  for (const auto& t : terms_)
    for (int a = 0; a < dim_; ++a)
      for (int b = 0; b < dim_; ++b) {
        double v = t.coef;
        for (int c = 0; c < dim_; ++c) {
          if (a == b && c == a) v *= t.modes[c].second_derivative(x[c]);
          else if (c == a || c == b) v *= t.modes[c].derivative(x[c]);
          else v *= t.modes[c].value(x[c]);
        }
        h[a * dim_ + b] += v;
      }
}

double FourierSeries::laplacian(std::span<const double> x) const {
  double s = 0.0;
  for (const auto& t : terms_) {
    double lam = 0.0, v = t.coef;
    for (int a = 0; a < dim_; ++a) {
      lam += t.modes[a].eigenvalue();
      v *= t.modes[a].value(x[a]);
    }
    s -= lam * v;
  }
  return s;
}

FourierSeries FourierSeries::heat_flow(double tau) const {
  auto terms = terms_;
  for (auto& t : terms) {
    double lam = 0.0;
    for (const auto& m : t.modes) lam += m.eigenvalue();
    t.coef *= std::exp(-lam * tau);
  }
  return FourierSeries(dim_, std::move(terms));
}

FieldPtr make_constant_field(std::vector<double> v) { return std::make_shared<ConstantField>(std::move(v)); }

FieldPtr make_rotation_field(int ambient_dim, int offset, Eigen::Vector3d axis, double speed) {
  if (axis.norm() == 0.0) throw std::invalid_argument("rotation axis must be nonzero");
  return std::make_shared<RotationField>(ambient_dim, offset, axis, speed);
}

FieldPtr make_shear_field(int ambient_dim, double s) { return std::make_shared<ShearField>(ambient_dim, s); }

FieldPtr make_gradient_heat_field(const FourierSeries& f0, double tau) {
  if (tau < 0) throw std::invalid_argument("tau must be nonnegative");
  return std::make_shared<GradientHeatField>(f0.heat_flow(tau));
}

FieldPtr make_cdl_singular_field(std::vector<double> center, double alpha, double rho, double amp) {
  if (!(alpha > 0 && alpha < 1)) throw std::invalid_argument("cdl exponent must lie in (0, 1)");
  if (!(rho > 0) || 2 * rho > 0.5) throw std::invalid_argument("cdl cutoff needs 0 < 2 rho <= 1/2 on the unit torus");
  if (center.size() < 2 || center.size() > 3) throw std::invalid_argument("cdl field lives on T^2 or T^3");
  return std::make_shared<CdlSingularField>(std::move(center), alpha, rho, amp);
}

FieldPtr make_lifted_field(FieldPtr base, int extra_dims) {
  return std::make_shared<LiftedField>(std::move(base), extra_dims);
}

FieldPtr make_scaled_field(FieldPtr b, double lambda) { return std::make_shared<ScaledField>(std::move(b), lambda); }

FieldPtr builtin_field(const std::string& name, const FieldParams& p, const MetricMeasureSpace& space) {
  if (space.is_graph()) throw std::invalid_argument("vector fields need a chart-backed space");
  if (space.base()) {
    auto b = builtin_field(name, p, *space.base());
    return make_lifted_field(b, space.ambient_dim() - b->ambient_dim());
  }
  const int d = space.ambient_dim();
  FieldPtr out;
  if (name == "zero") {
    out = make_constant_field(std::vector<double>(d, 0.0));
  } else if (name == "constant") {
    auto v = vparam(p, "v", std::vector<double>(d, 0.0));
    if (static_cast<int>(v.size()) > d) throw std::invalid_argument("constant field has too many components");
    if (space.chart() == "sphere") throw std::invalid_argument("constant fields are not tangent to the sphere");
    v.resize(d, 0.0);
    out = make_constant_field(v);
  } else if (name == "rotation") {
    if (space.chart() != "sphere") throw std::invalid_argument("rotation field needs the sphere chart");
    auto a = vparam(p, "axis", {0, 0, 1});
    if (a.size() != 3) throw std::invalid_argument("rotation axis needs three components");
    out = make_rotation_field(d, 0, Eigen::Vector3d(a[0], a[1], a[2]), param(p, "speed", 1.0));
  } else if (name == "shear") {
    if (!space.is_periodic_grid()) throw std::invalid_argument("shear field needs a torus");
    out = make_shear_field(d, param(p, "s", 0.5));
  } else if (name == "gradient_heat") {
    if (!space.is_periodic_grid()) throw std::invalid_argument("gradient_heat field needs a torus");
    const Index mode = static_cast<Index>(param(p, "mode", 1));
    if (mode < 1 || mode >= space.size()) throw std::invalid_argument("gradient_heat mode out of range");
    auto L = assemble_laplacian(space, LaplacianScheme::TorusFourierExact);
    auto B = eigendecompose(L, mode + 1);
    Eigen::VectorXd c = Eigen::VectorXd::Zero(mode + 1);
    c[mode] = param(p, "amp", 1.0);
    out = make_gradient_heat_field(FourierSeries::from_basis(B, c), param(p, "tau", 0.02));
  } else if (name == "cdl_singular") {
    if (!space.is_periodic_grid() || d < 2 || d > 3) throw std::invalid_argument("cdl_singular needs T^2 or T^3");
    auto c = vparam(p, "center", std::vector<double>(d, 0.5));
    if (static_cast<int>(c.size()) != d) throw std::invalid_argument("cdl center rank mismatch");
    const double rho = param(p, "rho", 0.2);
    if (rho >= space.diameter() / 2) throw std::invalid_argument("cdl cutoff must be below D/2");
    out = make_cdl_singular_field(c, param(p, "alpha", 0.5), rho, param(p, "amp", 1.0));
  } else {
    throw std::invalid_argument("unknown field '" + name + "'");
  }
  return out;
}

Eigen::VectorXd apply_derivation(const GradientStencil& stencil, const VectorField& b, const Eigen::VectorXd& f,
                                 double t) {
  b.check_time(t);
  const RowMatrix B = b.tabulate(stencil.space(), t);
  const RowMatrix G = stencil.gradient(f);
  return (B.array() * G.array()).rowwise().sum();
}

Eigen::VectorXd apply_derivation(const MetricMeasureSpace& space, const VectorField& b, const SmoothFunction& f,
                                 double t) {
  b.check_time(t);
  const int d = space.ambient_dim();
  std::vector<double> bv(d), g(d);
  Eigen::VectorXd out(space.size());
  for (Index p = 0; p < space.size(); ++p) {
    b.value(space.coords(p), t, bv);
    f.gradient(space.coords(p), g);
    double s = 0.0;
    for (int a = 0; a < d; ++a) s += bv[a] * g[a];
    out[p] = s;
  }
  return out;
}

Eigen::VectorXd divergence(const MetricMeasureSpace& space, const VectorField& b, double t) {
  b.check_time(t);
  Eigen::VectorXd out(space.size());
  for (Index p = 0; p < space.size(); ++p) out[p] = b.divergence(space.coords(p), t);
  return out;
}

Eigen::VectorXd discrete_divergence(const GradientStencil& stencil, const VectorField& b, double t) {
  b.check_time(t);
  return stencil.adjoint_divergence(stencil.derivation_matrix(b.tabulate(stencil.space(), t)));
}

double adjoint_residual(const GradientStencil& stencil, const VectorField& b, const Eigen::VectorXd& f, double t) {
  const auto& w = stencil.space().weights();
  const Eigen::VectorXd bf = apply_derivation(stencil, b, f, t);
  const Eigen::VectorXd dv = divergence(stencil.space(), b, t);
  return std::abs(bf.dot(w) + dv.cwiseProduct(f).dot(w));
}

Eigen::VectorXd sym_modulus_chart(const MetricMeasureSpace& space, const VectorField& b, double t) {
  b.check_time(t);
  const int d = space.ambient_dim();
  Eigen::VectorXd out(space.size());
  std::vector<double> J(d * d);
  for (Index p = 0; p < space.size(); ++p) {
    b.jacobian(space.coords(p), t, J);
    Eigen::MatrixXd M = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(J.data(), d, d);
    Eigen::MatrixXd S = 0.5 * (M + M.transpose());
    const Eigen::MatrixXd P = tangent_projector(space, space.coords(p));
    S = P * S * P;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S, Eigen::EigenvaluesOnly);
    out[p] = es.eigenvalues().cwiseAbs().maxCoeff();
  }
  return out;
}

double sym_bilinear(const VectorField& b, std::span<const double> x, double t, std::span<const double> v,
                    std::span<const double> w) {
  const int d = b.ambient_dim();
  std::vector<double> J(d * d);
  b.jacobian(x, t, J);
  double s = 0.0;
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) s += 0.5 * (J[i * d + j] + J[j * d + i]) * v[i] * w[j];
  return s;
}

RegularityModuli compute_moduli(const MetricMeasureSpace& space, const VectorField& b, double t) {
  RegularityModuli m;
  m.t = t;
  m.div = divergence(space, b, t);
  m.sym_modulus = sym_modulus_chart(space, b, t);
  m.g_combined = m.sym_modulus + m.div.cwiseAbs();
  m.g_l2 = pnorm_l2(m.g_combined, space.weights());
  m.sym_sup = m.sym_modulus.maxCoeff();
  return m;
}

double g_time_integral(const MetricMeasureSpace& space, const VectorField& b, const std::vector<double>& t_grid) {
  double s = 0.0;
  double prev = 0.0;
  for (std::size_t k = 0; k < t_grid.size(); ++k) {
    const double g = compute_moduli(space, b, t_grid[k]).g_l2;
    if (k > 0) s += 0.5 * (g + prev) * (t_grid[k] - t_grid[k - 1]);
    prev = g;
  }
  return s;
}

std::vector<int> farthest_point_cells(const MetricMeasureSpace& space, int num_cells) {
  const Index n = space.size();
  num_cells = static_cast<int>(std::min<Index>(num_cells, n));
  std::vector<Index> seeds{0};
  Eigen::VectorXd mind(n);
  for (Index p = 0; p < n; ++p) mind[p] = space.distance(0, p);
  while (static_cast<int>(seeds.size()) < num_cells) {
    Index best = 0;
    for (Index p = 1; p < n; ++p)
      if (mind[p] > mind[best]) best = p;
    seeds.push_back(best);
    for (Index p = 0; p < n; ++p) mind[p] = std::min(mind[p], space.distance(best, p));
  }
  std::vector<int> cell(n);
  for (Index p = 0; p < n; ++p) {
    int bc = 0;
    double bd = std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s < seeds.size(); ++s) {
      const double d = space.distance(seeds[s], p);
      if (d < bd) {
        bd = d;
        bc = static_cast<int>(s);
      }
    }
    cell[p] = bc;
  }
  return cell;
}

ProbeEnvelopeReport sym_modulus_probe(const SpectralBasis& basis, const LaplacianOperator& L, const VectorField& b,
                                      double t, int num_modes, int num_bumps, int num_cells, double bump_tau,
                                      const GradientStencil* stencil) {
  const auto& space = *basis.space;
  if (!basis.analytic() && !stencil) throw std::invalid_argument("non-analytic basis needs a stencil");
  const Index n = space.size();
  const auto& w = space.weights();
  const RowMatrix B = b.tabulate(space, t);
  const Eigen::VectorXd dv = divergence(space, b, t);

  std::vector<Eigen::VectorXd> funcs;
  std::vector<RowMatrix> grads;
  auto add = [&](const Eigen::VectorXd& coef) {
    const Eigen::VectorXd f = basis.synthesize(coef);
    funcs.push_back(f);
    grads.push_back(basis.analytic() ? basis.gradient_table(coef) : stencil->gradient(f));
  };
  for (int i = 1; i <= num_modes && i < basis.k_max(); ++i) {
    Eigen::VectorXd c = Eigen::VectorXd::Zero(basis.k_max());
    c[i] = 1.0;
    add(c);
  }
  const auto cells = farthest_point_cells(space, std::max(num_bumps, 1));
  std::vector<Index> centers;
  for (int s = 0; s < num_bumps; ++s)
    for (Index p = 0; p < n; ++p)
      if (cells[p] == s) {
        centers.push_back(p);
        break;
      }
  for (Index z : centers) {
    Eigen::VectorXd c = ((-basis.eigenvalues.array() * bump_tau).exp() * basis.eigenfunctions.row(z).transpose().array()).matrix();
    c[0] = 0.0;
    add(c);
  }
  std::vector<Eigen::VectorXd> lap, bgrad;
  for (std::size_t k = 0; k < funcs.size(); ++k) {
    lap.push_back(-L.apply(funcs[k]));
    bgrad.push_back((B.array() * grads[k].array()).rowwise().sum());
  }

  ProbeEnvelopeReport rep;
  rep.cell_of = farthest_point_cells(space, num_cells);
  const int C = *std::max_element(rep.cell_of.begin(), rep.cell_of.end()) + 1;
  std::vector<Eigen::VectorXd> cols;
  std::vector<double> rhs;
  for (std::size_t i = 0; i < funcs.size(); ++i) {
    for (std::size_t j = i; j < funcs.size(); ++j) {
      const Eigen::VectorXd dot = (grads[i].array() * grads[j].array()).rowwise().sum();
      const double Bk = -0.5 * ((bgrad[j].array() * lap[i].array() + bgrad[i].array() * lap[j].array() -
                                 dv.array() * dot.array()) * w.array()).sum();
      const Eigen::VectorXd mod = grads[i].rowwise().norm().cwiseProduct(grads[j].rowwise().norm());
      Eigen::VectorXd a = Eigen::VectorXd::Zero(C);
      for (Index p = 0; p < n; ++p) a[rep.cell_of[p]] += mod[p] * w[p];
      cols.push_back(a);
      rhs.push_back(std::abs(Bk));
    }
  }
  rep.probes = static_cast<int>(cols.size());
  Eigen::MatrixXd A(C, rep.probes);
  Eigen::VectorXd c(rep.probes), m = Eigen::VectorXd::Zero(C);
  for (int k = 0; k < rep.probes; ++k) {
    A.col(k) = cols[k];
    c[k] = rhs[k];
  }
  for (Index p = 0; p < n; ++p) m[rep.cell_of[p]] += w[p];
  // Dual of: minimize sum_c h_c m_c  s.t.  sum_c h_c a_ck >= |B_k|, h >= 0.
  const LpResult lp = solve_packing_lp(A, m, c);
  rep.feasible = lp.status == LpResult::Status::Optimal;
  const Eigen::VectorXd h = rep.feasible ? lp.duals : Eigen::VectorXd::Constant(C, std::numeric_limits<double>::infinity());
  rep.envelope.resize(n);
  for (Index p = 0; p < n; ++p) rep.envelope[p] = h[rep.cell_of[p]];
  for (int k = 0; k < rep.probes && rep.feasible; ++k)
    rep.max_violation = std::max(rep.max_violation, c[k] - h.dot(A.col(k)));
  rep.l2_probe = pnorm_l2(rep.envelope, w);
  rep.l2_chart = pnorm_l2(sym_modulus_chart(space, b, t), w);
  return rep;
}

PairEstimateReport verify_pair_kernel_estimate(const MetricMeasureSpace& space, const Eigen::VectorXd& f, double n,
                                               const std::vector<std::pair<Index, Index>>& pairs) {
  if ((f.array() < 0).any()) throw std::invalid_argument("pair kernel estimate needs f >= 0");
  const Eigen::VectorXd Mf = maximal_function(space, f);
  const auto& w = space.weights();
  PairEstimateReport rep;
  for (auto [x, y] : pairs) {
    if (x == y) throw std::invalid_argument("pair kernel estimate needs x != y");
    double lhs = 0.0;
    for (Index z = 0; z < space.size(); ++z) {
      if (z == x || z == y || f[z] == 0.0) continue;
      lhs += f[z] * std::pow(space.distance(x, z), 1 - n) * std::pow(space.distance(y, z), 1 - n) * w[z];
    }
    const double rhs = std::pow(space.distance(x, y), 2 - n) * (Mf[x] + Mf[y]);
    const double r = rhs > 0 ? lhs / rhs : 0.0;
    rep.ratios.push_back(r);
    rep.C = std::max(rep.C, r);
  }
  return rep;
}

KeyEstimateReport verify_key_maximal_estimate(const GradientStencil& stencil, const GreenFunction& G,
                                              const VectorField& b, double t, double n,
                                              const std::vector<std::pair<Index, Index>>& pairs) {
  const auto& space = stencil.space();
  const RegularityModuli mod = compute_moduli(space, b, t);
  const Eigen::VectorXd Mg = maximal_function(space, mod.g_combined);
  const RowMatrix B = b.tabulate(space, t);
  const double bsup = std::max(B.rowwise().norm().maxCoeff(), 1e-300);
  const auto& comps = stencil.components();
  auto deriv_at = [&](Index src, Index at) {
    double s = 0.0;
    for (std::size_t c = 0; c < comps.size(); ++c) {
      if (B(at, c) == 0.0) continue;
      double g = 0.0;
      for (SparseRM::InnerIterator it(comps[c], at); it; ++it) g += it.value() * G(src, it.col());
      s += B(at, c) * g;
    }
    return s;
  };
  KeyEstimateReport rep;
  for (auto [x, y] : pairs) {
    const double lhs = std::abs(deriv_at(x, y) + deriv_at(y, x));
    const double d = space.distance(x, y);
    const double rhs = std::pow(d, 2 - n) * (Mg[x] + Mg[y]);
    rep.max_lhs = std::max(rep.max_lhs, lhs);
    rep.max_lhs_scaled = std::max(rep.max_lhs_scaled, lhs * std::pow(d, n - 1) / bsup);
    const double r = rhs > 0 ? lhs / rhs : (lhs > 0 ? std::numeric_limits<double>::infinity() : 0.0);
    rep.ratios.push_back(r);
    rep.C = std::max(rep.C, r);
  }
  return rep;
}

}  // namespace mms
