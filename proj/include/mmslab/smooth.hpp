#pragma once

#include "mmslab/space.hpp"

#include <memory>
#include <random>

namespace mms {

/// Closed-form function on chart coordinates with ambient first and second derivatives.
class SmoothFunction {
 public:
  virtual ~SmoothFunction() = default;
  virtual double value(std::span<const double> x) const = 0;
  virtual void gradient(std::span<const double> x, std::span<double> g) const = 0;
  /// Row-major ambient Hessian, size ambient_dim^2.
  virtual void hessian(std::span<const double> x, std::span<double> h) const = 0;
  virtual int ambient_dim() const = 0;

  Eigen::VectorXd sample(const MetricMeasureSpace& space) const;
};

/// Real trigonometric polynomial sum_k a_k cos(2 pi k.x) + b_k sin(2 pi k.x) on a torus chart.
class TrigPolynomial : public SmoothFunction {
 public:
  struct Term {
    std::vector<int> k;
    double a = 0.0;
    double b = 0.0;
  };

  TrigPolynomial(int ambient_dim, std::vector<Term> terms);
  /// Random coefficients with heat damping exp(-4 pi^2 |k|^2 tau); frequencies |k_i| <= max_freq
  /// on the listed periodic coordinates, zero elsewhere.
  static TrigPolynomial random(int ambient_dim, const std::vector<int>& active, int max_freq,
                               double tau, std::mt19937_64& rng);

  double value(std::span<const double> x) const override;
  void gradient(std::span<const double> x, std::span<double> g) const override;
  void hessian(std::span<const double> x, std::span<double> h) const override;
  int ambient_dim() const override { return dim_; }

  const std::vector<Term>& terms() const { return terms_; }
  /// The heat flow applied for time tau (exact on trigonometric polynomials).
  TrigPolynomial heat_flow(double tau) const;
  /// Euclidean Laplacian of the polynomial, in closed form.
  double laplacian(std::span<const double> x) const;

 private:
  int dim_;
  std::vector<Term> terms_;
};

/// c + g.y + y^T H y of the unit-vector coordinates y of one sphere factor.
class SphereQuadratic : public SmoothFunction {
 public:
  SphereQuadratic(int ambient_dim, int offset, double c, Eigen::Vector3d g, Eigen::Matrix3d H);
  static SphereQuadratic random(int ambient_dim, int offset, std::mt19937_64& rng);

  double value(std::span<const double> x) const override;
  void gradient(std::span<const double> x, std::span<double> g) const override;
  void hessian(std::span<const double> x, std::span<double> h) const override;
  int ambient_dim() const override { return dim_; }

 private:
  int dim_;
  int off_;
  double c_;
  Eigen::Vector3d g_;
  Eigen::Matrix3d H_;
};

/// Pointwise product of two smooth functions.
class ProductFunction : public SmoothFunction {
 public:
  ProductFunction(std::shared_ptr<const SmoothFunction> f, std::shared_ptr<const SmoothFunction> g);
  double value(std::span<const double> x) const override;
  void gradient(std::span<const double> x, std::span<double> g) const override;
  void hessian(std::span<const double> x, std::span<double> h) const override;
  int ambient_dim() const override { return f_->ambient_dim(); }

 private:
  std::shared_ptr<const SmoothFunction> f_, g_;
};

/// A handful of heat-regularized test functions suited to the chart of `space`.
std::vector<std::shared_ptr<const SmoothFunction>> default_test_functions(
    const MetricMeasureSpace& space, int count, std::uint64_t seed);

}  // namespace mms
