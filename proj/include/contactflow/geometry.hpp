#pragma once

#include "contactflow/common.hpp"

#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace contactflow {

/// The standard contact form dz - y dx on (x, y, z) = (x^u, x^s, x^0).
struct ContactForm3 {
  static double eval(const Vec3& point, const Vec3& vector) { return vector.z() - point.y() * vector.x(); }
};

double eval_alpha(const Vec3& point, const Vec3& vector);

/// Value and first derivatives of a contact chart (A, B, z + C) at (x, y).
struct ChartJet {
  double A = 0.0, B = 0.0, C = 0.0;
  Mat2 dAB = Mat2::Identity();  // rows: A, B; columns: d/dx, d/dy
  Vec2 dC = Vec2::Zero();
};

/// One factor of a chart K(x, y, z) = (A(x, y), B(x, y), z + C(x, y)).
class ContactMove {
 public:
  virtual ~ContactMove() = default;
  virtual ChartJet jet(double x, double y) const = 0;
  virtual std::string name() const = 0;
};

/// Straightens the leaf (F(y), y, N(y)) into a line of constant x^u:
/// A = x - F(y) + F(ybar), B = y, C = N(ybar) - N(y).
class LeafStraightening final : public ContactMove {
 public:
  LeafStraightening(std::function<double(double)> F, std::function<double(double)> dF, std::function<double(double)> N,
                    double ybar);
  ChartJet jet(double x, double y) const override;
  std::string name() const override { return "leaf-straightening"; }

 private:
  std::function<double(double)> F_, dF_, N_;
  double ybar_;
};

/// Translation of (xt, yt, zt) to the origin with the shear in z that keeps
/// the contact form: (x - xt, y - yt, z - zt - yt (x - xt)).
class TranslationShear final : public ContactMove {
 public:
  TranslationShear(double xt, double yt, double zt) : xt_(xt), yt_(yt), zt_(zt) {}
  ChartJet jet(double x, double y) const override;
  std::string name() const override { return "translation-shear"; }

 private:
  double xt_, yt_, zt_;
};

/// Linear contact normalization sending a kernel vector (u, s, .) to (1, 0, 0)
/// while fixing the x^s axis: A = x / u, B = u y - s x, C = -s x^2 / (2u).
class LinearNormalization final : public ContactMove {
 public:
  LinearNormalization(double u, double s);
  ChartJet jet(double x, double y) const override;
  std::string name() const override { return "linear-normalization"; }

 private:
  double u_, s_;
};

/// A chart given by arbitrary closures; derivatives may be omitted, in which
/// case they are taken by central differences with step h = 1e-6.
class GenericMove final : public ContactMove {
 public:
  using Field = std::function<double(double, double)>;
  GenericMove(Field A, Field B, Field C);
  ChartJet jet(double x, double y) const override;
  std::string name() const override { return "generic"; }

 private:
  Field A_, B_, C_;
};

/// Composition of contact moves, applied first to last.
class ContactChart {
 public:
  ContactChart() = default;
  explicit ContactChart(std::vector<std::shared_ptr<const ContactMove>> moves) : moves_(std::move(moves)) {}

  static ContactChart identity() { return ContactChart{}; }

  ContactChart then(std::shared_ptr<const ContactMove> move) const;

  ChartJet jet(double x, double y) const;
  Vec3 apply(const Vec3& p) const;
  /// Full 3x3 Jacobian at p (independent of z).
  Mat3 jacobian(const Vec3& p) const;
  /// Jacobian by central differences of apply(); h defaults to 1e-6.
  Mat3 jacobian_fd(const Vec3& p, double h = 1e-6) const;

  const std::vector<std::shared_ptr<const ContactMove>>& moves() const { return moves_; }

 private:
  std::vector<std::shared_ptr<const ContactMove>> moves_;
};

enum class DerivativeMode { Analytic, FiniteDifference };

struct ChartDiagnostics {
  double det_residual = 0.0;  // max |det D(A,B) - 1|
  double cx_residual = 0.0;   // max |C_x - (B A_x - y)|
  double cy_residual = 0.0;   // max |C_y - B A_y|
  double tolerance = 1e-10;
  std::size_t samples = 0;
  bool passed() const { return det_residual <= tolerance && cx_residual <= tolerance && cy_residual <= tolerance; }
};

/// Residuals of the three contact-chart equations over the sample points.
/// Failures are reported, never thrown.
ChartDiagnostics check_contact_chart(const ContactChart& chart, const std::vector<Vec2>& sample_points,
                                     DerivativeMode mode = DerivativeMode::Analytic, double tolerance = 1e-10,
                                     double fd_step = 1e-6);

/// Max over (point, vector) pairs of |alpha(DK v) at K(p) - alpha(v) at p|.
double pullback_residual(const ContactChart& chart, const std::vector<Vec3>& points, const std::vector<Vec3>& vectors,
                         DerivativeMode mode = DerivativeMode::Analytic, double fd_step = 1e-6);

/// Reeb coordinates at `point`: the composite chart sends the point to the
/// origin, the straight kernel-lifted leaf through the point with planar
/// direction stable_dir into the x^s axis, and unstable_vec to (1, 0, 0).
ContactChart reeb_chart_at(const Vec3& point, const Vec3& stable_dir, const Vec3& unstable_vec);

}  // namespace contactflow
