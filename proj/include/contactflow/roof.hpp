#pragma once

#include "contactflow/polygon.hpp"
#include "contactflow/torus_map.hpp"

#include <memory>
#include <vector>

namespace contactflow {

/// Return time to the section {z = 0}, defined branch by branch so that
/// d(tau) = a dx + b dy with a = y - f2 d_x f1, b = -f2 d_y f1.
class RoofFunction {
 public:
  virtual ~RoofFunction() = default;

  virtual double value_on(const Vec2& p, int branch) const = 0;
  virtual Vec2 gradient_on(const Vec2& p, int branch) const = 0;
  /// The field (a, b) the gradient must reproduce, from the map formulas.
  virtual Vec2 contact_field_on(const Vec2& p, int branch) const = 0;

  double tau_minus() const { return tau_minus_; }
  /// Upper bound for tau on the whole torus.
  double tau_max() const { return tau_max_; }
  /// Integral of tau over the torus.
  double volume() const { return volume_; }

 protected:
  double tau_minus_ = 0.0, tau_max_ = 0.0, volume_ = 0.0;
};

/// Quadratic with gradient (a, b) for one affine formula p -> M p + c, with
/// the constant chosen so the minimum over `domain` equals tau_minus.
/// Throws ClosednessViolation unless det M = 1.
Quadratic2 affine_roof_quadratic(const RMat2& matrix, const RVec2& offset, const Polygon& domain, double tau_minus);

class QuadraticRoof final : public RoofFunction {
 public:
  QuadraticRoof(std::shared_ptr<const PiecewiseAffineTorusMap> map, double tau_minus);

  double value_on(const Vec2& p, int branch) const override { return quads_[static_cast<std::size_t>(branch)](p); }
  Vec2 gradient_on(const Vec2& p, int branch) const override {
    return quads_[static_cast<std::size_t>(branch)].gradient(p);
  }
  Vec2 contact_field_on(const Vec2& p, int branch) const override;

  const std::vector<Quadratic2>& branch_quadratics() const { return quads_; }
  /// Max of tau over one branch domain.
  double branch_max(int branch) const { return maxima_[static_cast<std::size_t>(branch)]; }

 private:
  std::shared_ptr<const PiecewiseAffineTorusMap> map_;
  std::vector<Quadratic2> quads_;
  std::vector<double> maxima_;
};

/// Roof for the shear-perturbed map, by Gauss-Legendre line integration of
/// (a, b) from the origin along the x axis then vertically. The vertical-first
/// path is integrated at construction on sample points; disagreement beyond
/// `path_tolerance` raises PathDependence.
class LineIntegralRoof final : public RoofFunction {
 public:
  LineIntegralRoof(std::shared_ptr<const ShearPerturbedMap> map, double tau_minus, double path_tolerance = 1e-9,
                   int volume_grid = 512);

  double value_on(const Vec2& p, int branch) const override;
  Vec2 gradient_on(const Vec2& p, int branch) const override { return contact_field_on(p, branch); }
  Vec2 contact_field_on(const Vec2& p, int branch) const override;

  /// Line integral of (a, b) along the horizontal-then-vertical path.
  double integral_x_then_y(const Vec2& p, int branch) const;
  double integral_y_then_x(const Vec2& p, int branch) const;
  double path_residual() const { return path_residual_; }
  double branch_constant(int branch) const { return constants_[static_cast<std::size_t>(branch)]; }

 private:
  std::shared_ptr<const ShearPerturbedMap> map_;
  QuadraticRoof base_roof_;
  std::vector<double> constants_;
  double path_residual_ = 0.0;
};

/// Max over sample points of |d_y a - d_x b| by central differences
/// (step 1e-5), evaluated with the branch fixed at each point.
double closedness_residual(const RoofFunction& roof, const TorusMap& map, const std::vector<Vec2>& points);

}  // namespace contactflow
