#include "contactflow/roof.hpp"

#include "contactflow/quadrature.hpp"
#include "contactflow/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace contactflow {

Quadratic2 affine_roof_quadratic(const RMat2& matrix, const RVec2& offset, const Polygon& domain, double tau_minus) {
  if (matrix.det() != 1)
    throw Error(ErrorKind::ClosednessViolation,
                "a dx + b dy is closed only when det = 1 (got det = " + to_string(matrix.det()) + ")");
  const Mat2 m = matrix.to_double();
  const double c2 = to_double(offset.y);
  Quadratic2 q;
  q.lx = -m(0, 0) * c2;
  q.ly = -m(0, 1) * c2;
  q.qxx = -0.5 * m(0, 0) * m(1, 0);
  q.qyy = -0.5 * m(0, 1) * m(1, 1);
  q.qxy = 1.0 - m(0, 0) * m(1, 1);
  q.c = tau_minus - quadratic_range(q, domain).min;
  return q;
}

QuadraticRoof::QuadraticRoof(std::shared_ptr<const PiecewiseAffineTorusMap> map, double tau_minus) : map_(std::move(map)) {
  if (!(tau_minus > 0.0)) throw Error(ErrorKind::InvalidArgument, "tau_minus must be positive");
  tau_minus_ = tau_minus;
  for (const AffineBranch& b : map_->branches()) {
    const Quadratic2 q = affine_roof_quadratic(b.exact_matrix, b.exact_offset, b.domain, tau_minus);
    quads_.push_back(q);
    maxima_.push_back(quadratic_range(q, b.domain).max);
    tau_max_ = std::max(tau_max_, maxima_.back());
    volume_ += quadratic_integral(q, b.domain);
  }
}

Vec2 QuadraticRoof::contact_field_on(const Vec2& p, int branch) const {
  const AffineBranch& b = map_->branches()[static_cast<std::size_t>(branch)];
  const double f2 = b.matrix(1, 0) * p.x() + b.matrix(1, 1) * p.y() + b.offset.y();
  return {p.y() - f2 * b.matrix(0, 0), -f2 * b.matrix(0, 1)};
}

namespace {

constexpr int kHorizontalNodes = 20;
constexpr int kVerticalNodes = 4;

template <typename F>
double integrate(F&& f, double lo, double hi, int nodes) {
  if (lo == hi) return 0.0;
  const GaussRule& rule = gauss_legendre(nodes);
  const double half = 0.5 * (hi - lo), mid = 0.5 * (hi + lo);
  double acc = 0.0;
  for (std::size_t i = 0; i < rule.nodes.size(); ++i) acc += rule.weights[i] * f(mid + half * rule.nodes[i]);
  return acc * half;
}

}  // namespace

LineIntegralRoof::LineIntegralRoof(std::shared_ptr<const ShearPerturbedMap> map, double tau_minus, double path_tolerance,
                                   int volume_grid)
    : map_(map),
      base_roof_(std::shared_ptr<const PiecewiseAffineTorusMap>(map, &map->base()), tau_minus) {
  tau_minus_ = tau_minus;
  const double eps = map_->epsilon();
  const int n = static_cast<int>(map_->num_branches());
  for (int j = 0; j < n; ++j) {
    const int k = map_->shear_shift(j), j0 = map_->base_branch(j);
    // the cosine term dips by at most |eps|/pi and the wrap term k x by 1 when k < 0
    const double lift = std::abs(eps) / std::numbers::pi + (k < 0 ? 1.0 : 0.0);
    constants_.push_back(base_roof_.branch_quadratics()[static_cast<std::size_t>(j0)](Vec2(0.0, -k)) + lift);
    if (eps == 0.0 && k != 0) continue;  // wrapped branches are empty without shear
    tau_max_ = std::max(tau_max_, base_roof_.branch_max(j0) + std::max(0, k) + lift);
  }

  CounterRng rng(0x70617468ULL, 0);
  for (int i = 0; i < 200; ++i) {
    const Vec2 p(rng.uniform(), rng.uniform());
    const int b = map_->branch_of(p);
    path_residual_ = std::max(path_residual_, std::abs(integral_x_then_y(p, b) - integral_y_then_x(p, b)));
  }
  if (path_residual_ > path_tolerance)
    throw Error(ErrorKind::PathDependence, "line integrals along homotopic paths differ by " + std::to_string(path_residual_));

  const double h = 1.0 / volume_grid;
  for (int ix = 0; ix < volume_grid; ++ix) {
    double row = 0.0;
    for (int iy = 0; iy < volume_grid; ++iy) {
      const Vec2 p((ix + 0.5) * h, (iy + 0.5) * h);
      row += value_on(p, map_->branch_of(p));
    }
    volume_ += row * h * h;
  }
}

Vec2 LineIntegralRoof::contact_field_on(const Vec2& p, int branch) const {
  const int k = map_->shear_shift(branch);
  const AffineBranch& b = map_->base().branches()[static_cast<std::size_t>(map_->base_branch(branch))];
  const double w = 2.0 * std::numbers::pi * p.x();
  const double eps = map_->epsilon();
  const double f2 = b.matrix(1, 0) * p.x() + b.matrix(1, 1) * (p.y() + eps * std::sin(w) - k) + b.offset.y();
  const double dx_f1 = b.matrix(0, 0) + b.matrix(0, 1) * 2.0 * std::numbers::pi * eps * std::cos(w);
  return {p.y() - f2 * dx_f1, -f2 * b.matrix(0, 1)};
}

double LineIntegralRoof::integral_x_then_y(const Vec2& p, int branch) const {
  const double horizontal =
      integrate([&](double t) { return contact_field_on(Vec2(t, 0.0), branch).x(); }, 0.0, p.x(), kHorizontalNodes);
  const double vertical =
      integrate([&](double t) { return contact_field_on(Vec2(p.x(), t), branch).y(); }, 0.0, p.y(), kVerticalNodes);
  return horizontal + vertical;
}

double LineIntegralRoof::integral_y_then_x(const Vec2& p, int branch) const {
  const double vertical =
      integrate([&](double t) { return contact_field_on(Vec2(0.0, t), branch).y(); }, 0.0, p.y(), kVerticalNodes);
  const double horizontal =
      integrate([&](double t) { return contact_field_on(Vec2(t, p.y()), branch).x(); }, 0.0, p.x(), kHorizontalNodes);
  return horizontal + vertical;
}

double LineIntegralRoof::value_on(const Vec2& p, int branch) const {
  return integral_x_then_y(p, branch) + constants_[static_cast<std::size_t>(branch)];
}

double closedness_residual(const RoofFunction& roof, const TorusMap& map, const std::vector<Vec2>& points) {
  constexpr double h = 1e-5;
  double worst = 0.0;
  for (const Vec2& p : points) {
    const int b = map.branch_of(p);
    const double day = (roof.contact_field_on(p + Vec2(0, h), b).x() - roof.contact_field_on(p - Vec2(0, h), b).x()) / (2 * h);
    const double dbx = (roof.contact_field_on(p + Vec2(h, 0), b).y() - roof.contact_field_on(p - Vec2(h, 0), b).y()) / (2 * h);
    worst = std::max(worst, std::abs(day - dbx));
  }
  return worst;
}

}  // namespace contactflow
