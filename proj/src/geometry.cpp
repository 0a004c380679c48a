#include "contactflow/geometry.hpp"

#include <algorithm>
#include <cmath>

namespace contactflow {

double eval_alpha(const Vec3& point, const Vec3& vector) { return ContactForm3::eval(point, vector); }

LeafStraightening::LeafStraightening(std::function<double(double)> F, std::function<double(double)> dF,
                                     std::function<double(double)> N, double ybar)
    : F_(std::move(F)), dF_(std::move(dF)), N_(std::move(N)), ybar_(ybar) {}

ChartJet LeafStraightening::jet(double x, double y) const {
  ChartJet j;
  const double slope = dF_(y);
  j.A = x - F_(y) + F_(ybar_);
  j.B = y;
  j.C = N_(ybar_) - N_(y);
  j.dAB << 1.0, -slope, 0.0, 1.0;
  // N' = y F' for a leaf in the kernel of the contact form.
  j.dC << 0.0, -y * slope;
  return j;
}

ChartJet TranslationShear::jet(double x, double y) const {
  ChartJet j;
  j.A = x - xt_;
  j.B = y - yt_;
  j.C = -zt_ - yt_ * (x - xt_);
  j.dAB.setIdentity();
  j.dC << -yt_, 0.0;
  return j;
}

LinearNormalization::LinearNormalization(double u, double s) : u_(u), s_(s) {
  if (u == 0.0 || !std::isfinite(u)) throw Error(ErrorKind::DegenerateFrame, "linear normalization needs u != 0");
}

ChartJet LinearNormalization::jet(double x, double y) const {
  ChartJet j;
  j.A = x / u_;
  j.B = u_ * y - s_ * x;
  j.C = -s_ * x * x / (2.0 * u_);
  j.dAB << 1.0 / u_, 0.0, -s_, u_;
  j.dC << -s_ * x / u_, 0.0;
  return j;
}

GenericMove::GenericMove(Field A, Field B, Field C) : A_(std::move(A)), B_(std::move(B)), C_(std::move(C)) {}

ChartJet GenericMove::jet(double x, double y) const {
  constexpr double h = 1e-6;
  ChartJet j;
  j.A = A_(x, y);
  j.B = B_(x, y);
  j.C = C_(x, y);
  j.dAB(0, 0) = (A_(x + h, y) - A_(x - h, y)) / (2 * h);
  j.dAB(0, 1) = (A_(x, y + h) - A_(x, y - h)) / (2 * h);
  j.dAB(1, 0) = (B_(x + h, y) - B_(x - h, y)) / (2 * h);
  j.dAB(1, 1) = (B_(x, y + h) - B_(x, y - h)) / (2 * h);
  j.dC(0) = (C_(x + h, y) - C_(x - h, y)) / (2 * h);
  j.dC(1) = (C_(x, y + h) - C_(x, y - h)) / (2 * h);
  return j;
}

ContactChart ContactChart::then(std::shared_ptr<const ContactMove> move) const {
  auto moves = moves_;
  moves.push_back(std::move(move));
  return ContactChart(std::move(moves));
}

ChartJet ContactChart::jet(double x, double y) const {
  ChartJet acc;
  acc.A = x;
  acc.B = y;
  for (const auto& move : moves_) {
    const ChartJet step = move->jet(acc.A, acc.B);
    acc.dC += acc.dAB.transpose() * step.dC;
    acc.dAB = step.dAB * acc.dAB;
    acc.C += step.C;
    acc.A = step.A;
    acc.B = step.B;
  }
  return acc;
}

Vec3 ContactChart::apply(const Vec3& p) const {
  const ChartJet j = jet(p.x(), p.y());
  return {j.A, j.B, p.z() + j.C};
}

Mat3 ContactChart::jacobian(const Vec3& p) const {
  const ChartJet j = jet(p.x(), p.y());
  Mat3 J = Mat3::Zero();
  J.topLeftCorner<2, 2>() = j.dAB;
  J(2, 0) = j.dC(0);
  J(2, 1) = j.dC(1);
  J(2, 2) = 1.0;
  return J;
}

Mat3 ContactChart::jacobian_fd(const Vec3& p, double h) const {
  Mat3 J;
  for (int c = 0; c < 3; ++c) {
    Vec3 dp = Vec3::Zero();
    dp(c) = h;
    J.col(c) = (apply(p + dp) - apply(p - dp)) / (2 * h);
  }
  return J;
}

ChartDiagnostics check_contact_chart(const ContactChart& chart, const std::vector<Vec2>& sample_points,
                                     DerivativeMode mode, double tolerance, double fd_step) {
  ChartDiagnostics d;
  d.tolerance = tolerance;
  d.samples = sample_points.size();
  for (const Vec2& p : sample_points) {
    ChartJet j = chart.jet(p.x(), p.y());
    if (mode == DerivativeMode::FiniteDifference) {
      const double h = fd_step;
      const ChartJet xp = chart.jet(p.x() + h, p.y()), xm = chart.jet(p.x() - h, p.y());
      const ChartJet yp = chart.jet(p.x(), p.y() + h), ym = chart.jet(p.x(), p.y() - h);
      j.dAB << (xp.A - xm.A) / (2 * h), (yp.A - ym.A) / (2 * h), (xp.B - xm.B) / (2 * h), (yp.B - ym.B) / (2 * h);
      j.dC << (xp.C - xm.C) / (2 * h), (yp.C - ym.C) / (2 * h);
    }
    d.det_residual = std::max(d.det_residual, std::abs(j.dAB.determinant() - 1.0));
    d.cx_residual = std::max(d.cx_residual, std::abs(j.dC(0) - (j.B * j.dAB(0, 0) - p.y())));
    d.cy_residual = std::max(d.cy_residual, std::abs(j.dC(1) - j.B * j.dAB(0, 1)));
  }
  return d;
}

double pullback_residual(const ContactChart& chart, const std::vector<Vec3>& points, const std::vector<Vec3>& vectors,
                         DerivativeMode mode, double fd_step) {
  if (points.size() != vectors.size()) throw Error(ErrorKind::InvalidArgument, "points/vectors size mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const Mat3 J = mode == DerivativeMode::Analytic ? chart.jacobian(points[i]) : chart.jacobian_fd(points[i], fd_step);
    const double before = eval_alpha(points[i], vectors[i]);
    const double after = eval_alpha(chart.apply(points[i]), J * vectors[i]);
    worst = std::max(worst, std::abs(after - before));
  }
  return worst;
}

ContactChart reeb_chart_at(const Vec3& point, const Vec3& stable_dir, const Vec3& unstable_vec) {
  constexpr double kernel_tol = 1e-10;
  if (std::abs(eval_alpha(point, stable_dir)) > kernel_tol * std::max(1.0, stable_dir.norm()))
    throw Error(ErrorKind::NotInKernel, "stable direction is not in ker(alpha)");
  if (std::abs(eval_alpha(point, unstable_vec)) > kernel_tol * std::max(1.0, unstable_vec.norm()))
    throw Error(ErrorKind::NotInKernel, "unstable vector is not in ker(alpha)");

  const Vec2 e = stable_dir.head<2>(), u = unstable_vec.head<2>();
  const double cross = e.x() * u.y() - e.y() * u.x();
  if (std::abs(cross) <= 1e-12 * e.norm() * u.norm() || e.norm() == 0.0 || u.norm() == 0.0)
    throw Error(ErrorKind::DegenerateFrame, "planar projections of the frame are parallel");
  if (std::abs(e.y()) <= 1e-12 * e.norm())
    throw Error(ErrorKind::DegenerateFrame, "stable leaf is not a graph over the x^s axis");

  const double x0 = point.x(), y0 = point.y(), z0 = point.z();
  const double k = e.x() / e.y();
  auto F = [x0, y0, k](double y) { return x0 + k * (y - y0); };
  auto dF = [k](double) { return k; };
  auto N = [z0, y0, k](double y) { return z0 + 0.5 * k * (y * y - y0 * y0); };

  ContactChart chart = ContactChart::identity().then(std::make_shared<LeafStraightening>(F, dF, N, y0));
  const Vec3 straightened = chart.apply(point);
  chart = chart.then(std::make_shared<TranslationShear>(straightened.x(), straightened.y(), straightened.z()));
  const Vec3 v = chart.jacobian(point) * unstable_vec;
  return chart.then(std::make_shared<LinearNormalization>(v.x(), v.y()));
}

}  // namespace contactflow
