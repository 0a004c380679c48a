#include <doctest.h>

#include "contactflow/flow.hpp"
#include "contactflow/geometry.hpp"
#include "contactflow/parallel.hpp"
#include "test_support.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

using namespace contactflow;
using testsupport::random_points2;
using testsupport::torus_gap;

namespace {

// The example map written out directly from its two-case formula.
Vec2 f0_direct(const Vec2& p) {
  const double x = p.x(), y = p.y();
  const double shift = (y <= 1.0 - x) ? 0.0 : 0.5;
  return {wrap_unit(x + y), wrap_unit(x / 2 + 3 * y / 2 - shift)};
}

double torus_dist(const Vec2& a, const Vec2& b) {
  return std::hypot(torus_gap(a.x(), b.x()), torus_gap(a.y(), b.y()));
}

bool same_point(const FlowPoint& a, const FlowPoint& b, double tol) {
  return torus_dist(a.base(), b.base()) <= tol && std::abs(a.z - b.z) <= tol;
}

const SuspensionFlow& f0_flow() {
  static const SuspensionFlow flow = make_f0_flow(1.0);
  return flow;
}

// Orbit from p over time t stays at least `margin` away from branch edges and
// from the section/roof at both ends.
bool orbit_is_clear(const SuspensionFlow& flow, const FlowPoint& p, double t, double margin) {
  if (flow.map().boundary_distance(p.base()) < margin) return false;
  if (p.z < margin || flow.tau(p.base()) - p.z < margin) return false;
  Vec2 q = p.base();
  double remaining = t - (flow.tau(q) - p.z);
  while (remaining >= 0.0) {
    q = flow.map().apply(q);
    if (flow.map().boundary_distance(q) < margin) return false;
    const double tq = flow.tau(q);
    if (remaining < margin || std::abs(remaining - tq) < margin) return false;
    remaining -= tq;
  }
  return true;
}

}  // namespace

TEST_CASE("f0 agrees with its two-case formula") {
  const auto map = make_f0_map();
  for (const Vec2& p : random_points2(21, 10000)) CHECK(torus_dist(map.apply(p), f0_direct(p)) < 1e-12);
  // hypotenuse belongs to the lower piece
  CHECK(map.declared_piece_of(Vec2(0.25, 0.75)) == 0);
  CHECK(map.declared_piece_of(Vec2(0.25, 0.75 + 1e-12)) == 1);
  CHECK(map.is_symplectic());
  CHECK(map.uniform_jacobian());
}

TEST_CASE("branches of f0 partition the square") {
  const auto map = make_f0_map();
  CHECK(map.num_branches() == 4);
  Rational total = 0;
  for (const auto& b : map.branches()) total += twice_area(b.exact_domain);
  CHECK(total == 2);
  // every branch image lies in the unit square without further wrapping
  for (const Vec2& p : random_points2(22, 2000)) {
    const auto& b = map.branches()[static_cast<std::size_t>(map.branch_of(p))];
    const Vec2 w = b.matrix * p + b.offset;
    CHECK(w.x() > -1e-12);
    CHECK(w.x() < 1 + 1e-12);
    CHECK(w.y() > -1e-12);
    CHECK(w.y() < 1 + 1e-12);
  }
}

TEST_CASE("inverse of f0") {
  const auto map = make_f0_map();
  const RMat2 inv = map.pieces()[0].matrix.inverse();
  CHECK(inv.a == Rational(3, 2));
  CHECK(inv.b == -1);
  CHECK(inv.c == Rational(-1, 2));
  CHECK(inv.d == 1);
  double worst = 0.0;
  for (const Vec2& p : random_points2(23, 10000)) {
    worst = std::max(worst, torus_dist(map.apply_inverse(map.apply(p)), p));
    worst = std::max(worst, torus_dist(map.apply(map.apply_inverse(p)), p));
  }
  CHECK(worst < 1e-12);
  // the inverse jumps across x = 0 but not across a generic vertical line
  int jumps = 0;
  for (double y = 0.05; y < 1.0; y += 0.1) {
    if (torus_dist(map.apply_inverse(Vec2(1e-9, y)), map.apply_inverse(Vec2(1 - 1e-9, y))) > 1e-3) ++jumps;
    CHECK(torus_dist(map.apply_inverse(Vec2(0.37 - 1e-9, y)), map.apply_inverse(Vec2(0.37 + 1e-9, y))) < 1e-6);
  }
  CHECK(jumps == 10);
}

TEST_CASE("roof on a single unreduced triangle") {
  const auto pieces = f0_pieces();
  const Polygon tri = Polygon::from_exact(pieces[0].domain);
  const Quadratic2 q = affine_roof_quadratic(pieces[0].matrix, pieces[0].offset, tri, 1.0);
  // tau = c - (x^2 + 2xy + 3y^2)/4 with c = 1 + max over the triangle, which
  // sits at a vertex because the form is convex
  double vertex_max = 0.0;
  for (const Vec2& v : tri.vertices)
    vertex_max = std::max(vertex_max, (v.x() * v.x() + 2 * v.x() * v.y() + 3 * v.y() * v.y()) / 4);
  CHECK(vertex_max == 0.75);
  CHECK(q.c == doctest::Approx(1.0 + vertex_max).epsilon(1e-15));
  CHECK(q.qxx == -0.25);
  CHECK(q.qxy == -0.5);
  CHECK(q.qyy == -0.75);
  CHECK(q.lx == 0.0);
  CHECK(q.ly == 0.0);
  for (const Vec2& p : random_points2(24, 100)) {
    const Vec2 g = q.gradient(p);
    CHECK(g.x() == doctest::Approx(-p.x() / 2 - p.y() / 2).epsilon(1e-14));
    CHECK(g.y() == doctest::Approx(-p.x() / 2 - 3 * p.y() / 2).epsilon(1e-14));
  }
}

TEST_CASE("non-unimodular piece is rejected by the roof") {
  std::vector<AffinePiece> pieces{{{{0, 0}, {1, 0}, {1, 1}, {0, 1}}, RMat2{2, 0, 0, 1}, {0, 0}}};
  auto map = std::make_shared<const PiecewiseAffineTorusMap>(pieces);
  try {
    QuadraticRoof roof(map, 1.0);
    FAIL("expected ClosednessViolation");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::ClosednessViolation);
  }
}

TEST_CASE("roof gradient equals the contact field of the reduced map") {
  const auto& flow = f0_flow();
  double worst = 0.0, closed = 0.0;
  for (const Vec2& p : random_points2(25, 10000)) {
    const int b = flow.map().branch_of(p);
    const Vec2 g = flow.roof().gradient_on(p, b);
    // a = y - f2 d_x f1, b = -f2 d_y f1 with f2 the reduced second coordinate
    const double f2 = f0_direct(p).y();
    worst = std::max(worst, std::abs(g.x() - (p.y() - f2)));
    worst = std::max(worst, std::abs(g.y() - (-f2)));
  }
  CHECK(worst < 1e-12);
  for (const auto& b : dynamic_cast<const PiecewiseAffineTorusMap&>(flow.map()).branches()) {
    // d_y a - d_x b = (1 - m11 m22) + m12 m21 = 1 - det, exactly
    closed = std::max(closed, std::abs(to_double(1 - b.exact_matrix.det())));
  }
  CHECK(closed == 0.0);
}

TEST_CASE("roof bounds and volume") {
  const auto& flow = f0_flow();
  const auto& roof = dynamic_cast<const QuadraticRoof&>(flow.roof());
  const auto& map = dynamic_cast<const PiecewiseAffineTorusMap&>(flow.map());
  double binding = 1e300;
  for (std::size_t b = 0; b < map.branches().size(); ++b)
    binding = std::min(binding, quadratic_range(roof.branch_quadratics()[b], map.branches()[b].domain).min);
  CHECK(binding == doctest::Approx(1.0).epsilon(1e-14));
  double lo = 1e300, hi = -1e300, sum = 0.0, sum2 = 0.0;
  const auto pts = random_points2(26, 200000);
  for (const Vec2& p : pts) {
    const double t = flow.tau(p);
    lo = std::min(lo, t);
    hi = std::max(hi, t);
    sum += t;
    sum2 += t * t;
  }
  CHECK(lo >= roof.tau_minus() - 1e-12);
  CHECK(hi <= roof.tau_max() + 1e-12);
  const double n = static_cast<double>(pts.size());
  const double mean = sum / n, se = std::sqrt((sum2 / n - mean * mean) / n);
  CHECK(std::abs(mean - flow.volume()) < 3 * se);
}

TEST_CASE("flow stepping examples") {
  const auto& flow = f0_flow();
  const FlowPoint p = flow.make_point(0.1, 0.2, 0.0);
  const double tau = flow.tau(p.base());
  const FlowPoint inside = flow_forward(flow, p, 0.5 * tau);
  CHECK(inside.x == 0.1);
  CHECK(inside.y == 0.2);
  CHECK(inside.z == 0.5 * tau);
  const FlowPoint landed = flow_forward(flow, p, tau);
  const Vec2 img = f0_direct(p.base());
  CHECK(landed.x == doctest::Approx(img.x()));
  CHECK(landed.y == doctest::Approx(img.y()));
  CHECK(landed.z == 0.0);
  CHECK_THROWS_AS(flow_forward(flow, p, std::nan("")), Error);
  CHECK_THROWS_AS(flow_backward(flow, p, INFINITY), Error);
  // backward from the section jumps first
  const FlowPoint back = flow_backward(flow, landed, 0.0);
  CHECK(back.z == 0.0);
  const FlowPoint prev = flow_backward(flow, landed, 1e-9);
  CHECK(prev.x == doctest::Approx(0.1));
  CHECK(prev.z == doctest::Approx(tau - 1e-9));
}

TEST_CASE("property: semigroup and inversion laws") {
  const auto& flow = f0_flow();
  const auto samples = flow.sample_invariant(31, 10000);
  CounterRng rng(32, 0);
  int semigroup_fail = 0, inverse_fail = 0;
  for (const FlowPoint& p : samples) {
    const double t1 = rng.uniform(0, 8), t2 = rng.uniform(0, 8);
    const FlowPoint a = flow_forward(flow, p, t1 + t2);
    const FlowPoint b = flow_forward(flow, flow_forward(flow, p, t1), t2);
    if (!same_point(a, b, 1e-10)) ++semigroup_fail;
    if (!same_point(flow_backward(flow, a, t1 + t2), p, 1e-10)) ++inverse_fail;
  }
  CHECK(semigroup_fail == 0);
  CHECK(inverse_fail == 0);
}

TEST_CASE("return map and its iterates") {
  const auto& flow = f0_flow();
  for (const Vec2& p : random_points2(33, 1000)) {
    const ReturnStep step = flow.return_map(p);
    CHECK(step.time == flow.tau(p));
    CHECK(torus_dist(step.image, f0_direct(p)) < 1e-12);
    const Itinerary it = flow.iterate(p, 6);
    double expected = 0.0;
    Vec2 q = p;
    for (int k = 0; k < 6; ++k) {
      expected += flow.tau(q);
      q = f0_direct(q);
    }
    CHECK(it.time == doctest::Approx(expected).epsilon(1e-12));
    CHECK(it.pieces.size() == 6);
  }
  // finite-difference Jacobian of the planar return map has unit determinant
  int checked = 0;
  for (const Vec2& p : random_points2(34, 2000)) {
    if (flow.map().boundary_distance(p) < 1e-4) continue;
    constexpr double h = 1e-6;
    Mat2 J;
    for (int c = 0; c < 2; ++c) {
      Vec2 dp = Vec2::Zero();
      dp(c) = h;
      const Vec2 up = flow.return_map(p + dp).image, dn = flow.return_map(p - dp).image;
      J(0, c) = torus_gap(up.x(), dn.x()) / (2 * h);
      J(1, c) = torus_gap(up.y(), dn.y()) / (2 * h);
    }
    CHECK(std::abs(J.determinant() - 1.0) < 1e-6);
    ++checked;
  }
  CHECK(checked > 1500);
}

TEST_CASE("invariant sampling statistics") {
  const auto& flow = f0_flow();
  SampleStats stats;
  const std::size_t n = 200000;
  const auto pts = flow.sample_invariant(41, n, &stats);
  const double p_acc = flow.volume() / flow.roof().tau_max();
  const double rate = static_cast<double>(stats.accepted) / static_cast<double>(stats.attempts);
  const double se = std::sqrt(p_acc * (1 - p_acc) / static_cast<double>(stats.attempts));
  CHECK(std::abs(rate - p_acc) < 3 * se);
  for (const FlowPoint& p : pts) {
    CHECK(p.z >= 0.0);
    CHECK(p.z < flow.tau(p.base()));
  }
  // conditional mean of z in a small cell is about tau/2
  double zsum = 0.0;
  int count = 0;
  for (const FlowPoint& p : pts)
    if (std::abs(p.x - 0.3) < 0.02 && std::abs(p.y - 0.3) < 0.02) {
      zsum += p.z;
      ++count;
    }
  REQUIRE(count > 100);
  const double tau_c = flow.tau(Vec2(0.3, 0.3));
  CHECK(std::abs(zsum / count - tau_c / 2) < 4 * tau_c / std::sqrt(12.0 * count) + 0.01);

  // box masses against exact Lebesgue fractions
  CounterRng rng(42, 0);
  for (int k = 0; k < 10; ++k) {
    const double x0 = rng.uniform(0, 0.7), y0 = rng.uniform(0, 0.7), z0 = rng.uniform(0, 0.6);
    const double w = 0.1 + 0.2 * rng.uniform(), h = 0.1 + 0.2 * rng.uniform(), d = 0.1 + 0.3 * rng.uniform();
    std::size_t inside = 0;
    for (const FlowPoint& p : pts)
      if (p.x >= x0 && p.x < x0 + w && p.y >= y0 && p.y < y0 + h && p.z >= z0 && p.z < z0 + d) ++inside;
    const double frac = w * h * d / flow.volume();
    const double sigma = std::sqrt(frac * (1 - frac) / static_cast<double>(n));
    CHECK(std::abs(static_cast<double>(inside) / static_cast<double>(n) - frac) < 3 * sigma);
  }
}

TEST_CASE("sampling is independent of the worker count") {
  const auto& flow = f0_flow();
  set_num_threads(1);
  const auto a = flow.sample_invariant(7, 20000);
  set_num_threads(4);
  const auto b = flow.sample_invariant(7, 20000);
  set_num_threads(1);
  bool identical = true;
  for (std::size_t i = 0; i < a.size(); ++i)
    identical = identical && a[i].x == b[i].x && a[i].y == b[i].y && a[i].z == b[i].z;
  CHECK(identical);
}

TEST_CASE("property: contact form preserved across roof crossings") {
  const auto& flow = f0_flow();
  const auto pts = flow.sample_invariant(51, 14000);
  CounterRng rng(52, 0);
  double worst = 0.0;
  int used = 0;
  for (const FlowPoint& p : pts) {
    if (used == 10000) break;
    const int crossings = 1 + static_cast<int>(rng.uniform() * 5);
    // a time with exactly `crossings` roof hits
    double t = flow.tau(p.base()) - p.z;
    Vec2 q = flow.map().apply(p.base());
    for (int k = 1; k < crossings; ++k) {
      t += flow.tau(q);
      q = flow.map().apply(q);
    }
    t += rng.uniform() * flow.tau(q);
    const Vec3 v = testsupport::random_vec3(rng).normalized();
    if (!orbit_is_clear(flow, p, t, 1e-4)) continue;
    const FlowPoint end = flow.forward(p, t);
    const Vec3 dv = flow_differential_fd(flow, p, v, t);
    worst = std::max(worst, std::abs(eval_alpha(end.vec(), dv) - eval_alpha(p.vec(), v)));
    ++used;
  }
  CHECK(used == 10000);
  CHECK(worst < 1e-6);
  // Reeb direction
  for (const FlowPoint& p : pts) CHECK(eval_alpha(p.vec(), Vec3(0, 0, 1)) == 1.0);
}

TEST_CASE("volume preservation on boxes") {
  const auto& flow = f0_flow();
  const std::size_t n = 200000;
  const auto pts = flow.sample_invariant(61, n);
  CounterRng rng(62, 0);
  for (double t : {1.0, 5.0, 20.0}) {
    std::vector<FlowPoint> moved(n);
    for (std::size_t i = 0; i < n; ++i) moved[i] = flow.forward(pts[i], t);
    for (int k = 0; k < 20; ++k) {
      const double x0 = rng.uniform(0, 0.8), y0 = rng.uniform(0, 0.8), z0 = rng.uniform(0, 0.5);
      const double w = 0.1 + 0.1 * rng.uniform(), h = 0.1 + 0.1 * rng.uniform(), d = 0.2 + 0.3 * rng.uniform();
      std::size_t inside = 0;
      for (const FlowPoint& p : moved)
        if (p.x >= x0 && p.x < x0 + w && p.y >= y0 && p.y < y0 + h && p.z >= z0 && p.z < z0 + d) ++inside;
      // the box lies below tau_minus = 1, so its mass is its Lebesgue volume
      const double frac = w * h * d / flow.volume();
      const double sigma = std::sqrt(frac * (1 - frac) / static_cast<double>(n));
      CHECK(std::abs(static_cast<double>(inside) / static_cast<double>(n) - frac) < 3 * sigma);
    }
  }
}

TEST_CASE("trajectory dump") {
  const auto& flow = f0_flow();
  std::ostringstream out;
  write_trajectory_csv(out, flow, flow.make_point(0.2, 0.3, 0.0), 3.0, 0.5);
  const std::string text = out.str();
  CHECK(text.rfind("t,x,y,z,piece_id\n", 0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == 8);
}

TEST_CASE("perturbed map") {
  SUBCASE("zero shear recovers f0 and its roof") {
    const SuspensionFlow flow = make_perturbed_flow(0.0);
    const auto& base = f0_flow();
    for (const Vec2& p : random_points2(71, 2000)) {
      CHECK(torus_dist(flow.map().apply(p), base.map().apply(p)) < 1e-12);
      CHECK(std::abs(flow.tau(p) - base.tau(p)) < 1e-9);
    }
    CHECK(std::abs(flow.roof().tau_max() - base.roof().tau_max()) < 1e-12);
  }
  SUBCASE("eps = 0.02") {
    constexpr double eps = 0.02;
    const SuspensionFlow flow = make_perturbed_flow(eps);
    const auto& map = dynamic_cast<const ShearPerturbedMap&>(flow.map());
    const auto& roof = dynamic_cast<const LineIntegralRoof&>(flow.roof());
    const auto pts = random_points2(72, 1000);
    CHECK(closedness_residual(roof, map, pts) < 1e-8);
    CHECK(roof.path_residual() < 1e-12);

    // closed-form oracle: the roof of g o phi_k, with phi_k the wrapped shear,
    // is tau_g o phi_k + eps (cos 2 pi x - 1)/(2 pi) + k x + const
    const auto base = make_f0_flow(1.0);
    const auto& base_roof = dynamic_cast<const QuadraticRoof&>(base.roof());
    double worst = 0.0, worst_grad = 0.0, lowest = 1e300;
    for (const Vec2& p : pts) {
      const int b = map.branch_of(p);
      const int k = map.shear_shift(b), j0 = map.base_branch(b);
      const Vec2 q(p.x(), p.y() + eps * std::sin(2 * std::numbers::pi * p.x()) - k);
      const double lift = eps / std::numbers::pi + (k < 0 ? 1.0 : 0.0);
      const double expected = base_roof.branch_quadratics()[j0](q) +
                              eps * (std::cos(2 * std::numbers::pi * p.x()) - 1) / (2 * std::numbers::pi) + k * p.x() +
                              lift;
      worst = std::max(worst, std::abs(roof.value_on(p, b) - expected));
      constexpr double h = 1e-6;
      const Vec2 fd((roof.value_on(p + Vec2(h, 0), b) - roof.value_on(p - Vec2(h, 0), b)) / (2 * h),
                    (roof.value_on(p + Vec2(0, h), b) - roof.value_on(p - Vec2(0, h), b)) / (2 * h));
      worst_grad = std::max(worst_grad, (fd - roof.contact_field_on(p, b)).norm());
      lowest = std::min(lowest, roof.value_on(p, b));
    }
    CHECK(worst < 1e-12);
    CHECK(worst_grad < 1e-7);
    CHECK(lowest >= 1.0);

    // inverse and Jacobian
    double inv = 0.0, jac = 0.0;
    for (const Vec2& p : pts) {
      inv = std::max(inv, torus_dist(map.apply_inverse(map.apply(p)), p));
      if (map.boundary_distance(p) < 1e-4) continue;
      constexpr double h = 1e-6;
      Mat2 J;
      for (int c = 0; c < 2; ++c) {
        Vec2 dp = Vec2::Zero();
        dp(c) = h;
        const Vec2 up = map.apply(p + dp), dn = map.apply(p - dp);
        J(0, c) = torus_gap(up.x(), dn.x()) / (2 * h);
        J(1, c) = torus_gap(up.y(), dn.y()) / (2 * h);
      }
      jac = std::max(jac, (J - map.jacobian(p)).norm());
      CHECK(std::abs(map.jacobian(p).determinant() - 1.0) < 1e-12);
    }
    CHECK(inv < 1e-12);
    CHECK(jac < 1e-6);

    // contact invariance through crossings
    const auto samples = flow.sample_invariant(73, 3000);
    CounterRng rng(74, 0);
    double alpha_worst = 0.0;
    int used = 0;
    for (const FlowPoint& p : samples) {
      const double t = rng.uniform(1.0, 5.0);
      if (!orbit_is_clear(flow, p, t, 1e-4)) continue;
      const Vec3 v = testsupport::random_vec3(rng).normalized();
      const Vec3 dv = flow_differential_fd(flow, p, v, t);
      alpha_worst = std::max(alpha_worst, std::abs(eval_alpha(flow.forward(p, t).vec(), dv) - eval_alpha(p.vec(), v)));
      ++used;
    }
    CHECK(used > 2000);
    CHECK(alpha_worst < 1e-6);

    // roof bounds on samples
    for (const Vec2& p : random_points2(75, 5000)) {
      CHECK(flow.tau(p) >= 1.0);
      CHECK(flow.tau(p) <= roof.tau_max());
    }
  }
}
