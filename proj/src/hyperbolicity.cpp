#include "contactflow/hyperbolicity.hpp"

#include "contactflow/rng.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>

namespace contactflow {

Cone2::Cone2(Vec2 l1, Vec2 l2, double aperture) : l1_(std::move(l1)), l2_(std::move(l2)), a_(aperture) {
  if (!(aperture > 0.0) || !std::isfinite(aperture)) throw Error(ErrorKind::InvalidArgument, "cone aperture must be positive");
  if (std::abs(l1_.x() * l2_.y() - l1_.y() * l2_.x()) < 1e-14)
    throw Error(ErrorKind::InvalidArgument, "cone functionals must be independent");
}

Cone2 Cone2::standard_unstable(double a) { return Cone2(Vec2(1, 2), Vec2(1, -1), a); }
Cone2 Cone2::standard_stable(double a) { return Cone2(Vec2(1, -1), Vec2(1, 2), a); }

Cone2 Cone2::from_axis(const Vec2& axis, double half_angle) {
  if (!(half_angle > 0.0 && half_angle < M_PI / 2))
    throw Error(ErrorKind::InvalidArgument, "half angle must lie in (0, pi/2)");
  const Vec2 u = axis.normalized();
  return Cone2(u, Vec2(-u.y(), u.x()), std::tan(half_angle));
}

Mat2 Cone2::coordinates() const {
  Mat2 L;
  L.row(0) = l1_.transpose();
  L.row(1) = l2_.transpose();
  return L;
}

Vec2 Cone2::axis() const { return coordinates().inverse() * Vec2(1, 0); }

double Cone2::aperture_of(const Vec2& v) const {
  const double d = std::abs(l1_.dot(v));
  if (d == 0.0) return std::numeric_limits<double>::infinity();
  return std::abs(l2_.dot(v)) / d;
}

std::array<Vec2, 2> Cone2::boundary_rays() const {
  const Mat2 inv = coordinates().inverse();
  return {inv * Vec2(1, a_), inv * Vec2(1, -a_)};
}

std::vector<Vec2> Cone2::rays(int n) const {
  if (n < 2) throw Error(ErrorKind::InvalidArgument, "need at least two rays");
  const Mat2 inv = coordinates().inverse();
  std::vector<Vec2> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    // the last ray is the exact boundary
    const double t = k == n - 1 ? a_ : -a_ + 2.0 * a_ * k / (n - 1);
    out.push_back(inv * Vec2(1, t));
  }
  return out;
}

ConeInvarianceReport check_cone_invariance(const std::vector<Mat2>& matrices, const Cone2& cone, int n_rays) {
  if (n_rays < 16) throw Error(ErrorKind::InvalidArgument, "at least 16 rays are required");
  ConeInvarianceReport r;
  r.aperture = cone.aperture();
  const auto rays = cone.rays(n_rays);
  for (const Mat2& M : matrices)
    for (const Vec2& v : rays) {
      r.image_aperture = std::max(r.image_aperture, cone.aperture_of(M * v));
      ++r.rays_tested;
    }
  r.margin = r.aperture - r.image_aperture;
  return r;
}

namespace {

std::vector<Mat2> sampled_jacobians(const TorusMap& map, int n_points) {
  if (map.uniform_jacobian()) return {map.jacobian(Vec2(0.5, 0.5))};
  if (const auto* affine = dynamic_cast<const PiecewiseAffineTorusMap*>(&map)) {
    std::vector<Mat2> out;
    for (const auto& b : affine->branches()) out.push_back(b.matrix);
    return out;
  }
  std::vector<Mat2> out;
  const int side = std::max(1, static_cast<int>(std::ceil(std::sqrt(double(n_points)))));
  for (int i = 0; i < side; ++i)
    for (int j = 0; j < side; ++j) out.push_back(map.jacobian(Vec2((i + 0.5) / side, (j + 0.5) / side)));
  return out;
}

double ratio(const Mat2& P, const Mat2& N, const Vec2& v) { return (N * (P * v)).norm() / (N * v).norm(); }

}  // namespace

ConeInvarianceReport check_cone_invariance(const TorusMap& map, const Cone2& cone, int n_rays, int n_points) {
  return check_cone_invariance(sampled_jacobians(map, n_points), cone, n_rays);
}

RatioRange cone_ratio_range(const Mat2& P, const Cone2& cone, const Mat2& N) {
  RatioRange r{std::numeric_limits<double>::infinity(), 0.0};
  auto consider = [&](const Vec2& v) {
    const double q = ratio(P, N, v);
    r.min = std::min(r.min, q);
    r.max = std::max(r.max, q);
  };
  for (const Vec2& v : cone.boundary_rays()) consider(v);
  // stationary directions of |N P v| / |N v| are the right singular vectors
  // of N P N^{-1}, pulled back by N^{-1}
  const Mat2 Ninv = N.inverse();
  Eigen::JacobiSVD<Mat2> svd(N * P * Ninv, Eigen::ComputeFullV);
  for (int i = 0; i < 2; ++i) {
    const Vec2 v = Ninv * svd.matrixV().col(i);
    if (cone.contains(v, 1e-15)) consider(v);
  }
  return r;
}

ExpansionConstants expansion_constants(const TorusMap& map, const Cone2& unstable, int n, NormKind norm, int n_orbits) {
  const Cone2 stable(unstable.l2(), unstable.l1(), unstable.aperture());
  return expansion_constants(map, unstable, stable, n, norm, n_orbits);
}

ExpansionConstants expansion_constants(const TorusMap& map, const Cone2& unstable, const Cone2& stable, int n,
                                       NormKind norm, int n_orbits) {
  if (n < 1) throw Error(ErrorKind::InvalidArgument, "word length must be at least 1");
  const Mat2 N = norm == NormKind::ConeAdapted ? unstable.coordinates() : Mat2::Identity();

  std::vector<Mat2> products;
  if (map.uniform_jacobian()) {
    const Mat2 J = map.jacobian(Vec2(0.5, 0.5));
    Mat2 P = Mat2::Identity();
    for (int k = 0; k < n; ++k) P = J * P;
    products.push_back(P);
  } else {
    for (int i = 0; i < n_orbits; ++i) {
      CounterRng rng(0x636f6e65ULL, static_cast<std::uint64_t>(i));
      Vec2 p(rng.uniform(), rng.uniform());
      Mat2 P = Mat2::Identity();
      for (int k = 0; k < n; ++k) {
        P = map.jacobian(p) * P;
        p = map.apply(p);
      }
      products.push_back(P);
    }
  }

  ExpansionConstants out;
  out.n = n;
  out.words = products.size();
  out.lambda_u = std::numeric_limits<double>::infinity();
  out.Lambda_u = 0.0;
  out.lambda_s = 0.0;
  constexpr double slack = 1e-12;
  for (const Mat2& P : products) {
    const Mat2 Pinv = P.inverse();
    for (const Vec2& v : unstable.boundary_rays())
      if (!unstable.contains(P * v, slack * (1 + unstable.aperture())))
        throw Error(ErrorKind::ConeNotInvariant, "unstable cone is not mapped into itself");
    for (const Vec2& v : stable.boundary_rays())
      if (!stable.contains(Pinv * v, slack * (1 + stable.aperture())))
        throw Error(ErrorKind::ConeNotInvariant, "stable cone is not mapped into itself by the inverse");
    const RatioRange u = cone_ratio_range(P, unstable, N);
    const RatioRange s = cone_ratio_range(Pinv, stable, N);
    out.lambda_u = std::min(out.lambda_u, u.min);
    out.Lambda_u = std::max(out.Lambda_u, u.max);
    out.lambda_s = std::max(out.lambda_s, 1.0 / s.min);
  }
  return out;
}

BunchingResult check_bunching(const HyperbolicityParams& p) {
  BunchingResult r;
  r.value = std::pow(p.lambda_s, 1.0 - p.beta) / p.lambda_u * std::pow(p.Lambda_u, 1.0 + p.beta);
  r.margin = 1.0 - r.value;
  r.satisfied = r.value < 1.0;
  return r;
}

double cone_clearance(const Cone2& cone, const Vec2& v) {
  auto line_angle = [](const Vec2& a, const Vec2& b) {
    return std::atan2(std::abs(a.x() * b.y() - a.y() * b.x()), std::abs(a.dot(b)));
  };
  double d = std::numeric_limits<double>::infinity();
  for (const Vec2& r : cone.boundary_rays()) d = std::min(d, line_angle(v, r));
  return cone.contains(v) ? -d : d;
}

TransversalityReport check_transversality(const TorusMap& map, const Cone2& stable_cone, int samples_per_segment) {
  TransversalityReport rep;
  rep.min_clearance = std::numeric_limits<double>::infinity();
  constexpr double h = 1e-7;
  const auto segments = map.discontinuities();
  rep.segments = segments.size();
  for (const Segment& seg : segments) {
    const Vec2 d = seg.b - seg.a;
    const Vec2 normal = Vec2(d.y(), -d.x()).normalized();
    for (int k = 1; k <= samples_per_segment; ++k) {
      const Vec2 q = seg.a + d * (double(k) / (samples_per_segment + 1));
      for (double side : {-1.0, 1.0}) {
        const Vec2 qs(wrap_unit(q.x() + side * h * normal.x()), wrap_unit(q.y() + side * h * normal.y()));
        rep.min_clearance = std::min(rep.min_clearance, cone_clearance(stable_cone, map.jacobian(qs) * d));
        ++rep.samples;
      }
    }
  }
  if (rep.samples == 0) rep.min_clearance = M_PI / 2;  // nothing to be transversal to
  return rep;
}

}  // namespace contactflow
