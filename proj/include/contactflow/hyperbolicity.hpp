#pragma once

#include "contactflow/common.hpp"
#include "contactflow/flow.hpp"
#include "contactflow/torus_map.hpp"

#include <array>
#include <vector>

namespace contactflow {

/// Planar cone {v : |l2 . v| <= a |l1 . v|}. The row vectors (l1, l2) give
/// "cone coordinates" c = L v; the axis is the kernel of l2.
class Cone2 {
 public:
  Cone2(Vec2 l1, Vec2 l2, double aperture);

  /// {|x - y| <= a |x + 2y|}, the unstable family around (1, 1).
  static Cone2 standard_unstable(double a);
  /// {|x + 2y| <= a |x - y|}, the stable family around (1, -1/2).
  static Cone2 standard_stable(double a);
  /// Cone with the given axis direction and half-angle (radians).
  static Cone2 from_axis(const Vec2& axis, double half_angle);

  double aperture() const { return a_; }
  const Vec2& l1() const { return l1_; }
  const Vec2& l2() const { return l2_; }
  Mat2 coordinates() const;  // rows l1, l2
  Vec2 axis() const;

  /// |l2 v| / |l1 v| (infinite when l1 v = 0).
  double aperture_of(const Vec2& v) const;
  bool contains(const Vec2& v, double slack = 0.0) const { return aperture_of(v) <= a_ + slack; }
  /// The two boundary rays, normalized to l1 v = 1.
  std::array<Vec2, 2> boundary_rays() const;
  /// n directions spread over the cone in cone coordinates, boundary included.
  std::vector<Vec2> rays(int n) const;
  Cone2 with_aperture(double a) const { return Cone2(l1_, l2_, a); }

 private:
  Vec2 l1_, l2_;
  double a_;
};

/// Cone {(eta, xi, zeta) : (eta, xi) in base, delta |zeta| <= |(eta, xi)|}.
struct ConeField3 {
  Cone2 base;
  double delta;
  bool contains(const Vec3& v) const {
    return base.contains(v.head<2>()) && delta * std::abs(v.z()) <= v.head<2>().norm();
  }
};

struct ConeInvarianceReport {
  double aperture = 0.0;
  double image_aperture = 0.0;  // max over tested rays and Jacobians
  double margin = 0.0;          // aperture - image_aperture
  std::size_t rays_tested = 0;
  bool strictly_invariant() const { return margin > 0.0; }
};

/// Images of n_rays directions (boundary included) under every distinct
/// branch Jacobian, or under Jacobians at `n_points` sampled base points when
/// the Jacobian varies.
ConeInvarianceReport check_cone_invariance(const TorusMap& map, const Cone2& cone, int n_rays, int n_points = 256);
/// Same for an explicit list of matrices.
ConeInvarianceReport check_cone_invariance(const std::vector<Mat2>& matrices, const Cone2& cone, int n_rays);

enum class NormKind {
  ConeAdapted,  // Euclidean norm of the cone coordinates (l1 v, l2 v)
  Euclidean,
};

struct ExpansionConstants {
  int n = 1;
  double lambda_u = 1.0;  // min over unstable cone of |P v| / |v|
  double Lambda_u = 1.0;  // max over unstable cone of |P v| / |v|
  double lambda_s = 1.0;  // 1 / min over stable cone of |P^{-1} v| / |v|
  std::size_t words = 0;  // number of Jacobian products examined
};

/// Extrema of |N P v| / |N v| over a cone, exact for each product: taken over
/// the boundary rays and the stationary directions inside the cone.
struct RatioRange {
  double min, max;
};
RatioRange cone_ratio_range(const Mat2& P, const Cone2& cone, const Mat2& norm);

/// Expansion constants of n-step products. Uses M^n when every branch has
/// the same matrix, otherwise products along `n_orbits` sampled orbits.
/// The stable cone defaults to the unstable cone with swapped functionals.
/// Throws ConeNotInvariant when a cone is not mapped into itself.
ExpansionConstants expansion_constants(const TorusMap& map, const Cone2& unstable, int n,
                                       NormKind norm = NormKind::ConeAdapted, int n_orbits = 4096);
ExpansionConstants expansion_constants(const TorusMap& map, const Cone2& unstable, const Cone2& stable, int n,
                                       NormKind norm = NormKind::ConeAdapted, int n_orbits = 4096);

struct HyperbolicityParams {
  double lambda_u = 2.0, lambda_s = 0.5, Lambda_u = 2.0;
  double beta = 0.0;
  double t00 = 0.25;
  bool valid() const {
    return lambda_u > 1.0 && lambda_s > 0.0 && lambda_s < 1.0 && Lambda_u >= lambda_u && beta >= 0.0 && beta < 1.0;
  }
};

/// Minimal time for cone invariance, a quarter of the roof's lower bound.
inline double default_t00(const RoofFunction& roof) { return roof.tau_minus() / 4.0; }

struct BunchingResult {
  double value = 0.0;  // lambda_s^(1-beta) lambda_u^(-1) Lambda_u^(1+beta)
  double margin = 0.0; // 1 - value
  bool satisfied = false;
};
BunchingResult check_bunching(const HyperbolicityParams& params);

struct TransversalityReport {
  double min_clearance = 0.0;  // radians; <= 0 means an image tangent lies in the stable cone
  std::size_t samples = 0;
  std::size_t segments = 0;
  bool transversal() const { return min_clearance > 0.0; }
};

/// Signed angle from the line through v to the nearest boundary ray of the
/// cone: positive outside, non-positive inside.
double cone_clearance(const Cone2& cone, const Vec2& v);

/// For sample points on each discontinuity segment K, the tangent of the
/// image of K (from both sides) is tested against the stable cone.
TransversalityReport check_transversality(const TorusMap& map, const Cone2& stable_cone, int samples_per_segment = 64);

}  // namespace contactflow
