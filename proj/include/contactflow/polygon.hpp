#pragma once

#include "contactflow/common.hpp"

#include <boost/multiprecision/cpp_int.hpp>

#include <string>
#include <vector>

namespace contactflow {

using Rational = boost::multiprecision::cpp_rational;

struct RVec2 {
  Rational x, y;
  bool operator==(const RVec2& o) const { return x == o.x && y == o.y; }
  bool operator<(const RVec2& o) const { return x < o.x || (x == o.x && y < o.y); }
};

struct RMat2 {
  Rational a, b, c, d;  // [[a, b], [c, d]]
  RVec2 operator*(const RVec2& v) const { return {a * v.x + b * v.y, c * v.x + d * v.y}; }
  Rational det() const { return a * d - b * c; }
  RMat2 inverse() const;
  Mat2 to_double() const;
};

/// Exact value of a finite double.
Rational to_rational(double v);
/// Parses "p/q", an integer, or a decimal literal exactly.
Rational parse_rational(const std::string& text);
double to_double(const Rational& r);
std::string to_string(const Rational& r);

/// Convex polygon with exact vertices, counter-clockwise.
using RPolygon = std::vector<RVec2>;

/// Twice the signed area.
Rational twice_area(const RPolygon& poly);
/// Intersection of a polygon with a convex counter-clockwise clip polygon.
RPolygon clip_convex(const RPolygon& subject, const RPolygon& convex_clip);
RPolygon translate(const RPolygon& poly, const RVec2& shift);
RPolygon transform(const RPolygon& poly, const RMat2& m, const RVec2& offset);
bool contains_closed(const RPolygon& poly, const RVec2& p);
RPolygon unit_square(const Rational& kx = 0, const Rational& ky = 0);

/// Floating-point convex polygon (counter-clockwise).
struct Polygon {
  std::vector<Vec2> vertices;

  static Polygon from_exact(const RPolygon& poly);
  bool contains_closed(const Vec2& p) const;
  double area() const;
  /// Distance from p to the polygon's boundary (p inside or outside).
  double boundary_distance(const Vec2& p) const;
  Vec2 centroid() const;
  Eigen::AlignedBox2d bounds() const;
};

/// c + lx x + ly y + qxx x^2 + qxy x y + qyy y^2.
struct Quadratic2 {
  double c = 0, lx = 0, ly = 0, qxx = 0, qxy = 0, qyy = 0;
  double operator()(const Vec2& p) const {
    return c + lx * p.x() + ly * p.y() + qxx * p.x() * p.x() + qxy * p.x() * p.y() + qyy * p.y() * p.y();
  }
  Vec2 gradient(const Vec2& p) const {
    return {lx + 2 * qxx * p.x() + qxy * p.y(), ly + qxy * p.x() + 2 * qyy * p.y()};
  }
};

struct Range {
  double min, max;
};

/// Extrema of a quadratic over a convex polygon, from vertices, edge critical
/// points, and the interior critical point.
Range quadratic_range(const Quadratic2& q, const Polygon& poly);
/// Exact integral of a quadratic over a polygon (degree-2 triangle rule).
double quadratic_integral(const Quadratic2& q, const Polygon& poly);

}  // namespace contactflow
