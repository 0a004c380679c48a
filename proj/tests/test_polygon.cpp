#include <doctest.h>

#include "contactflow/polygon.hpp"
#include "test_support.hpp"

using namespace contactflow;

TEST_CASE("rational parsing and exact conversion") {
  CHECK(parse_rational("3/2") == Rational(3, 2));
  CHECK(parse_rational("-1/2") == Rational(-1, 2));
  CHECK(parse_rational("0.25") == Rational(1, 4));
  CHECK(parse_rational("7") == Rational(7));
  CHECK(parse_rational("010") == Rational(10));
  CHECK(parse_rational("-0.05") == Rational(-1, 20));
  CHECK(to_rational(0.375) == Rational(3, 8));
  CHECK(to_rational(-1.5) == Rational(-3, 2));
  CHECK(to_double(to_rational(0.1)) == 0.1);
  CHECK(to_string(Rational(-3, 4)) == "-3/4");
  CHECK_THROWS_AS(parse_rational("1/0"), Error);
  CHECK_THROWS_AS(parse_rational("abc"), Error);
}

TEST_CASE("clipping a triangle against unit squares") {
  const RPolygon tri{{0, 0}, {2, 0}, {0, 2}};
  Rational total = 0;
  for (int kx = 0; kx < 2; ++kx)
    for (int ky = 0; ky < 2; ++ky) total += twice_area(clip_convex(tri, unit_square(kx, ky)));
  CHECK(total == 4);  // twice the area 2
  const RPolygon corner = clip_convex(tri, unit_square(1, 1));
  CHECK(corner.size() <= 2);  // touches (1,1) only
  CHECK(twice_area(clip_convex(tri, unit_square(0, 0))) == 2);
}

TEST_CASE("matrix inverse is exact") {
  const RMat2 m{1, 1, Rational(1, 2), Rational(3, 2)};
  const RMat2 inv = m.inverse();
  CHECK(inv.a == Rational(3, 2));
  CHECK(inv.b == -1);
  CHECK(inv.c == Rational(-1, 2));
  CHECK(inv.d == 1);
  CHECK(m.det() == 1);
}

TEST_CASE("quadratic extrema over a polygon match dense sampling") {
  const Polygon square = Polygon::from_exact(unit_square());
  // min of a convex bowl is interior, max of a saddle along an edge
  const Quadratic2 bowl{0.0, -0.6, -0.8, 1.0, 0.0, 1.0};
  const Quadratic2 saddle{0.1, 0.3, -0.2, -1.3, 0.4, 0.9};
  for (const Quadratic2& q : {bowl, saddle}) {
    const Range r = quadratic_range(q, square);
    double lo = 1e300, hi = -1e300;
    for (int i = 0; i <= 400; ++i)
      for (int j = 0; j <= 400; ++j) {
        const double v = q(Vec2(i / 400.0, j / 400.0));
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    CHECK(r.min <= lo + 1e-12);
    CHECK(r.max >= hi - 1e-12);
    CHECK(r.min == doctest::Approx(lo).epsilon(1e-4));
    CHECK(r.max == doctest::Approx(hi).epsilon(1e-4));
  }
  CHECK(quadratic_range(bowl, square).min == doctest::Approx(-0.25));
}

TEST_CASE("quadratic integral is exact on triangles") {
  // integral of x^2 + x y over the unit right triangle = 1/12 + 1/24
  const Polygon tri = Polygon::from_exact({{0, 0}, {1, 0}, {0, 1}});
  const Quadratic2 q{0, 0, 0, 1, 1, 0};
  CHECK(quadratic_integral(q, tri) == doctest::Approx(1.0 / 12 + 1.0 / 24).epsilon(1e-14));
  const Polygon square = Polygon::from_exact(unit_square());
  CHECK(quadratic_integral(Quadratic2{2, 0, 0, 0, 0, 3}, square) == doctest::Approx(3.0));
}

TEST_CASE("boundary distance and containment") {
  const Polygon square = Polygon::from_exact(unit_square());
  CHECK(square.contains_closed(Vec2(0, 0)));
  CHECK(square.contains_closed(Vec2(1, 0.5)));
  CHECK_FALSE(square.contains_closed(Vec2(1.01, 0.5)));
  CHECK(square.boundary_distance(Vec2(0.5, 0.4)) == doctest::Approx(0.4));
  CHECK(square.area() == doctest::Approx(1.0));
}
