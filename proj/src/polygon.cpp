#include "contactflow/polygon.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace contactflow {

RMat2 RMat2::inverse() const {
  const Rational det_value = det();
  if (det_value == 0) throw Error(ErrorKind::InvalidArgument, "singular matrix");
  return {d / det_value, -b / det_value, -c / det_value, a / det_value};
}

Mat2 RMat2::to_double() const {
  Mat2 m;
  m << contactflow::to_double(a), contactflow::to_double(b), contactflow::to_double(c), contactflow::to_double(d);
  return m;
}

Rational to_rational(double v) {
  if (!std::isfinite(v)) throw Error(ErrorKind::NonFinite, "cannot convert non-finite value to rational");
  int exponent = 0;
  const double mantissa = std::frexp(v, &exponent);
  // mantissa * 2^53 is an exact integer for doubles.
  const auto scaled = static_cast<long long>(std::ldexp(mantissa, 53));
  Rational r(scaled);
  exponent -= 53;
  boost::multiprecision::cpp_int pow2 = 1;
  pow2 <<= std::abs(exponent);
  if (exponent >= 0) return r * Rational(pow2);
  return r / Rational(pow2);
}

namespace {

// Decimal integer; cpp_int would read a leading zero as an octal prefix.
boost::multiprecision::cpp_int parse_decimal_int(std::string digits) {
  bool negative = false;
  if (!digits.empty() && (digits[0] == '-' || digits[0] == '+')) {
    negative = digits[0] == '-';
    digits.erase(0, 1);
  }
  if (digits.empty() || digits.find_first_not_of("0123456789") != std::string::npos)
    throw Error(ErrorKind::ConfigError, "bad integer '" + digits + "'");
  digits.erase(0, std::min(digits.find_first_not_of('0'), digits.size() - 1));
  boost::multiprecision::cpp_int v(digits);
  return negative ? boost::multiprecision::cpp_int(-v) : v;
}

}  // namespace

Rational parse_rational(const std::string& text) {
  try {
    const auto slash = text.find('/');
    if (slash != std::string::npos) {
      const auto num = parse_decimal_int(text.substr(0, slash));
      const auto den = parse_decimal_int(text.substr(slash + 1));
      if (den == 0) throw Error(ErrorKind::ConfigError, "zero denominator in '" + text + "'");
      return Rational(num, den);
    }
    if (text.find_first_of("eE") != std::string::npos) return to_rational(std::stod(text));
    const auto dot = text.find('.');
    if (dot == std::string::npos) return Rational(parse_decimal_int(text));
    std::string digits = text.substr(0, dot) + text.substr(dot + 1);
    if (digits == "-" || digits == "+" || digits.empty()) throw Error(ErrorKind::ConfigError, "bad number");
    boost::multiprecision::cpp_int den = 1;
    for (std::size_t i = dot + 1; i < text.size(); ++i) den *= 10;
    return Rational(parse_decimal_int(digits), den);
  } catch (const Error&) {
    throw Error(ErrorKind::ConfigError, "cannot parse rational '" + text + "'");
  } catch (const std::exception&) {
    throw Error(ErrorKind::ConfigError, "cannot parse rational '" + text + "'");
  }
}

double to_double(const Rational& r) { return r.convert_to<double>(); }

std::string to_string(const Rational& r) {
  const auto num = boost::multiprecision::numerator(r);
  const auto den = boost::multiprecision::denominator(r);
  if (den == 1) return num.str();
  return num.str() + "/" + den.str();
}

Rational twice_area(const RPolygon& poly) {
  Rational acc = 0;
  for (std::size_t i = 0, n = poly.size(); i < n; ++i) {
    const RVec2& p = poly[i];
    const RVec2& q = poly[(i + 1) % n];
    acc += p.x * q.y - q.x * p.y;
  }
  return acc;
}

namespace {

Rational side(const RVec2& a, const RVec2& b, const RVec2& p) {
  return (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
}

}  // namespace

RPolygon clip_convex(const RPolygon& subject, const RPolygon& convex_clip) {
  RPolygon output = subject;
  for (std::size_t e = 0, m = convex_clip.size(); e < m && !output.empty(); ++e) {
    const RVec2& a = convex_clip[e];
    const RVec2& b = convex_clip[(e + 1) % m];
    RPolygon input;
    input.swap(output);
    for (std::size_t i = 0, n = input.size(); i < n; ++i) {
      const RVec2& cur = input[i];
      const RVec2& nxt = input[(i + 1) % n];
      const Rational sc = side(a, b, cur), sn = side(a, b, nxt);
      if (sc >= 0) output.push_back(cur);
      if ((sc > 0 && sn < 0) || (sc < 0 && sn > 0)) {
        const Rational t = sc / (sc - sn);
        output.push_back({cur.x + t * (nxt.x - cur.x), cur.y + t * (nxt.y - cur.y)});
      }
    }
    // drop consecutive duplicates produced by vertices lying on the clip line
    RPolygon dedup;
    for (const auto& p : output)
      if (dedup.empty() || !(dedup.back() == p)) dedup.push_back(p);
    while (dedup.size() > 1 && dedup.front() == dedup.back()) dedup.pop_back();
    output.swap(dedup);
  }
  return output;
}

RPolygon translate(const RPolygon& poly, const RVec2& shift) {
  RPolygon out;
  out.reserve(poly.size());
  for (const auto& p : poly) out.push_back({p.x + shift.x, p.y + shift.y});
  return out;
}

RPolygon transform(const RPolygon& poly, const RMat2& m, const RVec2& offset) {
  RPolygon out;
  out.reserve(poly.size());
  for (const auto& p : poly) {
    RVec2 q = m * p;
    out.push_back({q.x + offset.x, q.y + offset.y});
  }
  // orientation flips for negative determinant
  if (m.det() < 0) std::reverse(out.begin(), out.end());
  return out;
}

bool contains_closed(const RPolygon& poly, const RVec2& p) {
  for (std::size_t i = 0, n = poly.size(); i < n; ++i)
    if (side(poly[i], poly[(i + 1) % n], p) < 0) return false;
  return !poly.empty();
}

RPolygon unit_square(const Rational& kx, const Rational& ky) {
  return {{kx, ky}, {kx + 1, ky}, {kx + 1, ky + 1}, {kx, ky + 1}};
}

Polygon Polygon::from_exact(const RPolygon& poly) {
  Polygon out;
  for (const auto& p : poly) out.vertices.emplace_back(to_double(p.x), to_double(p.y));
  return out;
}

bool Polygon::contains_closed(const Vec2& p) const {
  const std::size_t n = vertices.size();
  if (n < 3) return false;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2& a = vertices[i];
    const Vec2& b = vertices[(i + 1) % n];
    if ((b.x() - a.x()) * (p.y() - a.y()) - (b.y() - a.y()) * (p.x() - a.x()) < 0) return false;
  }
  return true;
}

double Polygon::area() const {
  double acc = 0.0;
  for (std::size_t i = 0, n = vertices.size(); i < n; ++i) {
    const Vec2& p = vertices[i];
    const Vec2& q = vertices[(i + 1) % n];
    acc += p.x() * q.y() - q.x() * p.y();
  }
  return 0.5 * acc;
}

double Polygon::boundary_distance(const Vec2& p) const {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0, n = vertices.size(); i < n; ++i) {
    const Vec2& a = vertices[i];
    const Vec2& b = vertices[(i + 1) % n];
    const Vec2 d = b - a;
    const double len2 = d.squaredNorm();
    double t = len2 > 0 ? (p - a).dot(d) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    best = std::min(best, (a + t * d - p).norm());
  }
  return best;
}

Vec2 Polygon::centroid() const {
  Vec2 c = Vec2::Zero();
  for (const auto& v : vertices) c += v;
  return vertices.empty() ? c : Vec2(c / static_cast<double>(vertices.size()));
}

Eigen::AlignedBox2d Polygon::bounds() const {
  Eigen::AlignedBox2d box;
  for (const auto& v : vertices) box.extend(v);
  return box;
}

Range quadratic_range(const Quadratic2& q, const Polygon& poly) {
  Range r{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  auto consider = [&](const Vec2& p) {
    const double v = q(p);
    r.min = std::min(r.min, v);
    r.max = std::max(r.max, v);
  };
  const std::size_t n = poly.vertices.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2& a = poly.vertices[i];
    const Vec2& b = poly.vertices[(i + 1) % n];
    consider(a);
    // q(a + t d) = alpha t^2 + beta t + gamma
    const Vec2 d = b - a;
    const double alpha = q.qxx * d.x() * d.x() + q.qxy * d.x() * d.y() + q.qyy * d.y() * d.y();
    const double beta = q.gradient(a).dot(d);
    if (alpha != 0.0) {
      const double t = -beta / (2 * alpha);
      if (t > 0.0 && t < 1.0) consider(a + t * d);
    }
  }
  Mat2 H;
  H << 2 * q.qxx, q.qxy, q.qxy, 2 * q.qyy;
  if (std::abs(H.determinant()) > 1e-300) {
    const Vec2 crit = H.fullPivLu().solve(Vec2(-q.lx, -q.ly));
    if (poly.contains_closed(crit)) consider(crit);
  }
  return r;
}

double quadratic_integral(const Quadratic2& q, const Polygon& poly) {
  const std::size_t n = poly.vertices.size();
  double total = 0.0;
  for (std::size_t i = 1; i + 1 < n; ++i) {
    const Vec2& a = poly.vertices[0];
    const Vec2& b = poly.vertices[i];
    const Vec2& c = poly.vertices[i + 1];
    const double area = 0.5 * ((b - a).x() * (c - a).y() - (b - a).y() * (c - a).x());
    total += area / 3.0 * (q(0.5 * (a + b)) + q(0.5 * (b + c)) + q(0.5 * (c + a)));
  }
  return total;
}

}  // namespace contactflow
