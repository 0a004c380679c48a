#include "contactflow/torus_map.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace contactflow {

namespace {

double torus_distance(const Vec2& a, const Vec2& b) {
  double dx = std::abs(a.x() - b.x()), dy = std::abs(a.y() - b.y());
  dx = std::min(dx, 1.0 - dx);
  dy = std::min(dy, 1.0 - dy);
  return std::hypot(dx, dy);
}

long floor_to_long(const Rational& r) {
  const auto num = boost::multiprecision::numerator(r);
  const auto den = boost::multiprecision::denominator(r);
  boost::multiprecision::cpp_int q = num / den;
  if (num < 0 && q * den != num) q -= 1;
  return q.convert_to<long>();
}

long ceil_to_long(const Rational& r) { return -floor_to_long(-r); }

}  // namespace

PiecewiseAffineTorusMap::PiecewiseAffineTorusMap(std::vector<AffinePiece> pieces, std::string name)
    : pieces_(std::move(pieces)), name_(std::move(name)) {
  if (pieces_.empty()) throw Error(ErrorKind::InvalidArgument, "map needs at least one piece");
  branches_of_piece_.resize(pieces_.size());
  for (std::size_t i = 0; i < pieces_.size(); ++i) {
    AffinePiece& piece = pieces_[i];
    if (piece.domain.size() < 3) throw Error(ErrorKind::InvalidArgument, "piece domain needs at least 3 vertices");
    const Rational area2 = twice_area(piece.domain);
    if (area2 == 0) throw Error(ErrorKind::InvalidArgument, "piece domain has zero area");
    if (area2 < 0) std::reverse(piece.domain.begin(), piece.domain.end());
    if (piece.matrix.det() == 0) throw Error(ErrorKind::InvalidArgument, "piece matrix is singular");
    domains_.push_back(Polygon::from_exact(piece.domain));

    const RPolygon image = transform(piece.domain, piece.matrix, piece.offset);
    Rational minx = image[0].x, maxx = image[0].x, miny = image[0].y, maxy = image[0].y;
    for (const auto& v : image) {
      minx = std::min(minx, v.x);
      maxx = std::max(maxx, v.x);
      miny = std::min(miny, v.y);
      maxy = std::max(maxy, v.y);
    }
    const RMat2 inv = piece.matrix.inverse();
    for (long kx = floor_to_long(minx); kx < ceil_to_long(maxx); ++kx) {
      for (long ky = floor_to_long(miny); ky < ceil_to_long(maxy); ++ky) {
        const RPolygon cell = clip_convex(image, unit_square(kx, ky));
        if (cell.size() < 3 || twice_area(cell) == 0) continue;
        AffineBranch b;
        b.declared = static_cast<int>(i);
        b.shift_x = kx;
        b.shift_y = ky;
        b.exact_domain = transform(translate(cell, {-piece.offset.x, -piece.offset.y}), inv, {0, 0});
        b.domain = Polygon::from_exact(b.exact_domain);
        b.exact_matrix = piece.matrix;
        b.exact_offset = {piece.offset.x - kx, piece.offset.y - ky};
        b.matrix = piece.matrix.to_double();
        b.inverse = inv.to_double();
        b.offset = Vec2(to_double(b.exact_offset.x), to_double(b.exact_offset.y));
        branches_of_piece_[i].push_back(static_cast<int>(branches_.size()));
        branches_.push_back(std::move(b));
      }
    }
  }
}

int PiecewiseAffineTorusMap::declared_piece_at(const Vec2& p) const {
  int best = 0;
  double best_dist = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < domains_.size(); ++i) {
    if (domains_[i].contains_closed(p)) return static_cast<int>(i);
    const double d = domains_[i].boundary_distance(p);
    if (d < best_dist) {
      best_dist = d;
      best = static_cast<int>(i);
    }
  }
  return best;
}

int PiecewiseAffineTorusMap::branch_of(const Vec2& p) const {
  const int piece = declared_piece_at(p);
  const auto& candidates = branches_of_piece_[static_cast<std::size_t>(piece)];
  const AffineBranch& first = branches_[static_cast<std::size_t>(candidates.front())];
  const Vec2 w = first.matrix * p + first.offset + Vec2(double(first.shift_x), double(first.shift_y));
  const long kx = static_cast<long>(std::floor(w.x())), ky = static_cast<long>(std::floor(w.y()));
  for (int b : candidates) {
    const AffineBranch& br = branches_[static_cast<std::size_t>(b)];
    if (br.shift_x == kx && br.shift_y == ky) return b;
  }
  // shift of a degenerate sliver: use the nearest real branch
  int best = candidates.front();
  double best_dist = std::numeric_limits<double>::infinity();
  for (int b : candidates) {
    const Polygon& dom = branches_[static_cast<std::size_t>(b)].domain;
    const double d = dom.contains_closed(p) ? 0.0 : dom.boundary_distance(p);
    if (d < best_dist) {
      best_dist = d;
      best = b;
    }
  }
  return best;
}

Vec2 PiecewiseAffineTorusMap::apply_on(const Vec2& p, int branch) const {
  const AffineBranch& b = branches_[static_cast<std::size_t>(branch)];
  const Vec2 w = b.matrix * p + b.offset;
  return {wrap_unit(w.x()), wrap_unit(w.y())};
}

Vec2 PiecewiseAffineTorusMap::apply_inverse(const Vec2& w) const {
  int best = 0;
  double best_violation = std::numeric_limits<double>::infinity();
  Vec2 best_p = w;
  for (std::size_t i = 0; i < branches_.size(); ++i) {
    const AffineBranch& b = branches_[i];
    const Vec2 p = b.inverse * (w - b.offset);
    const bool in_square = p.x() >= 0.0 && p.x() < 1.0 && p.y() >= 0.0 && p.y() < 1.0;
    if (in_square && branch_of(p) == static_cast<int>(i)) return p;
    const double v = b.domain.contains_closed(p) ? 0.0 : b.domain.boundary_distance(p);
    if (v < best_violation) {
      best_violation = v;
      best = static_cast<int>(i);
      best_p = p;
    }
  }
  (void)best;
  return {wrap_unit(best_p.x()), wrap_unit(best_p.y())};
}

Mat2 PiecewiseAffineTorusMap::jacobian(const Vec2& p) const {
  return branches_[static_cast<std::size_t>(branch_of(p))].matrix;
}

double PiecewiseAffineTorusMap::boundary_distance(const Vec2& p) const {
  return branches_[static_cast<std::size_t>(branch_of(p))].domain.boundary_distance(p);
}

std::vector<Segment> PiecewiseAffineTorusMap::discontinuities() const {
  std::vector<Segment> out;
  constexpr double h = 1e-7;
  auto same_segment = [](const Segment& s, const Segment& t) {
    auto close = [](const Vec2& a, const Vec2& b) { return torus_distance(a, b) < 1e-12; };
    return (close(s.a, t.a) && close(s.b, t.b)) || (close(s.a, t.b) && close(s.b, t.a));
  };
  for (const Polygon& dom : domains_) {
    for (std::size_t e = 0, n = dom.vertices.size(); e < n; ++e) {
      const Segment seg{dom.vertices[e], dom.vertices[(e + 1) % n]};
      const Vec2 d = seg.b - seg.a;
      const Vec2 normal = Vec2(d.y(), -d.x()).normalized();
      bool broken = false;
      for (double t : {0.25, 0.5, 0.75}) {
        const Vec2 q = seg.a + t * d;
        const Vec2 qp(wrap_unit(q.x() + h * normal.x()), wrap_unit(q.y() + h * normal.y()));
        const Vec2 qm(wrap_unit(q.x() - h * normal.x()), wrap_unit(q.y() - h * normal.y()));
        if (torus_distance(apply(qp), apply(qm)) > 1e-5) broken = true;
      }
      if (!broken) continue;
      if (std::none_of(out.begin(), out.end(), [&](const Segment& s) { return same_segment(s, seg); }))
        out.push_back(seg);
    }
  }
  return out;
}

bool PiecewiseAffineTorusMap::uniform_jacobian() const {
  for (const auto& b : branches_)
    if (!(b.exact_matrix.a == branches_[0].exact_matrix.a && b.exact_matrix.b == branches_[0].exact_matrix.b &&
          b.exact_matrix.c == branches_[0].exact_matrix.c && b.exact_matrix.d == branches_[0].exact_matrix.d))
      return false;
  return true;
}

bool PiecewiseAffineTorusMap::is_symplectic() const {
  for (const auto& p : pieces_) {
    const Rational d = p.matrix.det();
    if (d != 1 && d != -1) return false;
  }
  return true;
}

std::vector<AffinePiece> f0_pieces() {
  const RMat2 m{1, 1, Rational(1, 2), Rational(3, 2)};
  AffinePiece lower{{{0, 0}, {1, 0}, {0, 1}}, m, {0, 0}};
  AffinePiece upper{{{1, 0}, {1, 1}, {0, 1}}, m, {0, Rational(-1, 2)}};
  return {lower, upper};
}

PiecewiseAffineTorusMap make_f0_map() { return PiecewiseAffineTorusMap(f0_pieces(), "f0"); }

ShearPerturbedMap::ShearPerturbedMap(double epsilon) : epsilon_(epsilon), base_(make_f0_map()) {
  if (!std::isfinite(epsilon) || std::abs(epsilon) >= 0.5 / std::numbers::pi)
    throw Error(ErrorKind::InvalidArgument, "shear amplitude must satisfy |eps| < 1/(2 pi)");
}

Vec2 ShearPerturbedMap::shear(const Vec2& p, int k) const {
  return {p.x(), p.y() + epsilon_ * std::sin(2.0 * std::numbers::pi * p.x()) - k};
}

int ShearPerturbedMap::branch_of(const Vec2& p) const {
  const double s = p.y() + epsilon_ * std::sin(2.0 * std::numbers::pi * p.x());
  const int k = std::clamp(static_cast<int>(std::floor(s)), -1, 1);
  const Vec2 q(p.x(), wrap_unit(s - k));
  return (k + 1) * static_cast<int>(base_.num_branches()) + base_.branch_of(q);
}

int ShearPerturbedMap::declared_piece_of_branch(int branch) const {
  return base_.declared_piece_of_branch(base_branch(branch));
}

Vec2 ShearPerturbedMap::apply_on(const Vec2& p, int branch) const {
  return base_.apply_on(shear(p, shear_shift(branch)), base_branch(branch));
}

Vec2 ShearPerturbedMap::apply_inverse(const Vec2& w) const {
  const Vec2 q = base_.apply_inverse(w);
  return {q.x(), wrap_unit(q.y() - epsilon_ * std::sin(2.0 * std::numbers::pi * q.x()))};
}

Mat2 ShearPerturbedMap::jacobian(const Vec2& p) const {
  Mat2 dphi;
  dphi << 1.0, 0.0, 2.0 * std::numbers::pi * epsilon_ * std::cos(2.0 * std::numbers::pi * p.x()), 1.0;
  return base_.branches()[static_cast<std::size_t>(base_branch(branch_of(p)))].matrix * dphi;
}

double ShearPerturbedMap::boundary_distance(const Vec2& p) const {
  const int b = branch_of(p);
  const Vec2 q = shear(p, shear_shift(b));
  const double lip = 1.0 + 2.0 * std::numbers::pi * std::abs(epsilon_);
  return base_.branches()[static_cast<std::size_t>(base_branch(b))].domain.boundary_distance(q) / lip;
}

std::vector<Segment> ShearPerturbedMap::discontinuities() const {
  // preimages under the shear of the base discontinuities, as short chords
  std::vector<Segment> out;
  constexpr int steps = 64;
  for (const Segment& s : base_.discontinuities()) {
    for (int i = 0; i < steps; ++i) {
      const Vec2 qa = s.a + (s.b - s.a) * (double(i) / steps);
      const Vec2 qb = s.a + (s.b - s.a) * (double(i + 1) / steps);
      auto pre = [&](const Vec2& q) {
        return Vec2(q.x(), q.y() - epsilon_ * std::sin(2.0 * std::numbers::pi * q.x()));
      };
      Vec2 a = pre(qa), b = pre(qb);
      const double shift = std::floor(0.5 * (a.y() + b.y()));
      a.y() -= shift;
      b.y() -= shift;
      out.push_back({a, b});
    }
  }
  return out;
}

}  // namespace contactflow
