#include "contactflow/complexity.hpp"

#include "contactflow/parallel.hpp"
#include "contactflow/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace contactflow {

namespace {

struct Cell {
  std::uint64_t word = 0;
  RPolygon poly;
  std::vector<Vec2> approx;
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
};

Cell make_cell(std::uint64_t word, RPolygon poly) {
  Cell c;
  c.word = word;
  c.poly = std::move(poly);
  c.x0 = c.y0 = std::numeric_limits<double>::infinity();
  c.x1 = c.y1 = -std::numeric_limits<double>::infinity();
  for (const RVec2& v : c.poly) {
    const Vec2 d(to_double(v.x), to_double(v.y));
    c.approx.push_back(d);
    c.x0 = std::min(c.x0, d.x());
    c.x1 = std::max(c.x1, d.x());
    c.y0 = std::min(c.y0, d.y());
    c.y1 = std::max(c.y1, d.y());
  }
  return c;
}

bool boxes_overlap(const Cell& a, const Cell& b, double margin) {
  return a.x0 <= b.x1 + margin && b.x0 <= a.x1 + margin && a.y0 <= b.y1 + margin && b.y0 <= a.y1 + margin;
}

// Conservative floating-point containment: false only when p is clearly outside.
bool maybe_contains(const Cell& c, const Vec2& p, double tol) {
  if (p.x() < c.x0 - tol || p.x() > c.x1 + tol || p.y() < c.y0 - tol || p.y() > c.y1 + tol) return false;
  const std::size_t n = c.approx.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2& a = c.approx[i];
    const Vec2& b = c.approx[(i + 1) % n];
    const Vec2 e = b - a;
    const double cross = e.x() * (p.y() - a.y()) - e.y() * (p.x() - a.x());
    if (cross < -tol * (e.norm() + 1.0)) return false;
  }
  return true;
}

// Conservative test of a convex polygon against an axis-aligned box.
bool polygon_meets_box(const Cell& c, double bx0, double by0, double bx1, double by1, double tol) {
  if (c.x1 < bx0 - tol || c.x0 > bx1 + tol || c.y1 < by0 - tol || c.y0 > by1 + tol) return false;
  const std::size_t n = c.approx.size();
  const Vec2 corners[4] = {{bx0, by0}, {bx1, by0}, {bx1, by1}, {bx0, by1}};
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2& a = c.approx[i];
    const Vec2 e = c.approx[(i + 1) % n] - a;
    bool all_outside = true;
    for (const Vec2& q : corners)
      if (e.x() * (q.y() - a.y()) - e.y() * (q.x() - a.x()) >= -tol * (e.norm() + 1.0)) {
        all_outside = false;
        break;
      }
    if (all_outside) return false;
  }
  return true;
}

constexpr int kBuckets = 64;
constexpr double kTol = 1e-9;

// Largest number of distinct words whose closed cells meet at one point of the
// torus. The maximum of this upper-semicontinuous count is attained at a
// vertex of the arrangement, and every arrangement vertex is a vertex of some
// cell, so only cell vertices (and their torus copies) are examined.
std::size_t max_incidence(const std::vector<Cell>& cells) {
  std::vector<std::vector<std::uint32_t>> buckets(kBuckets * kBuckets);
  const double h = 1.0 / kBuckets;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const Cell& c = cells[i];
    const int ix0 = std::clamp(static_cast<int>(std::floor((c.x0 - kTol) / h)), 0, kBuckets - 1);
    const int ix1 = std::clamp(static_cast<int>(std::floor((c.x1 + kTol) / h)), 0, kBuckets - 1);
    const int iy0 = std::clamp(static_cast<int>(std::floor((c.y0 - kTol) / h)), 0, kBuckets - 1);
    const int iy1 = std::clamp(static_cast<int>(std::floor((c.y1 + kTol) / h)), 0, kBuckets - 1);
    for (int ix = ix0; ix <= ix1; ++ix)
      for (int iy = iy0; iy <= iy1; ++iy)
        if (polygon_meets_box(c, ix * h, iy * h, (ix + 1) * h, (iy + 1) * h, kTol))
          buckets[static_cast<std::size_t>(ix * kBuckets + iy)].push_back(static_cast<std::uint32_t>(i));
  }

  std::vector<RVec2> vertices;
  for (const Cell& c : cells)
    for (RVec2 v : c.poly) {
      if (v.x == 1) v.x = 0;
      if (v.y == 1) v.y = 0;
      vertices.push_back(std::move(v));
    }
  std::sort(vertices.begin(), vertices.end());
  vertices.erase(std::unique(vertices.begin(), vertices.end()), vertices.end());

  constexpr std::size_t chunk = 256;
  const std::size_t n_chunks = (vertices.size() + chunk - 1) / chunk;
  std::vector<std::size_t> partial(n_chunks, 0);
  parallel_chunks(vertices.size(), chunk, [&](std::size_t ci, std::size_t begin, std::size_t end) {
    std::vector<std::uint64_t> found;
    std::size_t best = 0;
    for (std::size_t vi = begin; vi < end; ++vi) {
      const RVec2& v = vertices[vi];
      found.clear();
      for (int cx = 0; cx < (v.x == 0 ? 2 : 1); ++cx)
        for (int cy = 0; cy < (v.y == 0 ? 2 : 1); ++cy) {
          const RVec2 q{v.x + cx, v.y + cy};
          const Vec2 qd(to_double(q.x), to_double(q.y));
          const int bx = std::clamp(static_cast<int>(std::floor(qd.x() / h)), 0, kBuckets - 1);
          const int by = std::clamp(static_cast<int>(std::floor(qd.y() / h)), 0, kBuckets - 1);
          for (std::uint32_t idx : buckets[static_cast<std::size_t>(bx * kBuckets + by)]) {
            const Cell& c = cells[idx];
            if (std::find(found.begin(), found.end(), c.word) != found.end()) continue;
            if (!maybe_contains(c, qd, kTol)) continue;
            if (contains_closed(c.poly, q)) found.push_back(c.word);
          }
        }
      best = std::max(best, found.size());
    }
    partial[ci] = best;
  });
  std::size_t best = cells.empty() ? 0 : 1;
  for (std::size_t b : partial) best = std::max(best, b);
  return best;
}

struct BranchData {
  std::uint64_t symbol;
  Cell domain;
  Cell image;
  RMat2 matrix, inverse;
  RVec2 offset;
};

bool positive_area(const RPolygon& p) { return p.size() >= 3 && twice_area(p) > 0; }

// One refinement step over every branch. Output order is branch-major then
// cell order, so the result is deterministic.
template <typename Make>
std::vector<Cell> refine(const std::vector<Cell>& cells, const std::vector<BranchData>& branches, Make&& make) {
  std::vector<Cell> out;
  for (std::size_t bi = 0; bi < branches.size(); ++bi) {
    constexpr std::size_t chunk = 64;
    const std::size_t n_chunks = (cells.size() + chunk - 1) / chunk;
    std::vector<std::vector<Cell>> parts(n_chunks);
    parallel_chunks(cells.size(), chunk, [&](std::size_t ci, std::size_t begin, std::size_t end) {
      for (std::size_t i = begin; i < end; ++i) make(cells[i], branches[bi], parts[ci]);
    });
    for (auto& part : parts)
      for (auto& c : part) out.push_back(std::move(c));
  }
  return out;
}

// Exact total area of a cell list, which must be 1 for a partition.
double total_area(const std::vector<Cell>& cells) {
  Rational twice = 0;
  for (const Cell& c : cells) twice += twice_area(c.poly);
  return to_double(twice / 2);
}

std::size_t count_slivers(const std::vector<Cell>& cells, double threshold) {
  std::size_t n = 0;
  for (const Cell& c : cells)
    if (std::abs(to_double(twice_area(c.poly))) / 2 < threshold) ++n;
  return n;
}

}  // namespace

std::vector<ComplexityReport> complexity_exact(const PiecewiseAffineTorusMap& map, int n_max,
                                               const ComplexityOptions& options) {
  if (n_max < 1 || n_max > 12) throw Error(ErrorKind::InvalidArgument, "exact complexity supports 1 <= n <= 12");
  const std::uint64_t K = map.num_declared_pieces();
  if (std::pow(static_cast<double>(K), n_max) >= 0x1p63)
    throw Error(ErrorKind::InvalidArgument, "too many pieces for exact word encoding");

  std::vector<BranchData> branches;
  for (const AffineBranch& b : map.branches()) {
    BranchData d;
    d.symbol = static_cast<std::uint64_t>(b.declared);
    d.matrix = b.exact_matrix;
    d.inverse = b.exact_matrix.inverse();
    d.offset = b.exact_offset;
    d.domain = make_cell(d.symbol, b.exact_domain);
    d.image = make_cell(d.symbol, transform(b.exact_domain, b.exact_matrix, b.exact_offset));
    branches.push_back(std::move(d));
  }

  std::vector<Cell> back, fwd;
  for (const BranchData& b : branches) {
    back.push_back(b.domain);
    fwd.push_back(b.image);
  }

  std::vector<ComplexityReport> reports;
  std::uint64_t prefix_weight = K;  // K^m for the current word length m
  for (int n = 1; n <= n_max; ++n) {
    if (n > 1) {
      const std::uint64_t weight = prefix_weight;
      // cells of the (n)-step partition: branch domain intersected with the
      // preimage of an (n-1)-step cell
      back = refine(back, branches, [&](const Cell& c, const BranchData& b, std::vector<Cell>& out) {
        if (!boxes_overlap(c, b.image, kTol)) return;
        RPolygon x = clip_convex(c.poly, b.image.poly);
        if (!positive_area(x)) return;
        x = transform(translate(x, RVec2{-b.offset.x, -b.offset.y}), b.inverse, RVec2{0, 0});
        out.push_back(make_cell(b.symbol * weight + c.word, std::move(x)));
      });
      // images of n-step cells: forward image of an (n-1)-step image cell
      // restricted to a branch
      fwd = refine(fwd, branches, [&](const Cell& c, const BranchData& b, std::vector<Cell>& out) {
        if (!boxes_overlap(c, b.domain, kTol)) return;
        RPolygon x = clip_convex(c.poly, b.domain.poly);
        if (!positive_area(x)) return;
        out.push_back(make_cell(c.word * K + b.symbol, transform(x, b.matrix, b.offset)));
      });
      prefix_weight *= K;
    }
    ComplexityReport r;
    r.n = n;
    r.D_b = max_incidence(back);
    r.D_e = max_incidence(fwd);
    r.rate_b = std::log(static_cast<double>(r.D_b)) / n;
    r.rate_e = std::log(static_cast<double>(r.D_e)) / n;
    r.cells_b = back.size();
    r.cells_e = fwd.size();
    r.slivers = count_slivers(back, options.sliver_area) + count_slivers(fwd, options.sliver_area);
    r.area_b = total_area(back);
    r.area_e = total_area(fwd);
    reports.push_back(r);
  }
  return reports;
}

namespace {

// Distinct-code maximum over w x w windows of the periodic grid.
std::size_t block_max(const std::vector<std::uint64_t>& codes, int G, int w) {
  const std::size_t rows = static_cast<std::size_t>(G);
  std::vector<std::size_t> partial(rows, 0);
  parallel_chunks(rows, 1, [&](std::size_t, std::size_t begin, std::size_t end) {
    std::vector<std::uint64_t> window;
    for (std::size_t i = begin; i < end; ++i) {
      std::size_t best = 1;
      for (std::size_t j = 0; j < rows; ++j) {
        window.clear();
        for (int a = 0; a < w; ++a)
          for (int b = 0; b < w; ++b)
            window.push_back(codes[((i + a) % rows) * rows + (j + b) % rows]);
        std::sort(window.begin(), window.end());
        best = std::max(best, static_cast<std::size_t>(std::unique(window.begin(), window.end()) - window.begin()));
      }
      partial[i] = best;
    }
  });
  return *std::max_element(partial.begin(), partial.end());
}

template <typename Step>
std::vector<std::size_t> sampled_counts(const TorusMap& map, int n_max, int G, int w, Step&& step, bool step_first) {
  const std::size_t total = static_cast<std::size_t>(G) * static_cast<std::size_t>(G);
  std::vector<Vec2> pts(total);
  std::vector<std::uint64_t> codes(total, 0);
  for (std::size_t i = 0; i < total; ++i)
    pts[i] = Vec2((static_cast<double>(i / G) + 0.5) / G, (static_cast<double>(i % G) + 0.5) / G);
  const std::uint64_t K = map.num_declared_pieces();
  // plain base-K codes while they fit, hashed afterwards
  const bool exact_codes = std::pow(static_cast<double>(K), n_max) < 0x1p63;
  std::vector<std::size_t> out;
  for (int n = 1; n <= n_max; ++n) {
    parallel_for(total, [&](std::size_t i) {
      if (step_first) pts[i] = step(pts[i]);
      const auto s = static_cast<std::uint64_t>(map.declared_piece_of(pts[i]));
      codes[i] = exact_codes ? codes[i] * K + s : mix64(codes[i] ^ (s + 1));
      if (!step_first) pts[i] = step(pts[i]);
    }, 4096);
    out.push_back(block_max(codes, G, w));
  }
  return out;
}

}  // namespace

std::vector<ComplexityReport> complexity_sampling(const TorusMap& map, int n_max, const ComplexityOptions& options) {
  if (n_max < 1 || n_max > 20) throw Error(ErrorKind::InvalidArgument, "sampled complexity supports 1 <= n <= 20");
  const int G = options.sampling_grid;
  if (G < 4) throw Error(ErrorKind::InvalidArgument, "sampling grid must be at least 4");
  if (options.sampling_window < 2 || options.sampling_window > G)
    throw Error(ErrorKind::InvalidArgument, "sampling window must lie in [2, grid]");
  // forward itineraries label n-step domains; backward itineraries of
  // f^{-1}, read as symbols of the preimages, label their images
  const auto back = sampled_counts(map, n_max, G, options.sampling_window, [&](const Vec2& p) { return map.apply(p); }, false);
  const auto fwd = sampled_counts(map, n_max, G, options.sampling_window, [&](const Vec2& p) { return map.apply_inverse(p); }, true);

  std::vector<ComplexityReport> reports;
  for (int n = 1; n <= n_max; ++n) {
    ComplexityReport r;
    r.n = n;
    r.D_b = back[static_cast<std::size_t>(n - 1)];
    r.D_e = fwd[static_cast<std::size_t>(n - 1)];
    r.rate_b = std::log(static_cast<double>(r.D_b)) / n;
    r.rate_e = std::log(static_cast<double>(r.D_e)) / n;
    r.lower_bound = true;
    reports.push_back(r);
  }
  return reports;
}

std::vector<ComplexityReport> complexity_counts(const TorusMap& map, int n_max, ComplexityMethod method,
                                                const ComplexityOptions& options) {
  if (method == ComplexityMethod::Sampling) return complexity_sampling(map, n_max, options);
  const auto* affine = dynamic_cast<const PiecewiseAffineTorusMap*>(&map);
  if (!affine) throw Error(ErrorKind::InvalidArgument, "the exact method needs a piecewise affine map");
  return complexity_exact(*affine, n_max, options);
}

nlohmann::json to_json(const ComplexityReport& r) {
  return {{"n", r.n},
          {"D_b", r.D_b},
          {"D_e", r.D_e},
          {"rate_b", r.rate_b},
          {"rate_e", r.rate_e},
          {"lower_bound", r.lower_bound},
          {"cells_b", r.cells_b},
          {"cells_e", r.cells_e},
          {"slivers", r.slivers},
          {"area_b", r.area_b},
          {"area_e", r.area_e}};
}

}  // namespace contactflow
