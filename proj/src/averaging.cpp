#include "contactflow/averaging.hpp"

#include "contactflow/format.hpp"
#include "contactflow/geometry.hpp"
#include "contactflow/hyperbolicity.hpp"
#include "contactflow/parallel.hpp"
#include "contactflow/quadrature.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <limits>
#include <ostream>

namespace contactflow {

namespace {

double unit_bump(double u) { return std::abs(u) < 1.0 ? std::exp(-1.0 / (1.0 - u * u)) : 0.0; }

bool inside_x0(const SuspensionFlow& flow, const Vec3& p) {
  if (!(p.x() >= 0.0 && p.x() < 1.0 && p.y() >= 0.0 && p.y() < 1.0 && p.z() >= 0.0)) return false;
  return p.z() < flow.tau(p.head<2>());
}

FlowPoint chart_point(const SuspensionFlow& flow, const Vec3& p) {
  return {p.x(), p.y(), p.z(), flow.map().declared_piece_of(p.head<2>())};
}

// Per-axis nodes and bump-weighted, normalized weights.
struct AxisRule {
  std::vector<double> u, w;
};

// Gauss-Legendre nodes with bump-weighted weights. `raw` divides by the
// exact mass; otherwise the weights are renormalized to sum to one so that
// constants are reproduced exactly and the mass defect goes into the budget.
AxisRule mollifier_axis(int nodes, bool raw = false) {
  const auto& g = gauss_legendre(nodes);
  AxisRule r;
  double sum = 0.0;
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    r.u.push_back(g.nodes[i]);
    r.w.push_back(g.weights[i] * unit_bump(g.nodes[i]));
    sum += r.w.back();
  }
  const double m = raw ? bump_mass() : sum;
  for (double& w : r.w) w /= m;
  return r;
}

struct MollifierSum {
  Complex value;
  bool outside = false;
};

MollifierSum mollifier_sum(const SuspensionFlow& flow, const Observable& psi, double eps, const Vec3& w,
                           const AxisRule& ax) {
  MollifierSum out;
  for (std::size_t i = 0; i < ax.u.size(); ++i)
    for (std::size_t j = 0; j < ax.u.size(); ++j) {
      const double wij = ax.w[i] * ax.w[j];
      for (std::size_t k = 0; k < ax.u.size(); ++k) {
        const Vec3 p = w - eps * Vec3(ax.u[i], ax.u[j], ax.u[k]);
        if (!inside_x0(flow, p)) {
          out.outside = true;
          continue;
        }
        out.value += wij * ax.w[k] * psi(chart_point(flow, p));
      }
    }
  return out;
}

}  // namespace

double mollifier_rule_mass(int nodes) {
  const AxisRule ax = mollifier_axis(nodes, true);
  double s = 0.0;
  for (double w : ax.w) s += w;
  return s * s * s;
}

MollifiedValue mollify(const SuspensionFlow& flow, const Observable& psi, const MollifierSpec& spec, const Vec3& w) {
  if (!(spec.epsilon > 0.0)) throw Error(ErrorKind::InvalidArgument, "mollifier scale must be positive");
  if (spec.nodes < 4) throw Error(ErrorKind::InvalidArgument, "mollifier rule needs at least 4 nodes per axis");
  const bool box_out = w.x() - spec.epsilon < 0.0 || w.x() + spec.epsilon >= 1.0 || w.y() - spec.epsilon < 0.0 ||
                       w.y() + spec.epsilon >= 1.0 || w.z() - spec.epsilon < 0.0;
  const MollifierSum full = mollifier_sum(flow, psi, spec.epsilon, w, mollifier_axis(spec.nodes));
  const MollifierSum half = mollifier_sum(flow, psi, spec.epsilon, w, mollifier_axis(spec.nodes / 2));
  MollifiedValue r;
  r.value = full.value;
  r.error_budget = std::abs(full.value - half.value);
  r.leaves_chart = box_out || full.outside;
  if (r.leaves_chart && spec.strict)
    throw Error(ErrorKind::ChartBoundary, "mollifier support leaves the flow box at (" + fmt_num(w.x()) + ", " +
                                              fmt_num(w.y()) + ", " + fmt_num(w.z()) + ")");
  return r;
}

// ----------------------------------------------------------- stable leaf

Vec3 StableLeaf::point(double s) const {
  const double e1 = direction.x(), e2 = direction.y();
  return {origin.x() + s * e1, origin.y() + s * e2, origin.z() + origin.y() * e1 * s + 0.5 * e1 * e2 * s * s};
}

Vec3 StableLeaf::tangent(double s) const {
  const double e1 = direction.x(), e2 = direction.y();
  return {e1, e2, origin.y() * e1 + e1 * e2 * s};
}

double StableLeaf::kernel_residual(double s) const { return std::abs(eval_alpha(point(s), tangent(s))); }

Vec2 stable_direction(const SuspensionFlow& flow) {
  (void)flow;  // both supported maps share the stable cone axis
  Vec2 e = Cone2::standard_stable(0.1).axis();
  e /= e.norm();
  if (e.x() < 0.0) e = -e;
  return e;
}

StableLeaf stable_leaf_through(const SuspensionFlow& flow, const Vec3& w) { return {w, stable_direction(flow)}; }

LeafInterval leaf_interval(const SuspensionFlow& flow, const StableLeaf& leaf, double delta) {
  if (!(delta > 0.0)) throw Error(ErrorKind::InvalidArgument, "leaf half-length must be positive");
  if (!inside_x0(flow, leaf.origin)) throw Error(ErrorKind::InvalidArgument, "leaf base point is outside X0");
  LeafInterval iv;
  constexpr int scan = 256;
  auto edge = [&](double sign) {
    double good = 0.0;
    for (int i = 1; i <= scan; ++i) {
      const double s = sign * delta * i / scan;
      if (inside_x0(flow, leaf.point(s))) {
        good = s;
        continue;
      }
      double bad = s;
      for (int it = 0; it < 80 && std::abs(bad - good) > 1e-15; ++it) {
        const double mid = 0.5 * (good + bad);
        (inside_x0(flow, leaf.point(mid)) ? good : bad) = mid;
      }
      iv.clipped = true;
      return good;
    }
    return sign * delta;
  };
  iv.lo = edge(-1.0);
  iv.hi = edge(1.0);
  return iv;
}

LeafRule make_leaf_rule(const SuspensionFlow& flow, const Vec3& w, double delta, int panels) {
  if (panels < 1) throw Error(ErrorKind::InvalidArgument, "leaf rule needs at least one panel");
  using GK = boost::math::quadrature::gauss_kronrod<double, 15>;
  using G = boost::math::quadrature::gauss<double, 7>;
  const StableLeaf leaf = stable_leaf_through(flow, w);
  LeafRule rule;
  rule.interval = leaf_interval(flow, leaf, delta);
  const double lo = rule.interval.lo, hi = rule.interval.hi;
  const double len = hi - lo;
  if (!(len > 0.0)) {
    rule.points.push_back(chart_point(flow, w));
    rule.weights.push_back(1.0);
    rule.alt_weights.push_back(1.0);
    return rule;
  }
  const auto& x = GK::abscissa();
  const auto& wk = GK::weights();
  const auto& wg = G::weights();
  const double h = len / panels;
  for (int p = 0; p < panels; ++p) {  // composite over equal panels
    const double mid = lo + (p + 0.5) * h, half = 0.5 * h;
    for (int sign : {-1, 1})
      for (std::size_t i = 0; i < x.size(); ++i) {
        if (i == 0 && sign == 1) continue;
        rule.points.push_back(chart_point(flow, leaf.point(mid + sign * half * x[i])));
        rule.weights.push_back(half * wk[i] / len);
        rule.alt_weights.push_back(i % 2 == 0 ? half * wg[i / 2] / len : 0.0);
      }
  }
  return rule;
}

AveragedValue stable_average(const SuspensionFlow& flow, const Observable& psi, double delta, const Vec3& w,
                             int panels) {
  const LeafRule rule = make_leaf_rule(flow, w, delta, panels);
  AveragedValue r;
  Complex alt(0.0);
  for (std::size_t i = 0; i < rule.points.size(); ++i) {
    const Complex v = psi(rule.points[i]);
    r.value += rule.weights[i] * v;
    alt += rule.alt_weights[i] * v;
  }
  r.error_budget = std::abs(r.value - alt);
  r.clipped = rule.interval.clipped;
  return r;
}

// ------------------------------------------------------------ Dolgopyat

namespace {

LaplaceRule dolgopyat_time_rule(const Observable& psi, const DolgopyatParams& params, double b) {
  ResolventParams rp;
  rp.z = Complex(params.a, b);
  rp.tolerance = params.time_tolerance;
  rp.enforce_tolerance = false;
  return make_laplace_rule(2 * params.m, rp, psi.sup_bound(), psi.flow_scale());
}

void check_params(const DolgopyatParams& p) {
  if (!(p.a > 0.0)) throw Error(ErrorKind::InvalidArgument, "Dolgopyat experiment needs a > 0");
  if (p.m < 1 || p.m > 8) throw Error(ErrorKind::InvalidArgument, "resolvent half-power m must be in [1, 8]");
  if (!(p.gamma >= 0.0)) throw Error(ErrorKind::InvalidArgument, "gamma must be nonnegative");
  if (p.leaf_panels < 1 || !(p.leaf_panel_length > 0.0)) throw Error(ErrorKind::InvalidArgument, "bad leaf panels");
}

double leaf_delta(const DolgopyatParams& p, double b) { return p.delta(std::max(std::abs(b), 1.0)); }

AveragedValue dolgopyat_with_rule(const SuspensionFlow& flow, const Observable& psi, const DolgopyatParams& params,
                                  const LaplaceRule& time_rule, double b, const FlowPoint& w) {
  const Complex z(params.a, b);
  const int n = 2 * params.m;
  const double delta = leaf_delta(params, b);
  const int panels = std::max(params.leaf_panels, static_cast<int>(std::ceil(2.0 * delta / params.leaf_panel_length)));
  const LeafRule leaf = make_leaf_rule(flow, w.vec(), delta, panels);
  AveragedValue r;
  Complex alt(0.0);
  double time_budget = 0.0;
  for (std::size_t i = 0; i < leaf.points.size(); ++i) {
    const ResolventValue v = apply_laplace_rule(time_rule, n, z, orbit_values(flow, psi, leaf.points[i], time_rule.t));
    r.value += leaf.weights[i] * v.value;
    alt += leaf.alt_weights[i] * v.value;
    time_budget += leaf.weights[i] * v.budget();
  }
  r.error_budget = std::abs(r.value - alt) + time_budget;
  r.clipped = leaf.interval.clipped;
  return r;
}

}  // namespace

AveragedValue dolgopyat_value(const SuspensionFlow& flow, const Observable& psi, const DolgopyatParams& params,
                              double b, const FlowPoint& w) {
  check_params(params);
  return dolgopyat_with_rule(flow, psi, params, dolgopyat_time_rule(psi, params, b), b, w);
}

double measured_lambda_bar(const SuspensionFlow& flow) {
  double lambda_u = 1.0;
  for (double aperture : {0.1, 0.5}) {
    try {
      lambda_u = expansion_constants(flow.map(), Cone2::standard_unstable(aperture), 1).lambda_u;
      break;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::ConeNotInvariant) throw;
    }
  }
  return std::pow(lambda_u, 1.0 / flow.volume());
}

double decay_exponent(const std::vector<double>& b, const std::vector<double>& ratio) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < b.size(); ++i) {
    if (!(b[i] > 0.0 && ratio[i] > 0.0)) continue;
    const double x = std::log(b[i]), y = std::log(ratio[i]);
    sx += x, sy += y, sxx += x * x, sxy += x * y;
    ++n;
  }
  if (n < 2) return std::numeric_limits<double>::quiet_NaN();
  const double denom = n * sxx - sx * sx;
  if (denom <= 0.0) return std::numeric_limits<double>::quiet_NaN();
  return -(n * sxy - sx * sy) / denom;
}

DolgopyatTable dolgopyat_experiment(const SuspensionFlow& flow, const Observable& psi, const DolgopyatParams& params,
                                    const std::vector<double>& b_list, std::size_t n_points, std::uint64_t seed) {
  check_params(params);
  if (b_list.empty() || n_points == 0) throw Error(ErrorKind::InvalidArgument, "empty Dolgopyat sweep");
  DolgopyatTable table;
  table.points = n_points;
  table.lambda_bar = params.lambda_bar > 0.0 ? params.lambda_bar : measured_lambda_bar(flow);
  table.nu_a = 1.0 / (1.0 + std::log(table.lambda_bar) / params.a);
  const auto points = flow.sample_invariant(seed, n_points);
  const double trivial = std::pow(params.a, -2.0 * params.m) * psi.sup_bound();
  std::vector<double> bs, ratios;
  for (double b : b_list) {
    const LaplaceRule rule = dolgopyat_time_rule(psi, params, b);
    std::vector<AveragedValue> values(points.size());
    parallel_for(points.size(), [&](std::size_t i) { values[i] = dolgopyat_with_rule(flow, psi, params, rule, b, points[i]); }, 1);
    DolgopyatRow row;
    row.b = b;
    row.delta = leaf_delta(params, b);
    for (const auto& v : values) {
      row.sup_value = std::max(row.sup_value, std::abs(v.value));
      row.error_budget = std::max(row.error_budget, v.error_budget);
    }
    row.trivial_bound = trivial;
    row.ratio = row.sup_value / trivial;
    row.flagged = !(row.error_budget < 0.1 * row.sup_value);
    bs.push_back(b);
    ratios.push_back(row.ratio);
    row.gamma0_hat_running = decay_exponent(bs, ratios);
    table.rows.push_back(row);
  }
  table.gamma0_hat = decay_exponent(bs, ratios);
  return table;
}

void write_dolgopyat_csv(std::ostream& out, const DolgopyatTable& table) {
  out << "b,delta,sup_value,trivial_bound,ratio,gamma0_hat_running,error_budget\n";
  for (const auto& r : table.rows)
    out << fmt_num(r.b) << ',' << fmt_num(r.delta) << ',' << fmt_num(r.sup_value) << ',' << fmt_num(r.trivial_bound)
        << ',' << fmt_num(r.ratio) << ',' << fmt_num(r.gamma0_hat_running) << ',' << fmt_num(r.error_budget) << '\n';
}

nlohmann::json to_json(const DolgopyatTable& table) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : table.rows)
    rows.push_back({{"b", r.b},
                    {"delta", r.delta},
                    {"sup_value", r.sup_value},
                    {"ratio", r.ratio},
                    {"error_budget", r.error_budget},
                    {"flagged", r.flagged}});
  nlohmann::json j = {{"rows", rows}, {"lambda_bar", table.lambda_bar}, {"nu_a", table.nu_a}, {"points", table.points}};
  j["gamma0_hat"] = std::isfinite(table.gamma0_hat) ? nlohmann::json(table.gamma0_hat) : nlohmann::json(nullptr);
  return j;
}

// --------------------------------------------------- leaf decomposition

namespace {

struct LeafSample {
  double s = 0.0;
  Vec2 base;
  double z = 0.0;
  Vec2 tangent;           // base tangent per unit parameter
  std::vector<int> code;  // branches of the preimages visited so far
  int next = 0;           // branch of the next preimage
};

class LeafTracker {
 public:
  LeafTracker(const SuspensionFlow& flow, const StableLeaf& leaf, double step)
      : flow_(flow), map_(flow.map()), leaf_(leaf), step_(step) {}

  LeafSample start(double s) const {
    const Vec3 p = leaf_.point(s);
    LeafSample out;
    out.s = s;
    out.base = p.head<2>();
    out.z = p.z();
    out.tangent = leaf_.direction;
    out.next = map_.branch_of(map_.apply_inverse(out.base));
    return out;
  }

  // Same arithmetic as SuspensionFlow::backward, one step.
  void advance(LeafSample& x) const {
    double t = step_;
    while (t > x.z) {
      t -= x.z;
      const Vec2 q = map_.apply_inverse(x.base);
      const int br = map_.branch_of(q);
      x.tangent = map_.jacobian(q).inverse() * x.tangent;
      x.code.push_back(br);
      x.base = q;
      x.z = flow_.tau(q);
    }
    x.z -= t;
    x.next = map_.branch_of(map_.apply_inverse(x.base));
  }

  LeafSample at(double s, int steps) const {
    LeafSample x = start(s);
    for (int i = 0; i < steps; ++i) advance(x);
    return x;
  }

 private:
  const SuspensionFlow& flow_;
  const TorusMap& map_;
  StableLeaf leaf_;
  double step_;
};

bool same_sheet(const LeafSample& a, const LeafSample& b) {
  const std::size_t n = std::min(a.code.size(), b.code.size()) + 1;
  auto ext = [](const LeafSample& x, std::size_t i) { return i < x.code.size() ? x.code[i] : x.next; };
  for (std::size_t i = 0; i < n; ++i)
    if (ext(a, i) != ext(b, i)) return false;
  return true;
}

double segment_length(const LeafSample& a, const LeafSample& b) {
  return std::abs(b.s - a.s) * 0.5 * (a.tangent.norm() + b.tangent.norm());
}

using Piece = std::vector<LeafSample>;

// Splits a piece at every sheet change between neighbouring samples.
void cut_piece(const LeafTracker& tr, int steps, Piece piece, std::vector<Piece>& out) {
  for (;;) {
    std::size_t i = 0;
    while (i + 1 < piece.size() && same_sheet(piece[i], piece[i + 1])) ++i;
    if (i + 1 >= piece.size()) {
      out.push_back(std::move(piece));
      return;
    }
    LeafSample left = piece[i], right = piece[i + 1];
    for (int it = 0; it < 80 && right.s - left.s > 1e-14; ++it) {
      LeafSample mid = tr.at(0.5 * (left.s + right.s), steps);
      if (same_sheet(left, mid))
        left = std::move(mid);
      else
        right = std::move(mid);
    }
    Piece head(piece.begin(), piece.begin() + static_cast<std::ptrdiff_t>(i) + 1);
    if (head.back().s != left.s) head.push_back(left);
    Piece tail;
    tail.push_back(right);
    for (std::size_t k = i + 1; k < piece.size(); ++k)
      if (piece[k].s > right.s) tail.push_back(piece[k]);
    if (head.size() >= 2) out.push_back(std::move(head));
    piece = std::move(tail);
    if (piece.size() < 2) {
      // a cut closer than the bisection tolerance to the end
      return;
    }
  }
}

void refine_piece(const LeafTracker& tr, int steps, Piece& piece, double h) {
  Piece out;
  out.reserve(piece.size());
  out.push_back(piece.front());
  for (std::size_t i = 1; i < piece.size(); ++i) {
    // recursive bisection of one interval, left to right
    std::vector<LeafSample> stack{piece[i]};
    while (!stack.empty()) {
      LeafSample& right = stack.back();
      const LeafSample& left = out.back();
      if (segment_length(left, right) <= h || right.s - left.s < 1e-13) {
        out.push_back(std::move(right));
        stack.pop_back();
      } else {
        stack.push_back(tr.at(0.5 * (left.s + right.s), steps));
      }
    }
  }
  piece = std::move(out);
}

std::vector<double> cumulative_length(const Piece& p) {
  std::vector<double> a(p.size(), 0.0);
  for (std::size_t i = 1; i < p.size(); ++i) a[i] = a[i - 1] + segment_length(p[i - 1], p[i]);
  return a;
}

double s_at_length(const Piece& p, const std::vector<double>& a, double target) {
  auto it = std::lower_bound(a.begin(), a.end(), target);
  if (it == a.begin()) return p.front().s;
  if (it == a.end()) return p.back().s;
  const std::size_t j = static_cast<std::size_t>(it - a.begin());
  const double f = (target - a[j - 1]) / std::max(a[j] - a[j - 1], 1e-300);
  return p[j - 1].s + f * (p[j].s - p[j - 1].s);
}

void subdivide_piece(const LeafTracker& tr, int steps, Piece piece, double L0, std::vector<Piece>& out) {
  const auto a = cumulative_length(piece);
  const double total = a.back();
  if (total <= L0) {
    out.push_back(std::move(piece));
    return;
  }
  const int k = static_cast<int>(std::ceil(total / L0));
  std::vector<double> cuts;
  for (int j = 1; j < k; ++j) cuts.push_back(s_at_length(piece, a, total * j / k));
  std::size_t idx = 0;
  Piece cur;
  for (double c : cuts) {
    while (idx < piece.size() && piece[idx].s < c) cur.push_back(piece[idx++]);
    LeafSample cs = tr.at(c, steps);
    cur.push_back(cs);
    if (cur.size() >= 2) out.push_back(std::move(cur));
    cur.clear();
    cur.push_back(cs);
  }
  while (idx < piece.size()) {
    if (piece[idx].s > cur.back().s) cur.push_back(piece[idx]);
    ++idx;
  }
  if (cur.size() >= 2) out.push_back(std::move(cur));
}

double boundary_mass(const std::vector<Piece>& pieces, double r) {
  double mass = 0.0;
  for (const auto& p : pieces) {
    const auto a = cumulative_length(p);
    const double total = a.back();
    if (total <= 2.0 * r) {
      mass += p.back().s - p.front().s;
      continue;
    }
    mass += s_at_length(p, a, r) - p.front().s;
    mass += p.back().s - s_at_length(p, a, total - r);
  }
  return mass;
}

double total_length(const std::vector<Piece>& pieces) {
  double t = 0.0;
  for (const auto& p : pieces) t += cumulative_length(p).back();
  return t;
}

}  // namespace

LeafStats stable_decomposition_stats(const SuspensionFlow& flow, double delta, double r, int ell_max,
                                     std::uint64_t seed, const LeafStatsOptions& options, LeafStats* partial) {
  if (!(r > 0.0 && r < delta)) throw Error(ErrorKind::InvalidArgument, "need 0 < r < delta");
  if (ell_max < 0 || options.leaves < 1 || !(options.piece_length > 0.0))
    throw Error(ErrorKind::InvalidArgument, "bad leaf statistics options");
  const double step = options.step > 0.0 ? options.step : flow.roof().tau_minus() / 4.0;
  const double h = r / 4.0;

  // unclipped leaves through invariant samples
  std::vector<StableLeaf> leaves;
  for (std::uint64_t idx = 0; leaves.size() < static_cast<std::size_t>(options.leaves); ++idx) {
    if (idx > 100000) throw Error(ErrorKind::InvalidArgument, "no unclipped leaf found; delta too large");
    const FlowPoint w = flow.sample_one(seed, idx);
    const StableLeaf leaf = stable_leaf_through(flow, w.vec());
    if (!leaf_interval(flow, leaf, delta).clipped) leaves.push_back(leaf);
  }

  const std::size_t n_leaves = leaves.size();
  std::vector<std::vector<LeafStatsRow>> per_leaf(n_leaves);
  std::vector<int> reached(n_leaves, ell_max);
  parallel_for(n_leaves, [&](std::size_t li) {
    const LeafTracker tr(flow, leaves[li], step);
    std::vector<Piece> pieces(1);
    const int n0 = std::max(2, static_cast<int>(std::ceil(2.0 * delta / h)) + 1);
    for (int i = 0; i < n0; ++i) pieces[0].push_back(tr.start(-delta + 2.0 * delta * i / (n0 - 1)));
    auto record = [&](int ell) {
      std::size_t count = pieces.size();
      per_leaf[li].push_back({ell, count, boundary_mass(pieces, r) / (2.0 * delta), total_length(pieces)});
    };
    record(0);
    for (int ell = 1; ell <= ell_max; ++ell) {
      for (auto& p : pieces)
        for (auto& x : p) tr.advance(x);
      std::vector<Piece> cut;
      for (auto& p : pieces) cut_piece(tr, ell, std::move(p), cut);
      for (auto& p : cut) refine_piece(tr, ell, p, h);
      std::vector<Piece> recut;
      for (auto& p : cut) cut_piece(tr, ell, std::move(p), recut);
      pieces.clear();
      for (auto& p : recut) subdivide_piece(tr, ell, std::move(p), options.piece_length, pieces);
      record(ell);
      if (pieces.size() * n_leaves > options.max_pieces) {
        reached[li] = ell;
        return;
      }
    }
  }, 1);

  LeafStats stats;
  const int common = *std::min_element(reached.begin(), reached.end());
  for (int ell = 0; ell <= common; ++ell) {
    LeafStatsRow row;
    row.ell = ell;
    for (std::size_t li = 0; li < n_leaves; ++li) {
      const auto& src = per_leaf[li][static_cast<std::size_t>(ell)];
      row.piece_count += src.piece_count;
      row.boundary_mass_r += src.boundary_mass_r / static_cast<double>(n_leaves);
      row.total_length += src.total_length / static_cast<double>(n_leaves);
    }
    stats.rows.push_back(row);
  }
  if (common < ell_max) {
    stats.exploded = true;
    if (partial) *partial = stats;
    throw Error(ErrorKind::PieceExplosion, "piece count exceeded " + std::to_string(options.max_pieces) + " at step " +
                                               std::to_string(common));
  }
  return stats;
}

void write_leafstats_csv(std::ostream& out, const LeafStats& stats) {
  out << "ell,piece_count,boundary_mass_r\n";
  for (const auto& r : stats.rows) out << r.ell << ',' << r.piece_count << ',' << fmt_num(r.boundary_mass_r) << '\n';
}

}  // namespace contactflow
