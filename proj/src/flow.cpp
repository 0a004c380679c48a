#include "contactflow/flow.hpp"

#include "contactflow/format.hpp"
#include "contactflow/parallel.hpp"
#include "contactflow/rng.hpp"

#include <cmath>
#include <ostream>

namespace contactflow {

SuspensionFlow::SuspensionFlow(std::shared_ptr<const TorusMap> map, std::shared_ptr<const RoofFunction> roof)
    : map_(std::move(map)), roof_(std::move(roof)) {
  if (!map_ || !roof_) throw Error(ErrorKind::InvalidArgument, "flow needs a map and a roof");
  if (!(roof_->volume() > 0.0)) throw Error(ErrorKind::InvalidArgument, "flow volume must be positive");
}

FlowPoint SuspensionFlow::make_point(double x, double y, double z) const {
  if (!(x >= 0.0 && x < 1.0 && y >= 0.0 && y < 1.0))
    throw Error(ErrorKind::InvalidArgument, "base point must lie in [0,1)^2");
  const Vec2 p(x, y);
  const int b = map_->branch_of(p);
  if (!(z >= 0.0 && z < roof_->value_on(p, b))) throw Error(ErrorKind::InvalidArgument, "z must lie in [0, tau)");
  return {x, y, z, map_->declared_piece_of_branch(b)};
}

FlowPoint SuspensionFlow::forward(const FlowPoint& start, double t, FlowStats* stats) const {
  if (!std::isfinite(t) || !std::isfinite(start.z)) throw Error(ErrorKind::NonFinite, "flow time must be finite");
  if (t < 0.0) return backward(start, -t, stats);
  Vec2 p = start.base();
  double z = start.z;
  int b = map_->branch_of(p);
  for (;;) {
    const double remaining = roof_->value_on(p, b) - z;
    if (t < remaining) return {p.x(), p.y(), z + t, map_->declared_piece_of_branch(b)};
    t -= remaining;
    p = map_->apply_on(p, b);
    z = 0.0;
    b = map_->branch_of(p);
    if (stats) {
      ++stats->crossings;
      if (map_->boundary_distance(p) < 1e-12) ++stats->near_discontinuity;
    }
  }
}

FlowPoint SuspensionFlow::backward(const FlowPoint& start, double t, FlowStats* stats) const {
  if (!std::isfinite(t) || !std::isfinite(start.z)) throw Error(ErrorKind::NonFinite, "flow time must be finite");
  if (t < 0.0) return forward(start, -t, stats);
  Vec2 p = start.base();
  double z = start.z;
  for (;;) {
    if (t <= z) {
      const Vec2 q = p;
      return {q.x(), q.y(), z - t, map_->declared_piece_of(q)};
    }
    t -= z;
    p = map_->apply_inverse(p);
    z = tau(p);
    if (stats) {
      ++stats->crossings;
      if (map_->boundary_distance(p) < 1e-12) ++stats->near_discontinuity;
    }
  }
}

ReturnStep SuspensionFlow::return_map(const Vec2& base) const {
  const int b = map_->branch_of(base);
  return {map_->apply_on(base, b), roof_->value_on(base, b), map_->declared_piece_of_branch(b)};
}

Itinerary SuspensionFlow::iterate(const Vec2& base, int n) const {
  Itinerary it;
  Vec2 p = base;
  for (int k = 0; k < n; ++k) {
    const ReturnStep step = return_map(p);
    it.pieces.push_back(step.piece);
    it.time += step.time;
    p = step.image;
  }
  it.image = p;
  return it;
}

FlowPoint SuspensionFlow::sample_one(std::uint64_t seed, std::uint64_t index, std::size_t* attempts) const {
  CounterRng rng(seed, index);
  const double top = roof_->tau_max();
  for (std::size_t tries = 1;; ++tries) {
    const Vec2 p(rng.uniform(), rng.uniform());
    const double z = rng.uniform(0.0, top);
    const int b = map_->branch_of(p);
    if (z < roof_->value_on(p, b)) {
      if (attempts) *attempts = tries;
      return {p.x(), p.y(), z, map_->declared_piece_of_branch(b)};
    }
  }
}

std::vector<FlowPoint> SuspensionFlow::sample_invariant(std::uint64_t seed, std::size_t n, SampleStats* stats) const {
  if (n == 0) throw Error(ErrorKind::InvalidArgument, "need at least one sample");
  std::vector<FlowPoint> out(n);
  constexpr std::size_t chunk = 4096;
  std::vector<std::size_t> attempts((n + chunk - 1) / chunk, 0);
  parallel_chunks(n, chunk, [&](std::size_t c, std::size_t begin, std::size_t end) {
    std::size_t local = 0;
    for (std::size_t i = begin; i < end; ++i) {
      std::size_t tries = 0;
      out[i] = sample_one(seed, i, &tries);
      local += tries;
    }
    attempts[c] = local;
  });
  if (stats) {
    stats->accepted = n;
    stats->attempts = 0;
    for (std::size_t a : attempts) stats->attempts += a;
  }
  return out;
}

FlowPoint flow_forward(const SuspensionFlow& flow, const FlowPoint& p, double t) { return flow.forward(p, t); }
FlowPoint flow_backward(const SuspensionFlow& flow, const FlowPoint& p, double t) { return flow.backward(p, t); }

SuspensionFlow make_f0_flow(double tau_minus) {
  auto map = std::make_shared<const PiecewiseAffineTorusMap>(make_f0_map());
  auto roof = std::make_shared<const QuadraticRoof>(map, tau_minus);
  return SuspensionFlow(map, roof);
}

std::shared_ptr<const ShearPerturbedMap> build_perturbed_map(double epsilon) {
  return std::make_shared<const ShearPerturbedMap>(epsilon);
}

SuspensionFlow make_perturbed_flow(double epsilon, double tau_minus) {
  auto map = build_perturbed_map(epsilon);
  auto roof = std::make_shared<const LineIntegralRoof>(map, tau_minus);
  return SuspensionFlow(map, roof);
}

void write_trajectory_csv(std::ostream& out, const SuspensionFlow& flow, const FlowPoint& start, double t_end, double dt) {
  if (!(dt > 0.0)) throw Error(ErrorKind::InvalidArgument, "trajectory step must be positive");
  out << "t,x,y,z,piece_id\n";
  FlowPoint p = start;
  const auto steps = static_cast<std::size_t>(std::floor(t_end / dt + 1e-9));
  for (std::size_t k = 0; k <= steps; ++k) {
    if (k > 0) p = flow.forward(p, dt);
    out << fmt_num(static_cast<double>(k) * dt) << ',' << fmt_num(p.x) << ',' << fmt_num(p.y) << ',' << fmt_num(p.z)
        << ',' << p.piece << '\n';
  }
}

Vec3 flow_differential_fd(const SuspensionFlow& flow, const FlowPoint& p, const Vec3& v, double t, double h) {
  auto shifted = [&](double sign) {
    const FlowPoint q{p.x + sign * h * v.x(), p.y + sign * h * v.y(), p.z + sign * h * v.z(), p.piece};
    return flow.forward(q, t).vec();
  };
  Vec3 d = shifted(1.0) - shifted(-1.0);
  // base coordinates are reduced mod 1; undo a wrap between the two probes
  for (int i = 0; i < 2; ++i) d(i) -= std::round(d(i));
  return d / (2 * h);
}

}  // namespace contactflow
