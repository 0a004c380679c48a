#include "contactflow/aniso.hpp"
#include "contactflow/averaging.hpp"
#include "contactflow/cli.hpp"
#include "contactflow/complexity.hpp"
#include "contactflow/geometry.hpp"
#include "contactflow/hyperbolicity.hpp"
#include "contactflow/parallel.hpp"
#include "contactflow/rng.hpp"
#include "contactflow/transfer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

namespace contactflow {

using nlohmann::json;
namespace fs = std::filesystem;

bool RunManifest::passed() const {
  for (const auto& c : checks)
    if (!c.passed) return false;
  return true;
}

json to_json(const RunManifest& m) {
  json checks = json::array();
  for (const auto& c : m.checks)
    checks.push_back(
        {{"name", c.name}, {"passed", c.passed}, {"value", c.value}, {"threshold", c.threshold}, {"detail", c.detail}});
  return {{"experiment", m.experiment}, {"config_hash", m.config_hash}, {"version", m.version},
          {"seed", m.seed},             {"wall_time", m.wall_time},     {"passed", m.passed()},
          {"checks", checks},           {"artifacts", m.artifacts},     {"notes", m.notes}};
}

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

class Run {
 public:
  Run(const ExperimentConfig& config, RunManifest& manifest)
      : cfg(config), tol(config.tolerances), manifest_(manifest), dir_(config.output_dir) {}

  const ExperimentConfig& cfg;
  const Tolerances& tol;

  void check(std::string name, bool passed, double value, double threshold, std::string detail = {}) {
    manifest_.checks.push_back({std::move(name), passed, value, threshold, std::move(detail)});
  }

  void note(std::string line) { manifest_.notes.push_back(std::move(line)); }

  // Library failures inside one block become a failed check, so the other
  // blocks of the experiment still run.
  template <typename Fn>
  void guarded(const std::string& name, Fn&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::ConfigError) throw;
      check(name, false, kNaN, kNaN, e.what());
    } catch (const std::exception& e) {
      check(name, false, kNaN, kNaN, e.what());
    }
  }

  void write(const std::string& file, const std::string& content) {
    std::ofstream out(dir_ / file, std::ios::binary);
    out << content;
    if (!out) throw Error(ErrorKind::InvalidArgument, "cannot write " + (dir_ / file).string());
    manifest_.artifacts.push_back(file);
  }

  template <typename Writer>
  void write_with(const std::string& file, Writer&& writer) {
    std::ostringstream out;
    writer(out);
    write(file, out.str());
  }

  std::uint64_t seed(std::uint64_t tag) const { return CounterRng::split(cfg.seed, tag); }

 private:
  RunManifest& manifest_;
  fs::path dir_;
};

// Short form for human-readable notes; artifacts use fmt_num.
std::string fmt_short(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

double torus_gap(double a, double b) {
  const double d = a - b;
  return d - std::round(d);
}

double point_distance(const FlowPoint& a, const FlowPoint& b) {
  return std::max({std::abs(torus_gap(a.x, b.x)), std::abs(torus_gap(a.y, b.y)), std::abs(a.z - b.z)});
}

FlowBoxBump to_bump(const BumpSpec& b) {
  return {Vec3(b.center[0], b.center[1], b.center[2]), Vec3(b.half_width[0], b.half_width[1], b.half_width[2]),
          Complex(b.amplitude, 0.0)};
}

FlowPoint point_in_bump(const SuspensionFlow& flow, const FlowBoxBump& b, CounterRng& rng) {
  const double x = b.center.x() + b.half_width.x() * rng.uniform(-0.9, 0.9);
  const double y = b.center.y() + b.half_width.y() * rng.uniform(-0.9, 0.9);
  const double z = b.center.z() + b.half_width.z() * rng.uniform(-0.9, 0.9);
  return flow.make_point(wrap_unit(x), wrap_unit(y), z);
}

Complex to_complex(const std::array<double, 2>& z) { return {z[0], z[1]}; }

// The orbit of p over time t stays `margin` away from branch edges and from
// the floor and roof at every crossing, so finite differences see one branch.
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

// ----------------------------------------------------------------- verify

void run_verify(Run& run, const SuspensionFlow& flow) {
  const auto& v = run.cfg.verify;
  const auto& tol = run.tol;
  const TorusMap& map = flow.map();
  const RoofFunction& roof = flow.roof();
  const bool is_f0 = run.cfg.flow.map == "f0";
  json report;

  run.guarded("roof_gradient", [&] {
    CounterRng rng(run.seed(1), 0);
    double analytic = 0.0, fd = 0.0;
    constexpr double h = 1e-6;
    for (int i = 0; i < v.roof_samples; ++i) {
      const Vec2 p(rng.uniform(), rng.uniform());
      const int b = map.branch_of(p);
      const Vec2 field = roof.contact_field_on(p, b);
      analytic = std::max(analytic, (roof.gradient_on(p, b) - field).cwiseAbs().maxCoeff());
      if (map.boundary_distance(p) < 1e-4) continue;
      const Vec2 ex(h, 0.0), ey(0.0, h);
      const Vec2 g((roof.value_on(p + ex, b) - roof.value_on(p - ex, b)) / (2 * h),
                   (roof.value_on(p + ey, b) - roof.value_on(p - ey, b)) / (2 * h));
      fd = std::max(fd, (g - field).cwiseAbs().maxCoeff());
    }
    run.check("roof_gradient", analytic <= tol.roof_gradient, analytic, tol.roof_gradient);
    run.check("roof_gradient_fd", fd <= tol.roof_fd, fd, tol.roof_fd);
    report["roof_gradient"] = analytic;
    report["roof_gradient_fd"] = fd;
  });

  run.guarded("closedness", [&] {
    if (const auto* affine = dynamic_cast<const PiecewiseAffineTorusMap*>(&map)) {
      // d_y a - d_x b = 1 - det of the branch matrix, exactly
      double worst = 0.0;
      for (const auto& b : affine->branches()) worst = std::max(worst, std::abs(to_double(1 - b.exact_matrix.det())));
      run.check("closedness", worst == 0.0, worst, 0.0, "exact determinant of every branch");
      report["closedness"] = worst;
    } else {
      CounterRng rng(run.seed(2), 0);
      std::vector<Vec2> pts;
      for (int i = 0; i < v.roof_samples / 10 + 1; ++i) {
        const Vec2 p(rng.uniform(), rng.uniform());
        if (map.boundary_distance(p) > 1e-3) pts.push_back(p);
      }
      const double res = closedness_residual(roof, map, pts);
      run.check("closedness", res <= tol.closedness_fd, res, tol.closedness_fd, "central differences");
      report["closedness"] = res;
    }
  });

  run.guarded("contact_invariance", [&] {
    const std::size_t want = static_cast<std::size_t>(v.contact_samples);
    const std::uint64_t seed_pts = run.seed(3), seed_dir = run.seed(4);
    std::vector<double> residuals;
    std::size_t next = 0, crossings = 0;
    while (residuals.size() < want) {
      if (next > 50 * want) throw Error(ErrorKind::ToleranceNotMet, "too few orbits clear of the discontinuities");
      std::vector<double> res(want, kNaN);
      std::vector<int> hits(want, 0);
      parallel_for(want, [&](std::size_t i) {
        const std::uint64_t idx = next + i;
        const FlowPoint p = flow.sample_one(seed_pts, idx);
        CounterRng rng(seed_dir, idx);
        const int k = 1 + static_cast<int>(rng.uniform() * v.max_crossings);
        // a time with exactly k roof hits
        double t = flow.tau(p.base()) - p.z;
        Vec2 q = map.apply(p.base());
        for (int c = 1; c < k; ++c) {
          t += flow.tau(q);
          q = map.apply(q);
        }
        t += rng.uniform() * flow.tau(q);
        const Vec3 dir = Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)).normalized();
        if (!orbit_is_clear(flow, p, t, v.clear_margin)) return;
        const FlowPoint end = flow.forward(p, t);
        const Vec3 dv = flow_differential_fd(flow, p, dir, t);
        res[i] = std::abs(eval_alpha(end.vec(), dv) - eval_alpha(p.vec(), dir));
        hits[i] = k;
      });
      for (std::size_t i = 0; i < want && residuals.size() < want; ++i)
        if (!std::isnan(res[i])) {
          residuals.push_back(res[i]);
          crossings += static_cast<std::size_t>(hits[i]);
        }
      next += want;
    }
    double worst = 0.0;
    for (double r : residuals) worst = std::max(worst, r);
    run.check("contact_invariance", worst < tol.contact, worst, tol.contact,
              std::to_string(want) + " orbits, " + std::to_string(crossings) + " roof crossings");
    report["contact_invariance"] = worst;
    report["contact_crossings"] = crossings;
  });

  run.guarded("semigroup", [&] {
    const std::size_t n = static_cast<std::size_t>(v.semigroup_samples);
    const auto pts = flow.sample_invariant(run.seed(5), n);
    std::vector<double> semi(n), inv(n);
    const std::uint64_t seed_t = run.seed(6);
    parallel_for(n, [&](std::size_t i) {
      CounterRng rng(seed_t, i);
      const double t1 = rng.uniform(0, v.max_time), t2 = rng.uniform(0, v.max_time);
      const FlowPoint a = flow.forward(pts[i], t1 + t2);
      const FlowPoint b = flow.forward(flow.forward(pts[i], t1), t2);
      semi[i] = point_distance(a, b);
      inv[i] = point_distance(flow.backward(a, t1 + t2), pts[i]);
    });
    double ws = 0.0, wi = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      ws = std::max(ws, semi[i]);
      wi = std::max(wi, inv[i]);
    }
    run.check("semigroup", ws <= tol.semigroup, ws, tol.semigroup);
    run.check("inversion", wi <= tol.semigroup, wi, tol.semigroup);
    report["semigroup"] = ws;
    report["inversion"] = wi;
  });

  run.guarded("volume_boxes", [&] {
    const std::size_t n = static_cast<std::size_t>(v.box_samples);
    const auto pts = flow.sample_invariant(run.seed(7), n);
    CounterRng rng(run.seed(8), 0);
    const double floor_height = roof.tau_minus();
    double worst = 0.0;
    json boxes = json::array();
    for (double t : v.box_times) {
      std::vector<FlowPoint> moved(n);
      parallel_for(n, [&](std::size_t i) { moved[i] = flow.forward(pts[i], t); });
      for (int k = 0; k < v.boxes; ++k) {
        const double w = 0.1 + 0.1 * rng.uniform(), h = 0.1 + 0.1 * rng.uniform();
        const double d = (0.2 + 0.3 * rng.uniform()) * floor_height;
        const double x0 = rng.uniform(0, 1 - w), y0 = rng.uniform(0, 1 - h), z0 = rng.uniform(0, floor_height - d);
        std::size_t inside = 0;
        for (const FlowPoint& p : moved)
          if (p.x >= x0 && p.x < x0 + w && p.y >= y0 && p.y < y0 + h && p.z >= z0 && p.z < z0 + d) ++inside;
        // the box lies under the floor of the roof, so its mass is its volume
        const double frac = w * h * d / flow.volume();
        const double sigma = std::sqrt(frac * (1 - frac) / static_cast<double>(n));
        const double dev = std::abs(static_cast<double>(inside) / static_cast<double>(n) - frac) / sigma;
        worst = std::max(worst, dev);
        boxes.push_back({{"t", t}, {"expected", frac}, {"observed", static_cast<double>(inside) / n}, {"sigmas", dev}});
      }
    }
    run.check("volume_boxes", worst <= tol.box_sigma, worst, tol.box_sigma,
              std::to_string(v.box_times.size() * static_cast<std::size_t>(v.boxes)) + " boxes, deviation in sigmas");
    report["volume_boxes"] = boxes;
  });

  run.guarded("reeb_charts", [&] {
    CounterRng rng(run.seed(9), 0);
    double worst = 0.0;
    for (int c = 0; c < v.charts; ++c) {
      const Vec3 point = flow.sample_one(run.seed(10), static_cast<std::uint64_t>(c)).vec();
      const Vec2 e(rng.uniform(-1, 1), rng.uniform(0.3, 1.0));
      Vec2 u(rng.uniform(-1, 1), rng.uniform(-1, 1));
      if (std::abs(e.x() * u.y() - e.y() * u.x()) < 0.1) u = Vec2(e.y(), -e.x());
      const Vec3 stable(e.x(), e.y(), point.y() * e.x());
      const Vec3 unstable(u.x(), u.y(), point.y() * u.x());
      const ContactChart chart = reeb_chart_at(point, stable, unstable);
      std::vector<Vec3> pts, vecs;
      for (int i = 0; i < v.chart_samples; ++i) {
        pts.push_back(point + Vec3(rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5)));
        vecs.push_back(Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)));
      }
      worst = std::max(worst, pullback_residual(chart, pts, vecs));
    }
    run.check("reeb_charts", worst <= tol.chart, worst, tol.chart);
    report["reeb_charts"] = worst;
  });

  run.guarded("cone_invariance", [&] {
    const Cone2 cone = Cone2::standard_unstable(v.cone_aperture);
    const auto rep = check_cone_invariance(map, cone, v.cone_rays);
    if (is_f0) {
      const double bound = v.cone_aperture / 4 + tol.cone_slack;
      run.check("cone_quarter", rep.image_aperture <= bound, rep.image_aperture, bound,
                std::to_string(rep.rays_tested) + " rays");
    } else {
      run.check("cone_invariance", rep.strictly_invariant(), rep.margin, 0.0,
                std::to_string(rep.rays_tested) + " rays, margin");
    }
    report["cone"] = {{"aperture", v.cone_aperture}, {"image_aperture", rep.image_aperture}, {"rays", rep.rays_tested}};
  });

  run.guarded("expansion", [&] {
    // apertures from wide to narrow; a map other than f0 may stop keeping
    // the narrow cones invariant, and the last invariant one is used
    std::vector<double> apertures = is_f0 ? v.expansion_apertures : std::vector<double>{v.cone_aperture};
    if (!is_f0)
      for (double a : v.expansion_apertures)
        if (a < v.cone_aperture) apertures.push_back(a);
    json rows = json::array();
    ExpansionConstants last;
    double last_aperture = 0.0;
    for (double a : apertures) {
      ExpansionConstants e;
      try {
        e = expansion_constants(map, Cone2::standard_unstable(a), 1);
      } catch (const Error& err) {
        if (is_f0 || err.kind() != ErrorKind::ConeNotInvariant || rows.empty()) throw;
        run.note("aperture " + fmt_short(a) + ": cone not invariant");
        break;
      }
      last = e;
      last_aperture = a;
      rows.push_back(
          {{"aperture", a}, {"n", last.n}, {"lambda_u", last.lambda_u}, {"Lambda_u", last.Lambda_u}, {"lambda_s", last.lambda_s}});
      run.note("aperture " + fmt_short(a) + ": lambda_u " + fmt_short(last.lambda_u) + ", Lambda_u " +
               fmt_short(last.Lambda_u) + ", lambda_s " + fmt_short(last.lambda_s));
    }
    run.write("hyperbolicity.json", rows.dump(2) + "\n");
    if (is_f0) {
      const double gap = std::max(std::abs(last.lambda_u - 2.0) / 2.0, std::abs(last.lambda_s - 0.5) / 0.5);
      run.check("expansion_limit", gap <= tol.expansion, gap, tol.expansion,
                "relative distance to (2, 1/2) at aperture " + fmt_short(last_aperture));
    } else {
      run.check("hyperbolic_rates", last.lambda_u > 1.0 && last.lambda_s < 1.0, last.lambda_u, 1.0,
                "lambda_s " + fmt_short(last.lambda_s) + " at aperture " + fmt_short(last_aperture));
    }
    const HyperbolicityParams params{last.lambda_u, last.lambda_s, last.Lambda_u, 0.0, default_t00(roof)};
    const auto bunching = check_bunching(params);
    run.check("bunching", bunching.satisfied, bunching.value, 1.0);
  });

  run.guarded("transversality", [&] {
    const auto rep = check_transversality(map, Cone2::standard_stable(1.0), v.transversality_samples);
    run.check("transversality", rep.transversal(), rep.min_clearance, 0.0,
              std::to_string(rep.segments) + " discontinuity segments");
    report["transversality"] = rep.min_clearance;
  });

  run.guarded("trajectory", [&] {
    const FlowPoint start = flow.sample_one(run.seed(11), 0);
    run.write_with("trajectory.csv", [&](std::ostream& out) { write_trajectory_csv(out, flow, start, 10.0, 0.05); });
  });

  run.write("verify.json", report.dump(2) + "\n");
}

// -------------------------------------------------------------- correlate

void run_correlate(Run& run, const SuspensionFlow& flow) {
  const auto& k = run.cfg.correlate;
  const auto& tol = run.tol;
  json report;
  std::vector<double> grid;
  for (int i = 0; i * k.dt <= k.t_max + 1e-12; ++i) grid.push_back(i * k.dt);
  const auto n = static_cast<std::size_t>(k.n_samples);
  const CorrelationOptions options{k.batches};

  run.guarded("control", [&] {
    const Observable psi1 = make_bump(flow, to_bump(k.psi1));
    const auto control = correlation(flow, psi1, Observable::constant(1.0), grid, n, run.seed(21), options);
    double worst = 0.0;
    for (std::size_t i = 0; i < grid.size(); ++i) worst = std::max(worst, std::abs(control.C[i]) / control.std_error[i]);
    run.check("control_zero", worst <= tol.control_sigma, worst, tol.control_sigma, "max |C| / stderr, psi2 = 1");
    run.write_with("correlation_control.csv", [&](std::ostream& out) { write_correlation_csv(out, control); });
    report["control_max_sigmas"] = worst;
  });

  run.guarded("decay", [&] {
    const Observable psi1 = make_bump(flow, to_bump(k.psi1));
    const Observable psi2 = make_bump(flow, to_bump(k.psi2));
    auto series = correlation(flow, psi1, psi2, grid, n, run.seed(21), options);
    run.write_with("correlation.csv", [&](std::ostream& out) { write_correlation_csv(out, series); });
    FitOptions fo;
    fo.bootstrap = k.bootstrap;
    fo.seed = run.seed(22);
    const DecayFit fit = fit_decay(series, fo);
    run.check("sigma_positive", fit.sigma_hat > 0.0, fit.sigma_hat, 0.0);
    run.check("sigma_interval", fit.ci_low > 0.0, fit.ci_low, 0.0,
              "95% interval [" + fmt_short(fit.ci_low) + ", " + fmt_short(fit.ci_high) + "]");
    report["fit"] = {{"sigma_hat", fit.sigma_hat}, {"K_hat", fit.K_hat},           {"ci_low", fit.ci_low},
                     {"ci_high", fit.ci_high},     {"usable_points", fit.usable_points}, {"n_samples", series.n_samples}};
    run.note("sigma_hat " + fmt_short(fit.sigma_hat) + " in [" + fmt_short(fit.ci_low) + ", " + fmt_short(fit.ci_high) + "]");
  });

  run.guarded("planted_rate", [&] {
    CorrelationSeries s;
    CounterRng rng(run.seed(23), 0);
    for (int i = 0; i <= 60; ++i) {
      const double t = 0.5 * i;
      s.t.push_back(t);
      s.C.push_back(0.5 * std::exp(-k.planted_rate * t) + 1e-4 * rng.normal());
      s.std_error.push_back(1e-4);
    }
    FitOptions fo;
    fo.bootstrap = k.bootstrap;
    fo.seed = run.seed(24);
    const DecayFit fit = fit_decay(s, fo);
    const double err = std::abs(fit.sigma_hat - k.planted_rate);
    run.check("planted_rate", err <= tol.planted_rate, err, tol.planted_rate,
              "recovered " + fmt_short(fit.sigma_hat) + " for planted " + fmt_short(k.planted_rate));
    report["planted"] = {{"rate", k.planted_rate}, {"sigma_hat", fit.sigma_hat}};
  });

  run.write("correlate.json", report.dump(2) + "\n");
}

// -------------------------------------------------------------- resolvent

void run_resolvent(Run& run, const SuspensionFlow& flow) {
  const auto& k = run.cfg.resolvent;
  const auto& tol = run.tol;
  json report;
  std::vector<ResolventRecord> records;

  run.guarded("resolvent_constant", [&] {
    const Observable one = Observable::constant(1.0);
    const FlowPoint w = flow.sample_one(run.seed(31), 0);
    double worst = 0.0;
    for (const auto& zz : k.constant_z) {
      ResolventParams p;
      p.z = to_complex(zz);
      const auto r = resolvent_apply(flow, one, p, w);
      worst = std::max(worst, std::abs(r.value - 1.0 / p.z));
      records.push_back({0, p.z, 1, r});
    }
    run.check("resolvent_constant", worst < tol.resolvent_constant, worst, tol.resolvent_constant, "|R(z)1 - 1/z|");
    report["constant"] = worst;
  });

  run.guarded("generator_identity", [&] {
    const FlowBoxBump b = to_bump(k.psi);
    const Observable psi = make_bump(flow, b);
    ResolventParams p;
    p.z = to_complex(k.generator_z);
    p.tolerance = k.generator_tolerance;
    const Observable shifted = psi.generator_shifted(p.z);
    const auto n = static_cast<std::size_t>(k.generator_points);
    std::vector<double> res(n);
    const std::uint64_t seed = run.seed(32);
    parallel_for(
        n,
        [&](std::size_t i) {
          CounterRng rng(seed, i);
          const FlowPoint w = point_in_bump(flow, b, rng);
          res[i] = std::abs(resolvent_apply(flow, shifted, p, w).value - psi(w));
        },
        1);
    double worst = 0.0;
    for (double r : res) worst = std::max(worst, r);
    run.check("generator_identity", worst < tol.generator, worst, tol.generator,
              std::to_string(n) + " points, sup |R(z)(z - X)psi - psi|");
    report["generator"] = worst;
  });

  run.guarded("nested_power", [&] {
    const FlowBoxBump b = to_bump(k.psi);
    const Observable psi = make_bump(flow, b);
    ResolventParams p;
    p.z = to_complex(k.nested_z);
    p.tolerance = tol.nested;
    p.panel = k.nested_panel;
    const Observable inner = resolvent_observable(flow, psi, p);
    const auto n = static_cast<std::size_t>(k.nested_points);
    std::vector<double> res(n);
    const std::uint64_t seed = run.seed(33);
    parallel_for(
        n,
        [&](std::size_t i) {
          CounterRng rng(seed, i);
          const FlowPoint w = i % 2 ? point_in_bump(flow, b, rng) : flow.sample_one(seed, i);
          const Complex closed = resolvent_power(flow, psi, p, 2, w).value;
          const Complex nested = resolvent_apply(flow, inner, p, w).value;
          res[i] = std::abs(closed - nested);
        },
        1);
    double worst = 0.0;
    for (double r : res) worst = std::max(worst, r);
    run.check("nested_power", worst < tol.nested, worst, tol.nested, "R(z)^2 closed form against R(z)(R(z) psi)");
    report["nested"] = worst;
  });

  run.guarded("modulus_bound", [&] {
    const Observable psi = make_bump(flow, to_bump(k.psi));
    ResolventParams p;
    p.z = to_complex(k.modulus_z);
    const auto n = static_cast<std::size_t>(k.modulus_points);
    const auto pts = flow.sample_invariant(run.seed(34), n);
    const auto n_max = static_cast<std::size_t>(k.n_max);
    std::vector<ResolventValue> vals(n * n_max);
    parallel_for(
        n,
        [&](std::size_t i) {
          for (std::size_t m = 0; m < n_max; ++m)
            vals[i * n_max + m] = resolvent_power(flow, psi, p, static_cast<int>(m + 1), pts[i]);
        },
        1);
    double excess = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t m = 0; m < n_max; ++m) {
        const auto& r = vals[i * n_max + m];
        const double bound = std::pow(p.z.real(), -static_cast<double>(m + 1)) * psi.sup_bound();
        excess = std::max(excess, std::abs(r.value) - bound);
        records.push_back({i + 1, p.z, static_cast<int>(m + 1), r});
      }
    run.check("modulus_bound", excess <= tol.modulus, excess, tol.modulus, "max |R(z)^n psi| - a^-n sup|psi|");
    report["modulus_excess"] = excess;
  });

  run.write_with("resolvent.csv", [&](std::ostream& out) { write_resolvent_csv(out, records); });
  run.write("resolvent.json", report.dump(2) + "\n");
}

// ------------------------------------------------------------------- ulam

void run_ulam(Run& run, const SuspensionFlow& flow) {
  const auto& k = run.cfg.ulam;
  const auto& tol = run.tol;
  UlamOptions options;
  options.krylov_dim = k.krylov_dim;
  const auto spc = static_cast<std::size_t>(k.samples_per_cell);
  double coarse_modulus = kNaN;

  run.guarded("ulam", [&] {
    const UlamModel m = ulam_build(flow, k.t, {k.cells[0], k.cells[1], k.cells[2]}, spc, run.seed(41), options);
    run.write("ulam.json", ulam_summary_json(m) + "\n");
    const double lead = std::abs(m.leading - 1.0);
    run.check("ulam_leading", lead <= tol.ulam_leading, lead, tol.ulam_leading, "|leading eigenvalue - 1|");
    run.check("ulam_second", m.second_modulus < 1.0, m.second_modulus, 1.0, "second eigenvalue modulus");
    coarse_modulus = m.second_modulus;
    run.note("second eigenvalue modulus " + fmt_short(m.second_modulus) + " on " + std::to_string(m.states) + " cells");
  });
  if (!k.refine || std::isnan(coarse_modulus)) return;

  run.guarded("ulam_refined", [&] {
    const UlamModel m =
        ulam_build(flow, k.t, {2 * k.cells[0], 2 * k.cells[1], 2 * k.cells[2]}, spc, run.seed(42), options);
    run.write("ulam_refined.json", ulam_summary_json(m) + "\n");
    const double change = std::abs(m.second_modulus - coarse_modulus) / coarse_modulus;
    run.check("ulam_refinement", change <= tol.ulam_stability, change, tol.ulam_stability,
              "relative change of the second modulus under doubling");
    run.note("refined second eigenvalue modulus " + fmt_short(m.second_modulus) + " on " + std::to_string(m.states) +
             " cells");
  });
}

// -------------------------------------------------------------- dolgopyat

void run_dolgopyat(Run& run, const SuspensionFlow& flow) {
  const auto& k = run.cfg.dolgopyat;
  const auto& tol = run.tol;
  DolgopyatParams params;
  params.a = k.a;
  params.m = k.m;
  params.gamma = k.gamma;
  params.leaf_panel_length = k.leaf_panel_length;

  run.guarded("anchor", [&] {
    const Observable one = Observable::constant(1.0);
    const auto pts = flow.sample_invariant(run.seed(51), static_cast<std::size_t>(k.anchor_points));
    std::vector<double> bs{0.0};
    bs.insert(bs.end(), k.b.begin(), k.b.end());
    double worst = 0.0;
    for (const auto& w : pts)
      for (double b : bs) {
        const auto v = dolgopyat_value(flow, one, params, b, w);
        worst = std::max(worst, std::abs(v.value - std::pow(Complex(k.a, b), -2 * k.m)));
      }
    run.check("anchor", worst <= tol.anchor, worst, tol.anchor, "psi = 1 against (a + ib)^{-2m}");
  });

  run.guarded("decay", [&] {
    const Observable psi = make_bump(flow, to_bump(k.psi));
    const auto tab = dolgopyat_experiment(flow, psi, params, k.b, static_cast<std::size_t>(k.points), run.seed(52));
    run.write_with("dolgopyat.csv", [&](std::ostream& out) { write_dolgopyat_csv(out, tab); });
    run.write("dolgopyat.json", to_json(tab).dump(2) + "\n");
    int violations = 0;
    for (std::size_t i = 1; i < tab.rows.size(); ++i)
      if (!(tab.rows[i].ratio < tab.rows[i - 1].ratio)) ++violations;
    run.check("monotone_decay", violations <= 1, violations, 1.0, "violations of strict decrease in b");
    run.check("gamma0_positive", tab.gamma0_hat > 0.0, tab.gamma0_hat, 0.0);
    double worst = 0.0;
    for (const auto& r : tab.rows) worst = std::max(worst, r.error_budget / r.sup_value);
    run.check("budget", worst < tol.budget_fraction, worst, tol.budget_fraction, "max error budget / sup value");
    for (const auto& r : tab.rows)
      run.note("b " + fmt_short(r.b) + ": ratio " + fmt_short(r.ratio) + ", budget " + fmt_short(r.error_budget));
    run.note("gamma0_hat " + fmt_short(tab.gamma0_hat) + ", nu_a " + fmt_short(tab.nu_a));
  });
}

// ------------------------------------------------------------- complexity

void run_complexity(Run& run, const SuspensionFlow& flow) {
  const auto& k = run.cfg.complexity;
  ComplexityOptions options;
  options.sampling_grid = k.sampling_grid;
  options.sampling_window = k.sampling_window;
  const bool exact = k.method == "exact";
  const TorusMap& map = flow.map();
  const auto* affine = dynamic_cast<const PiecewiseAffineTorusMap*>(&map);
  if (!affine)
    if (const auto* pert = dynamic_cast<const ShearPerturbedMap*>(&map)) affine = &pert->base();

  auto dump = [](const std::vector<ComplexityReport>& reports) {
    json rows = json::array();
    for (const auto& r : reports) rows.push_back(to_json(r));
    return rows.dump(2) + "\n";
  };

  run.guarded("control", [&] {
    // one piece carrying the first branch's matrix: no cuts, so D = 1
    const PiecewiseAffineTorusMap single({{unit_square(), affine->branches().front().exact_matrix, RVec2{0, 0}}},
                                         "single");
    const auto reports = exact ? complexity_exact(single, k.n_max, options) : complexity_sampling(single, k.n_max, options);
    std::size_t worst = 0;
    for (const auto& r : reports) worst = std::max({worst, r.D_b, r.D_e});
    run.check("single_piece_control", worst == 1, static_cast<double>(worst), 1.0, "max D over n");
    run.write("complexity_control.json", dump(reports));
  });

  run.guarded("counts", [&] {
    const auto reports = exact ? complexity_exact(*affine, k.n_max, options) : complexity_sampling(map, k.n_max, options);
    run.write("complexity.json", dump(reports));
    for (const auto& r : reports)
      run.note("n " + std::to_string(r.n) + ": D_b " + std::to_string(r.D_b) + ", D_e " + std::to_string(r.D_e) +
               ", rate_b " + fmt_short(r.rate_b) + ", rate_e " + fmt_short(r.rate_e) + (r.lower_bound ? " (lower bound)" : ""));
    if (run.cfg.flow.map == "f0" && exact) {
      double worst = -std::numeric_limits<double>::infinity();
      for (std::size_t i = 2; i < reports.size(); ++i)
        worst = std::max({worst, reports[i].rate_b - reports[i - 1].rate_b, reports[i].rate_e - reports[i - 1].rate_e});
      run.check("rate_decreasing", worst < 0.0, worst, 0.0, "largest increment of log(D)/n from n = 2 on");
    }
  });
}

// -------------------------------------------------------------- normcheck

void run_normcheck(Run& run, const SuspensionFlow&) {
  const auto& k = run.cfg.normcheck;
  const auto& tol = run.tol;
  const ExponentSet e{k.exponents[0], k.exponents[1], k.exponents[2], k.exponents[3], k.exponents[4]};
  const HyperbolicBlockMap D(2.0, 0.5);
  std::vector<AnisoSweepRow> rows;
  json report;
  report["convention"] = transform_convention();

  run.guarded("parseval", [&] {
    const int n = k.parseval_grid;
    GridFunction3 g(n, k.L);
    CounterRng rng(run.seed(61), 0);
    for (auto& v : g.data()) v = Complex(rng.uniform(-1, 1), rng.uniform(-1, 1));
    double sum = 0.0;
    for (const auto& v : g.data()) sum += std::norm(v);
    const double direct = std::sqrt(sum * std::pow(k.L / n, 3));
    const double err = std::abs(aniso_norm_p2(g, {0, 0, 0}) - direct) / direct;
    run.check("parseval", err <= tol.parseval, err, tol.parseval, "relative, zero exponents");
    report["parseval"] = err;
  });

  run.guarded("symbol_inequality", [&] {
    const auto r = check_symbol_inequality(e, D);
    const bool finite = std::isfinite(r.K1) && std::isfinite(r.K2) && r.K1 > 0.0;
    run.check("symbol_constants_finite", finite, r.K1, kNaN, "K2 " + fmt_short(r.K2));
    run.check("symbol_drift", r.drift < tol.drift, r.drift, tol.drift, "relative change under range doubling");
    report["symbol"] = to_json(r);
  });

  run.guarded("composition", [&] {
    CubeBump w;
    w.half_width = {0.12, 1.9, 0.5};
    const int n = k.composition_grid;
    CompositionReport last;
    for (int p = 1; p <= k.composition_power; ++p) {
      last = check_composition_contraction(w, D, e, {n, n, n}, k.L, p);
      rows.push_back({n, k.L, e.main(), last.ratio, 2.0 * last.mu});
    }
    run.check("composition_contraction", last.ratio <= 2.0 * last.mu, last.ratio, 2.0 * last.mu,
              "||w o D^-k|| / ||w|| against 2 max(lambda_u^-r, lambda_s^-(r+s))^k, k = " +
                  std::to_string(k.composition_power));
    report["composition"] = to_json(last);
  });

  const std::vector<CubeBump> family{CubeBump{{2, 2, 2}, {0.8, 0.8, 0.8}}, CubeBump{{2, 1.9, 2.1}, {0.6, 0.9, 0.7}}};
  const HalfSpace U{0, k.L / 2, false};

  run.guarded("multiplier", [&] {
    const AnisoSymbol sym{k.multiplier_symbol[0], k.multiplier_symbol[1], k.multiplier_symbol[2]};
    std::vector<double> sup;
    for (int n : k.grids) {
      const auto m = check_multiplier_charfun(U, sym, family, {n, n, n}, k.L);
      sup.push_back(m.sup_ratio);
      rows.push_back({n, k.L, sym, m.sup_ratio, kNaN});
    }
    const double drift = std::abs(sup[1] - sup[0]) / sup[0];
    run.check("multiplier_drift", drift < tol.drift, drift, tol.drift,
              "N = " + std::to_string(k.grids[0]) + " to " + std::to_string(k.grids[1]));
    report["multiplier"] = sup;
  });

  run.guarded("multiplier_growth", [&] {
    const AnisoSymbol sym{k.growth_r, k.multiplier_symbol[1], k.multiplier_symbol[2]};
    std::vector<double> sup;
    for (int n : k.growth_grids) {
      const auto m = check_multiplier_charfun(U, sym, family, {n, n, n}, k.L, true);
      sup.push_back(m.sup_ratio);
      rows.push_back({n, k.L, sym, m.sup_ratio, kNaN});
    }
    double slowest = std::numeric_limits<double>::infinity();
    for (std::size_t i = 1; i < sup.size(); ++i) slowest = std::min(slowest, sup[i] / sup[i - 1]);
    run.check("multiplier_growth", slowest > tol.growth_factor, slowest, tol.growth_factor,
              "smallest ratio growth per refinement at r = " + fmt_short(k.growth_r));
    report["multiplier_growth"] = sup;
  });

  run.write_with("aniso_sweep.csv", [&](std::ostream& out) { write_aniso_csv(out, rows); });
  run.write("normcheck.json", report.dump(2) + "\n");
}

// -------------------------------------------------------------- leafstats

void run_leafstats(Run& run, const SuspensionFlow& flow) {
  const auto& k = run.cfg.leafstats;
  LeafStatsOptions options;
  options.piece_length = k.piece_length;
  options.leaves = k.leaves;
  options.max_pieces = static_cast<std::size_t>(k.max_pieces);
  LeafStats stats;
  bool exploded = false;
  run.guarded("leafstats", [&] {
    try {
      stats = stable_decomposition_stats(flow, k.delta, k.r, k.ell_max, run.seed(71), options, &stats);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::PieceExplosion) throw;
      exploded = true;
    }
    run.check("no_piece_explosion", !exploded, static_cast<double>(stats.rows.empty() ? 0 : stats.rows.back().piece_count),
              k.max_pieces, "pieces at the last completed step");
    run.write_with("leafstats.csv", [&](std::ostream& out) { write_leafstats_csv(out, stats); });
    if (stats.rows.empty()) return;
    const double expected = std::min(1.0, k.r / k.delta);
    const double err = std::abs(stats.rows.front().boundary_mass_r - expected);
    run.check("initial_mass", err <= 1e-9, err, 1e-9, "unpushed leaves carry min(1, r/delta)");
    if (stats.rows.size() >= 3) {
      double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
      for (std::size_t i = stats.rows.size() / 2; i < stats.rows.size(); ++i) {
        lo = std::min(lo, stats.rows[i].boundary_mass_r);
        hi = std::max(hi, stats.rows[i].boundary_mass_r);
      }
      run.check("mass_plateau", hi / lo <= run.tol.plateau, hi / lo, run.tol.plateau,
                "max / min boundary mass over the second half of the steps");
    }
    json rows = json::array();
    for (const auto& r : stats.rows) {
      rows.push_back({{"ell", r.ell},
                      {"piece_count", r.piece_count},
                      {"boundary_mass_r", r.boundary_mass_r},
                      {"mass_over_r", r.boundary_mass_r / k.r},
                      {"total_length", r.total_length}});
    }
    run.write("leafstats.json", json{{"delta", k.delta}, {"r", k.r}, {"exploded", exploded}, {"rows", rows}}.dump(2) + "\n");
    const auto& last = stats.rows.back();
    run.note("ell " + std::to_string(last.ell) + ": " + std::to_string(last.piece_count) + " pieces, boundary mass " +
             fmt_short(last.boundary_mass_r));
  });
}

}  // namespace

RunManifest run(const ExperimentConfig& config, int threads) {
  validate_config(config);
  const auto start = std::chrono::steady_clock::now();
  set_num_threads(std::max(1, threads));
  RunManifest manifest;
  manifest.experiment = config.experiment;
  manifest.config_hash = config_hash(config);
  manifest.seed = config.seed;

  std::error_code ec;
  fs::create_directories(config.output_dir, ec);
  if (ec) throw Error(ErrorKind::ConfigError, "'output_dir': cannot create " + config.output_dir + ": " + ec.message());

  Run ctx(config, manifest);
  ctx.write("config.json", to_json(config).dump(2) + "\n");
  ctx.guarded("experiment", [&] {
    const SuspensionFlow flow = build_flow(config.flow);
    const std::string& e = config.experiment;
    if (e == "verify") run_verify(ctx, flow);
    else if (e == "correlate") run_correlate(ctx, flow);
    else if (e == "resolvent") run_resolvent(ctx, flow);
    else if (e == "ulam") run_ulam(ctx, flow);
    else if (e == "dolgopyat") run_dolgopyat(ctx, flow);
    else if (e == "complexity") run_complexity(ctx, flow);
    else if (e == "normcheck") run_normcheck(ctx, flow);
    else if (e == "leafstats") run_leafstats(ctx, flow);
  });
  if (manifest.checks.empty()) ctx.check("experiment", false, kNaN, kNaN, "no checks were run");

  manifest.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  manifest.artifacts.push_back("manifest.json");
  std::ofstream out(fs::path(config.output_dir) / "manifest.json", std::ios::binary);
  out << to_json(manifest).dump(2) << "\n";
  if (!out) throw Error(ErrorKind::InvalidArgument, "cannot write the manifest");
  return manifest;
}

}  // namespace contactflow
