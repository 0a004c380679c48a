#include "contactflow/transfer.hpp"

#include "contactflow/format.hpp"
#include "contactflow/parallel.hpp"
#include "contactflow/rng.hpp"

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <Eigen/Eigenvalues>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

namespace contactflow {

Observable::Observable(Fn value, double sup_bound, std::optional<double> lipschitz, Fn flow_derivative)
    : value_(std::move(value)), derivative_(std::move(flow_derivative)), sup_(sup_bound), lipschitz_(lipschitz) {
  if (!value_) throw Error(ErrorKind::InvalidArgument, "observable needs an evaluator");
  if (!(sup_bound >= 0.0) || !std::isfinite(sup_bound)) throw Error(ErrorKind::InvalidArgument, "sup bound must be finite");
}

Complex Observable::flow_derivative(const FlowPoint& w) const {
  if (!derivative_) throw Error(ErrorKind::InvalidArgument, "observable has no flow derivative");
  return derivative_(w);
}

Observable Observable::constant(Complex c) {
  return Observable([c](const FlowPoint&) { return c; }, std::abs(c), 0.0, [](const FlowPoint&) { return Complex(0.0); });
}

Observable Observable::generator_shifted(Complex z) const {
  if (!derivative_) throw Error(ErrorKind::InvalidArgument, "observable has no flow derivative");
  if (!lipschitz_) throw Error(ErrorKind::InvalidArgument, "a Lipschitz bound is needed to bound the flow derivative");
  Fn v = value_, d = derivative_;
  // |d/dz psi| is at most the Lipschitz constant
  Observable out([v, d, z](const FlowPoint& w) { return z * v(w) + d(w); },
                 std::abs(z) * sup_ + lipschitz_.value_or(0.0));
  return out.with_flow_scale(flow_scale_);
}

// ------------------------------------------------------------------ bumps

namespace {

double profile(double t) {
  if (!(std::abs(t) < 1.0)) return 0.0;
  return std::exp(1.0 - 1.0 / (1.0 - t * t));
}

double profile_slope(double t) {
  if (!(std::abs(t) < 1.0)) return 0.0;
  const double s = 1.0 - t * t;
  return profile(t) * (-2.0 * t / (s * s));
}

double periodic_offset(double v, double c) { return v - c - std::round(v - c); }

}  // namespace

double bump_profile_slope() {
  static const double slope = [] {
    // |b'| is unimodal on (0, 1): dense scan, then golden-section refinement
    double best_t = 0.0, best = 0.0;
    for (int i = 1; i < 10000; ++i) {
      const double t = i / 10000.0;
      if (std::abs(profile_slope(t)) > best) best = std::abs(profile_slope(t)), best_t = t;
    }
    double lo = best_t - 1e-4, hi = best_t + 1e-4;
    const double g = (std::sqrt(5.0) - 1.0) / 2.0;
    for (int it = 0; it < 80; ++it) {
      const double m1 = hi - g * (hi - lo), m2 = lo + g * (hi - lo);
      if (std::abs(profile_slope(m1)) > std::abs(profile_slope(m2))) hi = m2; else lo = m1;
    }
    return std::abs(profile_slope(0.5 * (lo + hi)));
  }();
  return slope;
}

Observable make_bump(const SuspensionFlow& flow, const FlowBoxBump& bump) {
  const Vec3 c = bump.center, h = bump.half_width;
  if (!(h.minCoeff() > 0.0) || h.x() >= 0.5 || h.y() >= 0.5)
    throw Error(ErrorKind::InvalidArgument, "bump half widths must lie in (0, 1/2)");
  const Vec2 base(wrap_unit(c.x()), wrap_unit(c.y()));
  if (flow.map().boundary_distance(base) <= std::hypot(h.x(), h.y()))
    throw Error(ErrorKind::InvalidArgument, "bump support crosses a branch boundary of the base map");
  if (c.z() - h.z() <= 0.0 || c.z() + h.z() >= flow.roof().tau_minus())
    throw Error(ErrorKind::InvalidArgument, "bump support must lie strictly between the floor and tau_minus");

  const Complex A = bump.amplitude;
  const double cx = base.x(), cy = base.y(), cz = c.z();
  const double hx = h.x(), hy = h.y(), hz = h.z();
  auto value = [=](const FlowPoint& w) -> Complex {
    const double bx = profile(periodic_offset(w.x, cx) / hx);
    if (bx == 0.0) return 0.0;
    const double by = profile(periodic_offset(w.y, cy) / hy);
    if (by == 0.0) return 0.0;
    return A * (bx * by * profile((w.z - cz) / hz));
  };
  auto dz = [=](const FlowPoint& w) -> Complex {
    const double bx = profile(periodic_offset(w.x, cx) / hx);
    if (bx == 0.0) return 0.0;
    const double by = profile(periodic_offset(w.y, cy) / hy);
    return A * (bx * by * profile_slope((w.z - cz) / hz) / hz);
  };
  const double s = bump_profile_slope();
  const double lip = std::abs(A) * s * std::sqrt(1.0 / (hx * hx) + 1.0 / (hy * hy) + 1.0 / (hz * hz));
  Observable out(value, std::abs(A), lip, dz);
  return out.with_flow_scale(hz);
}

Observable transfer_apply(const SuspensionFlow& flow, const Observable& psi, double t) {
  Observable out([flow, psi, t](const FlowPoint& w) { return psi(flow.backward(w, t)); }, psi.sup_bound());
  return out.with_flow_scale(psi.flow_scale());
}

// ------------------------------------------------------------- resolvent

double gamma_tail_bound(int n, double a, double sup, double T) {
  return sup * std::pow(a, -n) * boost::math::gamma_q(static_cast<double>(n), a * T);
}

double gamma_tail_time(int n, double a, double sup, double target) {
  if (n < 1 || !(a > 0.0)) throw Error(ErrorKind::InvalidArgument, "need n >= 1 and a > 0");
  if (sup == 0.0) return 0.0;
  const double q = target * std::pow(a, n) / sup;
  if (q >= 1.0) return 0.0;
  return boost::math::gamma_q_inv(static_cast<double>(n), std::max(q, 1e-300)) / a;
}

Complex laplace_kernel(int n, Complex z, double t) {
  if (t == 0.0) return n == 1 ? Complex(1.0) : Complex(0.0);
  const double log_mag = (n - 1) * std::log(t) - std::lgamma(static_cast<double>(n));
  return std::exp(Complex(log_mag, 0.0) - z * t);
}

LaplaceRule make_laplace_rule(int n, const ResolventParams& params, double sup, double flow_scale) {
  const double a = params.z.real(), b = std::abs(params.z.imag());
  if (!(a > 0.0)) throw Error(ErrorKind::InvalidArgument, "resolvent needs Re z > 0");
  if (n < 1) throw Error(ErrorKind::InvalidArgument, "resolvent power must be at least 1");
  const double h =
      params.panel > 0.0 ? params.panel : std::min({0.25, b > 0.0 ? 1.0 / b : 0.25, flow_scale / 16.0});
  double T = params.t_max > 0.0 ? params.t_max : gamma_tail_time(n, a, sup, params.tolerance / 10.0);
  LaplaceRule r;
  r.panels = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(T / h - 1e-12)));
  if (r.panels > 50'000'000) throw Error(ErrorKind::InvalidArgument, "quadrature plan too large");
  T = static_cast<double>(r.panels) * h;
  r.t_max = T;
  r.tail_bound = gamma_tail_bound(n, a, sup, T);

  if (params.rule == QuadratureRule::GaussKronrod) {
    using GK = boost::math::quadrature::gauss_kronrod<double, 15>;
    using G = boost::math::quadrature::gauss<double, 7>;
    const auto& x = GK::abscissa();
    const auto& wk = GK::weights();
    const auto& wg = G::weights();
    for (std::size_t p = 0; p < r.panels; ++p) {
      const double mid = (static_cast<double>(p) + 0.5) * h, half = 0.5 * h;
      for (int sign : {-1, 1})
        for (std::size_t i = 0; i < x.size(); ++i) {
          if (i == 0 && sign == 1) continue;  // centre node once
          r.t.push_back(mid + sign * half * x[i]);
          r.weights.push_back(half * wk[i]);
          // Gauss-7 nodes are the even-indexed Kronrod abscissae
          r.alt_weights.push_back(i % 2 == 0 ? half * wg[i / 2] : 0.0);
          r.panel_of.push_back(p);
        }
    }
  } else {
    constexpr int sub = 16;
    const std::size_t m = r.panels * sub;
    const double dt = T / static_cast<double>(m);
    for (std::size_t i = 0; i <= m; ++i) {
      r.t.push_back(static_cast<double>(i) * dt);
      const double edge = (i == 0 || i == m) ? 0.5 : 1.0;
      r.weights.push_back(edge * dt);
      // coarse rule on every other node
      const double coarse_edge = (i == 0 || i == m) ? 0.5 : 1.0;
      r.alt_weights.push_back(i % 2 == 0 ? coarse_edge * 2.0 * dt : 0.0);
      r.panel_of.push_back(0);
    }
    r.richardson = true;
  }
  // ascending order for incremental orbit stepping
  std::vector<std::size_t> order(r.t.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return r.t[i] < r.t[j]; });
  LaplaceRule sorted = r;
  for (std::size_t k = 0; k < order.size(); ++k) {
    sorted.t[k] = r.t[order[k]];
    sorted.weights[k] = r.weights[order[k]];
    sorted.alt_weights[k] = r.alt_weights[order[k]];
    sorted.panel_of[k] = r.panel_of[order[k]];
  }
  return sorted;
}

std::vector<Complex> orbit_values(const SuspensionFlow& flow, const Observable& psi, const FlowPoint& w,
                                  const std::vector<double>& times) {
  std::vector<Complex> out;
  out.reserve(times.size());
  FlowPoint p = w;
  double current = 0.0;
  for (double t : times) {
    if (t < current) throw Error(ErrorKind::InvalidArgument, "orbit times must be ascending");
    if (t > current) p = flow.backward(p, t - current);
    current = t;
    out.push_back(psi(p));
  }
  return out;
}

ResolventValue apply_laplace_rule(const LaplaceRule& rule, int n, Complex z, const std::vector<Complex>& values) {
  if (values.size() != rule.t.size()) throw Error(ErrorKind::InvalidArgument, "orbit values do not match the rule");
  ResolventValue r;
  r.t_max = rule.t_max;
  r.tail_bound = rule.tail_bound;
  r.nodes = rule.t.size();
  std::vector<Complex> panel_diff(rule.panels, Complex(0.0));
  Complex total(0.0), coarse(0.0);
  for (std::size_t i = 0; i < rule.t.size(); ++i) {
    if (values[i] == Complex(0.0)) continue;
    const Complex g = laplace_kernel(n, z, rule.t[i]) * values[i];
    total += rule.weights[i] * g;
    coarse += rule.alt_weights[i] * g;
    panel_diff[rule.panel_of[i]] += (rule.weights[i] - rule.alt_weights[i]) * g;
  }
  r.value = total;
  if (rule.richardson) {
    r.rule_error = std::abs(total - coarse) / 3.0;
  } else {
    for (const Complex& d : panel_diff) r.rule_error += std::abs(d);
  }
  return r;
}

ResolventValue resolvent_power(const SuspensionFlow& flow, const Observable& psi, const ResolventParams& params, int n,
                               const FlowPoint& w) {
  const LaplaceRule rule = make_laplace_rule(n, params, psi.sup_bound(), psi.flow_scale());
  const ResolventValue r = apply_laplace_rule(rule, n, params.z, orbit_values(flow, psi, w, rule.t));
  if (params.enforce_tolerance && r.budget() > params.tolerance)
    throw Error(ErrorKind::ToleranceNotMet, "resolvent error budget " + fmt_num(r.budget()) + " exceeds tolerance " +
                                                fmt_num(params.tolerance));
  return r;
}

ResolventValue resolvent_apply(const SuspensionFlow& flow, const Observable& psi, const ResolventParams& params,
                               const FlowPoint& w) {
  return resolvent_power(flow, psi, params, 1, w);
}

Observable resolvent_observable(const SuspensionFlow& flow, const Observable& psi, const ResolventParams& params) {
  ResolventParams inner = params;
  inner.enforce_tolerance = false;
  const LaplaceRule rule = make_laplace_rule(1, inner, psi.sup_bound(), psi.flow_scale());
  Observable out(
      [flow, psi, rule, z = params.z](const FlowPoint& w) {
        return apply_laplace_rule(rule, 1, z, orbit_values(flow, psi, w, rule.t)).value;
      },
      psi.sup_bound() / params.z.real());
  return out.with_flow_scale(psi.flow_scale());
}

void write_resolvent_csv(std::ostream& out, const std::vector<ResolventRecord>& records) {
  out << "point_id,a,b,n,value_re,value_im,error_budget\n";
  for (const auto& r : records)
    out << r.point_id << ',' << fmt_num(r.z.real()) << ',' << fmt_num(r.z.imag()) << ',' << r.n << ','
        << fmt_num(r.value.value.real()) << ',' << fmt_num(r.value.value.imag()) << ',' << fmt_num(r.value.budget())
        << '\n';
}

// ------------------------------------------------------------------ Ulam

std::size_t UlamModel::cell_of(const SuspensionFlow& flow, const FlowPoint& p) const {
  const int ix = std::clamp(static_cast<int>(p.x * partition.nx), 0, partition.nx - 1);
  const int iy = std::clamp(static_cast<int>(p.y * partition.ny), 0, partition.ny - 1);
  const double u = p.z / flow.tau(p.base());
  const int iz = std::clamp(static_cast<int>(u * partition.nz), 0, partition.nz - 1);
  return cell_index(ix, iy, iz);
}

namespace {

void multiply(const UlamModel& m, const std::vector<double>& x, std::vector<double>& y) {
  y.assign(m.states, 0.0);
  for (std::size_t i = 0; i < m.states; ++i) {
    double acc = 0.0;
    for (std::size_t k = m.row_start[i]; k < m.row_start[i + 1]; ++k) acc += m.val[k] * x[m.col[k]];
    y[i] = acc;
  }
}

void multiply_transpose(const UlamModel& m, const std::vector<double>& x, std::vector<double>& y) {
  y.assign(m.states, 0.0);
  for (std::size_t i = 0; i < m.states; ++i)
    for (std::size_t k = m.row_start[i]; k < m.row_start[i + 1]; ++k) y[m.col[k]] += m.val[k] * x[i];
}

}  // namespace

ArnoldiResult second_eigenvalue(const UlamModel& model, int krylov_dim, std::uint64_t seed) {
  const std::size_t n = model.states;
  const int m = std::min<int>(krylov_dim, static_cast<int>(n) - 1);
  if (m < 2) throw Error(ErrorKind::InvalidArgument, "Krylov dimension too small");
  const std::vector<double>& pi = model.left_vector;

  // B x = P x - 1 (pi . x): P with its leading eigenvalue moved to 0
  auto apply_B = [&](const std::vector<double>& x, std::vector<double>& y) {
    multiply(model, x, y);
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += pi[i] * x[i];
    for (std::size_t i = 0; i < n; ++i) y[i] -= s;
  };

  Eigen::MatrixXd V(static_cast<Eigen::Index>(n), m + 1);
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(m + 1, m);
  CounterRng rng(seed, 0x61726e6fULL);
  Eigen::VectorXd v0(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) v0(static_cast<Eigen::Index>(i)) = rng.uniform(-1.0, 1.0);
  V.col(0) = v0.normalized();
  std::vector<double> x(n), y(n);
  int built = m;
  for (int j = 0; j < m; ++j) {
    Eigen::VectorXd::Map(x.data(), static_cast<Eigen::Index>(n)) = V.col(j);
    apply_B(x, y);
    Eigen::VectorXd w = Eigen::VectorXd::Map(y.data(), static_cast<Eigen::Index>(n));
    for (int pass = 0; pass < 2; ++pass) {
      const Eigen::VectorXd c = V.leftCols(j + 1).transpose() * w;
      w -= V.leftCols(j + 1) * c;
      H.col(j).head(j + 1) += c;
    }
    H(j + 1, j) = w.norm();
    if (H(j + 1, j) < 1e-14) {
      built = j + 1;
      break;
    }
    V.col(j + 1) = w / H(j + 1, j);
  }
  const Eigen::MatrixXd Hm = H.topLeftCorner(built, built);
  Eigen::EigenSolver<Eigen::MatrixXd> es(Hm, true);
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < es.eigenvalues().size(); ++i)
    if (std::abs(es.eigenvalues()(i)) > std::abs(es.eigenvalues()(best))) best = i;
  ArnoldiResult r;
  r.value = es.eigenvalues()(best);
  const Eigen::VectorXcd yv = es.eigenvectors().col(best).normalized();
  r.residual = built < m ? 0.0 : std::abs(H(built, built - 1) * yv(built - 1));
  return r;
}

UlamModel ulam_build(const SuspensionFlow& flow, double t, const UlamPartition& partition, std::size_t samples_per_cell,
                     std::uint64_t seed, const UlamOptions& options) {
  if (partition.nx < 1 || partition.ny < 1 || partition.nz < 1)
    throw Error(ErrorKind::InvalidArgument, "partition sizes must be positive");
  if (!(t >= flow.roof().tau_minus() / 2.0)) throw Error(ErrorKind::InvalidArgument, "Ulam time must be >= tau_minus / 2");
  if (samples_per_cell < 100) throw Error(ErrorKind::InvalidArgument, "at least 100 samples per cell are required");

  UlamModel m;
  m.partition = partition;
  m.t = t;
  m.samples_per_cell = samples_per_cell;
  m.states = static_cast<std::size_t>(partition.nx) * partition.ny * partition.nz;
  if (m.states > std::numeric_limits<std::uint32_t>::max()) throw Error(ErrorKind::InvalidArgument, "partition too large");

  std::vector<std::vector<std::pair<std::uint32_t, double>>> rows(m.states);
  std::vector<double> mass(m.states, 0.0);
  parallel_chunks(m.states, 16, [&](std::size_t, std::size_t begin, std::size_t end) {
    std::vector<std::pair<std::uint32_t, double>> hits;
    for (std::size_t cell = begin; cell < end; ++cell) {
      const int iz = static_cast<int>(cell % partition.nz);
      const int iy = static_cast<int>((cell / partition.nz) % partition.ny);
      const int ix = static_cast<int>(cell / (static_cast<std::size_t>(partition.nz) * partition.ny));
      CounterRng rng(seed, cell);
      hits.clear();
      double total = 0.0;
      for (std::size_t s = 0; s < samples_per_cell; ++s) {
        const double x = (ix + rng.uniform()) / partition.nx;
        const double y = (iy + rng.uniform()) / partition.ny;
        const double u = (iz + rng.uniform()) / partition.nz;
        const double tau = flow.tau(Vec2(x, y));
        FlowPoint p{x, y, u * tau, flow.map().declared_piece_of(Vec2(x, y))};
        const FlowPoint q = flow.forward(p, t);
        hits.emplace_back(static_cast<std::uint32_t>(m.cell_of(flow, q)), tau);
        total += tau;
      }
      std::sort(hits.begin(), hits.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
      auto& row = rows[cell];
      for (const auto& h : hits) {
        if (!row.empty() && row.back().first == h.first)
          row.back().second += h.second;
        else
          row.push_back(h);
      }
      for (auto& e : row) e.second /= total;
      mass[cell] = total / static_cast<double>(samples_per_cell) / (static_cast<double>(partition.nx) * partition.ny) /
                   partition.nz;
    }
  });

  m.row_start.assign(m.states + 1, 0);
  for (std::size_t i = 0; i < m.states; ++i) m.row_start[i + 1] = m.row_start[i] + rows[i].size();
  m.col.reserve(m.row_start.back());
  m.val.reserve(m.row_start.back());
  for (std::size_t i = 0; i < m.states; ++i) {
    double s = 0.0;
    for (const auto& e : rows[i]) {
      m.col.push_back(e.first);
      m.val.push_back(e.second);
      s += e.second;
    }
    m.max_row_error = std::max(m.max_row_error, std::abs(s - 1.0));
  }
  const double mass_total = std::accumulate(mass.begin(), mass.end(), 0.0);
  m.cell_measure.resize(m.states);
  for (std::size_t i = 0; i < m.states; ++i) m.cell_measure[i] = mass[i] / mass_total;

  // fixed left vector by power iteration, started from the cell masses
  std::vector<double> v = m.cell_measure, next;
  for (int it = 0; it < options.power_iterations; ++it) {
    multiply_transpose(m, v, next);
    const double s = std::accumulate(next.begin(), next.end(), 0.0);
    double diff = 0.0;
    for (std::size_t i = 0; i < m.states; ++i) {
      next[i] /= s;
      diff += std::abs(next[i] - v[i]);
    }
    v.swap(next);
    if (diff < options.power_tolerance) break;
  }
  m.left_vector = v;
  multiply_transpose(m, v, next);
  m.leading = std::accumulate(next.begin(), next.end(), 0.0) / std::accumulate(v.begin(), v.end(), 0.0);
  const double max_mass = *std::max_element(m.cell_measure.begin(), m.cell_measure.end());
  for (std::size_t i = 0; i < m.states; ++i)
    m.stationary_error = std::max(m.stationary_error, std::abs(v[i] - m.cell_measure[i]) / max_mass);

  const ArnoldiResult second = second_eigenvalue(m, options.krylov_dim, seed);
  m.second = second.value;
  m.second_modulus = std::abs(second.value);
  m.second_residual = second.residual;
  return m;
}

std::string ulam_summary_json(const UlamModel& m) {
  nlohmann::ordered_json j;
  j["partition"] = {m.partition.nx, m.partition.ny, m.partition.nz};
  j["t"] = m.t;
  j["samples_per_cell"] = m.samples_per_cell;
  j["states"] = m.states;
  j["dropped_cells"] = m.dropped_cells;
  j["nonzeros"] = m.val.size();
  j["leading"] = m.leading;
  j["second_re"] = m.second.real();
  j["second_im"] = m.second.imag();
  j["second_modulus"] = m.second_modulus;
  j["gap"] = 1.0 - m.second_modulus;
  j["second_residual"] = m.second_residual;
  j["max_row_error"] = m.max_row_error;
  j["stationary_error"] = m.stationary_error;
  return j.dump(2);
}

// ----------------------------------------------------------- correlations

CorrelationSeries correlation(const SuspensionFlow& flow, const Observable& psi1, const Observable& psi2,
                              std::vector<double> t_grid, std::size_t n_samples, std::uint64_t seed,
                              const CorrelationOptions& options) {
  if (t_grid.empty()) throw Error(ErrorKind::InvalidArgument, "empty time grid");
  for (double t : t_grid)
    if (!std::isfinite(t) || t < 0.0) throw Error(ErrorKind::InvalidArgument, "time grid must be finite and non-negative");
  std::sort(t_grid.begin(), t_grid.end());
  const std::size_t B = static_cast<std::size_t>(std::max(2, options.batches));
  if (n_samples < B) throw Error(ErrorKind::InvalidArgument, "need at least one sample per batch");
  const std::size_t T = t_grid.size();

  struct BatchSums {
    std::size_t count = 0;
    Complex s1 = 0.0, s2 = 0.0;
    std::vector<Complex> s12;
  };
  std::vector<BatchSums> batches(B);
  parallel_chunks(B, 1, [&](std::size_t b, std::size_t, std::size_t) {
    BatchSums& acc = batches[b];
    acc.s12.assign(T, Complex(0.0));
    const std::size_t begin = b * n_samples / B, end = (b + 1) * n_samples / B;
    acc.count = end - begin;
    for (std::size_t k = begin; k < end; ++k) {
      const FlowPoint w = flow.sample_one(seed, k);
      const Complex v1 = psi1(w);
      acc.s1 += v1;
      acc.s2 += psi2(w);
      if (v1 == Complex(0.0)) continue;  // contributes nothing to the product term
      FlowPoint p = w;
      double current = 0.0;
      for (std::size_t i = 0; i < T; ++i) {
        if (t_grid[i] > current) p = flow.forward(p, t_grid[i] - current);
        current = t_grid[i];
        acc.s12[i] += v1 * psi2(p);
      }
    }
  });

  CorrelationSeries out;
  out.t = t_grid;
  out.n_samples = n_samples;
  Complex s1 = 0.0, s2 = 0.0;
  std::vector<Complex> s12(T, Complex(0.0));
  for (const auto& b : batches) {
    s1 += b.s1;
    s2 += b.s2;
    for (std::size_t i = 0; i < T; ++i) s12[i] += b.s12[i];
  }
  const double n = static_cast<double>(n_samples);
  const double floor = 1e-16 * std::max(psi1.sup_bound() * psi2.sup_bound(), 1e-300);
  for (std::size_t i = 0; i < T; ++i) {
    out.C.push_back(s12[i] / n - (s1 / n) * (s2 / n));
    // batch means
    std::vector<Complex> cb(B);
    Complex mean = 0.0;
    for (std::size_t b = 0; b < B; ++b) {
      const double nb = static_cast<double>(batches[b].count);
      cb[b] = batches[b].s12[i] / nb - (batches[b].s1 / nb) * (batches[b].s2 / nb);
      mean += cb[b];
    }
    mean /= static_cast<double>(B);
    double var = 0.0;
    for (const Complex& c : cb) var += std::norm(c - mean);
    var /= static_cast<double>(B - 1);
    out.std_error.push_back(std::max(std::sqrt(var / static_cast<double>(B)), floor));
  }
  return out;
}

namespace {

struct LineFit {
  double slope = 0.0, intercept = 0.0;
  std::size_t points = 0;
};

LineFit envelope_fit(const std::vector<double>& t, const std::vector<double>& mag, const std::vector<double>& se) {
  // the envelope is flat up to the largest |C|, so the fit starts there
  std::size_t start = 0;
  for (std::size_t i = 1; i < t.size(); ++i)
    if (mag[i] > mag[start]) start = i;
  std::vector<std::size_t> usable;
  for (std::size_t i = start; i < t.size(); ++i)
    if (mag[i] >= 3.0 * se[i] && mag[i] > 0.0) usable.push_back(i);
  LineFit f;
  f.points = usable.size();
  if (usable.size() < 2) return f;
  // running maximum from the right over usable points
  std::vector<double> env(usable.size());
  double run = 0.0;
  for (std::size_t k = usable.size(); k-- > 0;) {
    run = std::max(run, mag[usable[k]]);
    env[k] = run;
  }
  double sw = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t k = 0; k < usable.size(); ++k) {
    const std::size_t i = usable[k];
    const double w = (env[k] / se[i]) * (env[k] / se[i]);
    const double x = t[i], y = std::log(env[k]);
    sw += w;
    sx += w * x;
    sy += w * y;
    sxx += w * x * x;
    sxy += w * x * y;
  }
  const double det = sw * sxx - sx * sx;
  if (!(det > 0.0)) return f;
  f.slope = (sw * sxy - sx * sy) / det;
  f.intercept = (sy - f.slope * sx) / sw;
  return f;
}

}  // namespace

DecayFit fit_decay(const CorrelationSeries& series, const FitOptions& options) {
  const std::size_t n = series.t.size();
  if (series.C.size() != n || series.std_error.size() != n)
    throw Error(ErrorKind::InvalidArgument, "correlation series arrays differ in length");
  std::vector<double> mag(n);
  for (std::size_t i = 0; i < n; ++i) mag[i] = std::abs(series.C[i]);
  const LineFit base = envelope_fit(series.t, mag, series.std_error);
  if (base.points < options.min_points)
    throw Error(ErrorKind::NoiseFloor, "only " + std::to_string(base.points) + " points above 3 standard errors");

  DecayFit fit;
  fit.sigma_hat = -base.slope;
  fit.K_hat = std::exp(base.intercept);
  fit.usable_points = base.points;

  std::vector<double> rates;
  rates.reserve(static_cast<std::size_t>(options.bootstrap));
  std::vector<double> resampled(n);
  for (int r = 0; r < options.bootstrap; ++r) {
    CounterRng rng(options.seed, static_cast<std::uint64_t>(r));
    for (std::size_t i = 0; i < n; ++i) {
      const double s = series.std_error[i] / std::sqrt(2.0);
      resampled[i] = std::abs(series.C[i] + Complex(s * rng.normal(), s * rng.normal()));
    }
    const LineFit f = envelope_fit(series.t, resampled, series.std_error);
    if (f.points >= 2) rates.push_back(-f.slope);
  }
  if (rates.size() < 2) throw Error(ErrorKind::NoiseFloor, "bootstrap replicates fell below the noise floor");
  std::sort(rates.begin(), rates.end());
  auto quantile = [&](double q) {
    const double pos = q * static_cast<double>(rates.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, rates.size() - 1);
    return rates[lo] + (pos - static_cast<double>(lo)) * (rates[hi] - rates[lo]);
  };
  // basic (reverse percentile) interval: the running-maximum envelope biases
  // every replicate towards decay, and this form subtracts that bias
  fit.ci_low = 2.0 * fit.sigma_hat - quantile(0.975);
  fit.ci_high = 2.0 * fit.sigma_hat - quantile(0.025);
  return fit;
}

void write_correlation_csv(std::ostream& out, const CorrelationSeries& s) {
  out << "t,C_re,C_im,stderr\n";
  for (std::size_t i = 0; i < s.t.size(); ++i)
    out << fmt_num(s.t[i]) << ',' << fmt_num(s.C[i].real()) << ',' << fmt_num(s.C[i].imag()) << ','
        << fmt_num(s.std_error[i]) << '\n';
}

}  // namespace contactflow
