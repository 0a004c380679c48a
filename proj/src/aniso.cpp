#include "contactflow/aniso.hpp"

#include "contactflow/format.hpp"
#include "contactflow/parallel.hpp"

#include <fftw3.h>

#include <algorithm>
#include <mutex>
#include <ostream>

namespace contactflow {

namespace {

constexpr double kTwoPi = 6.283185307179586;

std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

double bump_profile(double t, double k) {
  if (std::abs(t) >= 1.0) return 0.0;
  return std::exp(k - k / (1.0 - t * t));
}

double rel_change(double a, double b) { return std::abs(b - a) / std::max(std::abs(a), 1e-300); }

}  // namespace

double AnisoSymbol::operator()(const Freq3& xi) const {
  const double full = 1.0 + xi.u * xi.u + xi.s * xi.s + xi.f * xi.f;
  double v = 1.0;
  if (r != 0.0) v *= std::pow(full, 0.5 * r);
  if (s != 0.0) v *= std::pow(1.0 + xi.s * xi.s, 0.5 * s);
  if (q != 0.0) v *= std::pow(1.0 + xi.f * xi.f, 0.5 * q);
  return v;
}

double symbol_eval(const AnisoSymbol& sym, const Freq3& xi) { return sym(xi); }

const char* transform_convention() {
  return "forward kernel exp(-i<xi,x>), xi = 2 pi k / L, k in [-N/2, N/2), norm^2 = (h^3 / N^3) sum a^2 |DFT|^2";
}

// ------------------------------------------------------------------ grid

GridFunction3::GridFunction3(std::array<int, 3> dims, double L, std::array<AxisRole, 3> roles)
    : dims_(dims), L_(L), roles_(roles) {
  for (int n : dims_)
    if (n < 2) throw Error(ErrorKind::InvalidArgument, "grid needs at least 2 points per axis");
  if (!(L > 0.0)) throw Error(ErrorKind::InvalidArgument, "cube side must be positive");
  std::array<bool, 3> seen{};
  for (AxisRole r : roles_) seen[static_cast<int>(r)] = true;
  if (!(seen[0] && seen[1] && seen[2])) throw Error(ErrorKind::InvalidArgument, "axis roles must be a permutation");
  data_.assign(static_cast<std::size_t>(dims_[0]) * dims_[1] * dims_[2], Complex(0.0, 0.0));
}

GridFunction3 GridFunction3::sample(std::array<int, 3> dims, double L, const std::function<Complex(const Vec3&)>& f,
                                    std::array<AxisRole, 3> roles) {
  GridFunction3 g(dims, L, roles);
  parallel_for(static_cast<std::size_t>(dims[0]), [&](std::size_t i) {
    for (int j = 0; j < dims[1]; ++j)
      for (int k = 0; k < dims[2]; ++k) g.at(static_cast<int>(i), j, k) = f(g.point(static_cast<int>(i), j, k));
  }, 1);
  return g;
}

Vec3 GridFunction3::point(int i, int j, int k) const {
  return {L_ * i / dims_[0], L_ * j / dims_[1], L_ * k / dims_[2]};
}

double GridFunction3::cell_volume() const { return (L_ / dims_[0]) * (L_ / dims_[1]) * (L_ / dims_[2]); }

Freq3 GridFunction3::frequency(int i, int j, int k) const {
  const std::array<int, 3> idx{i, j, k};
  Freq3 xi;
  for (int a = 0; a < 3; ++a) {
    const int n = dims_[a];
    const int m = idx[a] < (n + 1) / 2 ? idx[a] : idx[a] - n;
    const double w = kTwoPi * m / L_;
    switch (roles_[a]) {
      case AxisRole::Unstable: xi.u = w; break;
      case AxisRole::Stable: xi.s = w; break;
      case AxisRole::Flow: xi.f = w; break;
    }
  }
  return xi;
}

std::vector<Complex> GridFunction3::transform() const {
  std::vector<Complex> in = data_;
  std::vector<Complex> out(data_.size());
  auto* pin = reinterpret_cast<fftw_complex*>(in.data());
  auto* pout = reinterpret_cast<fftw_complex*>(out.data());
  fftw_plan plan;
  {
    std::lock_guard<std::mutex> lock(planner_mutex());
    plan = fftw_plan_dft_3d(dims_[0], dims_[1], dims_[2], pin, pout, FFTW_FORWARD, FFTW_ESTIMATE);
  }
  if (plan == nullptr) throw Error(ErrorKind::InvalidArgument, "FFTW could not plan the transform");
  fftw_execute(plan);
  {
    std::lock_guard<std::mutex> lock(planner_mutex());
    fftw_destroy_plan(plan);
  }
  return out;
}

double GridFunction3::l2_norm() const {
  const std::size_t chunk = 1 << 14;
  std::vector<double> partial((data_.size() + chunk - 1) / chunk, 0.0);
  parallel_chunks(data_.size(), chunk, [&](std::size_t c, std::size_t b, std::size_t e) {
    double acc = 0.0;
    for (std::size_t i = b; i < e; ++i) acc += std::norm(data_[i]);
    partial[c] = acc;
  });
  double total = 0.0;
  for (double p : partial) total += p;
  return std::sqrt(cell_volume() * total);
}

std::vector<double> aniso_norms_p2(const GridFunction3& f, const std::vector<AnisoSymbol>& syms) {
  const auto F = f.transform();
  const auto& d = f.dims();
  const std::size_t plane = static_cast<std::size_t>(d[1]) * d[2];
  const std::size_t m = syms.size();
  // one chunk per leading index keeps the summation order fixed
  std::vector<double> partial(static_cast<std::size_t>(d[0]) * m, 0.0);
  parallel_chunks(static_cast<std::size_t>(d[0]), 1, [&](std::size_t c, std::size_t, std::size_t) {
    const int i = static_cast<int>(c);
    std::vector<double> acc(m, 0.0);
    for (int j = 0; j < d[1]; ++j)
      for (int k = 0; k < d[2]; ++k) {
        const double p = std::norm(F[c * plane + static_cast<std::size_t>(j) * d[2] + k]);
        if (p == 0.0) continue;
        const Freq3 xi = f.frequency(i, j, k);
        for (std::size_t s = 0; s < m; ++s) {
          const double a = syms[s](xi);
          acc[s] += a * a * p;
        }
      }
    for (std::size_t s = 0; s < m; ++s) partial[c * m + s] = acc[s];
  });
  const double n_total = static_cast<double>(f.size());
  std::vector<double> out(m, 0.0);
  for (std::size_t c = 0; c < static_cast<std::size_t>(d[0]); ++c)
    for (std::size_t s = 0; s < m; ++s) out[s] += partial[c * m + s];
  for (double& v : out) v = std::sqrt(f.cell_volume() / n_total * v);
  return out;
}

double aniso_norm_p2(const GridFunction3& f, const AnisoSymbol& sym) { return aniso_norms_p2(f, {sym}).front(); }

// ----------------------------------------------------------- block maps

HyperbolicBlockMap::HyperbolicBlockMap(double a_u, double b_s) : A_u(a_u), B_s(b_s) {
  if (!(std::abs(a_u) > 1.0 && std::abs(b_s) < 1.0 && b_s != 0.0))
    throw Error(ErrorKind::InvalidArgument, "block map needs |A_u| > 1 > |B_s| > 0");
}

HyperbolicBlockMap HyperbolicBlockMap::identity() {
  HyperbolicBlockMap D;
  D.A_u = 1.0;
  D.B_s = 1.0;
  D.identity_ = true;
  return D;
}

HyperbolicBlockMap HyperbolicBlockMap::power(int k) const {
  if (k < 1) throw Error(ErrorKind::InvalidArgument, "power must be positive");
  if (identity_) return *this;
  return HyperbolicBlockMap(std::pow(A_u, k), std::pow(B_s, k));
}

double HyperbolicBlockMap::contraction(double r, double s) const {
  return std::max(std::pow(lambda_u(), -r), std::pow(lambda_s(), -(r + s)));
}

void require_composition_exponents(const ExponentSet& e) {
  const bool ok = e.s <= -e.r && -e.r <= 0.0 && e.r_low < e.r && e.s_low <= e.s && e.q >= 0.0;
  if (!ok)
    throw Error(ErrorKind::HypothesisViolation,
                "composition exponents need s <= -r <= 0 <= r, r' < r, s' <= s, q >= 0 (got r=" + fmt_num(e.r) +
                    ", s=" + fmt_num(e.s) + ", q=" + fmt_num(e.q) + ", r'=" + fmt_num(e.r_low) +
                    ", s'=" + fmt_num(e.s_low) + ")");
}

// ------------------------------------------------------ symbol sweeps

namespace {

struct SweepMax {
  double k1 = 0.0, k1p = 0.0, k1s = 0.0;
};

SweepMax sweep_symbols(const ExponentSet& e, const HyperbolicBlockMap& D, double mu, double k2_ratio,
                       const std::vector<double>& axis) {
  const AnisoSymbol a = e.main();
  const AnisoSymbol al = e.lower();
  const std::size_t n = axis.size();
  std::vector<SweepMax> partial(n);
  parallel_chunks(n, 1, [&](std::size_t c, std::size_t, std::size_t) {
    SweepMax m;
    const double xu = axis[c];
    for (double xs : axis)
      for (double xf : axis) {
        const Freq3 xi{xu, xs, xf};
        const double b = a(Freq3{xu / D.A_u, xs / D.B_s, xf});
        const double av = a(xi);
        m.k1 = std::max(m.k1, b / (mu * av + k2_ratio * al(xi)));
        m.k1p = std::max(m.k1p, b / av);
        m.k1s = std::max(m.k1s, b / (mu * av));
      }
    partial[c] = m;
  });
  SweepMax out;
  for (const auto& m : partial) {
    out.k1 = std::max(out.k1, m.k1);
    out.k1p = std::max(out.k1p, m.k1p);
    out.k1s = std::max(out.k1s, m.k1s);
  }
  return out;
}

std::vector<double> log_axis(double lo, double hi, int per_decade) {
  std::vector<double> v{0.0};
  const int steps = static_cast<int>(std::ceil(per_decade * std::log10(hi / lo)));
  for (int i = 0; i <= steps; ++i) v.push_back(lo * std::pow(10.0, static_cast<double>(i) / per_decade));
  return v;
}

}  // namespace

SymbolInequalityReport check_symbol_inequality(const ExponentSet& e, const HyperbolicBlockMap& D,
                                               const SymbolSweep& sweep) {
  if (!sweep.allow_violation) require_composition_exponents(e);
  if (!(sweep.xi_min > 0.0 && sweep.xi_max > sweep.xi_min && sweep.per_decade > 0 && sweep.k2_over_k1 >= 0.0))
    throw Error(ErrorKind::InvalidArgument, "bad frequency sweep");
  SymbolInequalityReport r;
  r.mu = D.contraction(e.r, e.s);
  r.xi_max = sweep.xi_max;
  const auto axis = log_axis(sweep.xi_min, sweep.xi_max, sweep.per_decade);
  const auto wide = log_axis(sweep.xi_min, 2.0 * sweep.xi_max, sweep.per_decade);
  r.samples = axis.size() * axis.size() * axis.size();
  const SweepMax base = sweep_symbols(e, D, r.mu, sweep.k2_over_k1, axis);
  const SweepMax ext = sweep_symbols(e, D, r.mu, sweep.k2_over_k1, wide);
  r.K1 = base.k1;
  r.K2 = sweep.k2_over_k1 * base.k1;
  r.K1_prime = base.k1p;
  r.K1_single = base.k1s;
  r.K1_extended = ext.k1;
  r.K1_prime_extended = ext.k1p;
  r.drift = std::max(rel_change(base.k1, ext.k1), rel_change(base.k1p, ext.k1p));
  return r;
}

nlohmann::json to_json(const SymbolInequalityReport& r) {
  return {{"K1", r.K1},
          {"K2", r.K2},
          {"K1_prime", r.K1_prime},
          {"K1_single_term", r.K1_single},
          {"mu", r.mu},
          {"K1_extended", r.K1_extended},
          {"K1_prime_extended", r.K1_prime_extended},
          {"drift", r.drift},
          {"xi_max", r.xi_max},
          {"samples", r.samples},
          {"convention", transform_convention()}};
}

// ----------------------------------------------------------- composition

Complex CubeBump::operator()(const Vec3& x) const {
  double v = 1.0;
  for (int a = 0; a < 3; ++a) {
    v *= bump_profile((x[a] - center[a]) / half_width[a], steepness);
    if (v == 0.0) return 0.0;
  }
  Complex out = amplitude * v;
  if (wave.squaredNorm() > 0.0) out *= std::exp(Complex(0.0, wave.dot(x)));
  return out;
}

GridFunction3 sample_composed(const CubeBump& w, const HyperbolicBlockMap& D, int power, std::array<int, 3> dims,
                              double L) {
  const HyperbolicBlockMap Dk = power == 0 ? HyperbolicBlockMap::identity() : D.power(power);
  const Vec3 c = Vec3::Constant(0.5 * L);
  const Vec3 diag(Dk.A_u, Dk.B_s, 1.0);
  // mapped support box: c + D^k (support - c)
  for (int a = 0; a < 3; ++a) {
    const double mid = c[a] + diag[a] * (w.center[a] - c[a]);
    const double half = std::abs(diag[a]) * w.half_width[a];
    if (mid - half <= 0.0 || mid + half >= L)
      throw Error(ErrorKind::SupportEscape, "mapped support leaves the cube along axis " + std::to_string(a));
  }
  return GridFunction3::sample(dims, L, [&](const Vec3& x) {
    const Vec3 y = c + (x - c).cwiseQuotient(diag);
    return w(y);
  });
}

CompositionReport check_composition_contraction(const CubeBump& w, const HyperbolicBlockMap& D, const ExponentSet& e,
                                                std::array<int, 3> dims, double L, int power) {
  if (power < 1) throw Error(ErrorKind::InvalidArgument, "power must be positive");
  const HyperbolicBlockMap Dk = D.power(power);
  const GridFunction3 g0 = sample_composed(w, D, 0, dims, L);
  const GridFunction3 gk = sample_composed(w, D, power, dims, L);
  const auto n0 = aniso_norms_p2(g0, {e.main(), e.lower()});
  CompositionReport r;
  r.power = power;
  r.norm_w = n0[0];
  r.norm_w_lower = n0[1];
  r.norm_mapped = aniso_norm_p2(gk, e.main());
  r.ratio = r.norm_mapped / r.norm_w;
  r.mu = Dk.contraction(e.r, e.s);
  r.det_factor = std::sqrt(std::abs(Dk.det()));
  r.two_term_bound = r.det_factor * (r.mu * r.norm_w + r.norm_w_lower);
  r.single_bound = r.det_factor * r.norm_w;
  r.C_two_term = r.norm_mapped / r.two_term_bound;
  r.C_single = r.norm_mapped / r.single_bound;
  return r;
}

nlohmann::json to_json(const CompositionReport& r) {
  return {{"power", r.power},
          {"norm_w", r.norm_w},
          {"norm_w_lower", r.norm_w_lower},
          {"norm_mapped", r.norm_mapped},
          {"ratio", r.ratio},
          {"mu", r.mu},
          {"det_factor", r.det_factor},
          {"two_term_bound", r.two_term_bound},
          {"single_bound", r.single_bound},
          {"C_two_term", r.C_two_term},
          {"C_single", r.C_single},
          {"convention", transform_convention()}};
}

// ------------------------------------------------------------ multiplier

bool multiplier_admissible(const AnisoSymbol& sym) {
  const double upper = sym.r + sym.q;  // r (1 + q / r)
  double lower;                        // s (1 + q / r)
  if (sym.r != 0.0) {
    lower = sym.s * (1.0 + sym.q / sym.r);
  } else if (sym.s == 0.0 || sym.q == 0.0) {
    lower = sym.s;
  } else {
    return false;
  }
  return -0.5 < lower && lower <= 0.0 && 0.0 <= upper && upper < 0.5 && sym.s <= 0.0 && sym.r >= 0.0;
}

MultiplierReport check_multiplier_charfun(const HalfSpace& U, const AnisoSymbol& sym, const std::vector<CubeBump>& family,
                                          std::array<int, 3> dims, double L, bool allow_violation) {
  MultiplierReport rep;
  rep.admissible = multiplier_admissible(sym);
  if (!rep.admissible && !allow_violation)
    throw Error(ErrorKind::HypothesisViolation, "exponents outside the multiplier range for p = 2 (r=" + fmt_num(sym.r) +
                                                    ", s=" + fmt_num(sym.s) + ", q=" + fmt_num(sym.q) + ")");
  if (U.axis < 0 || U.axis > 2) throw Error(ErrorKind::InvalidArgument, "half-space axis must be 0, 1 or 2");
  if (family.empty()) throw Error(ErrorKind::InvalidArgument, "empty bump family");
  for (const CubeBump& w : family) {
    GridFunction3 g = GridFunction3::sample(dims, L, [&](const Vec3& x) { return w(x); });
    const double full = aniso_norm_p2(g, sym);
    if (!U.whole) {
      for (int i = 0; i < dims[0]; ++i)
        for (int j = 0; j < dims[1]; ++j)
          for (int k = 0; k < dims[2]; ++k)
            if (!(g.point(i, j, k)[U.axis] < U.offset)) g.at(i, j, k) = 0.0;
    }
    const double cut = U.whole ? full : aniso_norm_p2(g, sym);
    rep.ratios.push_back(cut / full);
  }
  rep.sup_ratio = *std::max_element(rep.ratios.begin(), rep.ratios.end());
  return rep;
}

void write_aniso_csv(std::ostream& out, const std::vector<AnisoSweepRow>& rows) {
  out << "# " << transform_convention() << '\n';
  out << "N,L,r,s,q,ratio,bound\n";
  for (const auto& row : rows)
    out << row.N << ',' << fmt_num(row.L) << ',' << fmt_num(row.sym.r) << ',' << fmt_num(row.sym.s) << ','
        << fmt_num(row.sym.q) << ',' << fmt_num(row.ratio) << ',' << fmt_num(row.bound) << '\n';
}

}  // namespace contactflow
