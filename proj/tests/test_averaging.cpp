#include <doctest.h>

#include "contactflow/averaging.hpp"
#include "contactflow/geometry.hpp"
#include "contactflow/parallel.hpp"
#include "contactflow/quadrature.hpp"
#include "contactflow/rng.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <sstream>

using namespace contactflow;

namespace {

const FlowBoxBump kBump{Vec3(0.2, 0.2, 0.5), Vec3(0.12, 0.12, 0.4)};

double adaptive(const std::function<double(double)>& f) {
  return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, -1.0, 1.0, 15, 1e-15);
}

// Points whose eps-box and leaf stay well inside one piece of X0, near the
// bump so that values are not trivially zero.
std::vector<Vec3> interior_points(std::size_t n, std::uint64_t seed) {
  std::vector<Vec3> out;
  CounterRng rng(seed, 0);
  while (out.size() < n) out.emplace_back(rng.uniform(0.1, 0.3), rng.uniform(0.1, 0.3), rng.uniform(0.2, 0.8));
  return out;
}

Observable linear_observable() {
  return Observable([](const FlowPoint& w) { return Complex(1.0 + 2.0 * w.x - 3.0 * w.y + 0.5 * w.z, 0.0); }, 10.0,
                    std::sqrt(4.0 + 9.0 + 0.25));
}

}  // namespace

// ------------------------------------------------------------ mollifier

TEST_CASE("mollifier kernel has unit mass") {
  const double m = adaptive([](double u) { return std::abs(u) < 1 ? std::exp(-1.0 / (1.0 - u * u)) : 0.0; });
  CHECK(bump_mass() == doctest::Approx(m).epsilon(1e-12));
  CHECK(std::abs(mollifier_rule_mass(64) - 1.0) < 1e-10);
  double prev = 1.0;
  for (int n : {8, 16, 32, 64}) {
    const double defect = std::abs(mollifier_rule_mass(n) - 1.0);
    CHECK(defect < prev);
    prev = defect;
  }
}

TEST_CASE("mollifier fixes constants and linear functions") {
  const auto flow = make_f0_flow();
  const MollifierSpec spec{0.02, 24, false};
  const Observable c = Observable::constant(Complex(0.7, -0.2));
  const Observable lin = linear_observable();
  for (const Vec3& w : interior_points(20, 1)) {
    const auto mc = mollify(flow, c, spec, w);
    CHECK(std::abs(mc.value - Complex(0.7, -0.2)) < 1e-14);
    CHECK_FALSE(mc.leaves_chart);
    const auto ml = mollify(flow, lin, spec, w);
    CHECK(std::abs(ml.value - lin(FlowPoint{w.x(), w.y(), w.z(), 0})) < 1e-12);
  }
}

TEST_CASE("mollifier error is first order and matches the Taylor term") {
  const auto flow = make_f0_flow();
  const Observable psi = make_bump(flow, kBump);
  const double lip = *psi.lipschitz_bound();
  const auto pts = interior_points(200, 2);
  // second moment of the one-dimensional normalized bump
  const double m = bump_mass();
  const double var = adaptive([](double u) { return std::abs(u) < 1 ? u * u * std::exp(-1.0 / (1.0 - u * u)) : 0.0; }) / m;

  double prev_C = std::numeric_limits<double>::infinity();
  for (double eps : {0.02, 0.01, 0.005}) {
    const MollifierSpec spec{eps, 24, false};
    double sup = 0.0;
    for (const Vec3& w : pts) {
      const auto v = mollify(flow, psi, spec, w);
      sup = std::max(sup, std::abs(v.value - psi(FlowPoint{w.x(), w.y(), w.z(), 0})));
    }
    const double C = sup / (eps * lip);
    CHECK(C <= prev_C);
    prev_C = C;
  }

  // M psi - psi = eps^2 var / 2 * Laplacian(psi) + O(eps^4)
  const Vec3 w(0.22, 0.18, 0.55);
  auto at = [&](const Vec3& p) { return psi(FlowPoint{p.x(), p.y(), p.z(), 0}).real(); };
  const double h = 1e-3;
  double lap = 0.0;
  for (int a = 0; a < 3; ++a) {
    Vec3 e = Vec3::Zero();
    e[a] = h;
    lap += (at(w + e) - 2.0 * at(w) + at(w - e)) / (h * h);
  }
  const double eps = 0.005;
  const auto v = mollify(flow, psi, {eps, 24, false}, w);
  const double predicted = 0.5 * eps * eps * var * lap;
  CHECK((v.value.real() - at(w)) == doctest::Approx(predicted).epsilon(0.02));
}

TEST_CASE("mollifier near the chart boundary") {
  const auto flow = make_f0_flow();
  const Observable c = Observable::constant(1.0);
  const Vec3 w(0.3, 0.3, 0.005);
  const auto v = mollify(flow, c, {0.01, 16, false}, w);
  CHECK(v.leaves_chart);
  CHECK(v.value.real() < 1.0);  // zero extension below the floor
  try {
    mollify(flow, c, {0.01, 16, true}, w);
    FAIL("expected ChartBoundary");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::ChartBoundary);
  }
  CHECK_THROWS_AS(mollify(flow, c, {0.0, 16, false}, w), Error);
}

TEST_CASE("mollifier is positive and bounded") {
  const auto flow = make_f0_flow();
  const Observable psi = make_bump(flow, kBump);
  const Observable psi2([psi](const FlowPoint& w) { return 2.0 * psi(w); }, 2.0);
  for (const Vec3& w : interior_points(30, 3)) {
    const auto a = mollify(flow, psi, {0.02, 16, false}, w);
    const auto b = mollify(flow, psi2, {0.02, 16, false}, w);
    CHECK(a.value.real() >= 0.0);
    CHECK(b.value.real() >= a.value.real());
    CHECK(a.value.real() <= psi.sup_bound() + 1e-12);
  }
}

// ----------------------------------------------------------- stable leaf

TEST_CASE("stable leaf lies in the contact kernel") {
  const auto flow = make_f0_flow();
  const Vec2 e = stable_direction(flow);
  CHECK(e.norm() == doctest::Approx(1.0));
  CHECK(e.y() / e.x() == doctest::Approx(-0.5));
  // f0's matrix maps the direction to half of itself
  const Mat2 M = flow.map().jacobian(Vec2(0.1, 0.1));
  CHECK((M * e - 0.5 * e).norm() < 1e-15);

  CounterRng rng(4, 0);
  for (int i = 0; i < 50; ++i) {
    const StableLeaf leaf = stable_leaf_through(flow, {rng.uniform(), rng.uniform(), rng.uniform(0, 1)});
    CHECK((leaf.point(0.0) - leaf.origin).norm() == 0.0);
    for (int k = -10; k <= 10; ++k) CHECK(leaf.kernel_residual(0.01 * k) < 1e-12);
  }
  // closed form for the unnormalized direction (1, -1/2)
  const StableLeaf raw{Vec3(0.3, 0.4, 0.2), Vec2(1.0, -0.5)};
  for (double s : {-0.1, 0.05, 0.2}) {
    CHECK(raw.point(s).z() == doctest::Approx(0.2 + 0.4 * s - s * s / 4.0).epsilon(1e-15));
    // independent check: differentiate z numerically and substitute into alpha
    const double h = 1e-6;
    const Vec3 d = (raw.point(s + h) - raw.point(s - h)) / (2 * h);
    CHECK(std::abs(eval_alpha(raw.point(s), d)) < 1e-9);
  }
}

TEST_CASE("stable average of constants and the mean-value bound") {
  const auto flow = make_f0_flow();
  const Observable c = Observable::constant(Complex(-1.5, 0.5));
  const Observable psi = make_bump(flow, kBump);
  const double lip = *psi.lipschitz_bound();
  for (const Vec3& w : interior_points(100, 5)) {
    const auto vc = stable_average(flow, c, 0.05, w);
    CHECK(std::abs(vc.value - Complex(-1.5, 0.5)) < 1e-14);
    for (double delta : {0.02, 0.05}) {
      const auto v = stable_average(flow, psi, delta, w);
      const double pw = psi(FlowPoint{w.x(), w.y(), w.z(), 0}).real();
      CHECK(std::abs(v.value.real() - pw) <= delta * lip + 1e-10);
      const auto half = stable_average(flow, psi, delta / 2, w);
      CHECK(std::abs(v.value - half.value) <= delta * lip + 1e-10);
      CHECK(v.value.real() >= -1e-15);
      CHECK(v.value.real() <= psi.sup_bound() + 1e-12);
    }
  }
}

TEST_CASE("leaves are clipped at the boundary of X0") {
  const auto flow = make_f0_flow();
  const Vec3 w(0.02, 0.5, 0.3);
  const auto iv = leaf_interval(flow, stable_leaf_through(flow, w), 0.1);
  CHECK(iv.clipped);
  CHECK(iv.lo > -0.1);
  CHECK(iv.hi == 0.1);
  const auto v = stable_average(flow, Observable::constant(2.0), 0.1, w);
  CHECK(v.clipped);
  CHECK(std::abs(v.value - 2.0) < 1e-14);
  CHECK_THROWS_AS(leaf_interval(flow, stable_leaf_through(flow, w), 0.0), Error);
}

// ------------------------------------------------------------ Dolgopyat

TEST_CASE("constant observable reproduces the Gamma integral") {
  const auto flow = make_f0_flow();
  const Observable one = Observable::constant(1.0);
  const FlowPoint w = flow.make_point(0.4, 0.3, 0.2);
  for (auto [a, b, m] : {std::tuple{2.0, 2.0, 1}, std::tuple{2.0, 16.0, 2}, std::tuple{1.5, 5.0, 3}}) {
    DolgopyatParams p;
    p.a = a;
    p.m = m;
    const auto v = dolgopyat_value(flow, one, p, b, w);
    const Complex expected = std::pow(Complex(a, b), -2 * m);
    CHECK(std::abs(v.value - expected) < 1e-10);
    CHECK(std::abs(v.value) == doctest::Approx(std::pow(a * a + b * b, -m)).epsilon(1e-9));
  }
  DolgopyatParams p;
  p.a = 2.0;
  p.m = 1;
  CHECK(std::abs(dolgopyat_value(flow, one, p, 2.0, w).value) == doctest::Approx(0.125).epsilon(1e-10));
}

TEST_CASE("values at b and -b are conjugate") {
  const auto flow = make_f0_flow();
  const Observable psi = make_bump(flow, kBump);
  DolgopyatParams p;
  p.leaf_panel_length = 0.2;
  const auto pts = flow.sample_invariant(11, 10);
  for (const auto& w : pts) {
    const auto plus = dolgopyat_value(flow, psi, p, 12.0, w);
    const auto minus = dolgopyat_value(flow, psi, p, -12.0, w);
    CHECK(std::abs(plus.value - std::conj(minus.value)) <= 1e-15 * std::max(1.0, std::abs(plus.value)));
  }
}

TEST_CASE("real frequency gives a positive baseline") {
  const auto flow = make_f0_flow();
  const Observable psi = make_bump(flow, kBump);
  DolgopyatParams p;
  p.leaf_panel_length = 0.2;
  const auto tab = dolgopyat_experiment(flow, psi, p, {0.0}, 8, 5);
  const auto& row = tab.rows.front();
  CHECK(row.ratio > 0.0);
  CHECK(row.ratio <= 1.0);
  CHECK(row.trivial_bound == doctest::Approx(std::pow(2.0, -4)));
  for (const auto& w : flow.sample_invariant(5, 8)) {
    const auto v = dolgopyat_value(flow, psi, p, 0.0, w);
    CHECK(v.value.real() >= -1e-15);
    CHECK(std::abs(v.value.imag()) == 0.0);
  }
}

TEST_CASE("oscillation makes the averaged resolvent decay in b") {
  const auto flow = make_f0_flow();
  const Observable psi = make_bump(flow, kBump);
  DolgopyatParams p;  // a = 2, m = 2
  const std::vector<double> bs{8, 16, 32, 64, 128};
  const auto tab = dolgopyat_experiment(flow, psi, p, bs, 12, 21);
  REQUIRE(tab.rows.size() == bs.size());
  int violations = 0;
  for (std::size_t i = 1; i < tab.rows.size(); ++i)
    if (!(tab.rows[i].ratio < tab.rows[i - 1].ratio)) ++violations;
  CHECK(violations <= 1);
  CHECK(tab.gamma0_hat > 0.0);
  for (const auto& r : tab.rows) {
    CHECK_FALSE(r.flagged);
    CHECK(r.delta == doctest::Approx(std::pow(r.b, -0.5)));
  }
  CHECK(std::isnan(tab.rows.front().gamma0_hat_running));
  CHECK(tab.nu_a > 0.0);
  CHECK(tab.nu_a < 1.0);
  // one-step minimal expansion over the aperture-0.1 cone is just below the
  // eigenvalue 2; the mean return time is the volume
  const double lambda_u = std::pow(tab.lambda_bar, flow.volume());
  CHECK(lambda_u <= 2.0 + 1e-12);
  CHECK(lambda_u == doctest::Approx(2.0).epsilon(0.01));

  std::ostringstream out;
  write_dolgopyat_csv(out, tab);
  CHECK(out.str().rfind("b,delta,sup_value,trivial_bound,ratio,gamma0_hat_running,error_budget\n", 0) == 0);
}

TEST_CASE("decay exponent of an exact power law") {
  const std::vector<double> b{8, 16, 32, 64};
  std::vector<double> r;
  for (double x : b) r.push_back(3.0 * std::pow(x, -1.7));
  CHECK(decay_exponent(b, r) == doctest::Approx(1.7).epsilon(1e-12));
  CHECK(std::isnan(decay_exponent({8}, {0.1})));
}

TEST_CASE("Dolgopyat parameter checks") {
  const auto flow = make_f0_flow();
  const Observable one = Observable::constant(1.0);
  DolgopyatParams p;
  p.m = 0;
  CHECK_THROWS_AS(dolgopyat_value(flow, one, p, 8.0, flow.make_point(0.4, 0.3, 0.2)), Error);
  p.m = 2;
  CHECK_THROWS_AS(dolgopyat_experiment(flow, one, p, {}, 4, 1), Error);
}

// --------------------------------------------------- leaf decomposition

TEST_CASE("unpushed leaf has the uniform boundary mass") {
  const auto flow = make_f0_flow();
  for (auto [delta, r] : {std::pair{0.05, 0.002}, std::pair{0.05, 0.03}, std::pair{0.1, 0.01}}) {
    const auto st = stable_decomposition_stats(flow, delta, r, 0, 9);
    REQUIRE(st.rows.size() == 1);
    CHECK(st.rows[0].boundary_mass_r == doctest::Approx(std::min(1.0, r / delta)).epsilon(1e-9));
    CHECK(st.rows[0].piece_count == 4);  // one piece per leaf
    CHECK(st.rows[0].total_length == doctest::Approx(2 * delta).epsilon(1e-12));
  }
  CHECK_THROWS_AS(stable_decomposition_stats(flow, 0.05, 0.05, 2, 9), Error);
}

TEST_CASE("boundary mass reaches a plateau proportional to r") {
  const auto flow = make_f0_flow();
  const auto st = stable_decomposition_stats(flow, 0.05, 0.002, 24, 3);
  REQUIRE(st.rows.size() == 25);
  double lo = 1e300, hi = 0.0;
  for (int ell = 8; ell <= 24; ++ell) {
    const double C = st.rows[static_cast<std::size_t>(ell)].boundary_mass_r / 0.002;
    lo = std::min(lo, C);
    hi = std::max(hi, C);
  }
  CHECK(hi / lo < 1.25);
  // halving r halves the plateau mass
  const auto half = stable_decomposition_stats(flow, 0.05, 0.001, 24, 3);
  CHECK(half.rows.back().boundary_mass_r / st.rows.back().boundary_mass_r == doctest::Approx(0.5).epsilon(0.15));

  // piece counts: slower log growth in the second half of the run
  auto inc = [&](int a, int b) {
    return (std::log(double(st.rows[std::size_t(b)].piece_count)) - std::log(double(st.rows[std::size_t(a)].piece_count))) /
           (b - a);
  };
  CHECK(inc(12, 24) <= inc(0, 12));
  for (std::size_t i = 1; i < st.rows.size(); ++i) {
    CHECK(st.rows[i].piece_count >= st.rows[i - 1].piece_count);
    CHECK(st.rows[i].total_length >= st.rows[i - 1].total_length * (1 - 1e-9));
  }
}

TEST_CASE("leaf statistics are thread independent and guard explosion") {
  const auto flow = make_f0_flow();
  set_num_threads(1);
  const auto a = stable_decomposition_stats(flow, 0.05, 0.002, 10, 3);
  set_num_threads(4);
  const auto b = stable_decomposition_stats(flow, 0.05, 0.002, 10, 3);
  set_num_threads(1);
  std::ostringstream sa, sb;
  write_leafstats_csv(sa, a);
  write_leafstats_csv(sb, b);
  CHECK(sa.str() == sb.str());
  CHECK(sa.str().rfind("ell,piece_count,boundary_mass_r\n", 0) == 0);

  LeafStatsOptions o;
  o.max_pieces = 20;
  LeafStats partial;
  try {
    stable_decomposition_stats(flow, 0.05, 0.002, 24, 3, o, &partial);
    FAIL("expected PieceExplosion");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::PieceExplosion);
  }
  CHECK(partial.exploded);
  CHECK_FALSE(partial.rows.empty());
}
