#pragma once

#include "contactflow/flow.hpp"

#include <functional>
#include <limits>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace contactflow {

/// Complex function on the phase space with an optional derivative along the
/// flow (d/dz in suspension coordinates).
class Observable {
 public:
  using Fn = std::function<Complex(const FlowPoint&)>;

  Observable(Fn value, double sup_bound, std::optional<double> lipschitz = std::nullopt, Fn flow_derivative = nullptr);

  Complex operator()(const FlowPoint& w) const { return value_(w); }
  bool has_flow_derivative() const { return static_cast<bool>(derivative_); }
  Complex flow_derivative(const FlowPoint& w) const;
  double sup_bound() const { return sup_; }
  std::optional<double> lipschitz_bound() const { return lipschitz_; }
  /// Shortest length over which the observable varies along the flow, used
  /// to size quadrature panels; infinite when unknown or constant.
  double flow_scale() const { return flow_scale_; }
  Observable& with_flow_scale(double scale) {
    flow_scale_ = scale;
    return *this;
  }

  static Observable constant(Complex c);

  /// z psi + d/dz psi, the observable whose resolvent returns psi.
  Observable generator_shifted(Complex z) const;

 private:
  Fn value_;
  Fn derivative_;
  double sup_;
  std::optional<double> lipschitz_;
  double flow_scale_ = std::numeric_limits<double>::infinity();
};

/// Tensor bump amplitude * b((x - cx)/hx) b((y - cy)/hy) b((z - cz)/hz), with
/// b(t) = exp(1 - 1/(1 - t^2)) on (-1, 1) and periodic x, y offsets.
struct FlowBoxBump {
  Vec3 center;
  Vec3 half_width;
  Complex amplitude = 1.0;
};

/// Bump observable. The support must sit inside one branch of the base map
/// and strictly between the floor and tau_minus, so that t -> psi(T_{-t} w)
/// is smooth; otherwise InvalidArgument.
Observable make_bump(const SuspensionFlow& flow, const FlowBoxBump& bump);
/// Largest |b'(t)| for the profile above.
double bump_profile_slope();

/// psi o T_{-t}, composed lazily.
Observable transfer_apply(const SuspensionFlow& flow, const Observable& psi, double t);

enum class QuadratureRule {
  GaussKronrod,  // composite 7-point Gauss with the 15-point Kronrod extension
  Trapezoid,     // composite trapezoid with a half-resolution comparison
};

struct ResolventParams {
  Complex z{1.0, 0.0};
  QuadratureRule rule = QuadratureRule::GaussKronrod;
  /// Panel length; 0 picks min(1/4, 1/|b|, flow scale / 16).
  double panel = 0.0;
  /// Truncation; 0 picks the smallest time whose Gamma tail is below
  /// tolerance / 10.
  double t_max = 0.0;
  double tolerance = 1e-8;
  bool enforce_tolerance = true;
};

struct ResolventValue {
  Complex value;
  double tail_bound = 0.0;
  double rule_error = 0.0;
  double t_max = 0.0;
  std::size_t nodes = 0;
  double budget() const { return tail_bound + rule_error; }
};

/// Nodes and weights for integrals of t^{n-1} e^{-zt} / (n-1)! g(t) over
/// [0, t_max]. `alt_weights` is the embedded lower-order rule used for the
/// error estimate; `panel_of` groups nodes by panel.
struct LaplaceRule {
  std::vector<double> t;
  std::vector<double> weights;
  std::vector<double> alt_weights;
  std::vector<std::size_t> panel_of;
  std::size_t panels = 0;
  double t_max = 0.0;
  double tail_bound = 0.0;  // already scaled by the sup bound passed in
  bool richardson = false;  // trapezoid: global estimate |fine - coarse| / 3
};

/// Smallest T with a^{-n} Q(n, aT) * sup <= target, Q the regularized upper
/// incomplete gamma function.
double gamma_tail_time(int n, double a, double sup, double target);
/// Tail bound a^{-n} Q(n, aT) * sup.
double gamma_tail_bound(int n, double a, double sup, double T);

LaplaceRule make_laplace_rule(int n, const ResolventParams& params, double sup,
                              double flow_scale = std::numeric_limits<double>::infinity());
Complex laplace_kernel(int n, Complex z, double t);
/// psi(T_{-t} w) at ascending times, stepping the orbit incrementally.
std::vector<Complex> orbit_values(const SuspensionFlow& flow, const Observable& psi, const FlowPoint& w,
                                  const std::vector<double>& times);
/// Weighted sum with error estimate, given the orbit values.
ResolventValue apply_laplace_rule(const LaplaceRule& rule, int n, Complex z, const std::vector<Complex>& values);

/// R(z) psi (w) = int_0^inf e^{-zt} psi(T_{-t} w) dt. Throws ToleranceNotMet
/// when the budget exceeds params.tolerance (and enforcement is on).
ResolventValue resolvent_apply(const SuspensionFlow& flow, const Observable& psi, const ResolventParams& params,
                               const FlowPoint& w);
/// R(z)^n psi (w) with the kernel t^{n-1} e^{-zt} / (n-1)!.
ResolventValue resolvent_power(const SuspensionFlow& flow, const Observable& psi, const ResolventParams& params, int n,
                               const FlowPoint& w);
/// w -> R(z) psi (w) as an observable (for nested evaluation). The inner
/// budget is not enforced; the sup bound is sup|psi| / a.
Observable resolvent_observable(const SuspensionFlow& flow, const Observable& psi, const ResolventParams& params);

struct ResolventRecord {
  std::size_t point_id = 0;
  Complex z;
  int n = 1;
  ResolventValue value;
};
void write_resolvent_csv(std::ostream& out, const std::vector<ResolventRecord>& records);

// ---------------------------------------------------------------- Ulam

struct UlamPartition {
  int nx = 24, ny = 24, nz = 8;
};

/// Cells are (ix, iy, iz) with iz indexing z / tau(x, y), so every cell lies
/// under the roof. Transitions are estimated from samples uniform in the base
/// cell and in z / tau, weighted by tau so that they are Lebesgue-uniform.
struct UlamModel {
  UlamPartition partition;
  double t = 0.0;
  std::size_t samples_per_cell = 0;
  std::size_t states = 0;
  std::size_t dropped_cells = 0;
  // CSR row-stochastic matrix
  std::vector<std::size_t> row_start;
  std::vector<std::uint32_t> col;
  std::vector<double> val;
  std::vector<double> cell_measure;  // Lebesgue mass of each cell, sums to 1
  std::vector<double> left_vector;   // fixed left vector, sums to 1
  double leading = 0.0;
  Complex second{0.0, 0.0};
  double second_modulus = 0.0;
  double second_residual = 0.0;  // Ritz residual of the second eigenvalue
  double max_row_error = 0.0;
  double stationary_error = 0.0;  // max |left - cell_measure| / max cell_measure

  std::size_t cell_index(int ix, int iy, int iz) const {
    return (static_cast<std::size_t>(ix) * partition.ny + static_cast<std::size_t>(iy)) * partition.nz +
           static_cast<std::size_t>(iz);
  }
  std::size_t cell_of(const SuspensionFlow& flow, const FlowPoint& p) const;
};

struct UlamOptions {
  int krylov_dim = 150;
  int power_iterations = 5000;
  double power_tolerance = 1e-14;
};

UlamModel ulam_build(const SuspensionFlow& flow, double t, const UlamPartition& partition,
                     std::size_t samples_per_cell, std::uint64_t seed, const UlamOptions& options = {});
std::string ulam_summary_json(const UlamModel& model);

/// Eigenvalue of largest modulus of P - 1 pi^T (the second eigenvalue of P)
/// by Arnoldi with full reorthogonalization.
struct ArnoldiResult {
  Complex value;
  double residual = 0.0;
};
ArnoldiResult second_eigenvalue(const UlamModel& model, int krylov_dim, std::uint64_t seed);

// --------------------------------------------------------- correlations

struct DecayFit {
  double sigma_hat = 0.0;
  double K_hat = 0.0;
  double ci_low = 0.0, ci_high = 0.0;  // 95% bootstrap interval for sigma_hat
  std::size_t usable_points = 0;
};

struct CorrelationSeries {
  std::vector<double> t;
  std::vector<Complex> C;
  std::vector<double> std_error;
  std::size_t n_samples = 0;
  std::optional<DecayFit> fit;
};

struct CorrelationOptions {
  int batches = 100;
};

/// C(t) = E[psi1 (psi2 o T_t)] - E[psi1] E[psi2] over invariant samples.
/// The sample set is shared by all t; only samples with psi1 != 0 are
/// flowed. Standard errors from batch means.
CorrelationSeries correlation(const SuspensionFlow& flow, const Observable& psi1, const Observable& psi2,
                              std::vector<double> t_grid, std::size_t n_samples, std::uint64_t seed,
                              const CorrelationOptions& options = {});

struct FitOptions {
  std::size_t min_points = 8;
  int bootstrap = 1000;
  std::uint64_t seed = 0x66697421ULL;
};

/// Weighted least squares of log of the running-maximum envelope of |C|
/// over points with |C| >= 3 stderr; parametric bootstrap interval.
/// NoiseFloor when fewer than min_points are usable.
DecayFit fit_decay(const CorrelationSeries& series, const FitOptions& options = {});

void write_correlation_csv(std::ostream& out, const CorrelationSeries& series);

}  // namespace contactflow
