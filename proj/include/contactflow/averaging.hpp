#pragma once

#include "contactflow/transfer.hpp"

#include <json.hpp>

#include <iosfwd>
#include <vector>

namespace contactflow {

// ------------------------------------------------------------ mollifier

/// eta_eps(y) = eps^-3 eta(y / eps) with eta the normalized tensor bump
/// prod exp(-1/(1 - y_i^2)) / m^3 on [-1, 1]^3.
struct MollifierSpec {
  double epsilon = 0.01;
  int nodes = 24;       // Gauss-Legendre nodes per axis
  bool strict = false;  // throw ChartBoundary instead of flagging
};

struct MollifiedValue {
  Complex value;
  double error_budget = 0.0;  // |full rule - half-resolution rule|
  bool leaves_chart = false;  // the eps-box left X0; psi was extended by zero
};

/// Mass of eta under an n-point Gauss rule per axis, before the rule is
/// renormalized (the defect from 1 is the rule's own error).
double mollifier_rule_mass(int nodes);

/// Convolution eta_eps * psi at w in the (x, y, z) chart of X0.
MollifiedValue mollify(const SuspensionFlow& flow, const Observable& psi, const MollifierSpec& spec, const Vec3& w);

// ----------------------------------------------------------- stable leaf

/// s -> (x0 + s e1, y0 + s e2, z0 + y0 e1 s + e1 e2 s^2 / 2), tangent to
/// ker(dz - y dx) for every s.
struct StableLeaf {
  Vec3 origin;
  Vec2 direction;

  Vec3 point(double s) const;
  Vec3 tangent(double s) const;
  /// |alpha(gamma'(s))|
  double kernel_residual(double s) const;
};

/// Leaf through w along the unit stable direction of the map: the axis of the
/// standard stable cone, which is the exact stable eigendirection of f0.
StableLeaf stable_leaf_through(const SuspensionFlow& flow, const Vec3& w);
Vec2 stable_direction(const SuspensionFlow& flow);

/// Largest parameter interval [lo, hi] inside [-delta, delta] containing 0
/// on which the leaf stays in X0.
struct LeafInterval {
  double lo = 0.0, hi = 0.0;
  bool clipped = false;
};
LeafInterval leaf_interval(const SuspensionFlow& flow, const StableLeaf& leaf, double delta);

/// Composite 15-point Kronrod nodes on the clipped leaf with the embedded
/// 7-point Gauss weights; weights are normalized to a probability (uniform
/// average over the interval).
struct LeafRule {
  std::vector<FlowPoint> points;
  std::vector<double> weights;
  std::vector<double> alt_weights;
  LeafInterval interval;
};
LeafRule make_leaf_rule(const SuspensionFlow& flow, const Vec3& w, double delta, int panels = 2);

struct AveragedValue {
  Complex value;
  double error_budget = 0.0;
  bool clipped = false;
};

/// Uniform average of psi over the stable leaf of half-length delta through
/// w (renormalized when clipped at the boundary of X0).
AveragedValue stable_average(const SuspensionFlow& flow, const Observable& psi, double delta, const Vec3& w,
                             int panels = 2);

// ------------------------------------------------------------ Dolgopyat

struct DolgopyatParams {
  double a = 2.0;
  int m = 2;            // resolvent power 2m
  double gamma = 0.5;   // delta = b^-gamma
  int leaf_panels = 2;              // at least this many panels on a leaf
  double leaf_panel_length = 0.05;  // and none longer than this
  double time_tolerance = 1e-12;  // truncation target of the time integral
  /// Minimal hyperbolicity rate per unit time; <= 0 means measure it.
  double lambda_bar = 0.0;

  double delta(double b) const { return std::pow(b, -gamma); }
};

/// A_delta(R(a + ib)^{2m} psi)(w) via the single-integral kernel
/// t^{2m-1} e^{-zt} / (2m-1)!; the budget adds the leaf rule estimate to
/// the averaged time-integral budget.
AveragedValue dolgopyat_value(const SuspensionFlow& flow, const Observable& psi, const DolgopyatParams& params,
                              double b, const FlowPoint& w);

struct DolgopyatRow {
  double b = 0.0;
  double delta = 0.0;
  double sup_value = 0.0;
  double trivial_bound = 0.0;  // a^{-2m} sup|psi|
  double ratio = 0.0;
  double gamma0_hat_running = 0.0;  // NaN until two rows exist
  double error_budget = 0.0;        // largest budget over the evaluation points
  bool flagged = false;             // budget >= 10% of sup_value
};

struct DolgopyatTable {
  std::vector<DolgopyatRow> rows;
  double gamma0_hat = 0.0;
  double lambda_bar = 0.0;
  double nu_a = 0.0;
  std::size_t points = 0;
};

/// lambda_u^{1 / mean return time}, lambda_u from one-step cone expansion.
double measured_lambda_bar(const SuspensionFlow& flow);

DolgopyatTable dolgopyat_experiment(const SuspensionFlow& flow, const Observable& psi, const DolgopyatParams& params,
                                    const std::vector<double>& b_list, std::size_t n_points, std::uint64_t seed);
/// -slope of the least-squares line of log ratio against log b.
double decay_exponent(const std::vector<double>& b, const std::vector<double>& ratio);

void write_dolgopyat_csv(std::ostream& out, const DolgopyatTable& table);
nlohmann::json to_json(const DolgopyatTable& table);

// --------------------------------------------------- leaf decomposition

struct LeafStatsOptions {
  double piece_length = 0.25;  // pieces longer than this are subdivided
  double step = 0.0;           // backward time per step; 0 picks tau_minus / 4
  int leaves = 4;
  std::size_t max_pieces = 1'000'000;
};

struct LeafStatsRow {
  int ell = 0;
  std::size_t piece_count = 0;
  double boundary_mass_r = 0.0;  // mean over leaves
  double total_length = 0.0;     // mean over leaves
};

struct LeafStats {
  std::vector<LeafStatsRow> rows;
  bool exploded = false;  // stopped early at max_pieces
};

/// Pushes stable leaves of half-length delta backward step by step, cutting
/// at discontinuities and subdividing long pieces, and records the fraction
/// of the original leaf measure lying within arc length r of a piece end.
/// Lengths are Euclidean in the base. PieceExplosion when the piece count
/// exceeds max_pieces, carrying the rows computed so far in `partial`.
LeafStats stable_decomposition_stats(const SuspensionFlow& flow, double delta, double r, int ell_max,
                                     std::uint64_t seed, const LeafStatsOptions& options = {},
                                     LeafStats* partial = nullptr);

void write_leafstats_csv(std::ostream& out, const LeafStats& stats);

}  // namespace contactflow
