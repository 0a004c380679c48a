#pragma once

#include "contactflow/common.hpp"

#include <json.hpp>

#include <array>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace contactflow {

/// Frequency in (unstable, stable, flow) coordinates.
struct Freq3 {
  double u = 0.0, s = 0.0, f = 0.0;
};

/// a(xi) = (1 + |xi|^2)^{r/2} (1 + xi_s^2)^{s/2} (1 + xi_f^2)^{q/2}.
struct AnisoSymbol {
  double r = 0.0, s = 0.0, q = 0.0;
  double operator()(const Freq3& xi) const;
};
double symbol_eval(const AnisoSymbol& sym, const Freq3& xi);

/// Role of a grid axis.
enum class AxisRole { Unstable, Stable, Flow };

/// Convention string written into every artifact.
const char* transform_convention();

/// Complex samples at x_j = j L / n_axis on the periodic cube [0, L)^3,
/// stored with the last axis fastest. Forward transform kernel
/// e^{-i<xi, x>} with xi = 2 pi k / L, k in [-n/2, n/2).
class GridFunction3 {
 public:
  GridFunction3(std::array<int, 3> dims, double L, std::array<AxisRole, 3> roles = {AxisRole::Unstable, AxisRole::Stable,
                                                                                   AxisRole::Flow});
  GridFunction3(int n, double L) : GridFunction3({n, n, n}, L) {}

  /// Samples a closed-form function at the grid points.
  static GridFunction3 sample(std::array<int, 3> dims, double L, const std::function<Complex(const Vec3&)>& f,
                              std::array<AxisRole, 3> roles = {AxisRole::Unstable, AxisRole::Stable, AxisRole::Flow});

  const std::array<int, 3>& dims() const { return dims_; }
  double side() const { return L_; }
  const std::array<AxisRole, 3>& roles() const { return roles_; }
  std::size_t size() const { return data_.size(); }
  Vec3 point(int i, int j, int k) const;
  double cell_volume() const;

  Complex& at(int i, int j, int k) { return data_[index(i, j, k)]; }
  const Complex& at(int i, int j, int k) const { return data_[index(i, j, k)]; }
  std::vector<Complex>& data() { return data_; }
  const std::vector<Complex>& data() const { return data_; }

  /// Frequency of the transform coefficient with multi-index (i, j, k),
  /// expressed in symbol coordinates.
  Freq3 frequency(int i, int j, int k) const;
  /// Unnormalized forward DFT (same layout).
  std::vector<Complex> transform() const;

  /// sqrt(cell volume * sum |f|^2).
  double l2_norm() const;

 private:
  std::size_t index(int i, int j, int k) const {
    return (static_cast<std::size_t>(i) * dims_[1] + static_cast<std::size_t>(j)) * dims_[2] + static_cast<std::size_t>(k);
  }
  std::array<int, 3> dims_;
  double L_;
  std::array<AxisRole, 3> roles_;
  std::vector<Complex> data_;
};

/// || F^{-1}(a F f) ||_{L^2} on the grid, via Plancherel.
double aniso_norm_p2(const GridFunction3& f, const AnisoSymbol& sym);
/// Several symbols sharing one transform.
std::vector<double> aniso_norms_p2(const GridFunction3& f, const std::vector<AnisoSymbol>& syms);

/// diag(A_u, B_s, 1) with |A_u| > 1 > |B_s| > 0.
struct HyperbolicBlockMap {
  double A_u = 2.0, B_s = 0.5;

  HyperbolicBlockMap() = default;
  HyperbolicBlockMap(double a_u, double b_s);
  static HyperbolicBlockMap identity();

  double det() const { return A_u * B_s; }
  double lambda_u() const { return std::abs(A_u); }
  double lambda_s() const { return std::abs(B_s); }
  HyperbolicBlockMap power(int k) const;
  /// max(lambda_u^{-r}, lambda_s^{-(r+s)})
  double contraction(double r, double s) const;

 private:
  bool identity_ = false;
};

struct ExponentSet {
  double r = 0.0, s = 0.0, q = 0.0;
  double r_low = 0.0, s_low = 0.0;  // r' < r and s' <= s of the lower-order term

  AnisoSymbol main() const { return {r, s, q}; }
  /// (r', s', q + r - r')
  AnisoSymbol lower() const { return {r_low, s_low, q + r - r_low}; }
};

/// Throws HypothesisViolation unless s <= -r <= 0 <= r, r' < r, s' <= s and
/// q >= 0.
void require_composition_exponents(const ExponentSet& e);

struct SymbolInequalityReport {
  double K1 = 0.0;         // with K2 = 10 K1
  double K2 = 0.0;
  double K1_prime = 0.0;   // sup b / a
  double K1_single = 0.0;  // sup b / (mu a), the bound with no lower-order term
  double mu = 0.0;
  // Same quantities with the frequency range doubled, and the relative change.
  double K1_extended = 0.0, K1_prime_extended = 0.0;
  double drift = 0.0;
  double xi_max = 0.0;
  std::size_t samples = 0;
};

struct SymbolSweep {
  double xi_min = 1e-2;
  // the supremum of b / (mu a + K2/K1 a') is only approached as |xi| -> inf
  double xi_max = 1e6;
  int per_decade = 16;
  double k2_over_k1 = 10.0;
  /// Skip the exponent preconditions (for diagnostics).
  bool allow_violation = false;
};

/// Sweeps b(xi) = a(D^{-T} xi) over a log-spaced grid of |xi_u|, |xi_s|,
/// |xi_f| (plus zero) and reports the smallest constants of the two-term
/// bound b <= K1 (mu a + (K2/K1) a') and of b <= K1' a.
SymbolInequalityReport check_symbol_inequality(const ExponentSet& e, const HyperbolicBlockMap& D,
                                               const SymbolSweep& sweep = {});
nlohmann::json to_json(const SymbolInequalityReport& r);

/// Tensor bump A prod b((x_i - c_i)/h_i), b(t) = exp(k - k/(1 - t^2)).
/// Larger steepness k gives faster Fourier decay, hence better grid
/// resolution of narrow bumps.
struct CubeBump {
  Vec3 center{2.0, 2.0, 2.0};
  Vec3 half_width{0.5, 0.5, 0.5};
  Complex amplitude = 1.0;
  double steepness = 1.0;
  /// Multiplies by e^{i <k, x>} (a plane-wave modulation, zero by default).
  Vec3 wave{0.0, 0.0, 0.0};

  Complex operator()(const Vec3& x) const;
};

/// w(c + D^{-k}(x - c)) about the cube center c, evaluated in closed form.
/// SupportEscape when the mapped support is not inside the open cube.
GridFunction3 sample_composed(const CubeBump& w, const HyperbolicBlockMap& D, int power, std::array<int, 3> dims,
                              double L);

struct CompositionReport {
  int power = 1;
  double norm_w = 0.0;        // ||w||_{r,s,q}
  double norm_w_lower = 0.0;  // ||w||_{r',s',q+r-r'}
  double norm_mapped = 0.0;   // ||w o D^{-k}||_{r,s,q}
  double ratio = 0.0;         // norm_mapped / norm_w
  double mu = 0.0;            // contraction factor of D^k
  double det_factor = 0.0;    // |det D^k|^{1/2}
  double two_term_bound = 0.0;   // det_factor (mu norm_w + norm_w_lower)
  double single_bound = 0.0;     // det_factor norm_w
  double C_two_term = 0.0;       // norm_mapped / two_term_bound
  double C_single = 0.0;         // norm_mapped / single_bound
};

CompositionReport check_composition_contraction(const CubeBump& w, const HyperbolicBlockMap& D, const ExponentSet& e,
                                                std::array<int, 3> dims, double L, int power = 1);
nlohmann::json to_json(const CompositionReport& r);

/// Half-space {x : x_axis < offset} (axis in grid order); `whole` selects
/// the full cube.
struct HalfSpace {
  int axis = 0;
  double offset = 2.0;
  bool whole = false;
};

/// True when -1/2 < s(1 + q/r) <= 0 <= r(1 + q/r) < 1/2.
bool multiplier_admissible(const AnisoSymbol& sym);

struct MultiplierReport {
  std::vector<double> ratios;  // one per bump
  double sup_ratio = 0.0;
  bool admissible = true;
};

/// ||1_U w|| / ||w|| over a family of bumps. HypothesisViolation for
/// inadmissible exponents unless `allow_violation`.
MultiplierReport check_multiplier_charfun(const HalfSpace& U, const AnisoSymbol& sym, const std::vector<CubeBump>& family,
                                          std::array<int, 3> dims, double L, bool allow_violation = false);

struct AnisoSweepRow {
  int N = 0;
  double L = 0.0;
  AnisoSymbol sym;
  double ratio = 0.0;
  double bound = 0.0;
};
void write_aniso_csv(std::ostream& out, const std::vector<AnisoSweepRow>& rows);

}  // namespace contactflow
