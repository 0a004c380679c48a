#pragma once

#include "contactflow/flow.hpp"
#include "contactflow/polygon.hpp"

#include <json.hpp>

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace contactflow {

inline constexpr const char* kVersion = "0.1.0";

/// Experiments reachable from the command line.
const std::vector<std::string>& experiment_names();

// ---------------------------------------------------------------- config

/// One affine piece given exactly: convex CCW domain, matrix rows, offset.
struct PieceSpec {
  std::vector<std::array<Rational, 2>> domain;
  std::array<Rational, 4> matrix;  // a, b, c, d of [[a, b], [c, d]]
  std::array<Rational, 2> offset;
  bool operator==(const PieceSpec&) const = default;
};

/// map is "f0", "perturbed" (f0 after the shear of size epsilon) or
/// "affine" (the listed pieces).
struct FlowSpec {
  std::string map = "f0";
  double epsilon = 0.0;
  double tau_minus = 1.0;
  std::vector<PieceSpec> pieces;
  bool operator==(const FlowSpec&) const = default;
};

struct BumpSpec {
  std::array<double, 3> center{0.2, 0.2, 0.5};
  std::array<double, 3> half_width{0.12, 0.12, 0.4};
  double amplitude = 1.0;
  bool operator==(const BumpSpec&) const = default;
};

struct Tolerances {
  double contact = 1e-6;
  double roof_gradient = 1e-10;
  double roof_fd = 1e-6;       // finite-difference gradient of the roof values
  double closedness_fd = 1e-6; // non-affine maps only
  double semigroup = 1e-10;
  double box_sigma = 3.0;
  double chart = 1e-8;
  double cone_slack = 1e-9;
  double expansion = 0.01;
  double resolvent_constant = 1e-8;
  double generator = 1e-4;
  double nested = 1e-3;
  double modulus = 1e-8;
  double ulam_leading = 1e-12;
  double ulam_stability = 0.2;
  double control_sigma = 3.0;
  double planted_rate = 0.02;
  double parseval = 1e-10;
  double drift = 0.05;
  double growth_factor = 1.05;  // minimal growth per grid doubling outside the admissible range
  double anchor = 1e-10;
  double budget_fraction = 0.1;
  double plateau = 1.25;
  bool operator==(const Tolerances&) const = default;
};

struct VerifyConfig {
  int contact_samples = 10000;
  int max_crossings = 5;
  double clear_margin = 1e-4;
  int semigroup_samples = 10000;
  double max_time = 8.0;
  int box_samples = 200000;
  int boxes = 5;
  std::vector<double> box_times{1.0, 5.0, 20.0};
  int roof_samples = 10000;
  int cone_rays = 10000;
  double cone_aperture = 1.0;
  std::vector<double> expansion_apertures{1.0, 0.5, 0.25, 0.1, 0.03, 0.01};
  int charts = 20;
  int chart_samples = 500;
  int transversality_samples = 64;
  bool operator==(const VerifyConfig&) const = default;
};

struct CorrelateConfig {
  double n_samples = 1e7;
  double t_max = 30.0;
  double dt = 0.5;
  BumpSpec psi1{};
  BumpSpec psi2{{0.7, 0.55, 0.5}, {0.1, 0.1, 0.4}, 1.0};
  int batches = 100;
  int bootstrap = 1000;
  double planted_rate = 0.3;
  bool operator==(const CorrelateConfig&) const = default;
};

struct ResolventConfig {
  std::vector<std::array<double, 2>> constant_z{{2.0, 3.0}, {0.5, 0.0}, {1.0, -20.0}};
  BumpSpec psi{};
  std::array<double, 2> generator_z{1.0, 0.5};
  int generator_points = 200;
  double generator_tolerance = 1e-6;
  std::array<double, 2> nested_z{1.5, 1.0};
  int nested_points = 50;
  double nested_panel = 0.05;
  std::array<double, 2> modulus_z{0.7, 2.0};
  int modulus_points = 60;
  int n_max = 4;
  bool operator==(const ResolventConfig&) const = default;
};

struct UlamConfig {
  double t = 5.0;
  std::array<int, 3> cells{24, 24, 8};
  int samples_per_cell = 200;
  bool refine = true;
  int krylov_dim = 150;
  bool operator==(const UlamConfig&) const = default;
};

struct DolgopyatConfig {
  double a = 2.0;
  int m = 2;
  double gamma = 0.5;
  std::vector<double> b{8, 16, 32, 64, 128};
  int points = 200;
  double leaf_panel_length = 0.05;
  BumpSpec psi{};
  int anchor_points = 4;
  bool operator==(const DolgopyatConfig&) const = default;
};

struct ComplexityConfig {
  int n_max = 8;
  std::string method = "exact";
  int sampling_grid = 2048;
  int sampling_window = 2;
  bool operator==(const ComplexityConfig&) const = default;
};

struct NormcheckConfig {
  std::array<double, 5> exponents{0.3, -0.4, 0.0, 0.1, -0.5};  // r, s, q, r', s'
  double L = 4.0;
  int parseval_grid = 24;
  std::array<int, 2> grids{64, 128};
  int composition_power = 4;
  int composition_grid = 64;
  std::array<double, 3> multiplier_symbol{0.3, -0.3, 0.0};
  double growth_r = 0.6;
  std::vector<int> growth_grids{32, 64, 128};
  bool operator==(const NormcheckConfig&) const = default;
};

struct LeafstatsConfig {
  double delta = 0.05;
  double r = 0.002;
  int ell_max = 24;
  int leaves = 4;
  double piece_length = 0.25;
  double max_pieces = 1e6;
  bool operator==(const LeafstatsConfig&) const = default;
};

struct ExperimentConfig {
  std::string experiment = "verify";
  FlowSpec flow;
  std::uint64_t seed = 1;
  std::string output_dir = "out";
  Tolerances tolerances;
  VerifyConfig verify;
  CorrelateConfig correlate;
  ResolventConfig resolvent;
  UlamConfig ulam;
  DolgopyatConfig dolgopyat;
  ComplexityConfig complexity;
  NormcheckConfig normcheck;
  LeafstatsConfig leafstats;
  bool operator==(const ExperimentConfig&) const = default;
};

/// Missing keys take their defaults; unknown keys and type mismatches raise
/// ConfigError naming the full key path.
ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::string& path);
/// Value checks that parsing alone cannot do; ConfigError with the key path.
void validate_config(const ExperimentConfig& c);
/// Full canonical form (every key written).
nlohmann::json to_json(const ExperimentConfig& c);

/// FNV-1a of the canonical config without output_dir, as 16 hex digits.
std::string config_hash(const ExperimentConfig& c);

SuspensionFlow build_flow(const FlowSpec& spec);

// -------------------------------------------------------------- manifest

struct CheckResult {
  std::string name;
  bool passed = false;
  double value = 0.0;
  double threshold = 0.0;
  std::string detail;
};

struct RunManifest {
  std::string experiment;
  std::string config_hash;
  std::string version = kVersion;
  std::uint64_t seed = 0;
  double wall_time = 0.0;  // seconds
  std::vector<CheckResult> checks;
  std::vector<std::string> artifacts;  // relative to the output directory
  std::vector<std::string> notes;      // human-readable summary lines

  bool passed() const;
};
nlohmann::json to_json(const RunManifest& m);

/// Runs the configured experiment with the given worker count, writes its
/// artifacts and manifest.json into output_dir. Library errors raised while
/// computing become failed checks; ConfigError propagates.
RunManifest run(const ExperimentConfig& config, int threads = 1);

}  // namespace contactflow
