#pragma once

#include "contactflow/torus_map.hpp"

#include <json.hpp>

#include <vector>

namespace contactflow {

enum class ComplexityMethod { Exact, Sampling };

/// Multiplicity of n-step smoothness domains (D_b) and of their images (D_e)
/// at a point of the torus.
struct ComplexityReport {
  int n = 0;
  std::size_t D_b = 1, D_e = 1;
  double rate_b = 0.0, rate_e = 0.0;  // log(D) / n
  bool lower_bound = false;           // sampling estimates are lower bounds
  std::size_t cells_b = 0, cells_e = 0;
  std::size_t slivers = 0;            // cells of positive area below 1e-14
  double area_b = 0.0, area_e = 0.0;  // total cell areas (exact method), 1 for a partition
};

struct ComplexityOptions {
  int sampling_grid = 2048;
  /// Side of the square window of grid points whose distinct codes are
  /// counted; small windows keep the estimate below the exact value.
  int sampling_window = 2;
  /// Exact cells below this area are kept but counted as slivers.
  double sliver_area = 1e-14;
};

/// Exact method: rational polygon refinement of the declared pieces under
/// the inverse (D_b) and forward (D_e) map on the torus, with incidence
/// counted at every arrangement vertex. Requires n_max <= 12.
std::vector<ComplexityReport> complexity_exact(const PiecewiseAffineTorusMap& map, int n_max,
                                               const ComplexityOptions& options = {});

/// Sampling method: itinerary codes on a grid; the number of distinct codes
/// in a small window of neighbouring grid points estimates the local
/// multiplicity (reported as a lower bound). Requires n_max <= 20.
std::vector<ComplexityReport> complexity_sampling(const TorusMap& map, int n_max, const ComplexityOptions& options = {});

std::vector<ComplexityReport> complexity_counts(const TorusMap& map, int n_max, ComplexityMethod method,
                                                const ComplexityOptions& options = {});

nlohmann::json to_json(const ComplexityReport& r);

}  // namespace contactflow
