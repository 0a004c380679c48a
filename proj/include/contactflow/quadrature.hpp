#pragma once

#include <vector>

namespace contactflow {

struct GaussRule {
  std::vector<double> nodes;    // on [-1, 1], ascending
  std::vector<double> weights;
};

/// n-point Gauss-Legendre rule, cached after the first request.
const GaussRule& gauss_legendre(int n);

/// Rule mapped to [lo, hi].
GaussRule gauss_legendre(int n, double lo, double hi);

/// Integral over [-1, 1] of exp(-1/(1-u^2)), computed once by composite
/// Gauss quadrature.
double bump_mass();

}  // namespace contactflow
