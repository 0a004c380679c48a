#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <stdexcept>
#include <string>

namespace contactflow {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Complex = std::complex<double>;

enum class ErrorKind {
  DegenerateFrame,
  NotInKernel,
  ClosednessViolation,
  NonFinite,
  PathDependence,
  ConeNotInvariant,
  ArrangementDegeneracy,
  ToleranceNotMet,
  EmptyCell,
  NoiseFloor,
  HypothesisViolation,
  SupportEscape,
  ChartBoundary,
  PieceExplosion,
  ConfigError,
  InvalidArgument,
};

const char* to_string(ErrorKind kind);

/// Every failure raised by the library carries one of the kinds above so
/// callers (and the CLI manifest) can classify it without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline double wrap_unit(double v) {
  double r = v - std::floor(v);
  // floor can round v - floor(v) up to exactly 1 for tiny negative v
  return r >= 1.0 ? 0.0 : r;
}

}  // namespace contactflow
