#include "contactflow/common.hpp"

namespace contactflow {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::DegenerateFrame: return "DegenerateFrame";
    case ErrorKind::NotInKernel: return "NotInKernel";
    case ErrorKind::ClosednessViolation: return "ClosednessViolation";
    case ErrorKind::NonFinite: return "NonFinite";
    case ErrorKind::PathDependence: return "PathDependence";
    case ErrorKind::ConeNotInvariant: return "ConeNotInvariant";
    case ErrorKind::ArrangementDegeneracy: return "ArrangementDegeneracy";
    case ErrorKind::ToleranceNotMet: return "ToleranceNotMet";
    case ErrorKind::EmptyCell: return "EmptyCell";
    case ErrorKind::NoiseFloor: return "NoiseFloor";
    case ErrorKind::HypothesisViolation: return "HypothesisViolation";
    case ErrorKind::SupportEscape: return "SupportEscape";
    case ErrorKind::ChartBoundary: return "ChartBoundary";
    case ErrorKind::PieceExplosion: return "PieceExplosion";
    case ErrorKind::ConfigError: return "ConfigError";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

}  // namespace contactflow
