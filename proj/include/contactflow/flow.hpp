#pragma once

#include "contactflow/roof.hpp"
#include "contactflow/torus_map.hpp"

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <vector>

namespace contactflow {

/// A point of the phase space X0 = {(x, y, z) : 0 <= z < tau(x, y)}.
struct FlowPoint {
  double x = 0.0, y = 0.0, z = 0.0;
  int piece = 0;  // declared piece containing (x, y)

  Vec2 base() const { return {x, y}; }
  Vec3 vec() const { return {x, y, z}; }
};

struct FlowStats {
  std::size_t crossings = 0;
  /// Roof crossings whose base image landed within 1e-12 of a branch edge.
  std::size_t near_discontinuity = 0;
};

struct ReturnStep {
  Vec2 image;
  double time = 0.0;
  int piece = 0;
};

struct Itinerary {
  Vec2 image;
  double time = 0.0;
  std::vector<int> pieces;  // piece of each visited base point, first n
};

struct SampleStats {
  std::size_t accepted = 0;
  std::size_t attempts = 0;
};

class SuspensionFlow {
 public:
  SuspensionFlow(std::shared_ptr<const TorusMap> map, std::shared_ptr<const RoofFunction> roof);

  const TorusMap& map() const { return *map_; }
  const RoofFunction& roof() const { return *roof_; }
  std::shared_ptr<const TorusMap> map_ptr() const { return map_; }
  double volume() const { return roof_->volume(); }

  double tau(const Vec2& p) const { return roof_->value_on(p, map_->branch_of(p)); }

  /// Validated point; throws InvalidArgument if outside X0.
  FlowPoint make_point(double x, double y, double z) const;

  /// Event stepping under the roof; no ODE integration.
  FlowPoint forward(const FlowPoint& p, double t, FlowStats* stats = nullptr) const;
  /// Inverse of forward; at z = 0 the jump to the preimage happens first.
  FlowPoint backward(const FlowPoint& p, double t, FlowStats* stats = nullptr) const;

  ReturnStep return_map(const Vec2& base) const;
  Itinerary iterate(const Vec2& base, int n) const;

  /// One sample of normalized Lebesgue measure on X0, a pure function of
  /// (seed, index); rejection sampling under tau_max.
  FlowPoint sample_one(std::uint64_t seed, std::uint64_t index, std::size_t* attempts = nullptr) const;
  std::vector<FlowPoint> sample_invariant(std::uint64_t seed, std::size_t n, SampleStats* stats = nullptr) const;

 private:
  std::shared_ptr<const TorusMap> map_;
  std::shared_ptr<const RoofFunction> roof_;
};

FlowPoint flow_forward(const SuspensionFlow& flow, const FlowPoint& p, double t);
FlowPoint flow_backward(const SuspensionFlow& flow, const FlowPoint& p, double t);

SuspensionFlow make_f0_flow(double tau_minus = 1.0);
/// Suspension of f0 o phi with phi(x, y) = (x, y + eps sin(2 pi x)).
SuspensionFlow make_perturbed_flow(double epsilon, double tau_minus = 1.0);
std::shared_ptr<const ShearPerturbedMap> build_perturbed_map(double epsilon);

/// CSV rows (t, x, y, z, piece_id) at t = 0, dt, ..., t_end.
void write_trajectory_csv(std::ostream& out, const SuspensionFlow& flow, const FlowPoint& start, double t_end, double dt);

/// Directional derivative of the time-t map by central differences.
Vec3 flow_differential_fd(const SuspensionFlow& flow, const FlowPoint& p, const Vec3& v, double t, double h = 1e-6);

}  // namespace contactflow
