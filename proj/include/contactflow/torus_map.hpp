#pragma once

#include "contactflow/common.hpp"
#include "contactflow/polygon.hpp"

#include <string>
#include <vector>

namespace contactflow {

/// One declared affine branch p -> matrix p + offset (mod 1) on a convex
/// polygonal domain of the unit square.
struct AffinePiece {
  RPolygon domain;
  RMat2 matrix;
  RVec2 offset;
};

/// A segment on the unit square along which the map fails to be continuous
/// as a map of the torus.
struct Segment {
  Vec2 a, b;
};

/// Invertible piecewise-smooth map of the torus [0,1)^2.
///
/// Pieces are refined into "branches": maximal sets on which the map is a
/// single smooth formula *including* the integer shift applied by the mod-1
/// reduction. The roof must be built branch by branch, because the contact
/// structure sees the reduced coordinates.
class TorusMap {
 public:
  virtual ~TorusMap() = default;

  virtual std::size_t num_branches() const = 0;
  virtual std::size_t num_declared_pieces() const = 0;

  /// Branch containing p (total: every point of [0,1)^2 has exactly one).
  virtual int branch_of(const Vec2& p) const = 0;
  virtual int declared_piece_of_branch(int branch) const = 0;
  int declared_piece_of(const Vec2& p) const { return declared_piece_of_branch(branch_of(p)); }

  /// Reduced image of p using the formula of the given branch.
  virtual Vec2 apply_on(const Vec2& p, int branch) const = 0;
  Vec2 apply(const Vec2& p) const { return apply_on(p, branch_of(p)); }
  virtual Vec2 apply_inverse(const Vec2& w) const = 0;

  virtual Mat2 jacobian(const Vec2& p) const = 0;
  /// Distance from p to the boundary of its branch (an underestimate is fine).
  virtual double boundary_distance(const Vec2& p) const = 0;
  /// Segments where the torus map is discontinuous.
  virtual std::vector<Segment> discontinuities() const = 0;
  /// True when every branch has the same constant Jacobian.
  virtual bool uniform_jacobian() const { return false; }
  virtual std::string name() const = 0;
};

/// Branch of a piecewise affine map: domain polygon (exact and double), the
/// matrix, and the offset already reduced by the integer image shift.
struct AffineBranch {
  int declared = 0;
  long shift_x = 0, shift_y = 0;
  RPolygon exact_domain;
  Polygon domain;
  Mat2 matrix;
  Mat2 inverse;
  Vec2 offset;  // declared offset minus (shift_x, shift_y)
  RMat2 exact_matrix;
  RVec2 exact_offset;
};

class PiecewiseAffineTorusMap final : public TorusMap {
 public:
  /// Pieces are tried in order; the first whose closed domain contains a
  /// point owns it, which fixes the tie-break on shared edges.
  explicit PiecewiseAffineTorusMap(std::vector<AffinePiece> pieces, std::string name = "piecewise-affine");

  std::size_t num_branches() const override { return branches_.size(); }
  std::size_t num_declared_pieces() const override { return pieces_.size(); }
  int branch_of(const Vec2& p) const override;
  int declared_piece_of_branch(int branch) const override { return branches_[static_cast<std::size_t>(branch)].declared; }
  Vec2 apply_on(const Vec2& p, int branch) const override;
  Vec2 apply_inverse(const Vec2& w) const override;
  Mat2 jacobian(const Vec2& p) const override;
  double boundary_distance(const Vec2& p) const override;
  std::vector<Segment> discontinuities() const override;
  bool uniform_jacobian() const override;
  std::string name() const override { return name_; }

  const std::vector<AffinePiece>& pieces() const { return pieces_; }
  const std::vector<AffineBranch>& branches() const { return branches_; }
  const std::vector<Polygon>& piece_domains() const { return domains_; }
  int declared_piece_at(const Vec2& p) const;
  /// Exact determinant check |det| = 1 for every piece.
  bool is_symplectic() const;

 private:
  std::vector<AffinePiece> pieces_;
  std::vector<Polygon> domains_;
  std::vector<AffineBranch> branches_;
  std::vector<std::vector<int>> branches_of_piece_;
  std::string name_;
};

/// The cat-like map (x + y, x/2 + 3y/2) mod 1 with its two continuity pieces:
/// the closed triangle y <= 1 - x and its complement.
std::vector<AffinePiece> f0_pieces();
PiecewiseAffineTorusMap make_f0_map();

/// f = f0 o phi with phi(x, y) = (x, y + eps sin(2 pi x)) mod 1.
class ShearPerturbedMap final : public TorusMap {
 public:
  explicit ShearPerturbedMap(double epsilon);

  std::size_t num_branches() const override { return 3 * base_.num_branches(); }
  std::size_t num_declared_pieces() const override { return base_.num_declared_pieces(); }
  int branch_of(const Vec2& p) const override;
  int declared_piece_of_branch(int branch) const override;
  Vec2 apply_on(const Vec2& p, int branch) const override;
  Vec2 apply_inverse(const Vec2& w) const override;
  Mat2 jacobian(const Vec2& p) const override;
  double boundary_distance(const Vec2& p) const override;
  std::vector<Segment> discontinuities() const override;
  std::string name() const override { return "perturbed"; }

  double epsilon() const { return epsilon_; }
  const PiecewiseAffineTorusMap& base() const { return base_; }
  /// Shear wrap index k in {-1, 0, 1} (y + eps sin(2 pi x) - k in [0,1)) and
  /// base branch j0 of a perturbed branch.
  int shear_shift(int branch) const { return branch / static_cast<int>(base_.num_branches()) - 1; }
  int base_branch(int branch) const { return branch % static_cast<int>(base_.num_branches()); }
  /// phi with the given wrap index, unreduced otherwise.
  Vec2 shear(const Vec2& p, int k) const;

 private:
  double epsilon_;
  PiecewiseAffineTorusMap base_;
};

}  // namespace contactflow
