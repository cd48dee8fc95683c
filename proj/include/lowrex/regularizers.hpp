#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lowrex/types.hpp"

namespace lowrex {

/* Activity threshold shared by the zoo. For l1/group it is an absolute bound
 * on entry/block magnitude; for linf it is the relative saturation band
 * |x_i| >= ||x||_inf (1 - tol); for nuclear the relative rank cutoff
 * sigma_i > tol * sigma_max. */
inline constexpr double kTolActive = 1e-8;

/* Classification tolerance for subdifferential membership and margins. */
inline constexpr double kTolRi = 1e-7;

/*
 * A convex, partly smooth penalty J. Five kinds:
 *   l1           sum_i |x_i|
 *   group_l1l2   sum_b ||x_b||_2 over a partition into blocks
 *   linf         max_i |x_i|
 *   nuclear      sum of singular values of x reshaped to n0 x n0 (column-major)
 *   analysis_l1  || D^T x ||_1 for an analysis operator D (N x Q)
 */
struct Regularizer {
  enum class Kind { l1, group_l1l2, linf, nuclear, analysis_l1 };

  Kind kind = Kind::l1;
  std::vector<std::vector<int>> blocks;  // group_l1l2
  int n0 = 0;                            // nuclear
  Matrix D;                              // analysis_l1

  static Regularizer l1();
  static Regularizer group(std::vector<std::vector<int>> blocks);
  static Regularizer linf();
  static Regularizer nuclear(int n0);
  static Regularizer analysis_l1(Matrix d);
  /* 1-D total variation: D^T is the (n-1) x n forward difference operator. */
  static Regularizer analysis_tv1d(int n);

  std::string kind_name() const;
};

/*
 * Identity of the active manifold a point sits on: the support set, the
 * active block set, the saturation set with signs, the rank, or the
 * cosupport of the analysis coefficients. Equality of tags is how solvers
 * and experiments decide that two iterates share a model.
 */
struct ManifoldTag {
  enum class Kind { support, blocks, saturation, rank, cosupport };

  Kind kind = Kind::support;
  std::vector<int> index;
  std::vector<int> sign;  // saturation signs, aligned with index (linf only)
  int rank = 0;

  bool operator==(const ManifoldTag&) const = default;
  std::string to_string() const;
  std::uint64_t hash() const;  // FNV-1a of to_string()
};

/*
 * The model subspace T_x (orthonormal basis, N x d), the generalized sign
 * e_x = proj_{T_x}(subdifferential of J at x), and the manifold tag.
 * For analysis_l1, `transversal` reports whether the inactive analysis
 * columns are linearly independent (reported, not enforced).
 */
struct ModelDescriptor {
  Matrix basis;
  Vector e;
  ManifoldTag tag;
  std::optional<bool> transversal;

  int dim() const { return static_cast<int>(basis.cols()); }
};

struct SubdiffPosition {
  enum class Value { interior, boundary, outside };
  Value value = Value::outside;
  /* Signed slack: positive strictly inside the relative interior, negative
   * outside, near zero on the relative boundary. */
  double margin = 0.0;
};

double eval(const Regularizer& j, const Vector& x);

/* Proximal map argmin_u 1/2 ||u - x||^2 + gamma J(u). Exact per kind:
 * soft threshold, block soft threshold, residual of the projection onto the
 * gamma-radius l1 ball (Moreau), singular value soft threshold. analysis_l1
 * has no simple prox and throws Unsupported. */
Vector prox(const Regularizer& j, double gamma, const Vector& x);

ModelDescriptor model_tangent(const Regularizer& j, const Vector& x,
                              double tol_active = kTolActive);

/* e_x, the projection of the subdifferential's affine hull onto T_x. */
Vector generalized_sign(const Regularizer& j, const Vector& x);

/* Classify eta against the subdifferential of J at x. Equality constraints
 * (the T_x part must match e_x) decide membership in the affine hull; the
 * margin measures slack in the remaining inequality constraints. For
 * analysis_l1 the coefficients of eta over the inactive columns D_Lambda are
 * recovered by least squares; when D_Lambda is rank-deficient that
 * representative can overestimate the coefficient norm, so the verdict is
 * conservative (toward boundary/outside). */
SubdiffPosition subdiff_position(const Regularizer& j, const Vector& x, const Vector& eta,
                                 double tol_ri = kTolRi);

/* Hessian of J restricted to T_x, expressed in the basis of `desc`.
 * Zero for the polyhedral kinds (l1, linf), block-diagonal curvature
 * (I - e_b e_b^T)/||x_b|| for group_l1l2. nuclear/analysis_l1 throw
 * Unsupported. */
Matrix hessian_on_tangent(const Regularizer& j, const Vector& x, const ModelDescriptor& desc);
Matrix hessian_on_tangent(const Regularizer& j, const Vector& x);

/* One-sided directional derivative J'(x; d), which is also the support
 * function of the subdifferential at x. */
double dir_deriv(const Regularizer& j, const Vector& x, const Vector& d);

/* Euclidean projection onto the subdifferential of J at x. Closed form for
 * l1/group/linf/nuclear; Unsupported for analysis_l1. */
Vector project_subdifferential(const Regularizer& j, const Vector& x, const Vector& eta);

/* Projection onto the l1 ball of radius r (sort-based, exact). */
Vector project_l1_ball(const Vector& v, double r);

}  // namespace lowrex
