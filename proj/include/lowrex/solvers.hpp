#pragma once

#include <optional>
#include <vector>

#include "lowrex/problem.hpp"
#include "lowrex/regularizers.hpp"

namespace lowrex {

struct SolveOptions {
  /* Forward-backward: step in (0, 2/||phi||^2), default 1/||phi||^2 (the
   * objective is then monotone). Douglas-Rachford: prox scaling, default 1.
   * Primal-dual: common step, default 0.99/||[phi; D^T]||. */
  std::optional<double> step;
  bool accelerate = false;  // FB only: FISTA momentum (trajectory guarantees weaken)
  int max_iter = 100000;
  double tol_rel = 1e-10;
  int trace_every = 1;
  double tol_active = kTolActive;
  /* Starting point, length n. FB and primal-dual seed the primal iterate
   * (duals start at zero); DR seeds the auxiliary point whose affine
   * projection is the first iterate. Default: zero (DR: least squares). */
  std::optional<Vector> init;
};

/* Per-traced-iterate history. Snapshots are held only while the solver runs;
 * what survives is the scalar list errors_to_final = ||x^(n) - x_final||. */
struct SolveTrace {
  std::vector<int> iterations;
  std::vector<double> objectives;
  std::vector<ManifoldTag> tags;
  std::vector<double> errors_to_final;
  int total_iterations = 0;
  bool converged = false;
  double residual = 0.0;  // solver-specific stopping residual at exit
};

struct SolveResult {
  Vector x;
  SolveTrace trace;
};

/* Proximal gradient on 1/2||phi x - y||^2 + lambda J(x). Stops when the
 * fixed-point residual ||x - prox(x + tau phi^T(y - phi x))|| falls below
 * tol_rel (1 + ||x||); with FISTA the returned point is re-certified by one
 * plain application first. Nonconvergence is reported in the trace, not
 * thrown. */
SolveResult fb_solve(const LinearMap& phi, const Vector& y, double lambda,
                     const Regularizer& j, const SolveOptions& opts = {});

/* min J(x) subject to phi x = y by Douglas-Rachford between the affine
 * projection and prox of J. Returns the affine-side point (feasible to
 * factorization accuracy); tags in the trace come from the prox side, which
 * carries exact structure. Throws Infeasible when y is outside the range of
 * phi. */
SolveResult dr_solve(const LinearMap& phi, const Vector& y, const Regularizer& j,
                     const SolveOptions& opts = {});

/* Full-splitting primal-dual scheme for 1/2||phi x - y||^2 + lambda||D^T x||_1
 * (analysis_l1 only), dual pair on the stacked operator [phi; D^T]. Stops on
 * a duality-gap surrogate: |primal - dual| plus the dual infeasibility
 * ||phi^T p + D q|| (1 + ||x||), relative to the primal value. */
SolveResult primal_dual_solve(const LinearMap& phi, const Vector& y, double lambda,
                              const Regularizer& j, const SolveOptions& opts = {});

/* Smallest traced iteration whose manifold tag equals the final tag from
 * there on. Absent when the tag changed at the very last traced point with
 * nothing after it to confirm identification. */
std::optional<int> identification_iteration(const SolveTrace& trace);

struct RateEstimate {
  double rate = 0.0;       // exp(slope) of the log-error fit, per iteration
  double r_squared = 0.0;  // quality of the linear fit
  int points = 0;
};

/* Least-squares fit of log||x^(n) - x_final|| against n over traced points
 * after identification, skipping values at the numerical floor. Throws
 * InvalidArgument when identification is absent or fewer than 10 usable
 * points remain. A rate near one with poor r_squared means the trace never
 * entered the linear regime. */
RateEstimate local_rate_estimate(const SolveTrace& trace);

}  // namespace lowrex
