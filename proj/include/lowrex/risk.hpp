#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "lowrex/problem.hpp"
#include "lowrex/regularizers.hpp"
#include "lowrex/solvers.hpp"

namespace lowrex {

/*
 * Degrees of freedom of y -> phi x*(y) at a solution with model subspace T:
 * the trace of phi_T (phi_T^T phi_T + lambda Q_T)^{-1} phi_T^T, with Q_T the
 * curvature of J on T (zero for the polyhedral kinds, block curvature for
 * group_l1l2). Exactly |support| for l1. Throws Infeasible when the
 * restricted system is singular (the instance sits in the non-injectivity
 * set), Unsupported for nuclear (no closed form here; use mc_dof).
 */
double dof_closed_form(const LinearMap& phi, const Regularizer& j, const Vector& x_star,
                       double lambda, double cond_tol = 1e-10);

/* Stein's estimate ||y - mu||^2 + 2 sigma^2 dof - p sigma^2. */
double sure_value(const Vector& y, const Vector& mu, double dof, double sigma, int p);

struct McDof {
  double value = 0.0;
  double std_error = 0.0;  // NaN when a single probe gives no spread estimate
};

/* Divergence estimate by finite differences along Gaussian probes:
 * mean over i of <z_i, (predictor(y + eps z_i) - predictor(y))/eps>.
 * Probe i draws from substream (seed, i), so the estimate is a pure function
 * of (y, eps, n_probes, seed) regardless of jobs. */
McDof mc_dof(const std::function<Vector(const Vector&)>& predictor, const Vector& y,
             double epsilon, int n_probes, std::uint64_t seed, int jobs = 1);

/* Probe scale the risk experiments use: 1e-4 (1 + ||y||) / sqrt(P). */
double mc_dof_epsilon(const Vector& y);

struct RiskPoint {
  double lambda = 0.0;
  Vector x;  // solution at this lambda (empty when unsolved)
  double dof = 0.0;
  double sure = 0.0;
  double residual_sq = 0.0;
  bool dof_is_mc = false;          // closed form unavailable, Monte-Carlo used
  std::optional<McDof> mc;         // present when Monte-Carlo ran
  bool transition_flag = false;    // manifold tag unstable under an eps probe
  bool solved = true;
};

struct RiskOptions {
  SolveOptions solve;
  int mc_probes = 64;
  std::uint64_t seed = 0;
  int jobs = 1;
  bool check_transition = true;
  double cond_tol = 1e-10;
};

struct RiskCurve {
  std::vector<RiskPoint> points;  // sorted by lambda
  double best_lambda = 0.0;       // SURE argmin; ties go to the larger lambda
};

/* Solve the regularized problem on a lambda grid and assemble the SURE
 * curve. Grid points are independent and evaluate in parallel; per-point
 * solver failures are recorded on the point (solved = false) and the curve
 * is still returned. */
RiskCurve sure_path(const LinearMap& phi, const Vector& y, const Regularizer& j, double sigma,
                    const std::vector<double>& lambdas, const RiskOptions& opts = {});

}  // namespace lowrex
