#include "lowrex/risk.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "lowrex/parallel.hpp"
#include "lowrex/rng.hpp"

namespace lowrex {

double dof_closed_form(const LinearMap& phi, const Regularizer& j, const Vector& x_star,
                       double lambda, double cond_tol) {
  require(x_star.size() == phi.n(), "dof_closed_form: x has wrong length");
  require(lambda >= 0.0, "dof_closed_form: lambda must be nonnegative");
  if (j.kind == Regularizer::Kind::nuclear)
    throw Unsupported("dof_closed_form: no closed form for nuclear here, use mc_dof");

  const ModelDescriptor desc = model_tangent(j, x_star);
  const int d = desc.dim();
  if (d == 0) return 0.0;

  const Matrix a = phi.A * desc.basis;
  const Matrix ata = a.transpose() * a;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(ata);
  if (eig.eigenvalues()[0] <= cond_tol)
    throw Infeasible("dof_closed_form: restricted system singular, instance lies in the non-injectivity set");

  // Polyhedral penalties are affine on T: the trace collapses to dim T
  // (for l1 that is the support size, exactly). Only the group penalty
  // contributes curvature.
  if (j.kind != Regularizer::Kind::group_l1l2) return d;
  const Matrix m = ata + lambda * hessian_on_tangent(j, x_star, desc);
  return m.ldlt().solve(ata).trace();
}

double sure_value(const Vector& y, const Vector& mu, double dof, double sigma, int p) {
  require(mu.size() == y.size(), "sure_value: mu has wrong length");
  require(p == y.size(), "sure_value: p must match the observation length");
  require(sigma >= 0.0, "sure_value: sigma must be nonnegative");
  return (y - mu).squaredNorm() + 2.0 * sigma * sigma * dof - p * sigma * sigma;
}

double mc_dof_epsilon(const Vector& y) {
  return 1e-4 * (1.0 + y.norm()) / std::sqrt(static_cast<double>(y.size()));
}

McDof mc_dof(const std::function<Vector(const Vector&)>& predictor, const Vector& y,
             double epsilon, int n_probes, std::uint64_t seed, int jobs) {
  require(epsilon > 0.0, "mc_dof: epsilon must be positive");
  require(n_probes >= 1, "mc_dof: need at least one probe");
  const Vector mu0 = predictor(y);
  require(mu0.size() == y.size(), "mc_dof: predictor must map into observation space");

  std::vector<double> est(n_probes);
  parallel_for(n_probes, jobs, [&](int i) {
    Rng rng = Rng::substream(seed, static_cast<std::uint64_t>(i));
    const Vector z = rng.normal_vector(static_cast<int>(y.size()));
    est[static_cast<std::size_t>(i)] = z.dot(predictor(y + epsilon * z) - mu0) / epsilon;
  });

  McDof out;
  for (double e : est) out.value += e;
  out.value /= n_probes;
  if (n_probes > 1) {
    double ss = 0.0;
    for (double e : est) ss += (e - out.value) * (e - out.value);
    out.std_error = std::sqrt(ss / (n_probes - 1)) / std::sqrt(static_cast<double>(n_probes));
  } else {
    out.std_error = std::numeric_limits<double>::quiet_NaN();
  }
  return out;
}

namespace {

SolveResult solve_at(const LinearMap& phi, const Vector& y, const Regularizer& j, double lambda,
                     const SolveOptions& solve) {
  if (j.kind == Regularizer::Kind::analysis_l1)
    return primal_dual_solve(phi, y, lambda, j, solve);
  return fb_solve(phi, y, lambda, j, solve);
}

}  // namespace

RiskCurve sure_path(const LinearMap& phi, const Vector& y, const Regularizer& j, double sigma,
                    const std::vector<double>& lambdas, const RiskOptions& opts) {
  require(!lambdas.empty(), "sure_path: empty lambda grid");
  for (double l : lambdas) require(l > 0.0, "sure_path: lambdas must be positive");
  require(y.size() == phi.p(), "sure_path: y has wrong length");
  require(sigma >= 0.0, "sure_path: sigma must be nonnegative");

  std::vector<double> grid = lambdas;
  std::sort(grid.begin(), grid.end());
  const int npts = static_cast<int>(grid.size());
  const double eps = mc_dof_epsilon(y);

  RiskCurve curve;
  curve.points.resize(npts);
  parallel_for(npts, opts.jobs, [&](int i) {
    RiskPoint& pt = curve.points[static_cast<std::size_t>(i)];
    pt.lambda = grid[static_cast<std::size_t>(i)];
    try {
      const SolveResult sol = solve_at(phi, y, j, pt.lambda, opts.solve);
      pt.x = sol.x;
      const Vector mu = phi.A * sol.x;
      pt.residual_sq = (y - mu).squaredNorm();
      auto predictor = [&](const Vector& yy) {
        return Vector(phi.A * solve_at(phi, yy, j, pt.lambda, opts.solve).x);
      };
      try {
        pt.dof = dof_closed_form(phi, j, sol.x, pt.lambda, opts.cond_tol);
      } catch (const Unsupported&) {
        pt.mc = mc_dof(predictor, y, eps, opts.mc_probes, opts.seed + static_cast<std::uint64_t>(i), 1);
        pt.dof = pt.mc->value;
        pt.dof_is_mc = true;
      }
      pt.sure = sure_value(y, mu, pt.dof, sigma, static_cast<int>(y.size()));
      if (opts.check_transition) {
        // A tag flip under an epsilon probe marks the point as sitting near
        // the transition space where the closed form is not trustworthy.
        Rng rng = Rng::substream(opts.seed, 0x7f00000000000000ULL + static_cast<std::uint64_t>(i));
        const Vector z = rng.normal_vector(static_cast<int>(y.size()));
        const SolveResult nudged = solve_at(phi, y + eps * z, j, pt.lambda, opts.solve);
        pt.transition_flag =
            !(model_tangent(j, nudged.x, opts.solve.tol_active).tag ==
              model_tangent(j, sol.x, opts.solve.tol_active).tag);
      }
    } catch (const std::exception&) {
      pt.solved = false;
      pt.dof = pt.sure = pt.residual_sq = std::numeric_limits<double>::quiet_NaN();
    }
  });

  double best = std::numeric_limits<double>::infinity();
  for (const RiskPoint& pt : curve.points) {
    if (!pt.solved) continue;
    if (pt.sure <= best) {  // ascending scan, so ties land on the larger lambda
      best = pt.sure;
      curve.best_lambda = pt.lambda;
    }
  }
  return curve;
}

}  // namespace lowrex
