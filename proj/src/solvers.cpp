#include "lowrex/solvers.hpp"

#include <Eigen/QR>
#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

namespace lowrex {

namespace {

/* Collects the per-iterate history; snapshots stay local to the solve and
 * are reduced to errors_to_final once the final point is known. */
class Tracer {
 public:
  Tracer(const Regularizer& j, const SolveOptions& opts,
         std::function<double(const Vector&)> objective)
      : j_(&j), opts_(&opts), objective_(std::move(objective)) {}

  /* x_value feeds the objective and the error curve; x_structure feeds the
   * manifold tag (they differ for DR, where structure lives on the prox side). */
  void record(int iter, const Vector& x_value, const Vector& x_structure, bool force) {
    if (!force && iter % opts_->trace_every != 0) return;
    if (!trace_.iterations.empty() && trace_.iterations.back() == iter) return;
    trace_.iterations.push_back(iter);
    trace_.objectives.push_back(objective_(x_value));
    trace_.tags.push_back(model_tangent(*j_, x_structure, opts_->tol_active).tag);
    snapshots_.push_back(x_value);
  }
  void record(int iter, const Vector& x, bool force = false) { record(iter, x, x, force); }

  SolveTrace finish(const Vector& x_final, int total, bool converged, double residual) {
    trace_.errors_to_final.resize(snapshots_.size());
    for (std::size_t i = 0; i < snapshots_.size(); ++i)
      trace_.errors_to_final[i] = (snapshots_[i] - x_final).norm();
    trace_.total_iterations = total;
    trace_.converged = converged;
    trace_.residual = residual;
    return std::move(trace_);
  }

 private:
  const Regularizer* j_;
  const SolveOptions* opts_;
  std::function<double(const Vector&)> objective_;
  SolveTrace trace_;
  std::vector<Vector> snapshots_;
};

void check_common(const LinearMap& phi, const Vector& y, const SolveOptions& opts) {
  require(y.size() == phi.p(), "solver: y has wrong length");
  require(opts.max_iter >= 1, "solver: max_iter must be positive");
  require(opts.tol_rel > 0.0, "solver: tol_rel must be positive");
  require(opts.trace_every >= 1, "solver: trace_every must be positive");
  if (opts.init) require(opts.init->size() == phi.n(), "solver: init has wrong length");
}

}  // namespace

SolveResult fb_solve(const LinearMap& phi, const Vector& y, double lambda,
                     const Regularizer& j, const SolveOptions& opts) {
  check_common(phi, y, opts);
  require(lambda > 0.0, "fb_solve: lambda must be positive");
  const double opn = operator_norm(phi);
  const double lip = opn * opn;
  const double tau = opts.step.value_or(1.0 / lip);
  require(tau > 0.0 && tau * lip < 2.0 * (1.0 + 1e-12),
          "fb_solve: step outside (0, 2/||phi||^2)");

  auto objective = [&](const Vector& u) {
    return 0.5 * (phi.A * u - y).squaredNorm() + lambda * eval(j, u);
  };
  Tracer tracer(j, opts, objective);

  Vector x = opts.init.value_or(Vector::Zero(phi.n()));
  tracer.record(0, x, true);
  Vector z = x;
  double t = 1.0;
  bool converged = false;
  double residual = std::numeric_limits<double>::infinity();
  int n = 0;
  for (n = 1; n <= opts.max_iter; ++n) {
    const Vector& base = opts.accelerate ? z : x;
    Vector xn = prox(j, tau * lambda, base + tau * (phi.A.transpose() * (y - phi.A * base)));
    if (opts.accelerate) {
      const double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
      z = xn + ((t - 1.0) / tn) * (xn - x);
      t = tn;
    }
    residual = (xn - x).norm();
    x = std::move(xn);
    tracer.record(n, x);
    if (residual <= opts.tol_rel * (1.0 + x.norm())) {
      if (!opts.accelerate) {
        converged = true;
        break;
      }
      // Momentum can make consecutive iterates agree away from the fixed
      // point; certify with one plain application before stopping.
      const Vector xt = prox(j, tau * lambda, x + tau * (phi.A.transpose() * (y - phi.A * x)));
      residual = (xt - x).norm();
      if (residual <= opts.tol_rel * (1.0 + x.norm())) {
        converged = true;
        break;
      }
    }
  }
  n = std::min(n, opts.max_iter);
  tracer.record(n, x, true);
  SolveResult out;
  out.trace = tracer.finish(x, n, converged, residual);
  out.x = std::move(x);
  return out;
}

SolveResult dr_solve(const LinearMap& phi, const Vector& y, const Regularizer& j,
                     const SolveOptions& opts) {
  check_common(phi, y, opts);
  const double gamma = opts.step.value_or(1.0);
  require(gamma > 0.0, "dr_solve: prox scaling must be positive");

  Eigen::CompleteOrthogonalDecomposition<Matrix> cod(phi.A);
  const Vector x_ls = cod.solve(y);
  if ((phi.A * x_ls - y).norm() > 1e-8 * std::max(1.0, y.norm()))
    throw Infeasible("dr_solve: y is not in the range of phi");
  auto project_affine = [&](const Vector& u) { return Vector(u - cod.solve(phi.A * u - y)); };

  auto objective = [&](const Vector& u) { return eval(j, u); };
  Tracer tracer(j, opts, objective);

  Vector z = opts.init ? *opts.init : x_ls;
  Vector x = x_ls;
  bool converged = false;
  double residual = std::numeric_limits<double>::infinity();
  int n = 0;
  for (n = 0; n <= opts.max_iter; ++n) {
    x = project_affine(z);
    const Vector xp = prox(j, gamma, 2.0 * x - z);
    residual = (xp - x).norm();
    tracer.record(n, x, xp, n == 0);
    if (residual <= opts.tol_rel * (1.0 + x.norm())) {
      converged = true;
      break;
    }
    z += xp - x;
  }
  n = std::min(n, opts.max_iter);
  tracer.record(n, x, true);
  SolveResult out;
  out.trace = tracer.finish(x, n, converged, residual);
  out.x = std::move(x);
  return out;
}

SolveResult primal_dual_solve(const LinearMap& phi, const Vector& y, double lambda,
                              const Regularizer& j, const SolveOptions& opts) {
  check_common(phi, y, opts);
  require(lambda > 0.0, "primal_dual_solve: lambda must be positive");
  require(j.kind == Regularizer::Kind::analysis_l1,
          "primal_dual_solve: only analysis_l1 is handled here");
  require(j.D.rows() == phi.n(), "primal_dual_solve: operator row count must match phi");
  const int nq = static_cast<int>(j.D.cols());

  Matrix stacked(phi.p() + nq, phi.n());
  stacked.topRows(phi.p()) = phi.A;
  stacked.bottomRows(nq) = j.D.transpose();
  const double opn = operator_norm(LinearMap(stacked));
  const double step = opts.step.value_or(0.99 / opn);
  require(step > 0.0 && step * step * opn * opn < 1.0 + 1e-12,
          "primal_dual_solve: step pair violates sigma tau ||K||^2 < 1");
  const double sigma = step, tau = step;

  auto objective = [&](const Vector& u) {
    return 0.5 * (phi.A * u - y).squaredNorm() + lambda * (j.D.transpose() * u).lpNorm<1>();
  };
  Tracer tracer(j, opts, objective);

  Vector x = opts.init.value_or(Vector::Zero(phi.n())), xb = x;
  Vector p = Vector::Zero(phi.p()), q = Vector::Zero(nq);
  bool converged = false;
  double gap = std::numeric_limits<double>::infinity();
  int n = 0;
  tracer.record(0, x, true);
  for (n = 1; n <= opts.max_iter; ++n) {
    p = (p + sigma * (phi.A * xb - y)) / (1.0 + sigma);
    q = q + sigma * (j.D.transpose() * xb);
    for (int i = 0; i < nq; ++i) q[i] = std::clamp(q[i], -lambda, lambda);
    const Vector xn = x - tau * (phi.A.transpose() * p + j.D * q);
    xb = 2.0 * xn - x;
    x = xn;
    tracer.record(n, x);
    if (n % 10 == 0 || n == opts.max_iter) {
      // Dual value of a feasible pair is -1/2||p||^2 - <p, y>; the residual
      // ||phi^T p + D q|| accounts for the not-yet-satisfied dual constraint.
      const double primal = objective(x);
      const double dual = -0.5 * p.squaredNorm() - p.dot(y);
      const double infeas = (phi.A.transpose() * p + j.D * q).norm();
      gap = std::abs(primal - dual) + infeas * (1.0 + x.norm());
      if (gap <= opts.tol_rel * (1.0 + std::abs(primal))) {
        converged = true;
        break;
      }
    }
  }
  n = std::min(n, opts.max_iter);
  tracer.record(n, x, true);
  SolveResult out;
  out.trace = tracer.finish(x, n, converged, gap);
  out.x = std::move(x);
  return out;
}

std::optional<int> identification_iteration(const SolveTrace& trace) {
  if (trace.tags.empty()) return std::nullopt;
  std::size_t first = trace.tags.size() - 1;
  while (first > 0 && trace.tags[first - 1] == trace.tags.back()) --first;
  if (first == trace.tags.size() - 1 && trace.tags.size() > 1) return std::nullopt;
  return trace.iterations[first];
}

RateEstimate local_rate_estimate(const SolveTrace& trace) {
  const auto id = identification_iteration(trace);
  require(id.has_value(), "local_rate_estimate: trace never identified a manifold");
  require(trace.errors_to_final.size() == trace.iterations.size(),
          "local_rate_estimate: trace lacks error history");
  double max_err = 0.0;
  for (double e : trace.errors_to_final) max_err = std::max(max_err, e);
  const double floor = 1e-13 * max_err;

  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < trace.iterations.size(); ++i) {
    if (trace.iterations[i] < *id) continue;
    const double e = trace.errors_to_final[i];
    if (e <= floor || e <= 0.0) continue;
    xs.push_back(static_cast<double>(trace.iterations[i]));
    ys.push_back(std::log(e));
  }
  require(xs.size() >= 10, "local_rate_estimate: fewer than 10 usable points after identification");

  const double nn = static_cast<double>(xs.size());
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sx += xs[i];
    sy += ys[i];
    sxx += xs[i] * xs[i];
    sxy += xs[i] * ys[i];
  }
  const double denom = nn * sxx - sx * sx;
  require(denom > 0.0, "local_rate_estimate: degenerate abscissae");
  const double slope = (nn * sxy - sx * sy) / denom;
  const double intercept = (sy - slope * sx) / nn;

  double ss_res = 0.0, ss_tot = 0.0;
  const double ybar = sy / nn;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double fit = intercept + slope * xs[i];
    ss_res += (ys[i] - fit) * (ys[i] - fit);
    ss_tot += (ys[i] - ybar) * (ys[i] - ybar);
  }
  RateEstimate est;
  est.rate = std::exp(slope);
  // ss_tot at rounding scale means the log-errors are constant; the flat fit
  // is then exact, not poor.
  const double tot_floor = 1e-24 * nn * std::max(1.0, ybar * ybar);
  est.r_squared = ss_tot > tot_floor ? 1.0 - ss_res / ss_tot : 1.0;
  est.points = static_cast<int>(xs.size());
  return est;
}

}  // namespace lowrex
