#include "lowrex/certificates.hpp"

#include <Eigen/QR>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <limits>

namespace lowrex {

namespace {

/* Least-norm solution of A^T p = b through the SVD of A, singular values
 * below kSvdCutoff * sigma_max treated as zero. */
Vector least_norm_transposed(const Matrix& a, const Vector& b) {
  Eigen::JacobiSVD<Matrix> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& s = svd.singularValues();
  const double cut = s.size() ? kSvdCutoff * s[0] : 0.0;
  Vector t = svd.matrixV().transpose() * b;
  for (int i = 0; i < t.size(); ++i) t[i] = (s[i] > cut && cut > 0.0) ? t[i] / s[i] : 0.0;
  return svd.matrixU() * t;
}

Matrix pseudo_inverse(const Matrix& a) {
  Eigen::JacobiSVD<Matrix> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& s = svd.singularValues();
  const double cut = s.size() ? kSvdCutoff * s[0] : 0.0;
  Vector inv = s;
  for (int i = 0; i < inv.size(); ++i) inv[i] = (s[i] > cut && cut > 0.0) ? 1.0 / s[i] : 0.0;
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

std::vector<int> support_of(const Vector& x) {
  std::vector<int> idx;
  for (int i = 0; i < x.size(); ++i)
    if (std::abs(x[i]) > kTolActive) idx.push_back(i);
  return idx;
}

Matrix columns(const Matrix& a, const std::vector<int>& idx) {
  Matrix out(a.rows(), static_cast<int>(idx.size()));
  for (std::size_t c = 0; c < idx.size(); ++c) {
    require(0 <= idx[c] && idx[c] < a.cols(), "support index out of range");
    out.col(static_cast<int>(c)) = a.col(idx[c]);
  }
  return out;
}

Matrix normalized_columns(const Matrix& a) {
  Matrix out = a;
  for (int j = 0; j < out.cols(); ++j) {
    const double nj = out.col(j).norm();
    require(nj > 0.0, "zero column");
    out.col(j) /= nj;
  }
  return out;
}

}  // namespace

double restricted_injectivity(const LinearMap& phi, const ModelDescriptor& desc) {
  require(desc.basis.rows() == phi.n(), "restricted_injectivity: basis/map mismatch");
  const int d = desc.dim();
  if (d == 0) return std::numeric_limits<double>::infinity();
  if (d > phi.p()) return 0.0;
  Eigen::JacobiSVD<Matrix> svd(Matrix(phi.A * desc.basis));
  return svd.singularValues()[d - 1];
}

Vector linearized_precertificate(const LinearMap& phi, const ModelDescriptor& desc) {
  require(desc.basis.rows() == phi.n(), "linearized_precertificate: basis/map mismatch");
  if (desc.dim() == 0) return Vector::Zero(phi.n());
  const Matrix a = phi.A * desc.basis;
  const Vector ebar = desc.basis.transpose() * desc.e;
  return phi.A.transpose() * least_norm_transposed(a, ebar);
}

Vector linearized_precertificate(const LinearMap& phi, const Regularizer& j, const Vector& x0) {
  return linearized_precertificate(phi, model_tangent(j, x0));
}

namespace {

/*
 * Accelerated primal-dual iteration for min_p 1/2||p||^2 + i_S(phi^T p),
 * S the subdifferential at x0 (closed-form projection). The 1/2||p||^2 term
 * is 1-strongly convex, so the step pair (tau, sigma) is rescaled every
 * iteration and ||p - p*|| decays at O(1/n^2).
 */
MinNormCertificate min_norm_direct(const LinearMap& phi, const Regularizer& j, const Vector& x0,
                                   int max_iter, double tol) {
  const int np = phi.p();
  const double opn = operator_norm(phi);
  double sigma = 0.99 / (opn * opn);
  double tau = 1.0;
  Vector p = Vector::Zero(np), pbar = p, q = Vector::Zero(phi.n());

  MinNormCertificate out;
  auto kkt = [&](const Vector& pp, const Vector& qq) {
    const Vector eta = phi.A.transpose() * pp;
    const double feas = (eta - project_subdifferential(j, x0, eta)).norm();
    const double stat = (pp + phi.A * qq).norm();
    const double comp = std::abs(eta.dot(qq) - dir_deriv(j, x0, qq));
    return std::max({feas, stat, comp}) / (1.0 + pp.norm());
  };

  int n = 0;
  for (n = 1; n <= max_iter; ++n) {
    const Vector w = q + sigma * (phi.A.transpose() * pbar);
    q = w - sigma * project_subdifferential(j, x0, w / sigma);
    const Vector pn = (p - tau * (phi.A * q)) / (1.0 + tau);
    const double theta = 1.0 / std::sqrt(1.0 + 2.0 * tau);
    pbar = pn + theta * (pn - p);
    p = pn;
    tau *= theta;
    sigma /= theta;
    if (n % 25 == 0 && kkt(p, q) <= tol) break;
  }
  out.iterations = std::min(n, max_iter);
  out.kkt_residual = kkt(p, q);
  out.converged = out.kkt_residual <= tol;
  const Vector eta = phi.A.transpose() * p;
  const double feas = (eta - project_subdifferential(j, x0, eta)).norm() / (1.0 + p.norm());
  if (!out.converged && feas > std::max(1e-6, 100.0 * tol))
    throw Infeasible("minimal_norm_certificate: no dual vector reaches the subdifferential; x0 does not solve the noiseless problem");
  out.p = p;
  out.eta0 = eta;
  return out;
}

/*
 * analysis_l1: the feasible set is {p : phi^T p = D v, v_S = sign(z_S),
 * ||v_Lambda||_inf <= 1}. Douglas-Rachford on u = (p, v) splits the
 * separable prox (shrink p, clamp v) against the projection onto
 * ker [phi^T, -D].
 */
MinNormCertificate min_norm_analysis(const LinearMap& phi, const Regularizer& j, const Vector& x0,
                                     int max_iter, double tol) {
  const int np = phi.p(), nq = static_cast<int>(j.D.cols());
  const Vector z = j.D.transpose() * x0;
  Matrix a(phi.n(), np + nq);
  a.leftCols(np) = phi.A.transpose();
  a.rightCols(nq) = -j.D;
  Eigen::CompleteOrthogonalDecomposition<Matrix> cod(a);

  auto prox_obj = [&](const Vector& u) {
    Vector out(np + nq);
    out.head(np) = u.head(np) / 2.0;  // prox of 1/2||p||^2 at unit scale
    for (int i = 0; i < nq; ++i) {
      const double v = u[np + i];
      out[np + i] = std::abs(z[i]) > kTolActive ? (z[i] > 0.0 ? 1.0 : -1.0)
                                                : std::clamp(v, -1.0, 1.0);
    }
    return out;
  };
  auto proj_ker = [&](const Vector& u) { return Vector(u - cod.solve(a * u)); };

  Vector zz = Vector::Zero(np + nq);
  MinNormCertificate out;
  double resid = std::numeric_limits<double>::infinity();
  Vector u1 = zz, u2 = zz;
  int n = 0;
  for (n = 1; n <= max_iter; ++n) {
    u1 = prox_obj(zz);
    u2 = proj_ker(2.0 * u1 - zz);
    zz += u2 - u1;
    resid = (u2 - u1).norm();
    if (resid <= tol * (1.0 + u1.norm())) break;
  }
  out.iterations = std::min(n, max_iter);
  out.kkt_residual = resid / (1.0 + u1.head(np).norm());
  out.converged = resid <= tol * (1.0 + u1.norm());
  if (!out.converged && out.kkt_residual > std::max(1e-6, 100.0 * tol))
    throw Infeasible("minimal_norm_certificate: lifted feasibility stalled; x0 does not solve the noiseless problem");
  out.p = u2.head(np);
  out.eta0 = phi.A.transpose() * out.p;
  return out;
}

}  // namespace

MinNormCertificate minimal_norm_certificate(const LinearMap& phi, const Regularizer& j,
                                            const Vector& x0, int max_iter, double tol) {
  require(x0.size() == phi.n(), "minimal_norm_certificate: x0 has wrong length");
  require(max_iter >= 1 && tol > 0.0, "minimal_norm_certificate: bad iteration parameters");
  if (j.kind == Regularizer::Kind::analysis_l1)
    return min_norm_analysis(phi, j, x0, max_iter, tol);
  return min_norm_direct(phi, j, x0, max_iter, tol);
}

double irrepresentable_criterion(const LinearMap& phi, const Vector& x0) {
  require(x0.size() == phi.n(), "irrepresentable_criterion: x0 has wrong length");
  const auto idx = support_of(x0);
  if (idx.empty()) return 0.0;
  Vector s(static_cast<int>(idx.size()));
  for (std::size_t c = 0; c < idx.size(); ++c) s[static_cast<int>(c)] = x0[idx[c]] >= 0.0 ? 1.0 : -1.0;
  const Vector p = least_norm_transposed(columns(phi.A, idx), s);
  double worst = 0.0;
  std::vector<char> in(phi.n(), 0);
  for (int i : idx) in[i] = 1;
  for (int jcol = 0; jcol < phi.n(); ++jcol)
    if (!in[jcol]) worst = std::max(worst, std::abs(phi.A.col(jcol).dot(p)));
  return worst;
}

double exact_recovery_coefficient(const LinearMap& phi, const std::vector<int>& support) {
  if (support.empty()) return 0.0;
  const Matrix pinv = pseudo_inverse(columns(phi.A, support));
  std::vector<char> in(phi.n(), 0);
  for (int i : support) in[i] = 1;
  double worst = 0.0;
  for (int jcol = 0; jcol < phi.n(); ++jcol)
    if (!in[jcol]) worst = std::max(worst, (pinv * phi.A.col(jcol)).lpNorm<1>());
  return worst;
}

std::optional<double> weak_erc(const LinearMap& phi, const std::vector<int>& support) {
  const Matrix a = normalized_columns(phi.A);
  std::vector<char> in(phi.n(), 0);
  for (int i : support) {
    require(0 <= i && i < phi.n(), "weak_erc: support index out of range");
    in[i] = 1;
  }
  double num = 0.0, den_max = 0.0;
  for (int jcol = 0; jcol < phi.n(); ++jcol) {
    double s = 0.0;
    for (int i : support)
      if (i != jcol) s += std::abs(a.col(i).dot(a.col(jcol)));
    if (in[jcol])
      den_max = std::max(den_max, s);
    else
      num = std::max(num, s);
  }
  const double den = 1.0 - den_max;
  if (den <= 0.0) return std::nullopt;
  return num / den;
}

double mutual_coherence(const LinearMap& phi) {
  require(phi.n() >= 2, "mutual_coherence: need at least two columns");
  const Matrix a = normalized_columns(phi.A);
  double worst = 0.0;
  for (int i = 0; i < a.cols(); ++i)
    for (int jcol = i + 1; jcol < a.cols(); ++jcol)
      worst = std::max(worst, std::abs(a.col(i).dot(a.col(jcol))));
  return worst;
}

CertificateReport certificate_report(const LinearMap& phi, const Regularizer& j,
                                     const Vector& x0) {
  require(x0.size() == phi.n(), "certificate_report: x0 has wrong length");
  CertificateReport rep;
  const ModelDescriptor desc = model_tangent(j, x0);
  rep.sigma_min_T = restricted_injectivity(phi, desc);
  rep.eta_f = linearized_precertificate(phi, desc);
  rep.position = subdiff_position(j, x0, rep.eta_f);
  const bool injective =
      desc.dim() == 0 ||
      (desc.dim() <= phi.p() && rep.sigma_min_T > kSvdCutoff * operator_norm(phi));
  rep.identifiable = injective && rep.position.value == SubdiffPosition::Value::interior;
  try {
    rep.coherence = mutual_coherence(phi);
  } catch (const InvalidArgument&) {
  }
  if (j.kind == Regularizer::Kind::l1) {
    const auto idx = support_of(x0);
    if (injective) rep.ic = irrepresentable_criterion(phi, x0);
    try {
      rep.erc = exact_recovery_coefficient(phi, idx);
    } catch (const InvalidArgument&) {
    }
    try {
      rep.werc = weak_erc(phi, idx);
    } catch (const InvalidArgument&) {
    }
  }
  return rep;
}

}  // namespace lowrex
