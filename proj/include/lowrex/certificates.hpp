#pragma once

#include <optional>
#include <vector>

#include "lowrex/problem.hpp"
#include "lowrex/regularizers.hpp"

namespace lowrex {

/* Smallest singular value of phi restricted to the model subspace (columns
 * phi * basis). +inf for the trivial subspace, exactly 0 when dim T exceeds
 * the measurement count. Positive value = the noiseless problem pins down
 * the model component. */
double restricted_injectivity(const LinearMap& phi, const ModelDescriptor& desc);

/*
 * Linearized pre-certificate eta_F = phi^T p where p is the least-norm
 * solution of (phi restricted to T)^T p = e_x. Computable from the forward
 * model alone; when it lands strictly inside the subdifferential it
 * certifies model-stable recovery, and it then coincides with the
 * minimal-norm certificate.
 */
Vector linearized_precertificate(const LinearMap& phi, const ModelDescriptor& desc);
Vector linearized_precertificate(const LinearMap& phi, const Regularizer& j, const Vector& x0);

struct MinNormCertificate {
  Vector eta0;
  Vector p;  // eta0 = phi^T p
  double kkt_residual = 0.0;
  int iterations = 0;
  bool converged = false;
};

/*
 * eta_0 = phi^T p with p the Euclidean projection of 0 onto
 * {p : phi^T p in subdifferential of J at x0}. Solved by an accelerated
 * primal-dual scheme (dual step 0.99/||phi||^2) using the closed-form
 * subdifferential projection; analysis_l1 runs Douglas-Rachford on the
 * lifted variable (p, v) with phi^T p = D v instead. Throws Infeasible when
 * the dual feasible set is (numerically) empty, i.e. x0 does not solve the
 * noiseless problem.
 */
MinNormCertificate minimal_norm_certificate(const LinearMap& phi, const Regularizer& j,
                                            const Vector& x0, int max_iter = 100000,
                                            double tol = 1e-9);

/* ||phi_{I^c}^T p||_inf for the least-norm p with phi_I^T p = sign(x0_I);
 * below one iff the pre-certificate is strictly inside (l1). */
double irrepresentable_criterion(const LinearMap& phi, const Vector& x0);

/* max_{j outside I} || phi_I^+ phi_j ||_1 (l1 exact recovery coefficient). */
double exact_recovery_coefficient(const LinearMap& phi, const std::vector<int>& support);

/* Correlation-ratio upper bound on the ERC; columns are normalized
 * internally, so the IC <= ERC <= wERC chain refers to unit-column maps.
 * Empty when the denominator is not positive. */
std::optional<double> weak_erc(const LinearMap& phi, const std::vector<int>& support);

/* Largest off-diagonal normalized column correlation; needs N >= 2. */
double mutual_coherence(const LinearMap& phi);

struct CertificateReport {
  double sigma_min_T = 0.0;
  Vector eta_f;
  SubdiffPosition position;
  std::optional<double> ic, erc, werc, coherence;  // ic/erc/werc: l1 only
  bool identifiable = false;
};

/* One-stop diagnosis of an instance: restricted injectivity, the
 * pre-certificate and its position, the l1 criteria chain when applicable.
 * Numerical failures in the optional criteria are recorded as absent values
 * rather than thrown. */
CertificateReport certificate_report(const LinearMap& phi, const Regularizer& j,
                                     const Vector& x0);

}  // namespace lowrex
