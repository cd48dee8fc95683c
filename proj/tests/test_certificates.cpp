#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "lowrex/certificates.hpp"
#include "lowrex/problem.hpp"
#include "lowrex/regularizers.hpp"
#include "oracles.hpp"

using namespace lowrex;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<int>(v.size()));
  int i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

/* The 2x3 instance whose pre-certificate sits exactly on the boundary:
 * phi = [[1,0,1],[0,1,1]], x0 = [1,0,0]. */
LinearMap boundary_map() {
  Matrix a(2, 3);
  a << 1, 0, 1, 0, 1, 1;
  return LinearMap(a);
}

std::vector<int> support_of(const Vector& x) {
  std::vector<int> idx;
  for (int i = 0; i < x.size(); ++i)
    if (std::abs(x[i]) > 1e-8) idx.push_back(i);
  return idx;
}

}  // namespace

TEST_CASE("restricted injectivity pinned values") {
  const Regularizer l1 = Regularizer::l1();

  const LinearMap id3 = LinearMap(Matrix::Identity(3, 3));
  CHECK(restricted_injectivity(id3, model_tangent(l1, vec({0, 5, 0}))) ==
        doctest::Approx(1.0).epsilon(1e-12));

  Matrix row(1, 2);
  row << 1, 1;
  const LinearMap wide(row);
  CHECK(restricted_injectivity(wide, model_tangent(l1, vec({1, 0}))) ==
        doctest::Approx(1.0).epsilon(1e-12));
  CHECK(restricted_injectivity(wide, model_tangent(l1, vec({1, 1}))) == 0.0);

  // Subspace dimension above the measurement count forces a kernel.
  const LinearMap g = gen_gaussian_map(10, 20, 11, true);
  const Vector x15 = gen_signal(SignalSpec::sparse(15, 12), 20);
  CHECK(restricted_injectivity(g, model_tangent(l1, x15)) == 0.0);

  CHECK(std::isinf(restricted_injectivity(g, model_tangent(l1, Vector::Zero(20)))));
}

TEST_CASE("pre-certificate under the identity map is the generalized sign") {
  for (int t = 0; t < 5; ++t) {
    const Vector x0 = gen_signal(SignalSpec::sparse(3, 100 + t), 8);
    const LinearMap id(Matrix::Identity(8, 8));
    const Vector eta = linearized_precertificate(id, Regularizer::l1(), x0);
    CHECK((eta - generalized_sign(Regularizer::l1(), x0)).lpNorm<Eigen::Infinity>() < 1e-12);
  }
  // Non-l1 kinds fall back to the same identity argument.
  const std::vector<std::vector<int>> blocks = {{0, 1}, {2, 3}, {4, 5, 6, 7}};
  const Vector xg = gen_signal(SignalSpec::group_sparse(blocks, 2, 21), 8);
  const LinearMap id(Matrix::Identity(8, 8));
  const Regularizer g = Regularizer::group(blocks);
  CHECK((linearized_precertificate(id, g, xg) - generalized_sign(g, xg))
            .lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("pre-certificate worked instance lands on the boundary") {
  const LinearMap phi = boundary_map();
  const Vector x0 = vec({1, 0, 0});
  const Vector eta = linearized_precertificate(phi, Regularizer::l1(), x0);
  CHECK((eta - vec({1, 0, 1})).lpNorm<Eigen::Infinity>() < 1e-12);
  const auto pos = subdiff_position(Regularizer::l1(), x0, eta);
  CHECK(pos.value == SubdiffPosition::Value::boundary);
}

TEST_CASE("pre-certificate with orthonormal columns is interior with unit margin") {
  const LinearMap g = gen_gaussian_map(6, 3, 31, false);
  const Eigen::HouseholderQR<Matrix> qr(g.A);
  const LinearMap phi(Matrix(qr.householderQ() * Matrix::Identity(6, 3)));
  const Vector x0 = vec({2, 0, -1});
  const Vector eta = linearized_precertificate(phi, Regularizer::l1(), x0);
  CHECK((eta - vec({1, 0, -1})).lpNorm<Eigen::Infinity>() < 1e-12);
  const auto pos = subdiff_position(Regularizer::l1(), x0, eta);
  CHECK(pos.value == SubdiffPosition::Value::interior);
  CHECK(pos.margin == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(irrepresentable_criterion(phi, x0) < 1e-12);
}

TEST_CASE("pre-certificate projects back to the generalized sign") {
  const std::vector<std::vector<int>> blocks = {{0, 1, 2}, {3, 4, 5}, {6, 7, 8}};
  struct Case {
    Regularizer j;
    Vector x0;
  };
  const std::vector<Case> cases = {
      {Regularizer::l1(), gen_signal(SignalSpec::sparse(3, 41), 9)},
      {Regularizer::group(blocks), gen_signal(SignalSpec::group_sparse(blocks, 2, 42), 9)},
      {Regularizer::nuclear(3), gen_signal(SignalSpec::low_rank(3, 1, 43), 9)},
  };
  for (const auto& c : cases) {
    const LinearMap phi = gen_gaussian_map(7, 9, 44, true);
    const auto desc = model_tangent(c.j, c.x0);
    const Vector eta = linearized_precertificate(phi, desc);
    CHECK((desc.basis * (desc.basis.transpose() * eta) - desc.e).lpNorm<Eigen::Infinity>() < 1e-8);
    // Independent least-norm computation through the normal equations.
    const Vector p = oracles::least_norm_dual(Matrix(phi.A * desc.basis),
                                              Vector(desc.basis.transpose() * desc.e));
    CHECK((eta - phi.A.transpose() * p).lpNorm<Eigen::Infinity>() < 1e-8);
  }
}

TEST_CASE("minimal-norm certificate under the identity map is the sign pattern") {
  const LinearMap id(Matrix::Identity(4, 4));
  const auto res = minimal_norm_certificate(id, Regularizer::l1(), vec({2, 0, -1, 0}));
  CHECK(res.converged);
  CHECK((res.eta0 - vec({1, 0, -1, 0})).lpNorm<Eigen::Infinity>() < 1e-6);
  CHECK((res.p - vec({1, 0, -1, 0})).lpNorm<Eigen::Infinity>() < 1e-6);
}

TEST_CASE("interior pre-certificate coincides with the minimal-norm certificate") {
  int found = 0;
  for (int t = 0; t < 60 && found < 5; ++t) {
    const LinearMap phi = gen_gaussian_map(16, 32, 500 + t, true);
    const Vector x0 = gen_signal(SignalSpec::sparse(2, 700 + t), 32);
    const Vector eta_f = linearized_precertificate(phi, Regularizer::l1(), x0);
    if (subdiff_position(Regularizer::l1(), x0, eta_f).margin < 0.05) continue;
    ++found;
    const auto res = minimal_norm_certificate(phi, Regularizer::l1(), x0);
    CHECK(res.converged);
    CHECK((res.eta0 - eta_f).lpNorm<Eigen::Infinity>() < 1e-6);
  }
  CHECK(found == 5);

  // Nearly-boundary instances converge too, just slower (error decays at
  // 1/n^2, so a thin margin needs a bigger budget).
  const LinearMap phi = gen_gaussian_map(16, 32, 501, true);
  const Vector x0 = gen_signal(SignalSpec::sparse(2, 701), 32);
  const Vector eta_f = linearized_precertificate(phi, Regularizer::l1(), x0);
  const auto pos = subdiff_position(Regularizer::l1(), x0, eta_f);
  REQUIRE(pos.value == SubdiffPosition::Value::interior);
  REQUIRE(pos.margin < 0.05);
  const auto res = minimal_norm_certificate(phi, Regularizer::l1(), x0, 2000000);
  CHECK((res.eta0 - eta_f).lpNorm<Eigen::Infinity>() < 1e-6);
}

TEST_CASE("minimal-norm certificate matches a grid oracle on the worked instance") {
  const LinearMap phi = boundary_map();
  const Vector x0 = vec({1, 0, 0});
  const auto oracle = oracles::min_norm_cert_grid_2d(phi.A, x0, 1e-3, 2.0, 2e-3);
  REQUIRE(oracle.feasible);
  CHECK((oracle.p - Eigen::Vector2d(1, 0)).norm() < 3e-3);
  const auto res = minimal_norm_certificate(phi, Regularizer::l1(), x0);
  CHECK((res.p - Eigen::Vector2d(1, 0)).norm() < 1e-5);
  CHECK((res.eta0 - vec({1, 0, 1})).lpNorm<Eigen::Infinity>() < 1e-5);
  // The lattice undercuts the true minimum by at most the feasibility slack.
  CHECK(std::abs(res.p.norm() - oracle.norm) < 5e-3);
}

TEST_CASE("grid-certified interior instances give equal certificates both ways") {
  int interior = 0;
  for (int t = 0; t < 8; ++t) {
    const LinearMap phi = gen_gaussian_map(2, 4, 900 + t, true);
    const Vector x0 = gen_signal(SignalSpec::sparse(1, 950 + t), 4);
    const auto oracle = oracles::min_norm_cert_grid_2d(phi.A, x0, 2e-3, 3.0, 4e-3);
    if (!oracle.feasible) continue;
    // Grid feasibility is approximate, so interiority is read off manually:
    // sign coordinates near their target, the rest clear of the unit bound.
    const Vector eta_grid = phi.A.transpose() * Vector(oracle.p);
    bool inside = true;
    for (int c = 0; c < 4; ++c) {
      if (std::abs(x0[c]) > 1e-12)
        inside = inside && std::abs(eta_grid[c] - (x0[c] > 0 ? 1.0 : -1.0)) < 5e-3;
      else
        inside = inside && std::abs(eta_grid[c]) < 1.0 - 0.05;
    }
    if (!inside) continue;
    ++interior;
    const Vector eta_f = linearized_precertificate(phi, Regularizer::l1(), x0);
    const auto res = minimal_norm_certificate(phi, Regularizer::l1(), x0);
    CHECK((res.eta0 - eta_f).lpNorm<Eigen::Infinity>() < 1e-6);
    CHECK(std::abs(res.p.norm() - oracle.norm) < 5e-3);
    CHECK(subdiff_position(Regularizer::l1(), x0, eta_f).value ==
          SubdiffPosition::Value::interior);
  }
  CHECK(interior >= 3);
}

TEST_CASE("minimal-norm certificate rejects vectors that solve no noiseless problem") {
  Matrix row(1, 2);
  row << 1, 1;
  // phi^T p = (p, p) can never match the sign pattern (1, -1).
  CHECK_THROWS_AS(minimal_norm_certificate(LinearMap(row), Regularizer::l1(), vec({1, -1})),
                  Infeasible);
}

TEST_CASE("irrepresentable criterion pinned values") {
  const LinearMap id(Matrix::Identity(3, 3));
  CHECK(irrepresentable_criterion(id, vec({0, 2, 0})) == 0.0);
  CHECK(irrepresentable_criterion(boundary_map(), vec({1, 0, 0})) ==
        doctest::Approx(1.0).epsilon(1e-12));
  CHECK(irrepresentable_criterion(id, Vector::Zero(3)) == 0.0);
}

TEST_CASE("exact recovery coefficient pinned values") {
  const LinearMap id(Matrix::Identity(3, 3));
  CHECK(exact_recovery_coefficient(id, {1}) == 0.0);
  CHECK(exact_recovery_coefficient(boundary_map(), {0}) ==
        doctest::Approx(1.0).epsilon(1e-12));
  CHECK(exact_recovery_coefficient(id, {}) == 0.0);
}

TEST_CASE("weak erc pinned values and single-support form") {
  const LinearMap id(Matrix::Identity(3, 3));
  const auto w_id = weak_erc(id, {0, 1});
  REQUIRE(w_id.has_value());
  CHECK(*w_id == 0.0);

  // |I| = 1: the denominator sum is empty, so wERC is the largest correlation
  // against the single retained column.
  const LinearMap g = gen_gaussian_map(8, 16, 61, true);
  const auto w = weak_erc(g, {5});
  REQUIRE(w.has_value());
  double worst = 0.0;
  for (int j = 0; j < 16; ++j)
    if (j != 5) worst = std::max(worst, std::abs(g.A.col(5).dot(g.A.col(j))));
  CHECK(*w == doctest::Approx(worst).epsilon(1e-12));

  // A repeated column inside the support kills the denominator.
  Matrix dup(3, 3);
  dup << 1, 1, 0, 0, 0, 1, 0, 0, 0;
  CHECK(!weak_erc(LinearMap(dup), {0, 1}).has_value());
}

TEST_CASE("weak erc agrees with a direct transcription of its formula") {
  for (int t = 0; t < 10; ++t) {
    const LinearMap g = gen_gaussian_map(8, 16, 800 + t, true);
    const std::vector<int> support = {2, 9};
    const auto w = weak_erc(g, support);
    REQUIRE(w.has_value());
    CHECK(*w == doctest::Approx(oracles::werc_direct(g.A, support)).epsilon(1e-12));
  }
}

TEST_CASE("mutual coherence pinned values and lower bound") {
  CHECK(mutual_coherence(LinearMap(Matrix::Identity(4, 4))) == 0.0);

  Matrix dup(3, 2);
  dup << 1, 2, 1, 2, 0, 0;
  CHECK(mutual_coherence(LinearMap(dup)) == doctest::Approx(1.0).epsilon(1e-12));

  CHECK_THROWS_AS(mutual_coherence(LinearMap(Matrix::Identity(3, 1))), InvalidArgument);
  Matrix zc(2, 2);
  zc << 1, 0, 0, 0;
  CHECK_THROWS_AS(mutual_coherence(LinearMap(zc)), InvalidArgument);

  // Dimension-forced floor on the largest correlation of any P x N frame.
  const double p = 8, n = 16;
  const double welch = std::sqrt((n - p) / (p * (n - 1)));
  for (int t = 0; t < 10; ++t)
    CHECK(mutual_coherence(gen_gaussian_map(8, 16, 870 + t, true)) >= welch - 1e-10);
}

TEST_CASE("criteria chain holds on random unit-column instances") {
  int valid = 0;
  for (int t = 0; t < 400 && valid < 100; ++t) {
    const bool small = (t % 2 == 0);
    const int p = small ? 16 : 64, n = small ? 32 : 80, k = small ? 2 : 3;
    const LinearMap phi = gen_gaussian_map(p, n, 3000 + t, true);
    const Vector x0 = gen_signal(SignalSpec::sparse(k, 4000 + t), n);
    const auto idx = support_of(x0);
    const double mu = mutual_coherence(phi);
    const auto werc = weak_erc(phi, idx);
    if (!werc.has_value() || (k - 1) * mu >= 1.0) continue;
    ++valid;
    const double ic = irrepresentable_criterion(phi, x0);
    const double erc = exact_recovery_coefficient(phi, idx);
    CHECK(ic <= erc + 1e-10);
    CHECK(erc <= *werc + 1e-10);
    CHECK(*werc <= k * mu / (1.0 - (k - 1) * mu) + 1e-10);
  }
  CHECK(valid == 100);
}

TEST_CASE("criterion below one is equivalent to an interior pre-certificate") {
  int interior = 0, outside = 0;
  for (int t = 0; t < 60; ++t) {
    const LinearMap phi = gen_gaussian_map(16, 32, 5000 + t, true);
    const Vector x0 = gen_signal(SignalSpec::sparse(3, 6000 + t), 32);
    const double ic = irrepresentable_criterion(phi, x0);
    if (std::abs(ic - 1.0) < 1e-9) continue;
    const Vector eta = linearized_precertificate(phi, Regularizer::l1(), x0);
    const auto pos = subdiff_position(Regularizer::l1(), x0, eta);
    if (pos.value == SubdiffPosition::Value::boundary) continue;
    const bool is_interior = pos.value == SubdiffPosition::Value::interior;
    CHECK(is_interior == (ic < 1.0));
    (is_interior ? interior : outside) += 1;
  }
  CHECK(interior >= 5);
  CHECK(outside >= 5);
}

TEST_CASE("certificate report pinned examples") {
  const auto rep_id =
      certificate_report(LinearMap(Matrix::Identity(2, 2)), Regularizer::l1(), vec({1, 0}));
  CHECK(rep_id.identifiable);
  CHECK(rep_id.sigma_min_T == doctest::Approx(1.0).epsilon(1e-12));
  CHECK((rep_id.eta_f - vec({1, 0})).lpNorm<Eigen::Infinity>() < 1e-12);
  CHECK(rep_id.position.value == SubdiffPosition::Value::interior);
  REQUIRE(rep_id.ic.has_value());
  CHECK(*rep_id.ic == 0.0);
  REQUIRE(rep_id.coherence.has_value());
  CHECK(*rep_id.coherence == 0.0);

  const auto rep_b = certificate_report(boundary_map(), Regularizer::l1(), vec({1, 0, 0}));
  CHECK(!rep_b.identifiable);
  CHECK(rep_b.position.value == SubdiffPosition::Value::boundary);
  REQUIRE(rep_b.ic.has_value());
  CHECK(*rep_b.ic == doctest::Approx(1.0).epsilon(1e-12));

  Matrix row(1, 2);
  row << 1, 1;
  const auto rep_k = certificate_report(LinearMap(row), Regularizer::l1(), vec({1, 1}));
  CHECK(!rep_k.identifiable);
  CHECK(rep_k.sigma_min_T == 0.0);
  CHECK(!rep_k.ic.has_value());

  // The l1 criteria stay absent for other kinds.
  const std::vector<std::vector<int>> blocks = {{0, 1}, {2, 3}};
  const auto rep_g = certificate_report(gen_gaussian_map(4, 4, 71, true),
                                        Regularizer::group(blocks),
                                        gen_signal(SignalSpec::group_sparse(blocks, 1, 72), 4));
  CHECK(!rep_g.ic.has_value());
  CHECK(!rep_g.erc.has_value());
  CHECK(!rep_g.werc.has_value());
  CHECK(rep_g.coherence.has_value());
}
