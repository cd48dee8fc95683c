#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <functional>
#include <vector>

#include "lowrex/problem.hpp"
#include "lowrex/regularizers.hpp"
#include "lowrex/rng.hpp"
#include "oracles.hpp"

using namespace lowrex;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<int>(v.size()));
  int i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

/* 2x2 matrix flattened column-major, the layout the nuclear kind expects. */
Vector mat2(double a11, double a21, double a12, double a22) {
  return vec({a11, a21, a12, a22});
}

const std::vector<Regularizer> kZoo3 = {
    Regularizer::l1(),
    Regularizer::group({{0}, {1, 2}}),
    Regularizer::linf(),
};

double prox_objective(const Regularizer& j, double gamma, const Vector& x, const Vector& u) {
  return 0.5 * (u - x).squaredNorm() + gamma * eval(j, u);
}

}  // namespace

TEST_CASE("eval closed forms") {
  CHECK(eval(Regularizer::l1(), vec({1, -2, 3})) == 6.0);
  CHECK(eval(Regularizer::linf(), vec({1, -2, 3})) == 3.0);
  CHECK(eval(Regularizer::nuclear(2), mat2(3, 0, 0, 4)) == doctest::Approx(7.0).epsilon(1e-12));
  CHECK(eval(Regularizer::group({{0, 1}, {2, 3}}), vec({3, 4, 0, 0})) ==
        doctest::Approx(5.0).epsilon(1e-12));
  // 1-D total variation is the l1 norm of the forward differences.
  CHECK(eval(Regularizer::analysis_tv1d(4), vec({1, 1, 3, 0})) ==
        doctest::Approx(5.0).epsilon(1e-12));
  CHECK_THROWS_AS(eval(Regularizer::nuclear(2), vec({1, 2, 3})), InvalidArgument);
}

TEST_CASE("prox closed forms on pinned points") {
  const Vector s = prox(Regularizer::l1(), 1.0, vec({3, -0.5}));
  CHECK(s[0] == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(s[1] == 0.0);

  const Vector nu = prox(Regularizer::nuclear(2), 2.0, mat2(3, 0, 0, 1));
  CHECK(nu[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(std::abs(nu[1]) < 1e-12);
  CHECK(std::abs(nu[2]) < 1e-12);
  CHECK(std::abs(nu[3]) < 1e-12);

  // Derived by lattice search: the flat part absorbs exactly gamma of mass.
  const Vector li = prox(Regularizer::linf(), 1.0, vec({2, 0}));
  CHECK(li[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(std::abs(li[1]) < 1e-12);
  const auto oracle = oracles::grid_minimize(
      [&](const Vector& u) { return prox_objective(Regularizer::linf(), 1.0, vec({2, 0}), u); },
      2, -2.5, 2.5);
  CHECK((oracle.point - li).lpNorm<Eigen::Infinity>() < 2e-3);

  CHECK_THROWS_AS(prox(Regularizer::analysis_tv1d(4), 1.0, vec({1, 2, 3, 4})), Unsupported);
  CHECK_THROWS_AS(prox(Regularizer::l1(), 0.0, vec({1, 2})), InvalidArgument);
}

TEST_CASE("prox never loses to the lattice oracle") {
  for (const auto& j : kZoo3) {
    for (int t = 0; t < 10; ++t) {
      Rng rng = Rng::substream(100 + static_cast<int>(j.kind), t);
      Vector x(3);
      for (int i = 0; i < 3; ++i) x[i] = rng.uniform(-2, 2);
      const double gamma = rng.uniform(0.1, 2.0);
      const Vector u = prox(j, gamma, x);
      const auto oracle = oracles::grid_minimize(
          [&](const Vector& v) { return prox_objective(j, gamma, x, v); }, 3, -2.5, 2.5);
      CHECK(prox_objective(j, gamma, x, u) <= oracle.value + 1e-5);
    }
  }
  const Regularizer nuc = Regularizer::nuclear(2);
  for (int t = 0; t < 6; ++t) {
    Rng rng = Rng::substream(140, t);
    Vector x(4);
    for (int i = 0; i < 4; ++i) x[i] = rng.uniform(-2, 2);
    const double gamma = rng.uniform(0.1, 2.0);
    const Vector u = prox(nuc, gamma, x);
    const auto oracle = oracles::grid_minimize(
        [&](const Vector& v) {
          Eigen::Matrix2d m;
          m << v[0], v[2], v[1], v[3];
          return 0.5 * (v - x).squaredNorm() + gamma * oracles::nuclear_norm_2x2(m);
        },
        4, -2.5, 2.5);
    CHECK(prox_objective(nuc, gamma, x, u) <= oracle.value + 1e-5);
  }
}

TEST_CASE("prox output satisfies the subdifferential characterization") {
  std::vector<Regularizer> zoo = kZoo3;
  zoo.push_back(Regularizer::nuclear(2));
  for (const auto& j : zoo) {
    const int n = j.kind == Regularizer::Kind::nuclear ? 4 : 3;
    for (int t = 0; t < 25; ++t) {
      Rng rng = Rng::substream(200 + static_cast<int>(j.kind), t);
      Vector x(n);
      for (int i = 0; i < n; ++i) x[i] = rng.uniform(-3, 3);
      const double gamma = rng.uniform(0.05, 3.0);
      const Vector u = prox(j, gamma, x);
      const Vector g = (x - u) / gamma;  // must lie in the subdifferential at u
      CHECK(subdiff_position(j, u, g, 1e-8).value != SubdiffPosition::Value::outside);
    }
  }
}

TEST_CASE("prox is nonexpansive") {
  std::vector<Regularizer> zoo = kZoo3;
  zoo.push_back(Regularizer::nuclear(2));
  for (const auto& j : zoo) {
    const int n = j.kind == Regularizer::Kind::nuclear ? 4 : 3;
    for (int t = 0; t < 25; ++t) {
      Rng rng = Rng::substream(300 + static_cast<int>(j.kind), t);
      const double gamma = rng.uniform(0.1, 2.0);
      Vector a(n), b(n);
      for (int i = 0; i < n; ++i) {
        a[i] = rng.uniform(-3, 3);
        b[i] = rng.uniform(-3, 3);
      }
      CHECK((prox(j, gamma, a) - prox(j, gamma, b)).norm() <= (a - b).norm() + 1e-12);
    }
  }
}

TEST_CASE("model_tangent pinned descriptors") {
  const auto l1 = model_tangent(Regularizer::l1(), vec({0, 5, 0}));
  REQUIRE(l1.dim() == 1);
  CHECK(std::abs(std::abs(l1.basis(1, 0)) - 1.0) < 1e-15);
  CHECK(l1.tag.kind == ManifoldTag::Kind::support);
  CHECK(l1.tag.index == std::vector<int>{1});

  const auto li = model_tangent(Regularizer::linf(), vec({2, -2, 1}));
  REQUIRE(li.dim() == 2);
  CHECK(li.tag.index == std::vector<int>{0, 1});
  CHECK(li.tag.sign == std::vector<int>{1, -1});
  // The subspace equals span{(2,-2,0), e3}: compare orthogonal projectors.
  Matrix want(3, 2);
  want.col(0) = vec({2, -2, 0}) / std::sqrt(8.0);
  want.col(1) = vec({0, 0, 1});
  CHECK((li.basis * li.basis.transpose() - want * want.transpose()).norm() < 1e-12);
  CHECK((li.e - vec({0.5, -0.5, 0})).norm() < 1e-12);

  const Vector uv = mat2(1, 2, 2, 4);  // rank one: (1,2)(1,2)^T
  const auto nuc = model_tangent(Regularizer::nuclear(2), uv);
  CHECK(nuc.dim() == 3);
  CHECK(nuc.tag.rank == 1);
}

TEST_CASE("model_tangent dimensions follow the manifold formulas") {
  for (int t = 0; t < 10; ++t) {
    const Vector xs = gen_signal(SignalSpec::sparse(4, 50 + t), 12);
    CHECK(model_tangent(Regularizer::l1(), xs).dim() == 4);

    const auto blocks = contiguous_blocks(12, 3);
    const Vector xg = gen_signal(SignalSpec::group_sparse(blocks, 2, 60 + t), 12);
    CHECK(model_tangent(Regularizer::group(blocks), xg).dim() == 6);

    const Vector xf = gen_signal(SignalSpec::flat_saturated(3, 70 + t), 12);
    CHECK(model_tangent(Regularizer::linf(), xf).dim() == 12 - 3 + 1);

    const Vector xr = gen_signal(SignalSpec::low_rank(4, 2, 80 + t), 16);
    CHECK(model_tangent(Regularizer::nuclear(4), xr).dim() == 2 * (2 * 4 - 2));

    const Vector xpc = gen_signal(SignalSpec::piecewise_constant(3, 90 + t), 12);
    const auto pc = model_tangent(Regularizer::analysis_tv1d(12), xpc);
    CHECK(pc.dim() == 4);  // jump count + 1 constant levels
    CHECK(pc.transversal.value());
  }
}

TEST_CASE("descriptor basis is orthonormal and carries e") {
  std::vector<std::pair<Regularizer, Vector>> cases;
  cases.emplace_back(Regularizer::l1(), gen_signal(SignalSpec::sparse(3, 1), 8));
  cases.emplace_back(Regularizer::group(contiguous_blocks(8, 2)),
                     gen_signal(SignalSpec::group_sparse(contiguous_blocks(8, 2), 2, 2), 8));
  cases.emplace_back(Regularizer::linf(), gen_signal(SignalSpec::flat_saturated(2, 3), 8));
  cases.emplace_back(Regularizer::nuclear(3), gen_signal(SignalSpec::low_rank(3, 1, 4), 9));
  cases.emplace_back(Regularizer::analysis_tv1d(8),
                     gen_signal(SignalSpec::piecewise_constant(2, 5), 8));
  for (const auto& [j, x] : cases) {
    const auto d = model_tangent(j, x);
    CHECK((d.basis.transpose() * d.basis - Matrix::Identity(d.dim(), d.dim())).norm() < 1e-10);
    CHECK((d.basis * (d.basis.transpose() * d.e) - d.e).norm() < 1e-10);
    CHECK((generalized_sign(j, x) - d.e).norm() < 1e-12);
  }
}

TEST_CASE("generalized sign pinned values") {
  CHECK((generalized_sign(Regularizer::l1(), vec({0, 5, -2})) - vec({0, 1, -1})).norm() == 0.0);
  const Vector eg = generalized_sign(Regularizer::group({{0, 1}}), vec({3, 4}));
  CHECK((eg - vec({0.6, 0.8})).norm() < 1e-15);
  const Vector en = generalized_sign(Regularizer::nuclear(2), mat2(2, 0, 0, 0));
  CHECK((en - mat2(1, 0, 0, 0)).norm() < 1e-12);
}

TEST_CASE("directional derivative along the tangent equals the sign inner product") {
  std::vector<std::pair<Regularizer, Vector>> cases;
  cases.emplace_back(Regularizer::l1(), gen_signal(SignalSpec::sparse(3, 11), 8));
  cases.emplace_back(Regularizer::group(contiguous_blocks(8, 2)),
                     gen_signal(SignalSpec::group_sparse(contiguous_blocks(8, 2), 2, 12), 8));
  cases.emplace_back(Regularizer::linf(), gen_signal(SignalSpec::flat_saturated(2, 13), 8));
  cases.emplace_back(Regularizer::nuclear(3), gen_signal(SignalSpec::low_rank(3, 1, 14), 9));
  cases.emplace_back(Regularizer::analysis_tv1d(8),
                     gen_signal(SignalSpec::piecewise_constant(2, 15), 8));
  for (const auto& [j, x] : cases) {
    const auto d = model_tangent(j, x);
    for (int t = 0; t < 5; ++t) {
      const Vector v = d.basis * Rng::substream(400, t).normal_vector(d.dim());
      const double fd = oracles::fd_dir_deriv([&](const Vector& u) { return eval(j, u); }, x, v);
      CHECK(fd == doctest::Approx(d.e.dot(v)).epsilon(1e-6));
      CHECK(dir_deriv(j, x, v) == doctest::Approx(d.e.dot(v)).epsilon(1e-8));
    }
  }
}

TEST_CASE("dir_deriv matches one-sided finite differences off the tangent") {
  std::vector<Regularizer> zoo = kZoo3;
  zoo.push_back(Regularizer::nuclear(2));
  for (const auto& j : zoo) {
    const int n = j.kind == Regularizer::Kind::nuclear ? 4 : 3;
    for (int t = 0; t < 10; ++t) {
      Rng rng = Rng::substream(500 + static_cast<int>(j.kind), t);
      const Vector x = rng.normal_vector(n);
      const Vector v = rng.normal_vector(n);
      const double h = 1e-7;
      const double fd = (eval(j, x + h * v) - eval(j, x)) / h;
      CHECK(dir_deriv(j, x, v) == doctest::Approx(fd).epsilon(1e-4));
    }
  }
}

TEST_CASE("subdiff_position l1 pinned cases") {
  const Regularizer j = Regularizer::l1();
  const Vector x = vec({1, 0});
  auto pos = subdiff_position(j, x, vec({1, 0.5}));
  CHECK(pos.value == SubdiffPosition::Value::interior);
  CHECK(pos.margin == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(subdiff_position(j, x, vec({1, 1})).value == SubdiffPosition::Value::boundary);
  CHECK(subdiff_position(j, x, vec({0.9, 0})).value == SubdiffPosition::Value::outside);
}

TEST_CASE("subdiff_position linf pinned cases") {
  const Regularizer j = Regularizer::linf();
  const Vector x = vec({2, -2, 1});
  // Subdifferential = convex hull of {e1, -e2}; interior needs positive mass
  // on every saturated coordinate and total mass one.
  CHECK(subdiff_position(j, x, vec({0.5, -0.5, 0})).value == SubdiffPosition::Value::interior);
  CHECK(subdiff_position(j, x, vec({1, 0, 0})).value == SubdiffPosition::Value::boundary);
  CHECK(subdiff_position(j, x, vec({0.4, -0.4, 0})).value == SubdiffPosition::Value::outside);
  CHECK(subdiff_position(j, x, vec({0.5, -0.4, 0.1})).value == SubdiffPosition::Value::outside);
}

TEST_CASE("subdiff_position nuclear pinned cases") {
  const Regularizer j = Regularizer::nuclear(2);
  const Vector x = mat2(2, 0, 0, 0);
  auto pos = subdiff_position(j, x, mat2(1, 0, 0, 0.5));
  CHECK(pos.value == SubdiffPosition::Value::interior);
  CHECK(pos.margin == doctest::Approx(0.5).epsilon(1e-10));
  CHECK(subdiff_position(j, x, mat2(1, 0, 0, 1)).value == SubdiffPosition::Value::boundary);
  CHECK(subdiff_position(j, x, mat2(0.9, 0, 0, 0)).value == SubdiffPosition::Value::outside);
}

TEST_CASE("subdiff_position analysis pinned cases") {
  const Regularizer j = Regularizer::analysis_tv1d(4);
  const Vector x = vec({1, 1, 2, 2});  // one positive jump at position 1
  const Vector dsign = j.D.col(1);
  CHECK(subdiff_position(j, x, dsign).value == SubdiffPosition::Value::interior);
  CHECK(subdiff_position(j, x, Vector(dsign + j.D.col(0))).value ==
        SubdiffPosition::Value::boundary);
  CHECK(subdiff_position(j, x, Vector(dsign + 1.5 * j.D.col(0))).value ==
        SubdiffPosition::Value::outside);
}

TEST_CASE("subdiff_position at the origin measures the dual ball") {
  CHECK(subdiff_position(Regularizer::l1(), vec({0, 0}), vec({0.3, -0.4})).value ==
        SubdiffPosition::Value::interior);
  CHECK(subdiff_position(Regularizer::linf(), vec({0, 0}), vec({0.3, -0.4})).value ==
        SubdiffPosition::Value::interior);
  CHECK(subdiff_position(Regularizer::linf(), vec({0, 0}), vec({0.8, -0.4})).value ==
        SubdiffPosition::Value::outside);
}

TEST_CASE("hessian_on_tangent closed forms") {
  const Vector xs = gen_signal(SignalSpec::sparse(3, 7), 8);
  CHECK(hessian_on_tangent(Regularizer::l1(), xs).norm() == 0.0);
  const Vector xf = gen_signal(SignalSpec::flat_saturated(2, 8), 8);
  CHECK(hessian_on_tangent(Regularizer::linf(), xf).norm() == 0.0);

  // Single active block (3,4): curvature (I - e e^T)/5 in block coordinates.
  const Regularizer g = Regularizer::group({{0, 1}});
  const Vector xg = vec({3, 4});
  const auto desc = model_tangent(g, xg);
  const Matrix h = desc.basis * hessian_on_tangent(g, xg, desc) * desc.basis.transpose();
  Matrix want(2, 2);
  want << 0.128, -0.096, -0.096, 0.072;
  CHECK((h - want).norm() < 1e-12);

  CHECK_THROWS_AS(hessian_on_tangent(Regularizer::nuclear(2), mat2(1, 0, 0, 0)), Unsupported);
  CHECK_THROWS_AS(
      hessian_on_tangent(Regularizer::analysis_tv1d(4), vec({1, 1, 2, 2})), Unsupported);
}

TEST_CASE("group hessian matches finite differences on the tangent") {
  const auto blocks = contiguous_blocks(9, 3);
  const Regularizer j = Regularizer::group(blocks);
  // Blockwise gradient of the group norm, valid while every active block stays
  // away from zero.
  const auto group_grad = [&](const Vector& z) {
    Vector g = Vector::Zero(z.size());
    for (const auto& b : blocks) {
      double nrm = 0;
      for (int i : b) nrm += z[i] * z[i];
      nrm = std::sqrt(nrm);
      if (nrm > 0) {
        for (int i : b) g[i] = z[i] / nrm;
      }
    }
    return g;
  };
  for (int t = 0; t < 5; ++t) {
    const Vector x = gen_signal(SignalSpec::group_sparse(blocks, 2, 600 + t), 9);
    const auto desc = model_tangent(j, x);
    const Matrix h = hessian_on_tangent(j, x, desc);
    const Matrix fd = oracles::fd_hessian_from_gradient(
        [&](const Vector& a) { return Vector(desc.basis.transpose() * group_grad(x + desc.basis * a)); },
        desc.dim());
    CHECK((h - fd).lpNorm<Eigen::Infinity>() < 1e-5);
  }
}

TEST_CASE("tangent at the origin is trivial") {
  CHECK(model_tangent(Regularizer::l1(), vec({0, 0, 0})).dim() == 0);
  CHECK(model_tangent(Regularizer::group({{0, 1}, {2}}), vec({0, 0, 0})).dim() == 0);
  CHECK(model_tangent(Regularizer::linf(), vec({0, 0, 0})).dim() == 0);
  CHECK(model_tangent(Regularizer::nuclear(2), vec({0, 0, 0, 0})).dim() == 0);
  CHECK(eval(Regularizer::linf(), vec({0, 0, 0})) == 0.0);
  CHECK(prox(Regularizer::linf(), 1.0, vec({0, 0, 0})).norm() == 0.0);
}

TEST_CASE("manifold tags compare by content") {
  const Vector a = gen_signal(SignalSpec::sparse(3, 5), 10);
  const auto ta = model_tangent(Regularizer::l1(), a).tag;
  const auto tb = model_tangent(Regularizer::l1(), Vector(2.0 * a)).tag;
  CHECK(ta == tb);
  CHECK(ta.hash() == tb.hash());
  const auto tc = model_tangent(Regularizer::l1(), gen_signal(SignalSpec::sparse(4, 5), 10)).tag;
  CHECK(!(ta == tc));
  CHECK(ta.to_string() != tc.to_string());
}

TEST_CASE("project_subdifferential satisfies the variational inequality") {
  std::vector<std::pair<Regularizer, Vector>> cases;
  cases.emplace_back(Regularizer::l1(), gen_signal(SignalSpec::sparse(2, 21), 5));
  cases.emplace_back(Regularizer::group(contiguous_blocks(6, 2)),
                     gen_signal(SignalSpec::group_sparse(contiguous_blocks(6, 2), 1, 22), 6));
  cases.emplace_back(Regularizer::linf(), gen_signal(SignalSpec::flat_saturated(2, 23), 5));
  cases.emplace_back(Regularizer::nuclear(2), gen_signal(SignalSpec::low_rank(2, 1, 24), 4));
  for (const auto& [j, x] : cases) {
    const int n = static_cast<int>(x.size());
    for (int t = 0; t < 10; ++t) {
      const Vector eta = 2.0 * Rng::substream(700, t).normal_vector(n);
      const Vector p = project_subdifferential(j, x, eta);
      CHECK(subdiff_position(j, x, p, 1e-7).value != SubdiffPosition::Value::outside);
      // Any other subdifferential point q must satisfy <eta - p, q - p> <= 0.
      const auto d = model_tangent(j, x);
      for (int s = 0; s < 10; ++s) {
        Vector q = project_subdifferential(
            j, x, Vector(d.e + 0.5 * Rng::substream(800 + t, s).normal_vector(n)));
        CHECK((eta - p).dot(q - p) < 1e-9);
      }
    }
  }
}

TEST_CASE("project_l1_ball is the exact projection") {
  Rng rng(77);
  for (int t = 0; t < 50; ++t) {
    const Vector v = 3.0 * Rng::substream(900, t).normal_vector(6);
    const double r = rng.uniform(0.1, 4.0);
    const Vector p = project_l1_ball(v, r);
    CHECK(p.lpNorm<1>() <= r + 1e-10);
    for (int s = 0; s < 10; ++s) {
      Vector q = Rng::substream(950 + t, s).normal_vector(6);
      q *= r / std::max(q.lpNorm<1>(), 1e-12) * Rng::substream(970 + t, s).uniform01();
      CHECK((v - p).dot(q - p) < 1e-9);
    }
  }
}

TEST_CASE("regularizer factories validate their shape") {
  CHECK_THROWS_AS(Regularizer::nuclear(0), InvalidArgument);
  // Block overlap is caught at use time, when the dimension is known.
  CHECK_THROWS_AS(eval(Regularizer::group({{0, 1}, {1, 2}}), vec({1, 2, 3, 4})), InvalidArgument);
  CHECK_THROWS_AS(Regularizer::analysis_tv1d(1), InvalidArgument);
  CHECK(Regularizer::analysis_tv1d(5).D.rows() == 5);
  CHECK(Regularizer::analysis_tv1d(5).D.cols() == 4);
}
