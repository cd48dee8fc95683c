#include "lowrex/problem.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>

#include "lowrex/rng.hpp"

namespace lowrex {

LinearMap::LinearMap(Matrix m) : A(std::move(m)) {
  require(A.rows() >= 1 && A.cols() >= 1, "LinearMap: empty matrix");
  require(A.allFinite(), "LinearMap: non-finite entries");
}

Vector apply_forward(const LinearMap& phi, const Vector& x, const Vector& w) {
  require(x.size() == phi.n(), "apply_forward: x has wrong length");
  require(w.size() == phi.p(), "apply_forward: w has wrong length");
  return phi.A * x + w;
}

LinearMap gen_gaussian_map(int p, int n, std::uint64_t seed, bool normalize_columns) {
  require(p >= 1 && n >= 1, "gen_gaussian_map: dimensions must be positive");
  Rng rng(seed);
  Matrix a(p, n);
  // Column-major fill order is part of the reproducibility contract.
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < p; ++i) a(i, j) = rng.normal();
  if (normalize_columns) {
    for (int j = 0; j < n; ++j) {
      const double nj = a.col(j).norm();
      require(nj > 0.0, "gen_gaussian_map: zero column");
      a.col(j) /= nj;
    }
  }
  return LinearMap(std::move(a));
}

SignalSpec SignalSpec::sparse(int k, std::uint64_t seed) {
  SignalSpec s;
  s.kind = Kind::sparse;
  s.k = k;
  s.seed = seed;
  return s;
}

SignalSpec SignalSpec::group_sparse(std::vector<std::vector<int>> blocks, int active,
                                    std::uint64_t seed) {
  SignalSpec s;
  s.kind = Kind::group_sparse;
  s.blocks = std::move(blocks);
  s.active_blocks = active;
  s.seed = seed;
  return s;
}

SignalSpec SignalSpec::low_rank(int n0, int r, std::uint64_t seed) {
  SignalSpec s;
  s.kind = Kind::low_rank;
  s.n0 = n0;
  s.r = r;
  s.seed = seed;
  return s;
}

SignalSpec SignalSpec::flat_saturated(int saturated, std::uint64_t seed) {
  SignalSpec s;
  s.kind = Kind::flat_saturated;
  s.k = saturated;
  s.seed = seed;
  return s;
}

SignalSpec SignalSpec::piecewise_constant(int jumps, std::uint64_t seed) {
  SignalSpec s;
  s.kind = Kind::piecewise_constant;
  s.k = jumps;
  s.seed = seed;
  return s;
}

namespace {

double draw_amp(Rng& rng, const SignalSpec& s) {
  return rng.uniform(s.amp_lo, s.amp_hi) * rng.sign();
}

Vector gen_sparse(const SignalSpec& s, int n, Rng& rng) {
  require(0 <= s.k && s.k <= n, "gen_signal: sparsity out of range");
  Vector x = Vector::Zero(n);
  for (int i : rng.sample_without_replacement(n, s.k)) x[i] = draw_amp(rng, s);
  return x;
}

Vector gen_group(const SignalSpec& s, int n, Rng& rng) {
  const int nb = static_cast<int>(s.blocks.size());
  require(nb >= 1, "gen_signal: no blocks");
  require(0 <= s.active_blocks && s.active_blocks <= nb,
          "gen_signal: active block count out of range");
  std::vector<char> seen(n, 0);
  for (const auto& b : s.blocks)
    for (int i : b) {
      require(0 <= i && i < n && !seen[i], "gen_signal: blocks must partition {0..n-1}");
      seen[i] = 1;
    }
  for (char c : seen) require(c == 1, "gen_signal: blocks must cover {0..n-1}");

  Vector x = Vector::Zero(n);
  for (int b : rng.sample_without_replacement(nb, s.active_blocks))
    for (int i : s.blocks[b]) x[i] = draw_amp(rng, s);
  return x;
}

Vector gen_low_rank(const SignalSpec& s, int n, Rng& rng) {
  require(s.n0 >= 1 && s.n0 * s.n0 == n, "gen_signal: n must equal n0^2");
  require(0 <= s.r && s.r <= s.n0, "gen_signal: rank out of range");
  // Orthonormal factors from QR of Gaussian blocks, singular values in the
  // amplitude range: the result has exactly rank r.
  Matrix gu(s.n0, std::max(s.r, 1)), gv(s.n0, std::max(s.r, 1));
  for (int j = 0; j < gu.cols(); ++j)
    for (int i = 0; i < s.n0; ++i) gu(i, j) = rng.normal();
  for (int j = 0; j < gv.cols(); ++j)
    for (int i = 0; i < s.n0; ++i) gv(i, j) = rng.normal();
  Matrix m = Matrix::Zero(s.n0, s.n0);
  if (s.r > 0) {
    Eigen::HouseholderQR<Matrix> qru(gu), qrv(gv);
    Matrix u = qru.householderQ() * Matrix::Identity(s.n0, s.r);
    Matrix v = qrv.householderQ() * Matrix::Identity(s.n0, s.r);
    for (int i = 0; i < s.r; ++i)
      m += rng.uniform(s.amp_lo, s.amp_hi) * u.col(i) * v.col(i).transpose();
  }
  return Eigen::Map<const Vector>(m.data(), n);
}

Vector gen_flat(const SignalSpec& s, int n, Rng& rng) {
  require(1 <= s.k && s.k <= n, "gen_signal: saturated count out of range");
  const double peak = rng.uniform(s.amp_lo, s.amp_hi);
  Vector x(n);
  // Non-saturated entries stay well inside the band so the saturation set is
  // exactly the sampled one.
  for (int i = 0; i < n; ++i) x[i] = rng.uniform(-0.8 * peak, 0.8 * peak);
  for (int i : rng.sample_without_replacement(n, s.k)) x[i] = peak * rng.sign();
  return x;
}

Vector gen_piecewise(const SignalSpec& s, int n, Rng& rng) {
  require(0 <= s.k && s.k < n, "gen_signal: jump count out of range");
  const auto cuts = rng.sample_without_replacement(n - 1, s.k);  // jump after index c
  Vector x(n);
  double level = draw_amp(rng, s);
  int seg = 0;
  for (int i = 0; i < n; ++i) {
    x[i] = level;
    if (seg < s.k && i == cuts[seg]) {
      // Next level differs by at least amp_lo, keeping every cut a real jump.
      const double step = rng.uniform(s.amp_lo, s.amp_hi) * rng.sign();
      level += step;
      ++seg;
    }
  }
  return x;
}

}  // namespace

Vector gen_signal(const SignalSpec& spec, int n) {
  require(n >= 1, "gen_signal: n must be positive");
  require(spec.amp_lo > 0.0 && spec.amp_hi >= spec.amp_lo,
          "gen_signal: amplitude range must exclude zero");
  Rng rng(spec.seed);
  switch (spec.kind) {
    case SignalSpec::Kind::sparse: return gen_sparse(spec, n, rng);
    case SignalSpec::Kind::group_sparse: return gen_group(spec, n, rng);
    case SignalSpec::Kind::low_rank: return gen_low_rank(spec, n, rng);
    case SignalSpec::Kind::flat_saturated: return gen_flat(spec, n, rng);
    case SignalSpec::Kind::piecewise_constant: return gen_piecewise(spec, n, rng);
  }
  throw InvalidArgument("gen_signal: unknown kind");
}

double operator_norm(const LinearMap& phi) {
  // BDC falls back to Jacobi below its blocking threshold, so small maps get
  // the accurate path and desk-scale ones stay fast.
  Eigen::BDCSVD<Matrix> svd(phi.A);
  return svd.singularValues()[0];
}

ProblemInstance make_instance(LinearMap phi, Vector x0, Vector w, double sigma) {
  require(x0.size() == phi.n(), "make_instance: x0 has wrong length");
  require(w.size() == phi.p(), "make_instance: w has wrong length");
  require(sigma >= 0.0, "make_instance: sigma must be nonnegative");
  Vector y = apply_forward(phi, x0, w);
  return ProblemInstance{std::move(phi), std::move(x0), std::move(w), std::move(y), sigma};
}

std::vector<std::vector<int>> contiguous_blocks(int n, int m) {
  require(m >= 1 && n % m == 0, "contiguous_blocks: block size must divide n");
  std::vector<std::vector<int>> blocks(n / m);
  for (int b = 0; b < n / m; ++b) {
    blocks[b].resize(m);
    for (int i = 0; i < m; ++i) blocks[b][i] = b * m + i;
  }
  return blocks;
}

}  // namespace lowrex
