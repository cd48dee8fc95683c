#pragma once

#include <cstdint>
#include <vector>

#include "lowrex/types.hpp"

namespace lowrex {

/* Dense forward operator y = A x, P rows (measurements), N columns (signal). */
struct LinearMap {
  Matrix A;

  explicit LinearMap(Matrix m);
  int p() const { return static_cast<int>(A.rows()); }
  int n() const { return static_cast<int>(A.cols()); }
};

/* One realization of the observation model y = phi x0 + w. */
struct ProblemInstance {
  LinearMap phi;
  Vector x0;
  Vector w;
  Vector y;
  double sigma = 0.0;
};

/* Recipe for a structured ground-truth signal; seed picks the realization. */
struct SignalSpec {
  enum class Kind { sparse, group_sparse, low_rank, flat_saturated, piecewise_constant };

  Kind kind = Kind::sparse;
  std::uint64_t seed = 0;
  double amp_lo = 1.0;  // active-entry amplitudes drawn from [amp_lo, amp_hi],
  double amp_hi = 2.0;  // random sign; the range must exclude zero
  int k = 0;            // nonzeros / saturated coords / jumps, by kind
  std::vector<std::vector<int>> blocks;  // group_sparse partition
  int active_blocks = 0;
  int n0 = 0, r = 0;  // low_rank: n0 x n0 matrix of rank r, flattened

  static SignalSpec sparse(int k, std::uint64_t seed);
  static SignalSpec group_sparse(std::vector<std::vector<int>> blocks, int active,
                                 std::uint64_t seed);
  static SignalSpec low_rank(int n0, int r, std::uint64_t seed);
  static SignalSpec flat_saturated(int saturated, std::uint64_t seed);
  static SignalSpec piecewise_constant(int jumps, std::uint64_t seed);
};

Vector apply_forward(const LinearMap& phi, const Vector& x, const Vector& w);

/* i.i.d. N(0,1) entries; optionally rescale each column to unit norm. */
LinearMap gen_gaussian_map(int p, int n, std::uint64_t seed, bool normalize_columns);

Vector gen_signal(const SignalSpec& spec, int n);

/* Largest singular value. */
double operator_norm(const LinearMap& phi);

ProblemInstance make_instance(LinearMap phi, Vector x0, Vector w, double sigma);

/* Contiguous blocks of size m covering {0..n-1}; m must divide n. */
std::vector<std::vector<int>> contiguous_blocks(int n, int m);

}  // namespace lowrex
