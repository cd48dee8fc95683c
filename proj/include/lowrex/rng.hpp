#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "lowrex/types.hpp"

namespace lowrex {

/*
 * Deterministic RNG with splittable substreams.
 *
 * xoshiro256++ seeded through splitmix64. Substream k of a master seed is
 * seeded from splitmix64(master ^ (golden * (k+1))), so trials, probes and
 * grid cells each own an independent stream whose output is a pure function
 * of (master, k) -- parallel scheduling cannot change any drawn value.
 *
 * The normal sampler is our own Box-Muller (two uniforms per call, no cached
 * spare): std::normal_distribution sequences are implementation-defined and
 * would break byte-identical reruns.
 */
class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    std::uint64_t z = seed;
    for (auto& si : s_) si = splitmix64(z);
  }

  /* Seed of substream `stream`; recorded in experiment rows so a trial can be
   * replayed from the row alone. */
  static std::uint64_t substream_seed(std::uint64_t master, std::uint64_t stream) {
    return master ^ (0x9e3779b97f4a7c15ULL * (stream + 1));
  }

  static Rng substream(std::uint64_t master, std::uint64_t stream) {
    return Rng(substream_seed(master, stream));
  }

  std::uint64_t next() {
    const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  /* Uniform on [0,1) with 53 random bits. */
  double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double a, double b) { return a + (b - a) * uniform01(); }

  /* Standard normal via Box-Muller; u1 nudged away from 0 for log(). */
  double normal() {
    const double u1 = uniform01() + 0x1.0p-54;
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
  }

  /* Uniform integer in [lo, hi] by rejection-free scaling (desk-scale ranges). */
  int uniform_int(int lo, int hi) {
    require(hi >= lo, "uniform_int: empty range");
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>(next() % span);
  }

  double sign() { return (next() & 1) ? 1.0 : -1.0; }

  /* First k entries of a Fisher-Yates shuffle of {0..n-1}, sorted. */
  std::vector<int> sample_without_replacement(int n, int k) {
    require(0 <= k && k <= n, "sample_without_replacement: k out of range");
    std::vector<int> pool(n);
    for (int i = 0; i < n; ++i) pool[i] = i;
    for (int i = 0; i < k; ++i) {
      const int j = uniform_int(i, n - 1);
      std::swap(pool[i], pool[j]);
    }
    std::vector<int> out(pool.begin(), pool.begin() + k);
    std::sort(out.begin(), out.end());
    return out;
  }

  Vector normal_vector(int n) {
    Vector v(n);
    for (int i = 0; i < n; ++i) v[i] = normal();
    return v;
  }

 private:
  static std::uint64_t splitmix64(std::uint64_t& x) {
    x += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }

  std::uint64_t s_[4];
};

}  // namespace lowrex
