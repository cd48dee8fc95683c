#pragma once

#ifdef _OPENMP
#include <omp.h>
#endif

#include <exception>
#include <mutex>
#include <utility>

namespace lowrex {

inline int hardware_jobs() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

/*
 * Run f(i) for i in [0, n). jobs <= 1 takes the plain serial loop, which is
 * the reference path the parallel one is tested against: callers must write
 * f so that iteration i's result is independent of execution order (own
 * substream, own output slot). Exceptions are captured and rethrown after
 * the pool joins, first index wins.
 */
template <class F>
void parallel_for(int n, int jobs, F&& f) {
  if (n <= 0) return;
  if (jobs <= 1) {
    for (int i = 0; i < n; ++i) f(i);
    return;
  }
#ifdef _OPENMP
  std::exception_ptr first_error = nullptr;
  int error_index = n;
  std::mutex error_mutex;
#pragma omp parallel for schedule(dynamic) num_threads(jobs)
  for (int i = 0; i < n; ++i) {
    try {
      f(i);
    } catch (...) {
      std::lock_guard<std::mutex> lock(error_mutex);
      if (i < error_index) {
        error_index = i;
        first_error = std::current_exception();
      }
    }
  }
  if (first_error) std::rethrow_exception(first_error);
#else
  for (int i = 0; i < n; ++i) f(i);
#endif
}

}  // namespace lowrex
