#pragma once
// Thin loop facade: every parallel kernel in the toolkit has a serial
// reference path with identical semantics. Tests and the benchmark target
// run both and compare results; the OpenMP path is only taken when compiled
// with OpenMP and enabled at the call site.

#include <utility>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace tct {

// Serial reference loop over [0, count).
template <class F>
void serial_for(int count, F&& f) {
  for (int i = 0; i < count; ++i) f(i);
}

// OpenMP-parallel loop over [0, count). Falls back to the serial loop when
// OpenMP is unavailable. The body must be safe to run for distinct indices
// concurrently (writes go to per-index slots).
template <class F>
void parallel_for(int count, F&& f) {
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < count; ++i) f(i);
#else
  serial_for(count, std::forward<F>(f));
#endif
}

// Dispatch helper used by kernels that expose a use_parallel switch.
template <class F>
void indexed_for(bool use_parallel, int count, F&& f) {
  if (use_parallel) {
    parallel_for(count, std::forward<F>(f));
  } else {
    serial_for(count, std::forward<F>(f));
  }
}

inline double wall_time() {
#ifdef _OPENMP
  return omp_get_wtime();
#else
  return 0.0;
#endif
}

}  // namespace tct
