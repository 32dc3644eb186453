#pragma once
#include <cstddef>
#include <cstdint>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace hjhom {

// Every data-parallel kernel has a serial reference path; results must be
// bit-identical between the two (kernels are node-pure, reductions are
// min/max only), so Exec never changes answers, only wall time.
enum class Exec { Serial, Parallel };

int worker_count();            // resolved cap (HJHOM_WORKERS env wins)
void set_worker_count(int n);  // n <= 0 restores the default

template <class F>
void parallel_for(std::size_t n, Exec exec, F&& body) {
#ifdef _OPENMP
  if (exec == Exec::Parallel) {
    const int nt = worker_count();
#pragma omp parallel for schedule(static) num_threads(nt)
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(n); ++i)
      body(static_cast<std::size_t>(i));
    return;
  }
#else
  (void)exec;
#endif
  for (std::size_t i = 0; i < n; ++i) body(i);
}

// Dynamic schedule for uneven work items (whole solves); still deterministic
// because each item writes only its own slot.
template <class F>
void parallel_for_tasks(std::size_t n, Exec exec, F&& body) {
#ifdef _OPENMP
  if (exec == Exec::Parallel) {
    const int nt = worker_count();
#pragma omp parallel for schedule(dynamic, 1) num_threads(nt)
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(n); ++i)
      body(static_cast<std::size_t>(i));
    return;
  }
#else
  (void)exec;
#endif
  for (std::size_t i = 0; i < n; ++i) body(i);
}

} // namespace hjhom
