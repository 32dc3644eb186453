#include "hjhom/parallel.hpp"

#include <atomic>
#include <cstdlib>

namespace hjhom {

namespace {
std::atomic<int> g_workers{0}; // 0 = unset, fall back to env/omp default

int env_workers() {
  const char* s = std::getenv("HJHOM_WORKERS");
  if (!s || !*s) return 0;
  int n = std::atoi(s);
  return n > 0 ? n : 0;
}
} // namespace

int worker_count() {
  // The env var overrides an explicit set_worker_count(), which overrides
  // the OpenMP default.
  if (int n = env_workers(); n > 0) return n;
  if (int n = g_workers.load(); n > 0) return n;
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void set_worker_count(int n) { g_workers.store(n > 0 ? n : 0); }

} // namespace hjhom
