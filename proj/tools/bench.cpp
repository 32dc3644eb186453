// Timing harness comparing the serial reference kernels against the
// worker-pool versions: discounted marches and inf-convolution evolutions are
// the two parallel hot paths. Prints one line per case.
#include <chrono>
#include <cstdio>

#include "hjhom/effective.hpp"
#include "hjhom/linf.hpp"

using namespace hjhom;

namespace {

template <class F>
double time_it(F&& f) {
  const auto t0 = std::chrono::steady_clock::now();
  f();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

} // namespace

int main() {
  std::printf("workers available: %d\n", worker_count());

  // 2d metric checkerboard: one discounted march per execution mode.
  HamiltonianSpec spec;
  spec.kind = HamKind::Metric;
  spec.dim = 2;
  spec.lambda = 1.0;
  spec.Lambda = 2.0;
  EnvParams envp;
  envp.kind = EnvKind::IidCheckerboard;
  envp.cell = 0.25;
  envp.values = {1.0, 2.0};
  envp.probs = {0.5, 0.5};
  const Grid grid = make_grid(2, {0, 0, 0}, {1.0 / 64, 1.0 / 64, 1}, {128, 128, 1},
                              {true, true, false});
  const EnvironmentRealization env = sample_environment(spec, envp, 7, grid);

  MarchParams mp;
  mp.tol = 1e-5;
  for (Exec exec : {Exec::Serial, Exec::Parallel}) {
    mp.exec = exec;
    DiscountedSolve s;
    const double dt = time_it([&] { s = solve_discounted(spec, env, {1, 0, 0}, 0.25, grid, mp); });
    std::printf("march  %-8s %8.3fs  steps=%d residual=%.2e\n",
                exec == Exec::Serial ? "serial" : "parallel", dt, s.steps, s.residual);
  }

  // Inf-convolution evolution on a bounded box (O(N^2) kernel).
  HbarTable t;
  t.dim = 2;
  t.pgrid = make_grid(2, {-2, -2, 0}, {0.25, 0.25, 1}, {16, 16, 1}, {false, false, false});
  t.value.resize(t.pgrid.node_count());
  for_each_node(t.pgrid, [&](const Idx& i, std::size_t s) {
    t.value[s] = norm2(t.pgrid.coord(i));
  });
  t.spread.assign(t.value.size(), 0.0);
  t.reliable.assign(t.value.size(), 1);
  const LagrangianTable L = legendre(t, t.pgrid);
  const Grid xg = make_grid(2, {-1, -1, 0}, {1.0 / 32, 1.0 / 32, 1}, {64, 64, 1},
                            {false, false, false});
  ScalarField g0(xg);
  for_each_node(xg, [&](const Idx& i, std::size_t s) { g0.values[s] = norm(xg.coord(i)); });
  for (Exec exec : {Exec::Serial, Exec::Parallel}) {
    ScalarField u;
    const double dt = time_it([&] { u = hopf_lax(g0, L, 0.5, exec); });
    std::printf("evolve %-8s %8.3fs  nodes=%zu\n",
                exec == Exec::Serial ? "serial" : "parallel", dt, u.values.size());
  }
  return 0;
}
