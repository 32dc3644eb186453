#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <filesystem>

#include "hjhom/field.hpp"
#include "hjhom/grid.hpp"
#include "hjhom/parallel.hpp"
#include "hjhom/rng.hpp"

using namespace hjhom;

TEST_CASE("grid node counts and indexing round-trip") {
  const Grid g = make_grid(2, {0, 0, 0}, {0.5, 0.25, 1}, {4, 8, 1}, {true, false, false});
  CHECK(g.nodes(0) == 4);  // periodic axis drops the duplicate node
  CHECK(g.nodes(1) == 9);
  CHECK(g.node_count() == 36);
  for (std::size_t s = 0; s < g.node_count(); ++s) CHECK(g.lin(g.unlin(s)) == s);

  std::size_t seen = 0;
  for_each_node(g, [&](const Idx& id, std::size_t s) {
    CHECK(g.lin(id) == s);
    CHECK(s == seen);
    ++seen;
  });
  CHECK(seen == g.node_count());
}

TEST_CASE("grid neighbors wrap on periodic axes and stop on bounded ones") {
  const Grid g = make_grid(2, {0, 0, 0}, {1, 1, 1}, {4, 4, 1}, {true, false, false});
  Idx nb;
  CHECK(g.neighbor({0, 2, 0}, 0, -1, nb));
  CHECK(nb[0] == 3);
  CHECK(g.neighbor({3, 2, 0}, 0, +1, nb));
  CHECK(nb[0] == 0);
  CHECK_FALSE(g.neighbor({1, 0, 0}, 1, -1, nb));
  CHECK_FALSE(g.neighbor({1, 4, 0}, 1, +1, nb));
  CHECK(g.neighbor({1, 4, 0}, 1, -1, nb));
}

TEST_CASE("grid validation rejects degenerate layouts") {
  CHECK_THROWS_AS(make_grid(1, vzero, {0.0, 1, 1}, {4, 1, 1}, {false, false, false}), Error);
  CHECK_THROWS_AS(make_grid(1, vzero, {1, 1, 1}, {2, 1, 1}, {false, false, false}), Error);
  try {
    make_grid(1, vzero, {1, 1, 1}, {2, 1, 1}, {false, false, false});
  } catch (const Error& e) {
    CHECK(e.code == Err::GridTooSmall);
  }
}

TEST_CASE("upwind gradients are exact on affine data and guard boundaries") {
  const Grid g = make_grid(2, {0, 0, 0}, {0.1, 0.2, 1}, {5, 5, 1}, {false, false, false});
  ScalarField f(g);
  for_each_node(g, [&](const Idx& id, std::size_t s) {
    const Vec x = g.coord(id);
    f.values[s] = 3.0 * x[0] - 2.0 * x[1] + 1.0;
  });
  const auto [b, fw] = upwind_gradients(f, {2, 2, 0});
  CHECK(b[0] == doctest::Approx(3.0));
  CHECK(fw[0] == doctest::Approx(3.0));
  CHECK(b[1] == doctest::Approx(-2.0));
  CHECK(fw[1] == doctest::Approx(-2.0));
  CHECK_THROWS_AS(upwind_gradients(f, {0, 2, 0}), Error);
  try {
    upwind_gradients(f, {0, 2, 0});
  } catch (const Error& e) {
    CHECK(e.code == Err::BoundaryStencil);
  }
}

TEST_CASE("multilinear interpolation reproduces affine fields and wraps") {
  const Grid g = make_grid(2, {-1, -1, 0}, {0.125, 0.125, 1}, {16, 16, 1}, {true, true, false});
  ScalarField f(g);
  // periodic-compatible: affine won't wrap, use a bilinear-in-cell function
  for_each_node(g, [&](const Idx& id, std::size_t s) {
    const Vec x = g.coord(id);
    f.values[s] = std::sin(M_PI * x[0]) * std::sin(M_PI * x[1]);
  });
  // wrap consistency: query one period apart
  const double a = interpolate(f, {-0.43, 0.21, 0});
  const double b = interpolate(f, {-0.43 + 2.0, 0.21 - 2.0, 0});
  CHECK(a == doctest::Approx(b).epsilon(1e-14));

  const Grid gb = make_grid(1, {0, 0, 0}, {0.25, 1, 1}, {4, 1, 1}, {false, false, false});
  ScalarField fb(gb);
  for_each_node(gb, [&](const Idx& id, std::size_t s) { fb.values[s] = 2.0 * gb.coord(id)[0] + 0.5; });
  CHECK(interpolate(fb, {0.3, 0, 0}) == doctest::Approx(1.1));
  CHECK_THROWS_AS(interpolate(fb, {1.5, 0, 0}), Error);
}

TEST_CASE("window nodes exclude the center ball and boundary margins") {
  const Grid g = make_grid(1, {0, 0, 0}, {0.1, 1, 1}, {10, 1, 1}, {false, false, false});
  const auto w = window_nodes(g, {0, 0, 0}, {1, 0, 0}, {0.5, 0, 0}, 0.15, 0.2);
  // margin = ceil(0.2*10) = 2 layers -> nodes 2..8; exclusion |x-0.5|<=0.15 -> 4,5,6 out
  std::vector<std::size_t> expect{2, 3, 7, 8};
  CHECK(w == expect);
}

TEST_CASE("pde residual vanishes for affine solutions of p-only problems") {
  const Grid g = make_grid(2, {0, 0, 0}, {0.1, 0.1, 1}, {8, 8, 1}, {false, false, false});
  ScalarField f(g);
  const Vec p{0.7, -0.4, 0};
  for_each_node(g, [&](const Idx& id, std::size_t s) { f.values[s] = dot(p, g.coord(id)); });
  HamFn ham = [](const Vec& q, const Vec&) { return norm2(q); };
  const auto w = window_nodes(g, {0, 0, 0}, {0.8, 0.8, 0}, vzero, 0.0, 0.15);
  REQUIRE_FALSE(w.empty());
  CHECK(pde_residual(f, ham, norm2(p), w, Exec::Serial) == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(pde_residual(f, ham, norm2(p), w, Exec::Parallel) ==
        pde_residual(f, ham, norm2(p), w, Exec::Serial));
  CHECK_THROWS_AS(pde_residual(f, ham, 0.0, std::span<const std::size_t>{}, Exec::Serial), Error);
}

TEST_CASE("field save/load round-trips layout and exact values") {
  const Grid g = make_grid(2, {-0.5, 0.25, 0}, {0.1, 0.3, 1}, {4, 3, 1}, {true, false, false});
  ScalarField f(g);
  Rng rng(42);
  for (double& v : f.values) v = rng.range(-10, 10);
  const std::string path = std::filesystem::temp_directory_path() / "hjhom_field_rt.txt";
  save_field(f, path);
  const ScalarField f2 = load_field(path);
  REQUIRE(f2.grid.same_layout(g));
  CHECK(max_abs_diff(f, f2) == 0.0);
  std::filesystem::remove(path);
}

TEST_CASE("lipschitz constant matches the steepest edge") {
  const Grid g = make_grid(1, {0, 0, 0}, {0.5, 1, 1}, {4, 1, 1}, {false, false, false});
  ScalarField f(g);
  f.values = {0.0, 1.0, 1.0, 1.0, 3.0};
  CHECK(lipschitz_constant(f) == doctest::Approx(4.0)); // last edge: |3-1|/0.5
}

TEST_CASE("counter-based rng is order-free and in range") {
  CHECK(mix(1, 2, 3) == mix(1, 2, 3));
  CHECK(mix(1, 2, 3) != mix(1, 3, 2));
  for (int k = 0; k < 1000; ++k) {
    const double u = u01(mix(7, k));
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
  const std::vector<double> probs{0.25, 0.5, 0.25};
  CHECK(pick_weighted(0.0, probs) == 0);
  CHECK(pick_weighted(0.3, probs) == 1);
  CHECK(pick_weighted(0.999, probs) == 2);
  CHECK(pick_weighted(1.0 - 1e-16, probs) == 2);
}

TEST_CASE("parallel_for covers every index once in both modes") {
  for (Exec exec : {Exec::Serial, Exec::Parallel}) {
    std::vector<int> hits(1000, 0);
    parallel_for(hits.size(), exec, [&](std::size_t i) { hits[i] += 1; });
    for (int h : hits) CHECK(h == 1);
  }
  CHECK(worker_count() >= 1);
}

TEST_CASE("pde residual on an exact cone is first order and refines cleanly") {
  // |y| solves |Du| = 1 away from the vertex; the Godunov residual of the
  // sampled cone is O(h) with the curvature constant. Halving h must never
  // grow the windowed residual (beyond 1.05x axis-alignment noise); measured
  // decay is clean first order, so we pin the stronger 0.55 factor.
  HamFn ham = [](const Vec& q, const Vec&) { return norm(q); };
  auto run = [&](int cells) {
    const Grid g = make_grid(2, {-1, -1, 0}, {2.0 / cells, 2.0 / cells, 1}, {cells, cells, 1},
                             {false, false, false});
    ScalarField f(g);
    for_each_node(g, [&](const Idx& id, std::size_t s) { f.values[s] = norm(g.coord(id)); });
    const auto w = window_nodes(g, {-1, -1, 0}, {1, 1, 0}, vzero, 0.25, 0.1);
    REQUIRE_FALSE(w.empty());
    return std::pair(pde_residual(f, ham, 1.0, w, Exec::Serial), 2.0 / cells);
  };
  const auto [r40, h40] = run(40);
  const auto [r80, h80] = run(80);
  // first order with a modest constant: residual <= C h with C ~ 1/(2 r_min)
  CHECK(r40 <= 4.0 * h40);
  CHECK(r80 <= 4.0 * h80);
  CHECK(r80 <= 0.55 * r40);
}

TEST_CASE("pde residual of the zero field reports the full level defect") {
  // f == 0 under |Du| = 1: every stencil sees H(0) = 0, so the windowed
  // residual is exactly the level mu = 1.
  const Grid g = make_grid(2, {0, 0, 0}, {0.1, 0.1, 1}, {10, 10, 1}, {false, false, false});
  ScalarField f(g);
  HamFn ham = [](const Vec& q, const Vec&) { return norm(q); };
  const auto w = window_nodes(g, {0, 0, 0}, {1, 1, 0}, vzero, 0.0, 0.15);
  CHECK(pde_residual(f, ham, 1.0, w, Exec::Serial) == 1.0);
}
