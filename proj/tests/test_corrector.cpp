#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "hjhom/corrector.hpp"

using namespace hjhom;

namespace {

HamiltonianSpec separable_sine_spec() {
  HamiltonianSpec s;
  s.kind = HamKind::Separable;
  s.dim = 1;
  s.lambda = -1.0;
  s.Lambda = 1.0;
  return s;
}

EnvParams sine_env() {
  EnvParams ep;
  ep.kind = EnvKind::Periodic;
  ep.waves = {1, 0, 0};
  ep.amplitude = 1.0;
  ep.offset = 0.0;
  return ep;
}

HamiltonianSpec metric_spec_1d() {
  HamiltonianSpec s;
  s.kind = HamKind::Metric;
  s.dim = 1;
  s.lambda = 1.0;
  s.Lambda = 2.0;
  return s;
}

EnvParams checkerboard_env() {
  EnvParams ep;
  ep.kind = EnvKind::IidCheckerboard;
  ep.cell = 1.0;
  ep.values = {1.0, 2.0};
  ep.probs = {0.5, 0.5};
  return ep;
}

HamiltonianSpec drift_spec_2d() {
  HamiltonianSpec s;
  s.kind = HamKind::QuadraticDrift;
  s.dim = 2;
  s.lambda = 0.0;
  s.Lambda = 0.8;
  return s;
}

EnvParams stream_env() {
  EnvParams ep;
  ep.kind = EnvKind::StreamDrift;
  ep.waves = {1, 1, 0};
  ep.amplitude = 0.8;
  return ep;
}

Grid torus_2d(int cells, double h) {
  return make_grid(2, vzero, {h, h, 1.0}, {cells, cells, 1}, {true, true, false});
}

MarchParams serial_params(double tol) {
  MarchParams mp;
  mp.tol = tol;
  mp.exec = Exec::Serial;
  return mp;
}

// Level of the one-dimensional separable problem |p + u'|^2 + V(y) = mu with
// V = sin(2 pi y): for |p| past the threshold integral of sqrt(max V - V),
// mu solves  integral_0^1 sqrt(mu - V) dy = |p|; below it mu = max V.
double separable_sine_level(double p) {
  const int n = 40000;
  auto mean_root = [&](double mu) {
    double acc = 0.0;
    for (int k = 0; k < n; ++k) {
      const double t = (k + 0.5) / n;
      acc += std::sqrt(mu - std::sin(2.0 * M_PI * t));
    }
    return acc / n;
  };
  if (mean_root(1.0) >= std::fabs(p)) return 1.0;
  double lo = 1.0, hi = 2.0;
  while (mean_root(hi) < std::fabs(p)) hi *= 2.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (mean_root(mid) < std::fabs(p) ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

} // namespace

TEST_CASE("medium-free Hamiltonian: the discounted level is exact") {
  HamiltonianSpec spec;
  spec.kind = HamKind::POnly;
  spec.dim = 2;
  spec.ponly.power = 2.0;
  spec.ponly.diag = {1.0, 2.0, 1.0};
  spec.ponly.shift = {0.3, -0.2, 0.0};
  const Grid g = torus_2d(16, 1.0 / 16);
  const EnvironmentRealization env = sample_environment(spec, EnvParams{}, 0, g);
  const Vec p = {0.7, 0.4, 0.0};
  const double hp = 1.0 * (0.7 - 0.3) * (0.7 - 0.3) + 2.0 * (0.4 + 0.2) * (0.4 + 0.2);

  const DiscountedSolve s = solve_discounted(spec, env, p, 0.1, g, serial_params(1e-9));
  CHECK(s.crude_lo == doctest::Approx(hp).epsilon(1e-14));
  CHECK(s.crude_hi == doctest::Approx(hp).epsilon(1e-14));
  CHECK(discount_estimate(s) == doctest::Approx(hp).epsilon(1e-12));
  CHECK(s.residual <= 1e-12);
  // the constant start -c2/delta is already the fixed point
  CHECK(s.steps == 1);

  std::vector<double> ds{0.3, 0.1, 0.03};
  const HbarPointResult r = hbar_point(spec, env, p, g, ds, serial_params(1e-9));
  CHECK(r.hbar == doctest::Approx(hp).epsilon(1e-10));
  CHECK(r.m_last == doctest::Approx(hp).epsilon(1e-12));
  CHECK(r.subcorrector_ub == doctest::Approx(hp).epsilon(1e-12));
  CHECK(r.oscillation <= 1e-12);
  CHECK(r.reliable);
}

TEST_CASE("divergence-free drift at p = 0: the zero field is the fixed point") {
  const HamiltonianSpec spec = drift_spec_2d();
  const Grid g = torus_2d(24, 1.0 / 24);
  const EnvironmentRealization env = sample_environment(spec, stream_env(), 3, g);
  const DiscountedSolve s = solve_discounted(spec, env, vzero, 0.2, g, serial_params(1e-10));
  CHECK(std::fabs(discount_estimate(s)) <= 1e-13);
  CHECK(s.crude_lo == 0.0);
  CHECK(s.crude_hi == 0.0);
  for (double v : s.v.values) CHECK(v == 0.0);
}

TEST_CASE("separable sine chain matches the quadrature level") {
  const HamiltonianSpec spec = separable_sine_spec();
  const Grid g = make_grid_1d(0.0, 2e-3, 500, true);
  const EnvironmentRealization env = sample_environment(spec, sine_env(), 0, g);
  const MarchParams mp = serial_params(1e-4);
  std::vector<double> ds{0.1, 0.03, 0.01};

  // past the flat spot: level from the slowness-type quadrature
  const HbarPointResult r1 = hbar_point(spec, env, {1.0, 0, 0}, g, ds, mp);
  const double mu1 = separable_sine_level(1.0);
  CHECK(mu1 == doctest::Approx(1.1381447).epsilon(1e-5));
  CHECK(std::fabs(r1.hbar - mu1) <= 0.005);
  CHECK(r1.reliable);
  CHECK(r1.window_capped); // torus is far smaller than 1/delta
  CHECK(r1.oscillation <= 0.01);
  REQUIRE(r1.leg_residual.size() == 3);
  for (double rr : r1.leg_residual) CHECK(rr <= 1e-4);
  // any converged periodic perturbation certifies an upper bound
  CHECK(r1.hbar <= r1.subcorrector_ub + 1e-9);
  CHECK(r1.subcorrector_ub <= mu1 + 0.1);

  // inside the flat spot the level sticks at max V = 1
  const HbarPointResult r0 = hbar_point(spec, env, {0.2, 0, 0}, g, ds, mp);
  CHECK(std::fabs(r0.hbar - 1.0) <= 0.05);
  CHECK(0.9 <= r0.m_last);
  CHECK(r0.m_last <= 1.1);
  CHECK(r0.subcorrector_ub >= 1.0 - 1e-9);
  CHECK(r0.subcorrector_ub <= 1.1);
  CHECK(r0.reliable);
}

TEST_CASE("metric checkerboard torus tracks the realized harmonic mean") {
  const HamiltonianSpec spec = metric_spec_1d();
  const EnvParams ep = checkerboard_env();
  // 64 stationarity cells, 32 nodes per cell
  const Grid g = make_grid_1d(0.0, 1.0 / 32, 2048, true);
  const MarchParams mp = serial_params(1e-5);
  std::vector<double> ds{0.3, 0.1, 0.03, 0.01};
  double mean_hbar = 0.0;
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    const EnvironmentRealization env = sample_environment(spec, ep, seed, g);
    double acc = 0.0;
    for (int c = 0; c < 2048; ++c) acc += 1.0 / env.coeff_at({(c + 0.5) / 32.0, 0, 0});
    const double realized = 1.0 / (acc / 2048); // exact level of the realized torus
    const HbarPointResult r = hbar_point(spec, env, {1.0, 0, 0}, g, ds, mp);
    CHECK(std::fabs(r.hbar - realized) <= 0.02);
    CHECK(r.reliable);
    CHECK(r.window_capped);
    mean_hbar += r.hbar / 4.0;
  }
  // the ensemble limit is |p| / E[1/c] = 4/3; four 64-cell draws sit within
  // a few CLT standard deviations of it
  CHECK(std::fabs(mean_hbar - 4.0 / 3.0) <= 0.1);
}

TEST_CASE("crude level bounds hold at every node") {
  const double tol = 1e-6;
  auto check_bounds = [&](const HamiltonianSpec& spec, const EnvironmentRealization& env,
                          const Vec& p, double delta, const Grid& g) {
    const DiscountedSolve s = solve_discounted(spec, env, p, delta, g, serial_params(tol));
    REQUIRE(s.crude_lo <= s.crude_hi);
    const double slack_hi = 1e-9 * std::max(1.0, std::fabs(s.crude_hi));
    for (double v : s.v.values) {
      const double level = -delta * v;
      // monotone increase from the constant subsolution keeps -delta v
      // under c2 exactly; the max-node argument pins it above c1 - tol
      CHECK(level <= s.crude_hi + slack_hi);
      CHECK(level >= s.crude_lo - tol - slack_hi);
    }
  };
  {
    const HamiltonianSpec spec = metric_spec_1d();
    const Grid g = make_grid_1d(0.0, 1.0 / 16, 128, true);
    check_bounds(spec, sample_environment(spec, checkerboard_env(), 9, g), {1.0, 0, 0}, 0.1, g);
  }
  {
    const HamiltonianSpec spec = drift_spec_2d();
    const Grid g = torus_2d(24, 1.0 / 24);
    check_bounds(spec, sample_environment(spec, stream_env(), 5, g), {0.8, -0.4, 0}, 0.15, g);
  }
}

TEST_CASE("the residual trace never increases") {
  const HamiltonianSpec spec = metric_spec_1d();
  const Grid g = make_grid_1d(0.0, 1.0 / 16, 128, true);
  const EnvironmentRealization env = sample_environment(spec, checkerboard_env(), 2, g);
  MarchParams mp = serial_params(1e-6);
  mp.record_trace = true;
  const DiscountedSolve s = solve_discounted(spec, env, {1.0, 0, 0}, 0.1, g, mp);
  REQUIRE(static_cast<int>(s.residual_trace.size()) == s.steps);
  for (std::size_t k = 1; k < s.residual_trace.size(); ++k)
    CHECK(s.residual_trace[k] <= s.residual_trace[k - 1] + 1e-12);
  CHECK(s.residual_trace.back() <= 1e-6);
}

TEST_CASE("serial and parallel marches agree bitwise") {
  const HamiltonianSpec spec = drift_spec_2d();
  const Grid g = torus_2d(24, 1.0 / 24);
  const EnvironmentRealization env = sample_environment(spec, stream_env(), 7, g);
  MarchParams mp = serial_params(1e-6);
  const DiscountedSolve a = solve_discounted(spec, env, {1.0, 0.5, 0}, 0.2, g, mp);
  mp.exec = Exec::Parallel;
  const DiscountedSolve b = solve_discounted(spec, env, {1.0, 0.5, 0}, 0.2, g, mp);
  CHECK(a.steps == b.steps);
  CHECK(max_abs_diff(a.v, b.v) == 0.0);
  CHECK(discount_estimate(a) == discount_estimate(b));
}

TEST_CASE("warm starts land on the same fixed point") {
  const HamiltonianSpec spec = metric_spec_1d();
  const Grid g = make_grid_1d(0.0, 1.0 / 16, 128, true);
  const EnvironmentRealization env = sample_environment(spec, checkerboard_env(), 2, g);
  const double tol = 1e-7;
  const MarchParams mp = serial_params(tol);
  const DiscountedSolve cold = solve_discounted(spec, env, {1.0, 0, 0}, 0.1, g, mp);
  const DiscountedSolve warm = solve_discounted(spec, env, {1.0, 0, 0}, 0.1, g, mp, &cold.v);
  CHECK(std::fabs(discount_estimate(warm) - discount_estimate(cold)) <= 3.0 * tol);
  CHECK(warm.steps <= 3);

  // the same-delta warm path of the schedule runner reuses stored fields
  std::vector<double> ds{0.3, 0.1};
  std::vector<ScalarField> stash;
  const HbarPointResult first = hbar_point(spec, env, {1.0, 0, 0}, g, ds, mp, &stash);
  const HbarPointResult again = hbar_point(spec, env, {1.0, 0, 0}, g, ds, mp, &stash);
  CHECK(std::fabs(again.hbar - first.hbar) <= 3.0 * tol);
  for (std::size_t k = 0; k < ds.size(); ++k) CHECK(again.leg_steps[k] <= 3);
}

TEST_CASE("midpoint concavity and Lipschitz quotients of the level") {
  const double tol = 1e-6, delta = 0.1;
  {
    const HamiltonianSpec spec = separable_sine_spec();
    const Grid g = make_grid_1d(0.0, 5e-3, 200, true);
    const EnvironmentRealization env = sample_environment(spec, sine_env(), 0, g);
    std::vector<std::array<Vec, 2>> pairs = {
        {Vec{0.0, 0, 0}, Vec{0.4, 0, 0}},
        {Vec{1.6, 0, 0}, Vec{2.0, 0, 0}},
        {Vec{1.0, 0, 0}, Vec{1.0, 0, 0}},
    };
    const MidpointReport rep = p_regularity_report(spec, env, pairs, delta, g, serial_params(tol));
    // concavity violations stay within solve tolerance once every solve
    // shares one numerical Hamiltonian
    CHECK(rep.worst_defect * delta <= 10.0 * tol);
    // a flat-spot pair has an almost-zero difference quotient...
    CHECK(rep.checks[0].quotient <= 0.1);
    // ...while past the flat spot the level grows at the quadrature slope
    CHECK(rep.checks[1].quotient >= 2.0);
    CHECK(rep.checks[1].quotient <= 4.6);
    CHECK(rep.checks[2].defect == 0.0);
    CHECK(rep.checks[2].quotient == 0.0);
    CHECK(rep.worst_quotient == rep.checks[1].quotient);
  }
  {
    const HamiltonianSpec spec = drift_spec_2d();
    const Grid g = torus_2d(24, 1.0 / 24);
    const EnvironmentRealization env = sample_environment(spec, stream_env(), 7, g);
    std::vector<std::array<Vec, 2>> pairs = {
        {Vec{0.5, 0, 0}, Vec{1.5, 0, 0}},
        {Vec{-1.0, -1.0, 0}, Vec{1.0, 1.0, 0}},
    };
    const MidpointReport rep = p_regularity_report(spec, env, pairs, delta, g, serial_params(tol));
    CHECK(rep.worst_defect * delta <= 10.0 * tol);
    CHECK(rep.worst_quotient <= 1.8);
  }
}

TEST_CASE("schedule diagnostics flag a level that has not homogenized") {
  const HamiltonianSpec spec = separable_sine_spec();
  const Grid g = make_grid_1d(0.0, 2e-3, 500, true);
  const EnvironmentRealization env = sample_environment(spec, sine_env(), 0, g);
  std::vector<double> big{4.0, 3.0, 2.0};
  const HbarPointResult r = hbar_point(spec, env, {1.0, 0, 0}, g, big, serial_params(1e-5));
  // at delta = 2 the discounted level still swings by ~30% across the torus
  CHECK(r.oscillation > 0.05 * std::max(1.0, std::fabs(r.m_last)));
  CHECK_FALSE(r.reliable);
}

TEST_CASE("seed spread shrinks when the torus carries more cells") {
  const HamiltonianSpec spec = metric_spec_1d();
  const EnvParams ep = checkerboard_env();
  const MarchParams mp = serial_params(1e-5);
  auto spread = [&](int period, double* mean_out) {
    const Grid g = make_grid_1d(0.0, 1.0 / 16, period * 16, true);
    double sum = 0.0, sum2 = 0.0;
    for (std::uint64_t seed = 0; seed < 8; ++seed) {
      const EnvironmentRealization env = sample_environment(spec, ep, seed, g);
      const double m = discount_estimate(solve_discounted(spec, env, {1.0, 0, 0}, 0.05, g, mp));
      sum += m;
      sum2 += m * m;
    }
    const double mean = sum / 8.0;
    *mean_out = mean;
    return std::sqrt(std::max(0.0, sum2 / 8.0 - mean * mean));
  };
  double mean4 = 0.0, mean16 = 0.0;
  const double s4 = spread(4, &mean4);
  const double s16 = spread(16, &mean16);
  CHECK(s16 < 0.6 * s4);
  CHECK(mean4 >= 1.2);
  CHECK(mean4 <= 1.8);
  CHECK(mean16 >= 1.25);
  CHECK(mean16 <= 1.45);
}

TEST_CASE("schedule and grid validation") {
  const HamiltonianSpec spec = metric_spec_1d();
  const Grid g = make_grid_1d(0.0, 1.0 / 16, 64, true);
  const EnvironmentRealization env = sample_environment(spec, checkerboard_env(), 1, g);
  const MarchParams mp = serial_params(1e-5);

  try {
    std::vector<double> empty;
    hbar_point(spec, env, {1, 0, 0}, g, empty, mp);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code == Err::InvalidConfig);
  }
  try {
    std::vector<double> flat{0.1, 0.1};
    hbar_point(spec, env, {1, 0, 0}, g, flat, mp);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code == Err::InvalidConfig);
  }
  CHECK_THROWS_AS(solve_discounted(spec, env, {1, 0, 0}, 0.0, g, mp), Error);
  {
    const Grid box = make_grid_1d(0.0, 1.0 / 16, 64, false);
    const EnvironmentRealization envb = sample_environment(spec, checkerboard_env(), 1, box);
    CHECK_THROWS_AS(solve_discounted(spec, envb, {1, 0, 0}, 0.1, box, mp), Error);
  }
  {
    HamiltonianSpec wrong = spec;
    wrong.dim = 2;
    CHECK_THROWS_AS(solve_discounted(wrong, env, {1, 0, 0}, 0.1, g, mp), Error);
  }
  try {
    MarchParams capped = mp;
    capped.max_steps = 3;
    solve_discounted(spec, env, {1, 0, 0}, 0.01, g, capped);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code == Err::NonConvergence);
  }
}

TEST_CASE("point estimates export one row per schedule entry plus the fit") {
  const HamiltonianSpec spec = metric_spec_1d();
  const Grid g = make_grid_1d(0.0, 1.0 / 16, 64, true);
  const EnvironmentRealization env = sample_environment(spec, checkerboard_env(), 1, g);
  std::vector<double> ds{0.3, 0.1, 0.03};
  const HbarPointResult r = hbar_point(spec, env, {1, 0, 0}, g, ds, serial_params(1e-5));
  const std::string path = "corrector_point_test.csv";
  save_point_csv(r, path);

  std::ifstream in(path);
  REQUIRE(in.good());
  std::string line;
  REQUIRE(std::getline(in, line));
  CHECK(line == "delta,m,oscillation,residual,steps");
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    rows.push_back(row);
  }
  REQUIRE(rows.size() == ds.size() + 1);
  for (std::size_t k = 0; k < ds.size(); ++k) {
    CHECK(rows[k][0] == doctest::Approx(ds[k]).epsilon(1e-15));
    CHECK(rows[k][1] == doctest::Approx(r.m[k]).epsilon(1e-15));
    CHECK(rows[k][4] == doctest::Approx(static_cast<double>(r.leg_steps[k])));
  }
  CHECK(rows.back()[0] == 0.0);
  CHECK(rows.back()[1] == doctest::Approx(r.hbar).epsilon(1e-15));
  CHECK(rows.back()[4] == (r.reliable ? 1.0 : 0.0));
  std::remove(path.c_str());
}
