#include "hjhom/media.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <json.hpp>

#include "hjhom/rng.hpp"

namespace hjhom {

namespace {

constexpr double TAU = 2.0 * std::numbers::pi;

double periodic_formula(const EnvParams& p, const Vec& y, int dim) {
  double v = 1.0;
  for (int a = 0; a < dim; ++a)
    if (p.waves[a] != 0) v *= std::sin(TAU * p.waves[a] * y[a]);
  return p.offset + p.amplitude * v;
}

// C^1 compactly supported bump, max slope 8/(3*sqrt(3)*r).
double bump(double r2_over_R2) {
  if (r2_over_R2 >= 1.0) return 0.0;
  const double t = 1.0 - r2_over_R2;
  return t * t;
}

// Displacement honoring periodic axes (minimum image).
Vec displacement(const Grid& g, const Vec& from, const Vec& to) {
  Vec d = to - from;
  for (int a = 0; a < g.dim; ++a) {
    if (!g.periodic[a]) continue;
    const double P = g.period(a);
    d[a] -= std::round(d[a] / P) * P;
  }
  return d;
}

std::uint64_t zigzag(int v) {
  return static_cast<std::uint64_t>((static_cast<std::int64_t>(v) << 1) ^ (static_cast<std::int64_t>(v) >> 63));
}

void check_coeff_bounds(const HamiltonianSpec& spec, double lo, double hi) {
  const double slack = 1e-9 * (1.0 + std::abs(spec.Lambda));
  switch (spec.kind) {
    case HamKind::Metric:
    case HamKind::AnisoHomogeneous:
      if (lo < spec.lambda - slack || hi > spec.Lambda + slack)
        fail(Err::DegenerateMedium, "realized coefficient escapes declared [lambda, Lambda]");
      if (lo <= 0.0) fail(Err::DegenerateMedium, "metric/anisotropic coefficient must stay positive");
      break;
    case HamKind::Separable:
      if (std::max(std::abs(lo), std::abs(hi)) > spec.Lambda + slack)
        fail(Err::DegenerateMedium, "potential amplitude escapes declared Lambda");
      break;
    default:
      break;
  }
}

} // namespace

Idx EnvironmentRealization::cell_of(const Vec& y) const {
  Idx c{0, 0, 0};
  for (int a = 0; a < dim; ++a)
    c[a] = static_cast<int>(std::floor((y[a] - phase[a]) / cell));
  return c;
}

double EnvironmentRealization::cell_value(const Idx& cell_idx) const {
  Idx c = cell_idx;
  for (int a = 0; a < dim; ++a) {
    if (!grid.periodic[a]) continue;
    const int per = static_cast<int>(std::llround(grid.period(a) / cell));
    int r = c[a] % per;
    c[a] = r < 0 ? r + per : r;
  }
  const std::uint64_t bits = mix(seed, zigzag(c[0]), zigzag(c[1]), zigzag(c[2]));
  const int k = pick_weighted(u01(bits), params.probs);
  return params.values[static_cast<std::size_t>(k)];
}

double EnvironmentRealization::coeff_at(const Vec& y) const {
  if (kind == EnvKind::IidCheckerboard) return cell_value(cell_of(y));
  return interpolate(scalar, y);
}

Vec EnvironmentRealization::drift_at(const Vec& y) const {
  return interpolate(drift, y);
}

VectorField drift_from_stream(const ScalarField& psi) {
  const Grid& g = psi.grid;
  if (g.dim != 2 || !g.periodic[0] || !g.periodic[1])
    fail(Err::InvalidConfig, "stream drift needs a 2D periodic grid");
  VectorField b(g);
  for_each_node(g, [&](const Idx& i, std::size_t s) {
    Idx xp, xm, yp, ym;
    g.neighbor(i, 0, +1, xp);
    g.neighbor(i, 0, -1, xm);
    g.neighbor(i, 1, +1, yp);
    g.neighbor(i, 1, -1, ym);
    const double dpsi_dx = (psi.at(xp) - psi.at(xm)) / (2.0 * g.h[0]);
    const double dpsi_dy = (psi.at(yp) - psi.at(ym)) / (2.0 * g.h[1]);
    b.values[s] = Vec{dpsi_dy, -dpsi_dx, 0.0};
  });
  return b;
}

EnvironmentRealization sample_environment(const HamiltonianSpec& spec, const EnvParams& params,
                                          std::uint64_t seed, const Grid& grid) {
  grid.validate();
  EnvironmentRealization env;
  env.kind = params.kind;
  env.seed = seed;
  env.cell = params.cell;
  env.params = params;
  env.grid = grid;
  env.dim = grid.dim;

  switch (params.kind) {
    case EnvKind::Periodic: {
      env.scalar = ScalarField(grid);
      for_each_node(grid, [&](const Idx& i, std::size_t s) {
        env.scalar.values[s] = periodic_formula(params, grid.coord(i), grid.dim);
      });
      break;
    }
    case EnvKind::IidCheckerboard: {
      if (params.cell <= 0.0) fail(Err::InvalidConfig, "checkerboard cell must be positive");
      if (params.values.empty() || params.values.size() != params.probs.size())
        fail(Err::InvalidConfig, "checkerboard law needs matching values/probs");
      for (int a = 0; a < grid.dim; ++a) {
        if (!grid.periodic[a]) continue;
        const double ratio = grid.period(a) / params.cell;
        if (std::abs(ratio - std::llround(ratio)) > 1e-9)
          fail(Err::InvalidConfig, "periodic axis length must be a whole number of lattice cells");
      }
      for (int a = 0; a < grid.dim; ++a)
        env.phase[a] = params.cell * uniform(seed, 0xF00Du, static_cast<std::uint64_t>(a));
      // Materialize node samples too, so the realization is inspectable;
      // coeff_at stays piecewise-constant via cell_value.
      env.scalar = ScalarField(grid);
      for_each_node(grid, [&](const Idx& i, std::size_t s) {
        env.scalar.values[s] = env.cell_value(env.cell_of(grid.coord(i)));
      });
      break;
    }
    case EnvKind::SmoothedBump: {
      if (params.cell <= 0.0) fail(Err::InvalidConfig, "bump lattice cell must be positive");
      env.scalar = ScalarField(grid, params.offset);
      for (int a = 0; a < grid.dim; ++a)
        env.phase[a] = params.cell * uniform(seed, 0xB00Bu, static_cast<std::uint64_t>(a));
      // Lattice of bump centers covering the hull (plus support margin).
      Idx lo{0, 0, 0}, hi{0, 0, 0};
      for (int a = 0; a < grid.dim; ++a) {
        const double min_y = grid.origin[a] - params.bump_radius;
        const double max_y = grid.origin[a] + grid.period(a) + params.bump_radius;
        lo[a] = static_cast<int>(std::floor((min_y - env.phase[a]) / params.cell)) - 1;
        hi[a] = static_cast<int>(std::ceil((max_y - env.phase[a]) / params.cell)) + 1;
      }
      const double R2 = params.bump_radius * params.bump_radius;
      for (int cz = lo[2]; cz <= (grid.dim > 2 ? hi[2] : lo[2]); ++cz)
        for (int cy = lo[1]; cy <= (grid.dim > 1 ? hi[1] : lo[1]); ++cy)
          for (int cx = lo[0]; cx <= hi[0]; ++cx) {
            Idx c{cx, grid.dim > 1 ? cy : 0, grid.dim > 2 ? cz : 0};
            // Wrap the lattice on periodic axes so the field stays periodic.
            Idx cw = c;
            for (int a = 0; a < grid.dim; ++a) {
              if (!grid.periodic[a]) continue;
              const int per = std::max(1, static_cast<int>(std::llround(grid.period(a) / params.cell)));
              int r = cw[a] % per;
              cw[a] = r < 0 ? r + per : r;
            }
            const std::uint64_t cb = mix(seed, zigzag(cw[0]), zigzag(cw[1]), zigzag(cw[2]));
            const double amp = params.amplitude * (2.0 * u01(cb) - 1.0);
            Vec center = vzero;
            for (int a = 0; a < grid.dim; ++a) {
              const double j = params.jitter * params.cell *
                               (2.0 * u01(mix(cb, 0x11u + static_cast<std::uint64_t>(a))) - 1.0);
              center[a] = env.phase[a] + params.cell * c[a] + j;
            }
            for_each_node(grid, [&](const Idx& i, std::size_t s) {
              const Vec d = displacement(grid, center, grid.coord(i));
              const double r2 = norm2(d);
              if (r2 < R2) env.scalar.values[s] += amp * bump(r2 / R2);
            });
          }
      break;
    }
    case EnvKind::StreamDrift: {
      if (grid.dim != 2) fail(Err::InvalidConfig, "stream drift is two-dimensional");
      if (params.stream_bumps) {
        EnvParams bp = params;
        bp.kind = EnvKind::SmoothedBump;
        EnvironmentRealization tmp = sample_environment(spec, bp, seed, grid);
        env.stream = tmp.scalar;
        env.phase = tmp.phase;
      } else {
        env.stream = ScalarField(grid);
        for_each_node(grid, [&](const Idx& i, std::size_t s) {
          const Vec y = grid.coord(i);
          env.stream.values[s] = params.offset +
              params.amplitude * std::sin(TAU * params.waves[0] * y[0]) *
              std::sin(TAU * params.waves[1] * y[1]) / TAU;
        });
      }
      env.drift = drift_from_stream(env.stream);
      break;
    }
  }

  // Measured coefficient Lipschitz constant (centered differences where both
  // neighbors exist); reported for smoothed media, zero for cell-constant.
  if (params.kind != EnvKind::IidCheckerboard && !env.scalar.values.empty()) {
    double lip = 0.0;
    for_each_node(grid, [&](const Idx& i, std::size_t) {
      for (int a = 0; a < grid.dim; ++a) {
        Idx p, m;
        if (grid.neighbor(i, a, +1, p) && grid.neighbor(i, a, -1, m))
          lip = std::max(lip, std::abs(env.scalar.at(p) - env.scalar.at(m)) / (2.0 * grid.h[a]));
      }
    });
    env.lipschitz = lip;
  }

  // Validate realized values against the declared coefficient bounds.
  if (!env.scalar.values.empty() && params.kind != EnvKind::StreamDrift) {
    const auto [lo, hi] = std::minmax_element(env.scalar.values.begin(), env.scalar.values.end());
    check_coeff_bounds(spec, *lo, *hi);
  }
  if (params.kind == EnvKind::IidCheckerboard) {
    const auto [lo, hi] = std::minmax_element(params.values.begin(), params.values.end());
    check_coeff_bounds(spec, *lo, *hi);
  }
  if (params.kind == EnvKind::StreamDrift) {
    double bmax = 0.0;
    for (const Vec& b : env.drift.values) bmax = std::max(bmax, norm(b));
    if (bmax > spec.Lambda + 1e-9 * (1.0 + spec.Lambda))
      fail(Err::DegenerateMedium, "drift magnitude escapes declared Lambda");
  }
  return env;
}

double eval_h(const HamiltonianSpec& spec, const Vec& p, const Vec& y,
              const EnvironmentRealization& env) {
  switch (spec.kind) {
    case HamKind::POnly: {
      double s = 0.0;
      for (int a = 0; a < spec.dim; ++a) {
        const double d = p[a] - spec.ponly.shift[a];
        s += spec.ponly.diag[a] * d * d;
      }
      return spec.ponly.power == 2.0 ? s : std::sqrt(s);
    }
    case HamKind::Separable:
      return norm2(p) + env.coeff_at(y);
    case HamKind::Metric:
      return env.coeff_at(y) * norm(p);
    case HamKind::AnisoHomogeneous: {
      const double pn = norm(p);
      if (pn == 0.0) return 0.0;
      return env.coeff_at(y) * dot(p, spec.aniso_base.mul(p)) / (2.0 * pn);
    }
    case HamKind::QuadraticDrift:
      return 0.5 * norm2(p) + dot(env.drift_at(y), p);
  }
  fail(Err::InvalidConfig, "unknown Hamiltonian kind");
}

double min_over_p(const HamiltonianSpec& spec, const Vec& y, const EnvironmentRealization& env) {
  switch (spec.kind) {
    case HamKind::POnly: return 0.0;
    case HamKind::Separable: return env.coeff_at(y);
    case HamKind::Metric: return 0.0;
    case HamKind::AnisoHomogeneous: return 0.0;
    case HamKind::QuadraticDrift: {
      const Vec b = env.drift_at(y);
      return -0.5 * norm2(b);
    }
  }
  fail(Err::InvalidConfig, "unknown Hamiltonian kind");
}

double min_over_p_grid(const HamiltonianSpec& spec, const EnvironmentRealization& env, const Grid& g) {
  double m = std::numeric_limits<double>::infinity();
  for_each_node(g, [&](const Idx& i, std::size_t) {
    m = std::min(m, min_over_p(spec, g.coord(i), env));
  });
  return m;
}

namespace {

double realized_max_coeff(const EnvironmentRealization& env) {
  if (env.kind == EnvKind::IidCheckerboard) {
    double m = -std::numeric_limits<double>::infinity();
    for (double v : env.params.values) m = std::max(m, v);
    return m;
  }
  double m = -std::numeric_limits<double>::infinity();
  for (double v : env.scalar.values) m = std::max(m, v);
  return m;
}

} // namespace

Vec grad_bound(const HamiltonianSpec& spec, const EnvironmentRealization& env, double radius) {
  Vec s = vzero;
  switch (spec.kind) {
    case HamKind::POnly:
      for (int a = 0; a < spec.dim; ++a)
        s[a] = spec.ponly.power == 2.0
                   ? 2.0 * spec.ponly.diag[a] * (radius + std::abs(spec.ponly.shift[a]))
                   : std::sqrt(spec.ponly.diag[a]);
      break;
    case HamKind::Separable:
      for (int a = 0; a < spec.dim; ++a) s[a] = 2.0 * radius;
      break;
    case HamKind::Metric: {
      const double cmax = realized_max_coeff(env);
      for (int a = 0; a < spec.dim; ++a) s[a] = cmax;
      break;
    }
    case HamKind::AnisoHomogeneous: {
      // Convex 1-homogeneous: |dH/dp_a| <= max(H(e_a), H(-e_a)).
      const double cmax = realized_max_coeff(env);
      for (int a = 0; a < spec.dim; ++a)
        s[a] = cmax * spec.aniso_base.m[static_cast<std::size_t>(4 * a)] / 2.0;
      break;
    }
    case HamKind::QuadraticDrift: {
      Vec bmax = vzero;
      for (const Vec& b : env.drift.values)
        for (int a = 0; a < spec.dim; ++a) bmax[a] = std::max(bmax[a], std::abs(b[a]));
      for (int a = 0; a < spec.dim; ++a) s[a] = radius + bmax[a];
      break;
    }
  }
  return s;
}

double sublevel_radius(const HamiltonianSpec& spec, const EnvironmentRealization& env,
                       double level, std::span<const Vec> y_samples) {
  if (y_samples.empty()) fail(Err::EmptyWindow, "sublevel_radius needs y samples");

  // Direction mesh on the unit sphere.
  std::vector<Vec> dirs;
  if (spec.dim == 1) {
    dirs = {Vec{1, 0, 0}, Vec{-1, 0, 0}};
  } else if (spec.dim == 2) {
    for (int k = 0; k < 64; ++k) {
      const double a = TAU * k / 64.0;
      dirs.push_back(Vec{std::cos(a), std::sin(a), 0.0});
    }
  } else {
    for (int i = 0; i < 12; ++i)
      for (int j = 1; j < 8; ++j) {
        const double az = TAU * i / 12.0, pol = std::numbers::pi * j / 8.0;
        dirs.push_back(Vec{std::sin(pol) * std::cos(az), std::sin(pol) * std::sin(az), std::cos(pol)});
      }
    dirs.push_back(Vec{0, 0, 1});
    dirs.push_back(Vec{0, 0, -1});
  }

  auto g = [&](double t, const Vec& th) {
    double m = std::numeric_limits<double>::infinity();
    for (const Vec& y : y_samples) m = std::min(m, eval_h(spec, t * th, y, env));
    return m;
  };

  // Sublevel intervals need not contain the origin (shifted quadratics), so
  // the doubling ladder starts past an analytic hint covering the shift.
  const double hint = 1.0 + norm(spec.ponly.shift) +
                      std::sqrt(std::max(0.0, level) + std::abs(level) + 1.0);
  constexpr double CAP = 1e6;
  double R = 0.0;
  for (const Vec& th : dirs) {
    double last_le = g(0.0, th) <= level ? 0.0 : -1.0;
    double first_gt = -1.0;
    double t = hint / 256.0;
    while (t <= CAP) {
      if (g(t, th) <= level) {
        last_le = t;
        first_gt = -1.0;
      } else if (last_le >= 0.0 && first_gt < 0.0) {
        first_gt = t;
      }
      // Past the hint with a bracketing crossing (or provably empty ray).
      if (t >= hint && first_gt > 0.0 && t >= 4.0 * std::max(1.0, last_le)) break;
      if (t >= hint && last_le < 0.0 && t >= 64.0 * hint) break; // ray misses the sublevel set
      t *= 2.0;
    }
    if (t > CAP && (first_gt < 0.0 && last_le >= 0.0))
      fail(Err::CoercivityViolation, "sublevel search exceeded its cap; Hamiltonian not coercive along a ray",
           level);
    if (last_le < 0.0) continue; // this ray never enters the sublevel set
    double lo = last_le, hi = first_gt;
    for (int it = 0; it < 60 && hi - lo > 1e-10 * (1.0 + hi); ++it) {
      const double mid = 0.5 * (lo + hi);
      (g(mid, th) <= level ? lo : hi) = mid;
    }
    R = std::max(R, hi);
  }
  return R;
}

MediumView make_medium_view(const HamiltonianSpec& spec, const EnvironmentRealization& env,
                            const Grid& g) {
  MediumView v;
  v.kind = spec.kind;
  v.dim = spec.dim;
  v.ponly = spec.ponly;
  v.base = spec.aniso_base;
  const std::size_t n = g.node_count();
  if (spec.kind == HamKind::QuadraticDrift) {
    v.cb.resize(n);
    for_each_node(g, [&](const Idx& i, std::size_t s) { v.cb[s] = env.drift_at(g.coord(i)); });
  } else if (spec.kind != HamKind::POnly) {
    v.c0.resize(n);
    for_each_node(g, [&](const Idx& i, std::size_t s) { v.c0[s] = env.coeff_at(g.coord(i)); });
  }
  return v;
}

double view_eval(const MediumView& v, const Vec& p, std::size_t node) {
  return dispatch_view(v, [&](auto H) { return H(p, node); });
}

double view_min_over_p(const MediumView& v, std::size_t node) {
  switch (v.kind) {
    case HamKind::POnly: return 0.0;
    case HamKind::Separable: return v.c0[node];
    case HamKind::Metric: return 0.0;
    case HamKind::AnisoHomogeneous: return 0.0;
    case HamKind::QuadraticDrift: return -0.5 * norm2(v.cb[node]);
  }
  fail(Err::InvalidConfig, "unknown Hamiltonian kind");
}

std::string describe_medium(const HamiltonianSpec& spec, const EnvParams& params, std::uint64_t seed) {
  nlohmann::json j;
  const char* hk[] = {"p-only", "separable", "metric", "anisotropic-homogeneous", "quadratic-drift"};
  const char* ek[] = {"periodic", "iid-checkerboard", "smoothed-bump", "stream-drift"};
  j["hamiltonian"] = {{"kind", hk[static_cast<int>(spec.kind)]},
                      {"dim", spec.dim},
                      {"lambda", spec.lambda},
                      {"Lambda", spec.Lambda}};
  if (spec.kind == HamKind::POnly)
    j["hamiltonian"]["ponly"] = {{"power", spec.ponly.power},
                                 {"diag", {spec.ponly.diag[0], spec.ponly.diag[1], spec.ponly.diag[2]}},
                                 {"shift", {spec.ponly.shift[0], spec.ponly.shift[1], spec.ponly.shift[2]}}};
  j["environment"] = {{"kind", ek[static_cast<int>(params.kind)]},
                      {"cell", params.cell},
                      {"seed", seed}};
  return j.dump();
}

} // namespace hjhom
