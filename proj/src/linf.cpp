#include "hjhom/linf.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "hjhom/rng.hpp"

namespace hjhom {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

LagrangianTable legendre(const HbarTable& t, const Grid& qgrid) {
  qgrid.validate();
  if (qgrid.dim != t.dim) fail(Err::InvalidConfig, "velocity/momentum dimension mismatch");
  LagrangianTable L;
  L.dim = t.dim;
  L.qgrid = qgrid;
  L.value.assign(qgrid.node_count(), 0.0);
  for_each_node(qgrid, [&](const Idx& qi, std::size_t qs) {
    const Vec q = qgrid.coord(qi);
    double best = -kInf, interior_best = -kInf;
    for_each_node(t.pgrid, [&](const Idx& pi, std::size_t ps) {
      const double v = dot(t.pgrid.coord(pi), q) - t.value[ps];
      best = std::max(best, v);
      bool edge = false;
      for (int a = 0; a < t.dim; ++a)
        if (pi[a] == 0 || pi[a] == t.pgrid.nodes(a) - 1) edge = true;
      if (!edge) interior_best = std::max(interior_best, v);
    });
    // Trust the transform whenever some interior node ties the max: only a
    // strictly-boundary maximizer means the true slope escaped the table.
    const bool trusted = interior_best >= best - 1e-12 * (1.0 + std::fabs(best));
    L.value[qs] = trusted ? best : kInf;
  });
  return L;
}

namespace {

// Multilinear read of the Lagrangian with +inf propagation; velocities off
// the grid are +inf as well.
double lagrangian_at(const LagrangianTable& L, const Vec& q) {
  const Grid& g = L.qgrid;
  Idx base{0, 0, 0};
  Vec frac = vzero;
  for (int a = 0; a < g.dim; ++a) {
    const double t = (q[a] - g.origin[a]) / g.h[a];
    if (t < -1e-12 || t > g.extent[a] + 1e-12) return kInf;
    const double tc = std::clamp(t, 0.0, static_cast<double>(g.extent[a]));
    base[a] = std::min(static_cast<int>(tc), g.extent[a] - 1);
    frac[a] = tc - base[a];
  }
  double acc = 0.0;
  const int corners = 1 << g.dim;
  for (int c = 0; c < corners; ++c) {
    double w = 1.0;
    Idx id = base;
    for (int a = 0; a < g.dim; ++a) {
      if (c & (1 << a)) {
        ++id[a];
        w *= frac[a];
      } else {
        w *= 1.0 - frac[a];
      }
    }
    if (w == 0.0) continue;
    const double v = L.value[g.lin(id)];
    if (v == kInf) return kInf;
    acc += w * v;
  }
  return acc;
}

} // namespace

ScalarField hopf_lax(const ScalarField& g, const LagrangianTable& L, double t, Exec exec) {
  const Grid& grid = g.grid;
  grid.validate();
  if (grid.dim != L.dim) fail(Err::InvalidConfig, "field/Lagrangian dimension mismatch");
  for (int a = 0; a < grid.dim; ++a)
    if (grid.periodic[a]) fail(Err::InvalidConfig, "evolution runs on bounded boxes");
  if (t < 0.0) fail(Err::InvalidConfig, "evolution time must be nonnegative", t);
  if (t == 0.0) return g;

  // Precompute node coordinates once; the inner loop is O(N^2).
  const std::size_t n = grid.node_count();
  std::vector<Vec> xs(n);
  for_each_node(grid, [&](const Idx& id, std::size_t s) { xs[s] = grid.coord(id); });

  ScalarField out(grid);
  std::vector<std::uint8_t> stuck(n, 0);
  parallel_for(n, exec, [&](std::size_t sx) {
    double best = -kInf;
    for (std::size_t sy = 0; sy < n; ++sy) {
      const Vec q = (xs[sy] - xs[sx]) * (1.0 / t);
      const double lv = lagrangian_at(L, q);
      if (lv == kInf) continue;
      best = std::max(best, g.values[sy] - t * lv);
    }
    if (best == -kInf) stuck[sx] = 1;
    out.values[sx] = best;
  });
  for (std::size_t s = 0; s < n; ++s)
    if (stuck[s])
      fail(Err::Reachability, "no admissible velocity reaches a node at this time", t);
  return out;
}

ConvexityCheck convexity_criterion(std::span<const double> times, std::span<const double> values) {
  if (times.size() != values.size() || times.size() < 3)
    fail(Err::InvalidConfig, "need at least three matching time samples");
  for (std::size_t k = 1; k < times.size(); ++k)
    if (times[k] <= times[k - 1]) fail(Err::InvalidConfig, "times must strictly increase");
  ConvexityCheck out;
  for (std::size_t j = 1; j + 1 < times.size(); ++j) {
    const double w = (times[j + 1] - times[j]) / (times[j + 1] - times[j - 1]);
    const double chord = w * values[j - 1] + (1.0 - w) * values[j + 1];
    const double defect = values[j] - chord;
    if (defect > out.max_defect) {
      out.max_defect = defect;
      out.worst_index = static_cast<int>(j);
    }
  }
  return out;
}

EvolutionConvexity convexity_criterion(const ScalarField& u, const LagrangianTable& L,
                                       std::span<const double> times, std::span<const Vec> probes,
                                       Exec exec) {
  if (times.size() < 3) fail(Err::InvalidConfig, "need at least three evolution times");
  if (probes.empty()) fail(Err::InvalidConfig, "need at least one probe point");
  const Grid& g = u.grid;
  // Probes snap to their nearest node and must land inside the box.
  std::vector<std::size_t> at;
  for (const Vec& x : probes) {
    Idx id{0, 0, 0};
    for (int a = 0; a < g.dim; ++a) {
      const double t = (x[a] - g.origin[a]) / g.h[a];
      if (t < -0.5 || t > g.extent[a] + 0.5) fail(Err::OutOfDomain, "probe outside the box", t);
      id[a] = std::clamp(static_cast<int>(std::lround(t)), 0, g.extent[a]);
    }
    at.push_back(g.lin(id));
  }

  std::vector<std::vector<double>> series(probes.size());
  for (const double t : times) {
    if (t < 0.0) fail(Err::InvalidConfig, "evolution time must be nonnegative", t);
    const ScalarField ut = t == 0.0 ? u : hopf_lax(u, L, t, exec);
    for (std::size_t k = 0; k < at.size(); ++k) series[k].push_back(ut.values[at[k]]);
  }

  EvolutionConvexity out;
  for (std::size_t k = 0; k < series.size(); ++k) {
    const ConvexityCheck c = convexity_criterion(times, series[k]);
    if (c.max_defect > out.max_defect || out.worst_probe < 0) {
      out.max_defect = c.max_defect;
      out.worst_probe = static_cast<int>(k);
      out.worst_index = c.worst_index;
    }
  }
  return out;
}

CdfReport check_cdf(const ScalarField& u, const ConeProvider& cone,
                    std::span<const CdfConfig> configs) {
  const Grid& g = u.grid;
  g.validate();
  for (int a = 0; a < g.dim; ++a)
    if (g.periodic[a]) fail(Err::InvalidConfig, "cone comparison runs on bounded boxes");
  double hmax = 0.0;
  for (int a = 0; a < g.dim; ++a) hmax = std::max(hmax, g.h[a]);
  const double w = 1.5 * hmax; // boundary ring thickness

  CdfReport rep;
  for (const CdfConfig& cfg : configs) {
    for (int a = 0; a < g.dim; ++a) {
      const double lo = g.origin[a], hi = g.origin[a] + g.h[a] * g.extent[a];
      if (cfg.center[a] - cfg.radius < lo - 1e-12 || cfg.center[a] + cfg.radius > hi + 1e-12)
        fail(Err::OutOfDomain, "comparison ball leaves the box", cfg.radius);
    }
    if (cfg.radius < 3.0 * w)
      fail(Err::InvalidConfig, "comparison ball too small for the ring width", cfg.radius);
    if (norm(cfg.x0 - cfg.center) < cfg.radius - 1e-12)
      fail(Err::InvalidConfig, "cone vertex sits inside a comparison window",
           norm(cfg.x0 - cfg.center));

    double in_above = -kInf, bd_above = -kInf;
    double in_below = kInf, bd_below = kInf;
    for_each_node(g, [&](const Idx& id, std::size_t s) {
      const Vec y = g.coord(id);
      const double dist = norm(y - cfg.center);
      if (dist > cfg.radius) return;
      const double da = u.values[s] - cone.value(cfg.mu, y - cfg.x0);
      const double db = u.values[s] + cone.value(cfg.mu, cfg.x0 - y);
      if (dist >= cfg.radius - w) {
        bd_above = std::max(bd_above, da);
        bd_below = std::min(bd_below, db);
      } else {
        in_above = std::max(in_above, da);
        in_below = std::min(in_below, db);
      }
    });
    if (bd_above == -kInf || in_above == -kInf)
      fail(Err::EmptyWindow, "comparison ring or interior misses every node", cfg.radius);
    rep.above.push_back(in_above - bd_above);
    rep.below.push_back(bd_below - in_below);
    if (rep.worst_above_index < 0 || rep.above.back() > rep.worst_above) {
      rep.worst_above = rep.above.back();
      rep.worst_above_index = static_cast<int>(rep.above.size()) - 1;
    }
    if (rep.worst_below_index < 0 || rep.below.back() > rep.worst_below) {
      rep.worst_below = rep.below.back();
      rep.worst_below_index = static_cast<int>(rep.below.size()) - 1;
    }
  }
  return rep;
}

std::vector<CdfConfig> random_cdf_configs(const Grid& g, double min_lv, double mu_span,
                                          int count, std::uint64_t seed) {
  g.validate();
  if (mu_span <= 0.0) fail(Err::InvalidConfig, "level span must be positive", mu_span);
  double hmax = 0.0;
  for (int a = 0; a < g.dim; ++a) hmax = std::max(hmax, g.h[a]);
  const double rmin = 5.0 * hmax;

  Rng rng{seed};
  std::vector<CdfConfig> out;
  int guard = 0;
  while (static_cast<int>(out.size()) < count && guard < 400 * count) {
    ++guard;
    CdfConfig c;
    double max_r = kInf;
    bool feasible = true;
    for (int a = 0; a < g.dim; ++a) {
      const double lo = g.origin[a], hi = g.origin[a] + g.h[a] * g.extent[a];
      if (lo + rmin >= hi - rmin) feasible = false;
      if (!feasible) break;
      c.center[a] = rng.range(lo + rmin, hi - rmin);
      max_r = std::min({max_r, c.center[a] - lo, hi - c.center[a]});
    }
    if (!feasible) break;
    if (max_r < rmin) continue;
    c.radius = rng.range(rmin, max_r);
    // vertex: in the box, strictly off the window
    bool placed = false;
    for (int tries = 0; tries < 16 && !placed; ++tries) {
      for (int a = 0; a < g.dim; ++a) {
        const double lo = g.origin[a], hi = g.origin[a] + g.h[a] * g.extent[a];
        c.x0[a] = rng.range(lo, hi);
      }
      placed = norm(c.x0 - c.center) >= c.radius + hmax;
    }
    if (!placed) continue;
    const double lo_off = 0.05 * mu_span, hi_off = mu_span;
    c.mu = min_lv + lo_off * std::pow(hi_off / lo_off, rng.next_u01());
    out.push_back(c);
  }
  if (static_cast<int>(out.size()) < count)
    fail(Err::GridTooSmall, "box too small to place comparison balls", hmax);
  return out;
}

namespace {

struct RingGeom {
  std::vector<Vec> delta;             // physical offsets
  std::vector<std::ptrdiff_t> step;   // linear-index steps
  std::vector<double> g_fwd, g_bwd;   // gauge(delta), gauge(-delta)
  std::vector<double> sh_fwd;         // shift . delta
};

RingGeom ring_geometry(const Grid& g, const ConeProvider& cone) {
  RingGeom r;
  Idx off{0, 0, 0};
  const int lo1 = g.dim > 1 ? -1 : 0, hi1 = g.dim > 1 ? 1 : 0;
  const int lo2 = g.dim > 2 ? -1 : 0, hi2 = g.dim > 2 ? 1 : 0;
  Idx zero{0, 0, 0};
  Idx probe{1, g.dim > 1 ? 1 : 0, g.dim > 2 ? 1 : 0}; // strictly interior on validate()d grids
  const std::ptrdiff_t base = static_cast<std::ptrdiff_t>(g.lin(probe));
  for (off[2] = lo2; off[2] <= hi2; ++off[2])
    for (off[1] = lo1; off[1] <= hi1; ++off[1])
      for (off[0] = -1; off[0] <= 1; ++off[0]) {
        if (off == zero) continue;
        Vec d = vzero;
        Idx shifted = probe;
        for (int a = 0; a < g.dim; ++a) {
          d[a] = off[a] * g.h[a];
          shifted[a] += off[a];
        }
        r.delta.push_back(d);
        r.step.push_back(static_cast<std::ptrdiff_t>(g.lin(shifted)) - base);
        if (cone.gauge_form) {
          r.g_fwd.push_back(cone.gauge(d));
          r.g_bwd.push_back(cone.gauge(-d));
          r.sh_fwd.push_back(dot(cone.shift, d));
        }
      }
  return r;
}

// Exact balance for shift + scale * gauge cones: the binding scale is the
// largest pairwise slope, and the value is the (equal) envelope pair value.
double relax_gauge(const std::vector<double>& u, std::size_t s, const RingGeom& r) {
  const std::size_t m = r.delta.size();
  double sstar = 0.0;
  for (std::size_t j = 0; j < m; ++j)
    for (std::size_t k = 0; k < m; ++k) {
      const double num = u[s + r.step[j]] - u[s + r.step[k]] - (r.sh_fwd[j] - r.sh_fwd[k]);
      const double den = r.g_fwd[j] + r.g_bwd[k];
      if (den <= 0.0) fail(Err::DegenerateMedium, "cone gauge vanished on a ring offset", den);
      sstar = std::max(sstar, num / den);
    }
  double above = -kInf, below = kInf;
  for (std::size_t j = 0; j < m; ++j) {
    above = std::max(above, u[s + r.step[j]] - r.sh_fwd[j] - sstar * r.g_fwd[j]);
    below = std::min(below, u[s + r.step[j]] - r.sh_fwd[j] + sstar * r.g_bwd[j]);
  }
  return 0.5 * (above + below);
}

// General cones: bisect the level until the tightest cone from above meets
// the tightest cone from below.
double relax_bisect(const std::vector<double>& u, std::size_t s, const RingGeom& r,
                    const ConeProvider& cone) {
  const std::size_t m = r.delta.size();
  auto gap = [&](double mu, double* mid) {
    double above = -kInf, below = kInf;
    for (std::size_t j = 0; j < m; ++j) {
      above = std::max(above, u[s + r.step[j]] - cone.value(mu, r.delta[j]));
      below = std::min(below, u[s + r.step[j]] + cone.value(mu, -r.delta[j]));
    }
    if (mid) *mid = 0.5 * (above + below);
    return above - below; // decreasing in mu
  };
  double lo = cone.min_lv;
  double mid = 0.0;
  if (gap(lo, &mid) <= 0.0) return mid;
  double hi_off = 1.0;
  int guard = 0;
  while (gap(lo + hi_off, nullptr) > 0.0) {
    hi_off *= 2.0;
    if (++guard > 60) fail(Err::NonConvergence, "cone balance needs levels past the search cap", hi_off);
  }
  double a = lo, b = lo + hi_off;
  for (int it = 0; it < 100 && b - a > 1e-13 * (1.0 + std::fabs(b)); ++it) {
    const double c = 0.5 * (a + b);
    (gap(c, &mid) > 0.0 ? a : b) = c;
  }
  gap(0.5 * (a + b), &mid);
  return mid;
}

} // namespace

AmleResult construct_amle(const ScalarField& boundary_data, const ConeProvider& cone,
                          const AmleParams& params, const ScalarField* warm) {
  const Grid& g = boundary_data.grid;
  g.validate();
  for (int a = 0; a < g.dim; ++a)
    if (g.periodic[a]) fail(Err::InvalidConfig, "interpolation runs on bounded boxes");
  if (warm && !warm->grid.same_layout(g))
    fail(Err::InvalidConfig, "warm start must share the boundary-data layout");

  const std::size_t n = g.node_count();
  std::vector<double> u(n, 0.0);
  std::vector<std::uint8_t> pinned(n, 0);
  double bsum = 0.0;
  std::size_t bcount = 0;
  for_each_node(g, [&](const Idx& id, std::size_t s) {
    bool bd = false;
    for (int a = 0; a < g.dim; ++a)
      if (id[a] == 0 || id[a] == g.nodes(a) - 1) bd = true;
    if (bd) {
      pinned[s] = 1;
      u[s] = boundary_data.values[s];
      bsum += u[s];
      ++bcount;
    }
  });
  const double init = bsum / static_cast<double>(bcount);
  for (std::size_t s = 0; s < n; ++s)
    if (!pinned[s]) u[s] = warm ? warm->values[s] : init;

  const RingGeom ring = ring_geometry(g, cone);

  const int n0 = g.nodes(0);
  const int n1 = g.dim > 1 ? g.nodes(1) : 1;
  const int n2 = g.dim > 2 ? g.nodes(2) : 1;
  int sweeps = 0;
  double change = kInf;
  while (sweeps < params.max_sweeps) {
    double cycle = 0.0;
    for (int ord = 0; ord < (1 << g.dim); ++ord) {
      const bool f0 = ord & 1, f1 = ord & 2, f2 = ord & 4;
      for (int kk = 0; kk < n2; ++kk) {
        const int k = f2 ? kk : n2 - 1 - kk;
        for (int jj = 0; jj < n1; ++jj) {
          const int j = f1 ? jj : n1 - 1 - jj;
          for (int ii = 0; ii < n0; ++ii) {
            const int i = f0 ? ii : n0 - 1 - ii;
            const std::size_t s = g.lin(Idx{i, j, k});
            if (pinned[s]) continue;
            const double t = cone.gauge_form ? relax_gauge(u, s, ring)
                                             : relax_bisect(u, s, ring, cone);
            cycle = std::max(cycle, std::fabs(t - u[s]));
            u[s] = t;
          }
        }
      }
      ++sweeps;
    }
    change = cycle;
    if (change < params.tol) break;
  }
  if (change >= params.tol)
    fail(Err::NonConvergence, "cone interpolation hit the sweep cap", change);

  AmleResult res;
  res.u = ScalarField(g);
  res.u.values = std::move(u);
  res.unique = !cone.flat; // flat-bottomed cone families lose uniqueness
  res.sweeps = sweeps;
  res.final_change = change;

  if (params.audit) {
    double span = params.audit_mu_span;
    if (span <= 0.0) span = lipschitz_constant(res.u) + 1.0;
    const auto cfgs =
        random_cdf_configs(g, cone.min_lv, span, params.audit_configs, params.audit_seed);
    res.audit = check_cdf(res.u, cone, cfgs);
    double atol = params.audit_tol;
    if (atol < 0.0) {
      // The ring balance leaves each node within tol of its cone envelope;
      // across a window the slack compounds with the node count along a
      // chain, plus a safety floor for accumulated rounding.
      double scale = 1.0;
      for (const double v : res.u.values) scale = std::max(scale, std::fabs(v));
      atol = 100.0 * params.tol * static_cast<double>(g.node_count()) + 1e-12 * scale;
    }
    const double worst = std::max(res.audit.worst_above, res.audit.worst_below);
    if (worst > atol)
      fail(Err::ConstructedFieldRejected, "interpolant failed its cone-comparison audit", worst);
  }
  return res;
}

} // namespace hjhom
