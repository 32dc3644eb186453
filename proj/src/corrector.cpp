#include "hjhom/corrector.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

namespace hjhom {

namespace {

struct Stencil {
  int dim = 1;
  std::array<std::vector<std::int32_t>, 3> up, dn;
  Vec inv_h = vzero;
};

Stencil build_stencil(const Grid& g) {
  Stencil st;
  st.dim = g.dim;
  const std::size_t n = g.node_count();
  for (int a = 0; a < g.dim; ++a) {
    if (!g.periodic[a]) fail(Err::InvalidConfig, "discounted marches need a fully periodic box");
    st.up[a].resize(n);
    st.dn[a].resize(n);
    st.inv_h[a] = 1.0 / g.h[a];
  }
  for_each_node(g, [&](const Idx& id, std::size_t s) {
    for (int a = 0; a < g.dim; ++a) {
      Idx nb;
      g.neighbor(id, a, +1, nb);
      st.up[a][s] = static_cast<std::int32_t>(g.lin(nb));
      g.neighbor(id, a, -1, nb);
      st.dn[a][s] = static_cast<std::int32_t>(g.lin(nb));
    }
  });
  return st;
}

constexpr int kChunks = 64;

// One Jacobi step into `unew`; returns max |unew - u|. Fixed chunking keeps
// the reduction identical for every worker count.
template <class Eval>
double march_step(const Stencil& st, const Eval& H, const Vec& p, const Vec& sigma, double delta,
                  double dt, double clamp_r, const std::vector<double>& u,
                  std::vector<double>& unew, Exec exec) {
  const std::size_t n = u.size();
  std::array<double, kChunks> cmax{};
  parallel_for(kChunks, exec, [&](std::size_t c) {
    const std::size_t lo = n * c / kChunks, hi = n * (c + 1) / kChunks;
    double local = 0.0;
    for (std::size_t s = lo; s < hi; ++s) {
      const double uc = u[s];
      double corr = 0.0;
      Vec q = p;
      for (int a = 0; a < st.dim; ++a) {
        const double b = (uc - u[st.dn[a][s]]) * st.inv_h[a];
        const double f = (u[st.up[a][s]] - uc) * st.inv_h[a];
        q[a] = std::clamp(p[a] + 0.5 * (b + f), -clamp_r, clamp_r);
        corr += 0.5 * sigma[a] * (f - b);
      }
      const double un = uc - dt * (delta * uc + H(q, s) - corr);
      unew[s] = un;
      local = std::max(local, std::fabs(un - uc));
    }
    cmax[c] = local;
  });
  return *std::max_element(cmax.begin(), cmax.end());
}

template <class Eval>
double march_residual(const Stencil& st, const Eval& H, const Vec& p, const Vec& sigma,
                      double delta, double clamp_r, const std::vector<double>& u, Exec exec) {
  const std::size_t n = u.size();
  std::array<double, kChunks> cmax{};
  parallel_for(kChunks, exec, [&](std::size_t c) {
    const std::size_t lo = n * c / kChunks, hi = n * (c + 1) / kChunks;
    double local = 0.0;
    for (std::size_t s = lo; s < hi; ++s) {
      const double uc = u[s];
      double corr = 0.0;
      Vec q = p;
      for (int a = 0; a < st.dim; ++a) {
        const double b = (uc - u[st.dn[a][s]]) * st.inv_h[a];
        const double f = (u[st.up[a][s]] - uc) * st.inv_h[a];
        q[a] = std::clamp(p[a] + 0.5 * (b + f), -clamp_r, clamp_r);
        corr += 0.5 * sigma[a] * (f - b);
      }
      local = std::max(local, std::fabs(delta * uc + H(q, s) - corr));
    }
    cmax[c] = local;
  });
  return *std::max_element(cmax.begin(), cmax.end());
}

} // namespace

DiscountedSolve solve_discounted(const HamiltonianSpec& spec, const EnvironmentRealization& env,
                                 const Vec& p, double delta, const Grid& grid,
                                 const MarchParams& params, const ScalarField* warm) {
  grid.validate();
  if (spec.dim != grid.dim) fail(Err::InvalidConfig, "Hamiltonian/grid dimension mismatch");
  if (delta <= 0.0) fail(Err::InvalidConfig, "discount rate must be positive", delta);
  const MediumView view = make_medium_view(spec, env, grid);
  const Stencil st = build_stencil(grid);
  const std::size_t n = grid.node_count();

  DiscountedSolve out;
  out.delta = delta;
  out.p = p;

  // Crude level bounds from H(p, .) itself.
  double c1 = std::numeric_limits<double>::infinity(), c2 = -c1;
  for (std::size_t s = 0; s < n; ++s) {
    const double h = view_eval(view, p, s);
    c1 = std::min(c1, h);
    c2 = std::max(c2, h);
  }
  out.crude_lo = c1;
  out.crude_hi = c2;

  // Gradient working range at the highest level the solution can see.
  std::vector<Vec> ys;
  {
    const std::size_t stride = std::max<std::size_t>(1, n / 512);
    for (std::size_t s = 0; s < n; s += stride) ys.push_back(grid.coord(grid.unlin(s)));
  }
  const double R = sublevel_radius(spec, env, c2 + 1.0, ys);
  const double clamp_r = params.clamp_override > 0.0 ? params.clamp_override : R + 1.0;
  bool overridden = false;
  for (int a = 0; a < grid.dim; ++a)
    if (params.sigma_override[a] > 0.0) overridden = true;
  Vec sigma = grad_bound(spec, env, clamp_r);
  double rate = delta;
  for (int a = 0; a < grid.dim; ++a) {
    sigma[a] = overridden ? params.sigma_override[a] : sigma[a] * params.sigma_margin;
    if (sigma[a] <= 0.0) fail(Err::DegenerateMedium, "vanishing gradient bound", sigma[a]);
    rate += 2.0 * sigma[a] / grid.h[a];
  }
  const double dt = 1.0 / rate;

  std::vector<double> u;
  if (warm) {
    if (!warm->grid.same_layout(grid)) fail(Err::InvalidConfig, "warm start has a different layout");
    u = warm->values;
  } else {
    u.assign(n, -c2 / delta); // constant subsolution
  }
  std::vector<double> unext(n);

  int steps = 0;
  bool converged = false;
  double change = 0.0;
  dispatch_view(view, [&](auto Heval) {
    while (steps < params.max_steps) {
      change = march_step(st, Heval, p, sigma, delta, dt, clamp_r, u, unext, params.exec);
      u.swap(unext);
      ++steps;
      // max|u_{k+1}-u_k|/dt equals the sup residual of the pre-step iterate,
      // so the change sequence doubles as the residual trace.
      if (params.record_trace) out.residual_trace.push_back(change / dt);
      if (change / dt <= params.tol) { converged = true; break; }
    }
    out.residual = march_residual(st, Heval, p, sigma, delta, clamp_r, u, params.exec);
  });
  if (!converged)
    fail(Err::NonConvergence, "discounted march hit the step cap", change / dt);

  out.v.grid = grid;
  out.v.values = std::move(u);
  out.steps = steps;
  out.converged = converged;
  return out;
}

namespace {

// Visit nodes of the centered window of radius min(1/delta, half-period),
// min-image distances on the torus; returns whether the torus bound was the
// active cap.
template <class F>
bool visit_estimate_window(const DiscountedSolve& s, F&& f) {
  // Average over the whole torus: every node's -delta v(y) is a local level
  // estimate, so widening the window only averages noise down -- while a
  // window that grows with 1/delta sweeps new medium cells in between legs
  // of a schedule and contaminates the delta-trend with window artifacts.
  // The returned flag records when the torus is smaller than the natural
  // 1/delta localization scale (finite-size effects in play).
  const Grid& g = s.v.grid;
  double half = std::numeric_limits<double>::infinity();
  for (int a = 0; a < g.dim; ++a) half = std::min(half, 0.5 * g.period(a));
  for_each_node(g, [&](const Idx&, std::size_t lin) { f(lin); });
  return half < 1.0 / s.delta;
}

} // namespace

double discount_estimate(const DiscountedSolve& s) {
  double sum = 0.0;
  std::size_t count = 0;
  visit_estimate_window(s, [&](std::size_t lin) {
    sum += s.v.values[lin];
    ++count;
  });
  if (count == 0) fail(Err::EmptyWindow, "discount averaging window misses every node");
  return -s.delta * sum / static_cast<double>(count);
}

double subcorrector_upper_bound(const HamiltonianSpec& spec, const EnvironmentRealization& env,
                                const Vec& p, const ScalarField& v) {
  const Grid& g = v.grid;
  const MediumView view = make_medium_view(spec, env, g);
  double ub = -std::numeric_limits<double>::infinity();
  for_each_node(g, [&](const Idx& id, std::size_t s) {
    Vec q = p;
    for (int a = 0; a < g.dim; ++a) {
      Idx nb;
      g.neighbor(id, a, +1, nb);
      const double uf = v.values[g.lin(nb)];
      g.neighbor(id, a, -1, nb);
      const double ub2 = v.values[g.lin(nb)];
      q[a] = p[a] + (uf - ub2) / (2.0 * g.h[a]);
    }
    ub = std::max(ub, view_eval(view, q, s));
  });
  return ub;
}

HbarPointResult hbar_point(const HamiltonianSpec& spec, const EnvironmentRealization& env,
                           const Vec& p, const Grid& grid, std::span<const double> deltas,
                           const MarchParams& params, std::vector<ScalarField>* warm_io) {
  if (deltas.empty()) fail(Err::InvalidConfig, "empty discount schedule");
  for (std::size_t k = 1; k < deltas.size(); ++k)
    if (deltas[k] >= deltas[k - 1])
      fail(Err::InvalidConfig, "discount schedule must strictly decrease", deltas[k]);

  HbarPointResult res;
  if (warm_io) warm_io->resize(deltas.size());
  ScalarField carry;
  for (std::size_t k = 0; k < deltas.size(); ++k) {
    const double d = deltas[k];
    const ScalarField* warm = nullptr;
    ScalarField scaled;
    if (warm_io && (*warm_io)[k].values.size() == grid.node_count()) {
      warm = &(*warm_io)[k]; // same-delta field from a neighboring p
    } else if (!carry.values.empty()) {
      // Previous-delta start: only the constant mode of v scales like -m/delta;
      // the corrector shape riding on it is O(1) and must carry over unscaled
      // (scaling it too injects a shape error the march can only damp at the
      // slow discount rate).
      scaled = carry;
      double mean = 0.0;
      for (double x : scaled.values) mean += x;
      mean /= static_cast<double>(scaled.values.size());
      const double shift = (deltas[k - 1] / d - 1.0) * mean;
      for (double& x : scaled.values) x += shift;
      warm = &scaled;
    }
    DiscountedSolve s = solve_discounted(spec, env, p, d, grid, params, warm);
    res.deltas.push_back(d);
    res.m.push_back(discount_estimate(s));
    res.crude_lo = s.crude_lo;
    res.crude_hi = s.crude_hi;
    double vmin = std::numeric_limits<double>::infinity(), vmax = -vmin;
    res.window_capped = visit_estimate_window(s, [&](std::size_t lin) {
      vmin = std::min(vmin, s.v.values[lin]);
      vmax = std::max(vmax, s.v.values[lin]);
    });
    res.leg_oscillation.push_back(vmax >= vmin ? d * (vmax - vmin) : 0.0);
    res.leg_residual.push_back(s.residual);
    res.leg_steps.push_back(s.steps);
    if (k + 1 == deltas.size())
      res.subcorrector_ub = subcorrector_upper_bound(spec, env, p, s.v);
    if (warm_io) (*warm_io)[k] = s.v;
    carry = std::move(s.v);
  }
  res.m_last = res.m.back();
  res.oscillation = res.leg_oscillation.back();

  const std::size_t nd = res.m.size();
  if (nd == 1) {
    res.hbar = res.m_last;
    return res;
  }
  if (nd == 2) {
    // single-rate extrapolation, flagged unreliable
    const double d0 = res.deltas[0], d1 = res.deltas[1];
    res.hbar = res.m[1] + (res.m[1] - res.m[0]) * d1 / (d0 - d1);
    res.alpha = 1.0;
    return res;
  }

  // Fit m(delta) = hbar + c delta^alpha by least squares, alpha on a grid.
  double best_score = std::numeric_limits<double>::infinity();
  for (double alpha = 0.3; alpha <= 1.0 + 1e-12; alpha += 0.025) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t k = 0; k < nd; ++k) {
      const double x = std::pow(res.deltas[k], alpha);
      sx += x; sy += res.m[k]; sxx += x * x; sxy += x * res.m[k];
    }
    const double det = nd * sxx - sx * sx;
    if (std::fabs(det) < 1e-30) continue;
    const double c = (nd * sxy - sx * sy) / det;
    const double h = (sy - c * sx) / nd;
    double rss = 0.0;
    for (std::size_t k = 0; k < nd; ++k) {
      const double r = res.m[k] - h - c * std::pow(res.deltas[k], alpha);
      rss += r * r;
    }
    const double score = std::sqrt(rss / nd);
    if (score < best_score) {
      best_score = score;
      res.hbar = h;
      res.alpha = alpha;
    }
  }
  res.fit_residual = best_score;
  double spread = 0.0;
  for (std::size_t k = 1; k < nd; ++k)
    spread = std::max(spread, std::fabs(res.m[k] - res.m[0]));
  const double level = std::max(1.0, std::fabs(res.m_last));
  const double tail = std::fabs(res.m[nd - 1] - res.m[nd - 2]);
  // A single power law only explains the sequence when its residual is well
  // under the observed spread.  Random media routinely give non-monotone
  // m(delta) -- the coarsest leg overshoots, then the tail settles -- and
  // there the global fit is dragged by that first leg while the last two
  // points already pin the limit.  Fall back to extrapolating the tail.
  const bool fit_explains = best_score <= std::max(1e-4 * level, 0.05 * spread);
  if (!fit_explains) {
    const double d0 = res.deltas[nd - 2], d1 = res.deltas[nd - 1];
    res.hbar = res.m[nd - 1] + (res.m[nd - 1] - res.m[nd - 2]) * d1 / (d0 - d1);
    res.alpha = 1.0;
  }
  // Tail convergence: with rates delta^alpha, alpha >= 0.3, and a schedule
  // ratio <= 1/3 per leg, the remaining error is at most ~2.3x the last
  // increment, so a small tail bounds the distance to the limit even when
  // no single power law fits the whole schedule.
  const bool converged_tail = tail <= 0.005 * level;
  // Flatness gate: at the smallest delta the discounted level must be
  // y-uniform to 5% of the level, else -delta v still depends on where it
  // is read and no window average deserves the name "level".  (Comparing
  // against the schedule increments instead would pass steeply-trending
  // large-delta schedules whose increments are as large as the oscillation.)
  const bool flat_enough = res.oscillation <= 0.05 * level;
  res.reliable = flat_enough && (fit_explains || converged_tail);
  return res;
}

void save_point_csv(const HbarPointResult& r, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail(Err::InvalidConfig, "cannot open csv path: " + path);
  out << "delta,m,oscillation,residual,steps\n";
  out.precision(17);
  for (std::size_t k = 0; k < r.m.size(); ++k)
    out << r.deltas[k] << ',' << r.m[k] << ',' << r.leg_oscillation[k] << ','
        << r.leg_residual[k] << ',' << r.leg_steps[k] << '\n';
  out << 0.0 << ',' << r.hbar << ',' << r.alpha << ',' << r.fit_residual << ','
      << (r.reliable ? 1 : 0) << '\n';
}

void common_march_frame(const HamiltonianSpec& spec, const EnvironmentRealization& env,
                        const Grid& grid, std::span<const Vec> ps, MarchParams& params) {
  const MediumView view = make_medium_view(spec, env, grid);
  const std::size_t n = grid.node_count();
  double c2 = -std::numeric_limits<double>::infinity();
  for (const Vec& p : ps)
    for (std::size_t s = 0; s < n; ++s) c2 = std::max(c2, view_eval(view, p, s));
  std::vector<Vec> ys;
  const std::size_t stride = std::max<std::size_t>(1, n / 512);
  for (std::size_t s = 0; s < n; s += stride) ys.push_back(grid.coord(grid.unlin(s)));
  const double R = sublevel_radius(spec, env, c2 + 1.0, ys);
  params.clamp_override = R + 1.0;
  const Vec sg = grad_bound(spec, env, R + 1.0);
  for (int a = 0; a < grid.dim; ++a)
    params.sigma_override[a] = sg[a] * params.sigma_margin;
}

MidpointReport p_regularity_report(const HamiltonianSpec& spec, const EnvironmentRealization& env,
                                   std::span<const std::array<Vec, 2>> pairs, double delta,
                                   const Grid& grid, const MarchParams& params) {
  MidpointReport rep;
  const Idx origin_node = [&] {
    Idx id{0, 0, 0};
    for (int a = 0; a < grid.dim; ++a)
      id[a] = grid.wrap(static_cast<int>(std::lround(-grid.origin[a] / grid.h[a])), a);
    return id;
  }();
  // All solves in the report share one numerical Hamiltonian, else the
  // per-p O(sigma h) scheme bias swamps the concavity being measured.
  MarchParams common = params;
  {
    std::vector<Vec> ps;
    for (const auto& pr : pairs) {
      ps.push_back(pr[0]);
      ps.push_back(pr[1]);
      ps.push_back((pr[0] + pr[1]) * 0.5);
    }
    common_march_frame(spec, env, grid, ps, common);
  }
  auto v_at = [&](const Vec& p) {
    const DiscountedSolve s = solve_discounted(spec, env, p, delta, grid, common);
    return s.v.at(origin_node);
  };
  for (const auto& pr : pairs) {
    MidpointCheck c;
    c.p = pr[0];
    c.q = pr[1];
    c.vp = v_at(c.p);
    c.vq = v_at(c.q);
    c.vmid = v_at((c.p + c.q) * 0.5);
    c.defect = 0.5 * (c.vp + c.vq) - c.vmid;
    const double sep = norm(c.p - c.q);
    c.quotient = sep > 0.0 ? delta * std::fabs(c.vp - c.vq) / sep : 0.0;
    rep.worst_defect = std::max(rep.worst_defect, c.defect);
    rep.worst_quotient = std::max(rep.worst_quotient, c.quotient);
    rep.checks.push_back(c);
  }
  return rep;
}

} // namespace hjhom
