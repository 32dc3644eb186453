#include "hjhom/eikonal.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>

#include "json.hpp"

namespace hjhom {

namespace {

constexpr double kRayCap = 1e7;
constexpr double kInf = std::numeric_limits<double>::infinity();

// Golden-section minimum of a convex g on [lo, hi]; early exit once a value
// at or below `target` is seen (we only need feasibility, not the true min).
template <class G>
double golden_min(const G& g, double lo, double hi, double target, double* arg) {
  const double r = 0.5 * (std::sqrt(5.0) - 1.0);
  double a = lo, b = hi;
  double x1 = b - r * (b - a), x2 = a + r * (b - a);
  double f1 = g(x1), f2 = g(x2);
  double best = f1 < f2 ? f1 : f2;
  double bx = f1 < f2 ? x1 : x2;
  for (int it = 0; it < 120 && best > target; ++it) {
    if (f1 < f2) {
      b = x2; x2 = x1; f2 = f1;
      x1 = b - r * (b - a); f1 = g(x1);
    } else {
      a = x1; x1 = x2; f1 = f2;
      x2 = a + r * (b - a); f2 = g(x2);
    }
    if (f1 < best) { best = f1; bx = x1; }
    if (f2 < best) { best = f2; bx = x2; }
    if (b - a < 1e-13 * (1.0 + b)) break;
  }
  if (arg) *arg = bx;
  return best;
}

struct RaySeg {
  bool hit = false;
  double tminus = 0.0, tplus = 0.0;
  double best_g = kInf, best_t = 0.0; // closest approach when the ray misses
};

// {t >= 0 : g(t) <= mu} for convex g; a single interval [tminus, tplus].
template <class G>
RaySeg ray_segment(const G& g, double mu, double hint, double tol) {
  RaySeg seg;
  double tf = -1.0;
  double g0 = g(0.0);
  seg.best_g = g0;
  seg.best_t = 0.0;
  if (g0 <= mu) tf = 0.0;

  if (tf < 0.0) {
    // Ladder outward until feasible or provably past the minimum.
    double prev_t = 0.0, prev_g = g0;
    double rise_hi = -1.0;
    for (double t = hint / 64.0; t <= kRayCap; t *= 2.0) {
      const double gt = g(t);
      if (gt < seg.best_g) { seg.best_g = gt; seg.best_t = t; }
      if (gt <= mu) { tf = t; break; }
      if (gt > prev_g) { rise_hi = t; break; } // convex: the min sits in [0, t]
      prev_t = t; prev_g = gt;
    }
    (void)prev_t;
    if (tf < 0.0 && rise_hi > 0.0) {
      double arg = 0.0;
      const double m = golden_min(g, 0.0, rise_hi, mu, &arg);
      if (m < seg.best_g) { seg.best_g = m; seg.best_t = arg; }
      if (m <= mu) tf = arg;
    }
    if (tf < 0.0 && rise_hi < 0.0 && prev_g > mu)
      fail(Err::CoercivityViolation, "ray values keep falling past the search cap", prev_g);
  }
  if (tf < 0.0) return seg;

  seg.hit = true;
  // Upper endpoint: expand past the sublevel set, then bisect.
  double lo = tf, hi = std::max(2.0 * tf, hint);
  while (g(hi) <= mu) {
    lo = hi;
    hi *= 2.0;
    if (hi > kRayCap)
      fail(Err::CoercivityViolation, "sublevel set extends past the search cap", hi);
  }
  for (int it = 0; it < 200 && hi - lo > tol * (1.0 + hi); ++it) {
    const double mid = 0.5 * (lo + hi);
    (g(mid) <= mu ? lo : hi) = mid;
  }
  seg.tplus = 0.5 * (lo + hi);

  // Lower endpoint: 0 when the origin is inside, else bisect [0, tf].
  if (g0 <= mu) {
    seg.tminus = 0.0;
  } else {
    double a = 0.0, b = tf;
    for (int it = 0; it < 200 && b - a > tol * (1.0 + b); ++it) {
      const double mid = 0.5 * (a + b);
      (g(mid) > mu ? a : b) = mid;
    }
    seg.tminus = 0.5 * (a + b);
  }
  return seg;
}

Vec cross(const Vec& a, const Vec& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

} // namespace

double cone_support(const PFn& H, int dim, double mu, const Vec& theta, double tol) {
  const double tn = norm(theta);
  if (tn == 0.0) return 0.0;
  const Vec th = theta * (1.0 / tn);
  const double hint = 1.0 + std::sqrt(std::max(mu, 0.0) + 1.0);
  const double ttol = std::max(tol, 1e-13);

  double best_miss = kInf; // closest approach, for the exact-minimum rescue
  double best_miss_val = 0.0;
  bool any_hit = false;
  double best = -kInf;

  auto contribution = [&](const Vec& phi) -> double {
    auto g = [&](double t) { return H(phi * t); };
    const RaySeg seg = ray_segment(g, mu, hint, ttol);
    if (!seg.hit) {
      if (seg.best_g < best_miss) {
        best_miss = seg.best_g;
        best_miss_val = seg.best_t * dot(phi, th);
      }
      return -kInf;
    }
    any_hit = true;
    const double dv = dot(phi, th);
    return dv >= 0.0 ? seg.tplus * dv : seg.tminus * dv;
  };

  if (dim == 1) {
    const double c1 = contribution({1.0, 0.0, 0.0});
    const double c2 = contribution({-1.0, 0.0, 0.0});
    best = std::max(c1, c2);
  } else if (dim == 2) {
    auto dir = [](double a) -> Vec { return {std::cos(a), std::sin(a), 0.0}; };
    const int M = 48;
    const double step = 2.0 * M_PI / M;
    int bk = 0;
    for (int k = 0; k < M; ++k) {
      const double c = contribution(dir(k * step));
      if (c > best) { best = c; bk = k; }
    }
    if (any_hit) {
      // Scan-refine the angle bracket around the winner.
      double lo = (bk - 1) * step, hi = (bk + 1) * step;
      for (int round = 0; round < 4; ++round) {
        const int S = 9;
        double bx = lo, bv = -kInf;
        for (int s = 0; s <= S; ++s) {
          const double a = lo + (hi - lo) * s / S;
          const double c = contribution(dir(a));
          if (c > bv) { bv = c; bx = a; }
        }
        if (bv > best) best = bv;
        const double w = (hi - lo) / S;
        lo = bx - w;
        hi = bx + w;
      }
    }
  } else {
    // Coarse latitude/longitude mesh, then a pattern search on the sphere.
    std::vector<Vec> mesh;
    mesh.push_back({0.0, 0.0, 1.0});
    mesh.push_back({0.0, 0.0, -1.0});
    for (int la = 1; la <= 6; ++la) {
      const double ph = M_PI * la / 7.0;
      for (int lo = 0; lo < 12; ++lo) {
        const double az = 2.0 * M_PI * lo / 12.0;
        mesh.push_back({std::sin(ph) * std::cos(az), std::sin(ph) * std::sin(az), std::cos(ph)});
      }
    }
    Vec bphi = mesh[0];
    for (const Vec& phi : mesh) {
      const double c = contribution(phi);
      if (c > best) { best = c; bphi = phi; }
    }
    if (any_hit) {
      double stepw = 0.5;
      for (int it = 0; it < 80 && stepw > 2e-3; ++it) {
        const Vec axis = std::fabs(bphi[0]) < 0.9 ? Vec{1, 0, 0} : Vec{0, 1, 0};
        const Vec e1 = unit(cross(bphi, axis));
        const Vec e2 = unit(cross(bphi, e1));
        bool moved = false;
        for (const Vec& d : {e1, -e1, e2, -e2}) {
          const Vec cand = unit(bphi + d * stepw);
          const double c = contribution(cand);
          if (c > best) { best = c; bphi = cand; moved = true; }
        }
        if (!moved) stepw *= 0.6;
      }
    }
  }

  if (!any_hit) {
    if (best_miss <= mu + 1e-9 * (1.0 + std::fabs(mu)))
      return tn * best_miss_val; // sublevel set is (numerically) a single point
    fail(Err::EmptySublevel, "level is below the minimum of the Hamiltonian", best_miss);
  }
  return tn * best;
}

double ConeProvider::support(double mu, const Vec& theta) const {
  if (mu < min_lv - 1e-9 * (1.0 + std::fabs(min_lv)))
    fail(Err::EmptySublevel, "level is below the minimum of the Hamiltonian", mu);
  if (norm(theta) == 0.0) return 0.0;
  if (gauge_form) return dot(shift, theta) + scale(std::max(mu, min_lv)) * gauge(theta);
  return support_fn(std::max(mu, min_lv), theta);
}

double ConeProvider::value(double mu, const Vec& v) const {
  return support(mu, v); // support is positively 1-homogeneous: h(v) = |v| h(v/|v|)
}

ConeProvider make_ponly_provider(const HamiltonianSpec& spec) {
  if (spec.kind != HamKind::POnly)
    fail(Err::InvalidConfig, "closed-form cone provider needs a p-only Hamiltonian");
  if (spec.ponly.power != 1.0 && spec.ponly.power != 2.0)
    fail(Err::InvalidConfig, "p-only power must be 1 or 2", spec.ponly.power);
  ConeProvider prov;
  prov.dim = spec.dim;
  prov.min_lv = 0.0;
  prov.gauge_form = true;
  prov.shift = spec.ponly.shift;
  const double pw = spec.ponly.power;
  prov.scale = [pw](double mu) {
    const double m = std::max(mu, 0.0);
    return pw == 1.0 ? m : std::sqrt(m);
  };
  const Vec diag = spec.ponly.diag;
  const int dim = spec.dim;
  for (int a = 0; a < dim; ++a)
    if (diag[a] <= 0.0) fail(Err::InvalidConfig, "p-only diagonal must be positive", diag[a]);
  prov.gauge = [diag, dim](const Vec& v) {
    double s = 0.0;
    for (int a = 0; a < dim; ++a) s += v[a] * v[a] / diag[a];
    return std::sqrt(s);
  };
  // generic path kept for cross-checks
  POnlyParams q = spec.ponly;
  prov.support_fn = [q, dim](double mu, const Vec& th) {
    EvalPOnly H{q, dim};
    return cone_support([&H](const Vec& p) { return H(p, 0); }, dim, mu, th, 1e-11);
  };
  return prov;
}

ConeProvider make_pfn_provider(const PFn& H, int dim, double tol) {
  ConeProvider prov;
  prov.dim = dim;
  // Pattern-search the minimum of the (convex) evaluator so level checks work.
  Vec p = vzero;
  double val = H(p);
  double step = 1.0;
  for (int it = 0; it < 400 && step > 1e-10; ++it) {
    bool moved = false;
    for (int a = 0; a < dim; ++a) {
      for (double s : {step, -step}) {
        Vec q = p;
        q[a] += s;
        const double v = H(q);
        if (v < val) { val = v; p = q; moved = true; }
      }
    }
    if (!moved) step *= 0.5;
  }
  prov.min_lv = val;
  prov.support_fn = [H, dim, tol](double mu, const Vec& th) {
    return cone_support(H, dim, mu, th, tol);
  };
  return prov;
}

namespace {

// Shared candidate formula for one node: central-difference argument (clamped
// into the working box so transient large values cannot blow up superlinear
// Hamiltonians) plus the sigma-weighted neighbor average.
template <class Eval>
inline double lf_candidate_impl(const Eval& H, std::size_t s, int dim, const double* up,
                                const double* um, const Vec& h, const Vec& sigma, double den,
                                double mu, const Vec& poff, double clamp_r) {
  double corr = 0.0;
  Vec q = poff;
  for (int a = 0; a < dim; ++a) {
    const double qa = poff[a] + (up[a] - um[a]) / (2.0 * h[a]);
    q[a] = std::clamp(qa, -clamp_r, clamp_r);
    corr += sigma[a] * (up[a] + um[a]) / (2.0 * h[a]);
  }
  return (mu - H(q, s) + corr) / den;
}

// One Gauss-Seidel pass in the given axis-direction ordering; returns the
// largest decrease. Min-update only, so iterates fall monotonically from the
// large initial value onto the solution.
template <class Eval>
double sweep_pass(const Grid& g, std::vector<double>& u, const std::vector<std::uint8_t>& frozen,
                  const Eval& H, const Vec& sigma, double den, double mu, const Vec& poff,
                  double clamp_r, int ord) {
  const int dim = g.dim;
  const int n0 = g.nodes(0);
  const int n1 = dim > 1 ? g.nodes(1) : 1;
  const int n2 = dim > 2 ? g.nodes(2) : 1;
  const bool f0 = ord & 1, f1 = ord & 2, f2 = ord & 4;
  double change = 0.0;
  for (int kk = 0; kk < n2; ++kk) {
    const int k = f2 ? kk : n2 - 1 - kk;
    for (int jj = 0; jj < n1; ++jj) {
      const int j = f1 ? jj : n1 - 1 - jj;
      for (int ii = 0; ii < n0; ++ii) {
        const int i = f0 ? ii : n0 - 1 - ii;
        const Idx id{i, j, k};
        const std::size_t s = g.lin(id);
        if (frozen[s]) continue;
        double up[3], um[3];
        bool interior = true;
        for (int a = 0; a < dim; ++a) {
          Idx nb;
          if (!g.neighbor(id, a, +1, nb)) { interior = false; break; }
          up[a] = u[g.lin(nb)];
          if (!g.neighbor(id, a, -1, nb)) { interior = false; break; }
          um[a] = u[g.lin(nb)];
        }
        if (!interior) continue; // bounded-face nodes close via extrapolation
        const double unew =
            lf_candidate_impl(H, s, dim, up, um, g.h, sigma, den, mu, poff, clamp_r);
        if (unew < u[s]) {
          change = std::max(change, u[s] - unew);
          u[s] = unew;
        }
      }
    }
  }
  return change;
}

template <class F>
void for_each_face_node(const Grid& g, int axis, int side, F&& f) {
  const int pin = side == 0 ? 0 : g.nodes(axis) - 1;
  int n[3] = {g.nodes(0), g.dim > 1 ? g.nodes(1) : 1, g.dim > 2 ? g.nodes(2) : 1};
  n[axis] = 1;
  for (int k = 0; k < n[2]; ++k)
    for (int j = 0; j < n[1]; ++j)
      for (int i = 0; i < n[0]; ++i) {
        Idx id{i, j, k};
        id[axis] = pin;
        f(id);
      }
}

// Outflow closure on bounded faces: u_b <- min(u_b, 2 u_1 - u_2).
void boundary_pass(const Grid& g, std::vector<double>& u, const std::vector<std::uint8_t>& frozen) {
  for (int a = 0; a < g.dim; ++a) {
    if (g.periodic[a]) continue;
    const int last = g.nodes(a) - 1;
    for (int side = 0; side < 2; ++side) {
      const int step = side == 0 ? 1 : -1;
      for_each_face_node(g, a, side, [&](const Idx& id) {
        const std::size_t s = g.lin(id);
        if (frozen[s]) return;
        Idx i1 = id, i2 = id;
        i1[a] += step;
        i2[a] += 2 * step;
        (void)last;
        const double cand = 2.0 * u[g.lin(i1)] - u[g.lin(i2)];
        if (cand < u[s]) u[s] = cand;
      });
    }
  }
}

Idx snap_to_node(const Grid& g, const Vec& x) {
  Idx id{0, 0, 0};
  for (int a = 0; a < g.dim; ++a) {
    const int i = static_cast<int>(std::lround((x[a] - g.origin[a]) / g.h[a]));
    if (g.periodic[a]) {
      id[a] = g.wrap(i, a);
    } else {
      if (i < 0 || i > g.extent[a])
        fail(Err::OutOfDomain, "vertex lies outside the solve box", x[a]);
      id[a] = i;
    }
  }
  return id;
}

} // namespace

double lf_node_candidate(const PFn& H, int dim, const double* up, const double* um, const Vec& h,
                         const Vec& sigma, double mu, const Vec& p_offset, double clamp_r) {
  double den = 0.0;
  for (int a = 0; a < dim; ++a) den += sigma[a] / h[a];
  const auto He = [&H](const Vec& q, std::size_t) { return H(q); };
  return lf_candidate_impl(He, 0, dim, up, um, h, sigma, den, mu, p_offset, clamp_r);
}

DistanceField solve_distance(const HamiltonianSpec& spec, const EnvironmentRealization& env,
                             double mu, const Vec& x0, const Grid& grid,
                             const SweepParams& params) {
  grid.validate();
  if (spec.dim != grid.dim) fail(Err::InvalidConfig, "Hamiltonian/grid dimension mismatch");
  const MediumView view = make_medium_view(spec, env, grid);

  // A subsolution needs a nonempty sublevel set at every point of the box.
  double worst_min = -kInf;
  for (std::size_t s = 0; s < grid.node_count(); ++s)
    worst_min = std::max(worst_min, view_min_over_p(view, s));
  if (mu < worst_min - 1e-12)
    fail(Err::InfeasibleLevel, "level leaves an empty sublevel set somewhere in the box", worst_min);

  // Working gradient range and artificial-viscosity coefficients.
  std::vector<Vec> ys;
  {
    const std::size_t n = grid.node_count();
    const std::size_t stride = std::max<std::size_t>(1, n / 512);
    for (std::size_t s = 0; s < n; s += stride) ys.push_back(grid.coord(grid.unlin(s)));
  }
  const double R = sublevel_radius(spec, env, mu, ys);
  const double poff_n = norm(params.p_offset);
  const double clamp_r = R + 1.0 + poff_n;
  Vec sigma = grad_bound(spec, env, R + 1.0);
  double den = 0.0;
  double hmin = kInf, hmax = 0.0;
  for (int a = 0; a < grid.dim; ++a) {
    sigma[a] *= params.sigma_margin;
    if (sigma[a] <= 0.0) fail(Err::DegenerateMedium, "vanishing gradient bound", sigma[a]);
    den += sigma[a] / grid.h[a];
    hmin = std::min(hmin, grid.h[a]);
    hmax = std::max(hmax, grid.h[a]);
  }

  const double sweep_tol = params.tol < 0.0 ? hmin * hmin * std::max(1.0, std::fabs(mu)) : params.tol;

  // Initialize from a strict supersolution cone: slope just above the largest
  // admissible gradient, in torus L1 distance from the vertex. A flat "large"
  // initialization stalls the sweeps (interior updates are rejected wherever
  // both neighbors still sit on the plateau, so the front crawls one node per
  // cycle); a cone upper bound lets every node descend from the first pass.
  const Idx src = snap_to_node(grid, x0);
  const Vec x0s = grid.coord(src);

  std::vector<double> u(grid.node_count());
  for_each_node(grid, [&](const Idx& id, std::size_t s) {
    double l1 = 0.0;
    for (int a = 0; a < grid.dim; ++a) {
      double da = std::fabs(grid.coord(id)[a] - x0s[a]);
      if (grid.periodic[a]) da = std::min(da, grid.period(a) - da);
      l1 += da;
    }
    u[s] = 1.05 * clamp_r * l1 + 2.0;
  });
  std::vector<std::uint8_t> frozen(grid.node_count(), 0);
  const std::size_t src_lin = grid.lin(src);
  u[src_lin] = 0.0;
  frozen[src_lin] = 1;

  {
    // Freeze a small source ball (never less than the immediate ring) at the
    // coefficient-frozen local cone. The sweeping error grows like the log of
    // the far-field-to-seed radius ratio, so seeding a few cells instead of
    // one recovers most of that factor; the ball is capped well below the
    // domain so coefficient variation inside it stays a grid-scale effect.
    double half_min_ext = kInf;
    for (int a = 0; a < grid.dim; ++a)
      half_min_ext = std::min(half_min_ext, 0.5 * grid.h[a] * grid.extent[a]);
    const double rball = std::min(params.source_ball_h * hmax, 0.25 * half_min_ext);
    const Vec poff = params.p_offset;
    PFn local = [&view, src_lin, poff](const Vec& q) {
      return view_eval(view, poff + q, src_lin);
    };
    Idx m{0, 0, 0};
    for (int a = 0; a < grid.dim; ++a)
      m[a] = std::max(1, static_cast<int>(std::floor(rball / grid.h[a])));
    Idx off{0, 0, 0};
    const int lo1 = grid.dim > 1 ? -m[1] : 0, hi1 = grid.dim > 1 ? m[1] : 0;
    const int lo2 = grid.dim > 2 ? -m[2] : 0, hi2 = grid.dim > 2 ? m[2] : 0;
    for (off[2] = lo2; off[2] <= hi2; ++off[2])
      for (off[1] = lo1; off[1] <= hi1; ++off[1])
        for (off[0] = -m[0]; off[0] <= m[0]; ++off[0]) {
          if (off[0] == 0 && off[1] == 0 && off[2] == 0) continue;
          const bool ring =
              std::abs(off[0]) <= 1 && std::abs(off[1]) <= 1 && std::abs(off[2]) <= 1;
          Vec delta = vzero;
          for (int a = 0; a < grid.dim; ++a) delta[a] = off[a] * grid.h[a];
          if (!ring && norm(delta) > rball) continue;
          Idx id = src;
          bool ok = true;
          for (int a = 0; a < grid.dim; ++a) {
            for (int st = 0; st < std::abs(off[a]) && ok; ++st) {
              Idx nb;
              if (!grid.neighbor(id, a, off[a] > 0 ? +1 : -1, nb)) ok = false;
              else id = nb;
            }
            if (!ok) break;
          }
          if (!ok) continue;
          const std::size_t s = grid.lin(id);
          u[s] = cone_support(local, grid.dim, mu, delta, 1e-11);
          frozen[s] = 1;
        }
  }

  // Gauss-Seidel sweeps over the 2^dim orderings with min-updates.
  DistanceField out;
  out.report.sweep_tol = sweep_tol;
  int sweeps = 0;
  double last_change = kInf;
  bool converged = false;
  dispatch_view(view, [&](auto Heval) {
    while (sweeps < params.max_sweeps && !converged) {
      double cycle = 0.0;
      for (int ord = 0; ord < (1 << grid.dim) && sweeps < params.max_sweeps; ++ord) {
        const double ch = sweep_pass(grid, u, frozen, Heval, sigma, den, mu,
                                     params.p_offset, clamp_r, ord);
        boundary_pass(grid, u, frozen);
        cycle = std::max(cycle, ch);
        ++sweeps;
      }
      last_change = cycle;
      if (cycle < sweep_tol) converged = true;
    }
  });
  if (!converged)
    fail(Err::NonConvergence, "fast sweeping hit the sweep cap", last_change);

  out.field.grid = grid;
  out.field.values = std::move(u);
  out.x0 = x0s;
  out.mu = mu;
  out.p_offset = params.p_offset;
  out.report.sweeps = sweeps;
  out.report.last_change = last_change;
  out.report.converged = converged;
  out.report.sigma = sigma;
  out.report.sublevel_R = R;
  out.report.lipschitz = lipschitz_constant(out.field);
  // Factor-2 envelope over the admissible-slope radius: the discrete field
  // picks up extra steepness at the source ring seam and from the scheme's
  // diffusive slope inflation, both bounded well inside 2x in refinement
  // studies across the catalog.
  out.report.lip_bound = 2.0 * (R + poff_n) + 0.1;

  // Residual window: vertex exclusion takes a physical floor (a tenth of the
  // smallest half-extent) so the reported residual decays under refinement
  // instead of being pinned by the h-scaled ball.
  double half_min = kInf;
  for (int a = 0; a < grid.dim; ++a) half_min = std::min(half_min, 0.5 * grid.h[a] * grid.extent[a]);
  const double r_excl = std::max(5.0 * hmax, 0.1 * half_min);

  // Grid-scale coefficient variation at solution-scale momenta: the pointwise
  // residual of any consistent scheme stays O(kappa) across a coefficient
  // jump, so the accuracy claim must carry it (it vanishes as h -> 0 for
  // Lipschitz media and honestly stays O(1) for checkerboards).
  double kappa = 0.0;
  for (int b = 0; b < grid.dim; ++b)
    for (double sgn : {1.0, -1.0}) {
      Vec phat = vzero;
      phat[b] = sgn * R;
      for_each_node(grid, [&](const Idx& id, std::size_t s) {
        const double hv = view_eval(view, phat, s);
        for (int a = 0; a < grid.dim; ++a) {
          Idx nb;
          if (!grid.neighbor(id, a, +1, nb)) continue;
          kappa = std::max(kappa, std::fabs(view_eval(view, phat, grid.lin(nb)) - hv));
        }
      });
    }

  // Accuracy claim calibrated from refinement studies: diffusive slope
  // inflation contributes ~sigma*h/(2 r) at distance r from the vertex, worst
  // at the window's inner edge; factor 3 gives ~2x headroom over measured
  // residuals for the catalog media.
  const double sigma_max = *std::max_element(sigma.begin(), sigma.begin() + grid.dim);
  out.report.scheme_tol = 3.0 * sigma_max * hmax / r_excl + kappa + 10.0 * sweep_tol;

  // Godunov residual away from the vertex and bounded boundaries. Nodes near
  // the cut locus are masked out first: a distance field has axis-local maxima
  // exactly where fronts meet, the scheme rounds that kink over a few cells,
  // and the pointwise deficit there is O(1) no matter how fine the grid. The
  // masked region is a 3-cell dilation of the discrete peak set, so it shrinks
  // to measure zero under refinement and is empty on outflow boxes.
  std::vector<std::uint8_t> cut(grid.node_count(), 0);
  for_each_node(grid, [&](const Idx& id, std::size_t s) {
    for (int a = 0; a < grid.dim; ++a) {
      Idx np, nm;
      if (!grid.neighbor(id, a, +1, np) || !grid.neighbor(id, a, -1, nm)) continue;
      const auto& uv = out.field.values;
      if (uv[s] >= uv[grid.lin(np)] && uv[s] >= uv[grid.lin(nm)]) { cut[s] = 1; return; }
    }
  });
  for (int pass = 0; pass < 3; ++pass) {
    std::vector<std::uint8_t> grown = cut;
    for_each_node(grid, [&](const Idx& id, std::size_t s) {
      if (cut[s]) return;
      for (int a = 0; a < grid.dim && !grown[s]; ++a)
        for (int st : {+1, -1}) {
          Idx nb;
          if (grid.neighbor(id, a, st, nb) && cut[grid.lin(nb)]) { grown[s] = 1; break; }
        }
    });
    cut.swap(grown);
  }
  Vec lo = grid.origin, hi = grid.origin;
  for (int a = 0; a < grid.dim; ++a) hi[a] = grid.origin[a] + grid.h[a] * grid.extent[a];
  auto window = window_nodes(grid, lo, hi, x0s, r_excl, 0.2);
  std::erase_if(window, [&](std::size_t s) { return cut[s] != 0; });
  out.report.window_size = window.size();
  if (!window.empty()) {
    const Vec poff = params.p_offset;
    HamFn ham = [&spec, &env, poff](const Vec& p, const Vec& y) {
      return eval_h(spec, poff + p, y, env);
    };
    out.report.residual = pde_residual(out.field, ham, mu, window, Exec::Serial);
  }
  return out;
}

DistanceField rescale_distance(const DistanceField& d, double eps) {
  if (eps <= 0.0) fail(Err::InvalidConfig, "rescale factor must be positive", eps);
  DistanceField r = d;
  for (int a = 0; a < d.field.grid.dim; ++a) {
    r.field.grid.origin[a] *= eps;
    r.field.grid.h[a] *= eps;
    r.x0[a] *= eps;
  }
  for (double& v : r.field.values) v *= eps;
  // gradient-scale quantities (residual, scheme_tol, lipschitz, sigma) are
  // invariant: discrete gradients of eps*d(y/eps) on the eps-grid match the
  // original's. Value-scale reports shrink with the field.
  r.report.sweep_tol *= eps;
  r.report.last_change *= eps;
  return r;
}

SubadditivityResult check_subadditivity(const HamiltonianSpec& spec, const EnvironmentRealization& env,
                                        double mu, std::span<const std::array<Vec, 3>> triples,
                                        const Grid& grid, const SweepParams& params) {
  std::map<std::size_t, DistanceField> cache;
  auto solve_at = [&](const Vec& v) -> const DistanceField& {
    const std::size_t key = grid.lin(snap_to_node(grid, v));
    auto it = cache.find(key);
    if (it == cache.end())
      it = cache.emplace(key, solve_distance(spec, env, mu, v, grid, params)).first;
    return it->second;
  };

  SubadditivityResult res;
  for (const auto& t : triples) {
    const DistanceField& dx = solve_at(t[0]);
    const DistanceField& dz = solve_at(t[1]);
    const Vec& y = t[2];
    const double viol = interpolate(dx.field, y) -
                        (interpolate(dx.field, dz.x0) + interpolate(dz.field, y));
    res.per_triple.push_back(viol);
    res.max_violation = std::max(res.max_violation, viol);
  }
  return res;
}

void save_distance(const DistanceField& d, const std::string& base_path) {
  save_field(d.field, base_path + ".field");
  nlohmann::json j;
  j["x0"] = {d.x0[0], d.x0[1], d.x0[2]};
  j["mu"] = d.mu;
  j["p_offset"] = {d.p_offset[0], d.p_offset[1], d.p_offset[2]};
  j["report"] = {
      {"sweep_tol", d.report.sweep_tol},   {"last_change", d.report.last_change},
      {"sweeps", d.report.sweeps},         {"converged", d.report.converged},
      {"residual", d.report.residual},     {"scheme_tol", d.report.scheme_tol},
      {"lipschitz", d.report.lipschitz},   {"lip_bound", d.report.lip_bound},
      {"sublevel_R", d.report.sublevel_R}, {"window_size", d.report.window_size},
  };
  FILE* f = std::fopen((base_path + ".json").c_str(), "w");
  if (!f) fail(Err::InvalidConfig, "cannot open sidecar for writing");
  const std::string s = j.dump(2);
  std::fwrite(s.data(), 1, s.size(), f);
  std::fputc('\n', f);
  std::fclose(f);
}

} // namespace hjhom
