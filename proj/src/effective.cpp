#include "hjhom/effective.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <memory>

#include "json.hpp"

namespace hjhom {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

nlohmann::json grid_to_json(const Grid& g) {
  nlohmann::json j;
  j["dim"] = g.dim;
  j["origin"] = {g.origin[0], g.origin[1], g.origin[2]};
  j["h"] = {g.h[0], g.h[1], g.h[2]};
  j["extent"] = {g.extent[0], g.extent[1], g.extent[2]};
  j["periodic"] = {g.periodic[0], g.periodic[1], g.periodic[2]};
  return j;
}

Grid grid_from_json(const nlohmann::json& j) {
  Grid g;
  g.dim = j.at("dim").get<int>();
  for (int a = 0; a < 3; ++a) {
    g.origin[a] = j.at("origin")[a].get<double>();
    g.h[a] = j.at("h")[a].get<double>();
    g.extent[a] = j.at("extent")[a].get<int>();
    g.periodic[a] = j.at("periodic")[a].get<bool>();
  }
  return g;
}

// Directions used for convexity checks: axes plus in-plane diagonals.
std::vector<Idx> convexity_dirs(int dim) {
  std::vector<Idx> out;
  for (int a = 0; a < dim; ++a) {
    Idx d{0, 0, 0};
    d[a] = 1;
    out.push_back(d);
  }
  for (int a = 0; a < dim; ++a)
    for (int b = a + 1; b < dim; ++b) {
      Idx d{0, 0, 0};
      d[a] = 1; d[b] = 1;
      out.push_back(d);
      d[b] = -1;
      out.push_back(d);
    }
  return out;
}

bool shift_index(const Grid& g, const Idx& i, const Idx& d, int sign, Idx& out) {
  out = i;
  for (int a = 0; a < g.dim; ++a) {
    const int j = i[a] + sign * d[a];
    if (j < 0 || j >= g.nodes(a)) return false;
    out[a] = j;
  }
  return true;
}

} // namespace

void save_table(const HbarTable& t, const std::string& path) {
  nlohmann::json j;
  j["format"] = "hjhom-hbar-table v1";
  j["dim"] = t.dim;
  j["pgrid"] = grid_to_json(t.pgrid);
  j["value"] = t.value;
  j["spread"] = t.spread;
  j["reliable"] = t.reliable;
  j["deltas"] = t.deltas;
  j["seeds"] = t.seeds;
  std::ofstream f(path);
  if (!f) fail(Err::InvalidConfig, "cannot open table path for writing");
  f << j.dump(2) << "\n";
}

HbarTable load_table(const std::string& path) {
  std::ifstream f(path);
  if (!f) fail(Err::InvalidConfig, "cannot open table path for reading");
  nlohmann::json j;
  f >> j;
  if (j.value("format", "") != std::string("hjhom-hbar-table v1"))
    fail(Err::InvalidConfig, "unrecognized table format");
  HbarTable t;
  t.dim = j.at("dim").get<int>();
  t.pgrid = grid_from_json(j.at("pgrid"));
  t.value = j.at("value").get<std::vector<double>>();
  t.spread = j.at("spread").get<std::vector<double>>();
  t.reliable = j.at("reliable").get<std::vector<std::uint8_t>>();
  t.deltas = j.at("deltas").get<std::vector<double>>();
  t.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  if (t.value.size() != t.pgrid.node_count())
    fail(Err::InvalidConfig, "table value count does not match the momentum grid");
  return t;
}

HbarTable build_table(const HamiltonianSpec& spec, const EnvParams& envp,
                      std::span<const std::uint64_t> seeds, const Grid& pgrid,
                      const Grid& ygrid, const TableBuildParams& params) {
  pgrid.validate();
  if (seeds.empty()) fail(Err::InvalidConfig, "need at least one medium seed");
  const std::size_t n = pgrid.node_count();

  HbarTable t;
  t.dim = spec.dim;
  t.pgrid = pgrid;
  t.value.assign(n, 0.0);
  t.spread.assign(n, 0.0);
  t.reliable.assign(n, 1);
  t.deltas = params.deltas;
  t.seeds.assign(seeds.begin(), seeds.end());

  // Serpentine momentum order keeps consecutive nodes adjacent so the
  // warm chain stays useful.
  std::vector<Idx> order;
  order.reserve(n);
  {
    const int n0 = pgrid.nodes(0);
    const int n1 = pgrid.dim > 1 ? pgrid.nodes(1) : 1;
    const int n2 = pgrid.dim > 2 ? pgrid.nodes(2) : 1;
    for (int k = 0; k < n2; ++k)
      for (int jj = 0; jj < n1; ++jj) {
        const int j = (k % 2 == 0) ? jj : n1 - 1 - jj;
        for (int ii = 0; ii < n0; ++ii) {
          const int i = ((jj + k) % 2 == 0) ? ii : n0 - 1 - ii;
          order.push_back(Idx{i, j, k});
        }
      }
  }

  std::vector<double> lo(n, kInf), hi(n, -kInf);
  for (std::uint64_t seed : seeds) {
    const EnvironmentRealization env = sample_environment(spec, envp, seed, ygrid);
    std::vector<ScalarField> warm;
    for (const Idx& pi : order) {
      const Vec p = pgrid.coord(pi);
      HbarPointResult r = hbar_point(spec, env, p, ygrid, params.deltas, params.march,
                                     params.warm_chain ? &warm : nullptr);
      const std::size_t s = pgrid.lin(pi);
      t.value[s] += r.hbar;
      lo[s] = std::min(lo[s], r.hbar);
      hi[s] = std::max(hi[s], r.hbar);
      if (!r.reliable) t.reliable[s] = 0;
    }
  }
  const double inv = 1.0 / static_cast<double>(seeds.size());
  for (std::size_t s = 0; s < n; ++s) {
    t.value[s] *= inv;
    t.spread[s] = hi[s] - lo[s];
  }
  return t;
}

ConvexityReport convexity_report(const HbarTable& t) {
  ConvexityReport rep;
  const auto dirs = convexity_dirs(t.dim);
  for_each_node(t.pgrid, [&](const Idx& i, std::size_t s) {
    for (const Idx& d : dirs) {
      Idx ip, im;
      if (!shift_index(t.pgrid, i, d, +1, ip) || !shift_index(t.pgrid, i, d, -1, im)) continue;
      const double defect = t.value[s] - 0.5 * (t.value[t.pgrid.lin(ip)] + t.value[t.pgrid.lin(im)]);
      ++rep.checks;
      if (defect > rep.max_defect) {
        rep.max_defect = defect;
        rep.where = i;
      }
    }
  });
  return rep;
}

HbarTable convexify(const HbarTable& t) {
  HbarTable out = t;
  const auto dirs = convexity_dirs(t.dim);
  double scale = 1.0;
  for (double v : t.value) scale = std::max(scale, std::fabs(v));
  for (int it = 0; it < 20000; ++it) {
    double worst = 0.0;
    for_each_node(out.pgrid, [&](const Idx& i, std::size_t s) {
      for (const Idx& d : dirs) {
        Idx ip, im;
        if (!shift_index(out.pgrid, i, d, +1, ip) || !shift_index(out.pgrid, i, d, -1, im)) continue;
        const double chord = 0.5 * (out.value[out.pgrid.lin(ip)] + out.value[out.pgrid.lin(im)]);
        if (out.value[s] > chord) {
          worst = std::max(worst, out.value[s] - chord);
          out.value[s] = chord;
        }
      }
    });
    if (worst <= 1e-13 * scale) break;
  }
  return out;
}

ArgminRegion argmin_region(const HbarTable& t, double tol) {
  ArgminRegion reg;
  reg.min_value = *std::min_element(t.value.begin(), t.value.end());
  double hmax = 0.0;
  for (int a = 0; a < t.dim; ++a) hmax = std::max(hmax, t.pgrid.h[a]);
  Vec acc = vzero;
  for_each_node(t.pgrid, [&](const Idx& i, std::size_t s) {
    if (t.value[s] <= reg.min_value + tol) {
      reg.nodes.push_back(i);
      acc = acc + t.pgrid.coord(i);
      for (int a = 0; a < t.dim; ++a)
        if (i[a] == 0 || i[a] == t.pgrid.nodes(a) - 1) reg.touches_boundary = true;
    }
  });
  reg.argmin = acc * (1.0 / static_cast<double>(reg.nodes.size()));
  double diam = 0.0;
  for (const Idx& a : reg.nodes)
    for (const Idx& b : reg.nodes)
      diam = std::max(diam, norm(t.pgrid.coord(a) - t.pgrid.coord(b)));
  reg.flat = diam > 2.0 * hmax;
  return reg;
}

ConeProvider make_table_provider(const HbarTable& raw) {
  // Convexify first: the sublevel hull of the raw values can only shrink
  // under stray bumps, and the envelope is the faithful convex reading.
  auto tbl = std::make_shared<HbarTable>(convexify(raw));
  ConeProvider prov;
  prov.dim = tbl->dim;
  prov.min_lv = *std::min_element(tbl->value.begin(), tbl->value.end());
  {
    const double span = *std::max_element(tbl->value.begin(), tbl->value.end()) - prov.min_lv;
    prov.flat = argmin_region(*tbl, 1e-9 + 1e-6 * span).flat;
  }
  prov.support_fn = [tbl](double mu, const Vec& th) {
    const Grid& g = tbl->pgrid;
    double best = -kInf;
    bool on_boundary = false;
    double vmin = kInf;
    for_each_node(g, [&](const Idx& i, std::size_t s) {
      const double v = tbl->value[s];
      vmin = std::min(vmin, v);
      const Vec p = g.coord(i);
      if (v <= mu) {
        const double d = dot(p, th);
        if (d > best) best = d;
        for (int a = 0; a < g.dim; ++a)
          if (i[a] == 0 || i[a] == g.nodes(a) - 1) on_boundary = true;
      }
      // axis-edge crossings recover the sublevel boundary between nodes
      for (int a = 0; a < g.dim; ++a) {
        if (i[a] + 1 >= g.nodes(a)) continue;
        Idx j = i;
        ++j[a];
        const double w = tbl->value[g.lin(j)];
        if ((v <= mu) == (w <= mu) || v == w) continue;
        const double frac = (mu - v) / (w - v);
        Vec pc = p;
        pc[a] += frac * g.h[a];
        best = std::max(best, dot(pc, th));
      }
    });
    if (best == -kInf)
      fail(Err::EmptySublevel, "level is below the whole table", vmin);
    if (on_boundary)
      fail(Err::RangeTooSmall, "sublevel set reaches the momentum-grid boundary", mu);
    return best;
  };
  return prov;
}

ConeProvider make_homogeneous_provider(std::span<const Vec> dirs, std::span<const double> hbar,
                                       int dim) {
  if (dirs.size() != hbar.size() || dirs.empty())
    fail(Err::InvalidConfig, "direction/value lists must match and be nonempty");
  std::vector<Vec> pts(dirs.size());
  for (std::size_t k = 0; k < dirs.size(); ++k) {
    if (hbar[k] <= 0.0)
      fail(Err::InvalidConfig, "homogeneous level values must be positive", hbar[k]);
    pts[k] = unit(dirs[k]) * (1.0 / hbar[k]); // sublevel at mu is mu * hull(pts)
  }
  ConeProvider prov;
  prov.dim = dim;
  prov.min_lv = 0.0;
  prov.gauge_form = true;
  prov.shift = vzero;
  prov.scale = [](double mu) { return std::max(mu, 0.0); };
  prov.gauge = [pts = std::move(pts)](const Vec& v) {
    double best = 0.0;
    for (const Vec& p : pts) best = std::max(best, dot(p, v));
    return best;
  };
  return prov;
}

namespace {

// Composite Simpson over one period of the periodic integrand.
double simpson_period(const std::function<double(double)>& f, int n) {
  if (n % 2) ++n;
  const double h = 1.0 / n;
  double s = f(0.0) + f(1.0);
  for (int k = 1; k < n; ++k) s += f(k * h) * (k % 2 ? 4.0 : 2.0);
  return s * h / 3.0;
}

double max_on_period(const std::function<double(double)>& V, int n) {
  double m = -kInf;
  for (int k = 0; k <= 4 * n; ++k) m = std::max(m, V(static_cast<double>(k) / (4 * n)));
  return m;
}

} // namespace

double oracle_threshold_separable_1d(const std::function<double(double)>& V, int n) {
  const double vmax = max_on_period(V, n);
  return simpson_period([&](double y) { return std::sqrt(std::max(vmax - V(y), 0.0)); }, n);
}

double oracle_hbar_separable_1d(const std::function<double(double)>& V, double p, int n) {
  const double vmax = max_on_period(V, n);
  const double ap = std::fabs(p);
  auto momentum = [&](double mu) {
    return simpson_period([&](double y) { return std::sqrt(std::max(mu - V(y), 0.0)); }, n);
  };
  if (momentum(vmax) >= ap) return vmax; // flat piece below the threshold
  double lo = vmax, hi = vmax + ap * ap + 1.0;
  for (int it = 0; it < 200 && hi - lo > 1e-14 * (1.0 + hi); ++it) {
    const double mid = 0.5 * (lo + hi);
    (momentum(mid) < ap ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

double oracle_hbar_metric_1d(std::span<const double> values, std::span<const double> probs,
                             double p) {
  if (values.size() != probs.size() || values.empty())
    fail(Err::InvalidConfig, "coefficient law needs matching values/probs");
  double harm = 0.0, total = 0.0;
  for (std::size_t k = 0; k < values.size(); ++k) {
    if (values[k] <= 0.0) fail(Err::DegenerateMedium, "metric coefficients must be positive");
    harm += probs[k] / values[k];
    total += probs[k];
  }
  if (std::fabs(total - 1.0) > 1e-9) fail(Err::InvalidConfig, "law probabilities must sum to 1");
  return std::fabs(p) / harm;
}

HomogResult homogenization_experiment(const HamiltonianSpec& spec, const EnvParams& envp,
                                      std::uint64_t seed, const ConeProvider& cone,
                                      const HomogConfig& cfg) {
  if (cfg.eps.empty()) fail(Err::InvalidConfig, "empty scale list");
  HomogResult res;
  for (double eps : cfg.eps) {
    if (eps <= 0.0 || eps > 1.0) fail(Err::InvalidConfig, "scales must lie in (0, 1]", eps);
    const double hw_macro = cfg.window + cfg.margin;
    const double hw_micro = hw_macro / eps;
    int cells = static_cast<int>(std::ceil(2.0 * hw_micro / cfg.h_micro));
    if (cells % 2) ++cells;
    Grid g;
    g.dim = spec.dim;
    for (int a = 0; a < spec.dim; ++a) {
      g.h[a] = cfg.h_micro;
      g.extent[a] = cells;
      g.origin[a] = -0.5 * cells * cfg.h_micro;
      g.periodic[a] = false;
    }
    g.validate();

    const EnvironmentRealization env = sample_environment(spec, envp, seed, g);
    const DistanceField d = solve_distance(spec, env, cfg.mu, vzero, g, cfg.sweep);
    const DistanceField r = rescale_distance(d, eps);

    double err = 0.0;
    bool any = false;
    for_each_node(r.field.grid, [&](const Idx& id, std::size_t s) {
      const Vec x = r.field.grid.coord(id);
      for (int a = 0; a < spec.dim; ++a)
        if (std::fabs(x[a]) > cfg.window) return;
      err = std::max(err, std::fabs(r.field.values[s] - cone.value(cfg.mu, x)));
      any = true;
    });
    if (!any) fail(Err::EmptyWindow, "comparison window misses every rescaled node");
    res.eps.push_back(eps);
    res.sup_err.push_back(err);
  }
  res.final_err = res.sup_err.back();
  res.decreasing = true;
  for (std::size_t k = 1; k < res.sup_err.size(); ++k)
    if (res.sup_err[k] > res.sup_err[k - 1] * 1.15 + 1e-6) res.decreasing = false;
  return res;
}

} // namespace hjhom
