#include "hjhom/field.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

namespace hjhom {

std::pair<Vec, Vec> upwind_gradients(const ScalarField& f, const Idx& node) {
  Vec back = vzero, fwd = vzero;
  const Grid& g = f.grid;
  const double u = f.at(node);
  for (int a = 0; a < g.dim; ++a) {
    Idx nb;
    if (!g.neighbor(node, a, -1, nb))
      fail(Err::BoundaryStencil, "backward difference off the grid on axis " + std::to_string(a));
    back[a] = (u - f.at(nb)) / g.h[a];
    if (!g.neighbor(node, a, +1, nb))
      fail(Err::BoundaryStencil, "forward difference off the grid on axis " + std::to_string(a));
    fwd[a] = (f.at(nb) - u) / g.h[a];
  }
  return {back, fwd};
}

namespace {

// Locate x along axis a: base node index i0 and fraction t in [0,1].
// Returns false for out-of-hull queries on bounded axes.
bool locate(const Grid& g, int a, double x, int& i0, double& t) {
  double s = (x - g.origin[a]) / g.h[a];
  if (g.periodic[a]) {
    const double e = static_cast<double>(g.extent[a]);
    s -= std::floor(s / e) * e; // into [0, e)
    if (s >= e) s = 0.0;
    i0 = static_cast<int>(std::floor(s));
    if (i0 >= g.extent[a]) i0 = g.extent[a] - 1;
    t = s - i0;
    return true;
  }
  const double e = static_cast<double>(g.extent[a]);
  const double slack = 1e-9 * std::max(1.0, e);
  if (s < -slack || s > e + slack) return false;
  s = std::clamp(s, 0.0, e);
  i0 = std::min(static_cast<int>(std::floor(s)), g.extent[a] - 1);
  t = s - i0;
  return true;
}

template <class FieldT, class ValueT>
ValueT interp_impl(const FieldT& f, const Vec& x, const ValueT& zero) {
  const Grid& g = f.grid;
  int base[3] = {0, 0, 0};
  double frac[3] = {0.0, 0.0, 0.0};
  for (int a = 0; a < g.dim; ++a) {
    if (!locate(g, a, x[a], base[a], frac[a]))
      fail(Err::OutOfDomain, "interpolation query outside the grid hull on axis " + std::to_string(a));
  }
  const int corners = 1 << g.dim;
  ValueT acc = zero;
  for (int c = 0; c < corners; ++c) {
    double w = 1.0;
    Idx idx{0, 0, 0};
    for (int a = 0; a < g.dim; ++a) {
      const int up = (c >> a) & 1;
      w *= up ? frac[a] : 1.0 - frac[a];
      int i = base[a] + up;
      if (g.periodic[a]) i = g.wrap(i, a);
      idx[a] = i;
    }
    if (w == 0.0) continue;
    if constexpr (std::is_same_v<ValueT, double>) {
      acc += w * f.at(idx);
    } else {
      acc = acc + w * f.at(idx);
    }
  }
  return acc;
}

} // namespace

double interpolate(const ScalarField& f, const Vec& x) { return interp_impl(f, x, 0.0); }
Vec interpolate(const VectorField& f, const Vec& x) { return interp_impl(f, x, vzero); }

double pde_residual(const ScalarField& f, const HamFn& ham, double mu,
                    std::span<const std::size_t> window, Exec exec) {
  if (window.empty()) fail(Err::EmptyWindow, "pde_residual needs a nonempty window");
  const Grid& g = f.grid;
  std::vector<double> res(window.size(), 0.0);
  parallel_for(window.size(), exec, [&](std::size_t w) {
    const Idx node = g.unlin(window[w]);
    auto [back, fwd] = upwind_gradients(f, node);
    const Vec y = g.coord(node);
    const int combos = 1 << g.dim;
    double hmax = -std::numeric_limits<double>::infinity();
    for (int c = 0; c < combos; ++c) {
      Vec p = vzero;
      for (int a = 0; a < g.dim; ++a) p[a] = ((c >> a) & 1) ? fwd[a] : back[a];
      hmax = std::max(hmax, ham(p, y));
    }
    res[w] = std::abs(hmax - mu);
  });
  return *std::max_element(res.begin(), res.end());
}

std::vector<std::size_t> window_nodes(const Grid& g, const Vec& lo, const Vec& hi,
                                      const Vec& center, double exclude_radius,
                                      double boundary_margin_frac) {
  std::vector<std::size_t> out;
  const double r2 = exclude_radius * exclude_radius;
  for_each_node(g, [&](const Idx& i, std::size_t s) {
    const Vec x = g.coord(i);
    for (int a = 0; a < g.dim; ++a) {
      if (x[a] < lo[a] - 1e-12 || x[a] > hi[a] + 1e-12) return;
      if (!g.periodic[a]) {
        const int margin = static_cast<int>(std::ceil(boundary_margin_frac * g.extent[a]));
        if (i[a] < margin || i[a] > g.extent[a] - margin) return;
      }
    }
    if (exclude_radius > 0.0 && norm2(x - center) < r2) return;
    out.push_back(s);
  });
  return out;
}

bool all_finite(const ScalarField& f) {
  for (double v : f.values)
    if (!std::isfinite(v)) return false;
  return true;
}

double max_abs_diff(const ScalarField& a, const ScalarField& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i)
    m = std::max(m, std::abs(a.values[i] - b.values[i]));
  return m;
}

double lipschitz_constant(const ScalarField& f) {
  const Grid& g = f.grid;
  double lip = 0.0;
  for_each_node(g, [&](const Idx& i, std::size_t s) {
    for (int a = 0; a < g.dim; ++a) {
      Idx nb;
      if (g.neighbor(i, a, +1, nb))
        lip = std::max(lip, std::abs(f.values[g.lin(nb)] - f.values[s]) / g.h[a]);
    }
  });
  return lip;
}

namespace {

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

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
  g.validate();
  return g;
}

} // namespace

void save_field(const ScalarField& f, const std::string& path) {
  std::ofstream os(path);
  if (!os) fail(Err::InvalidConfig, "cannot open " + path + " for writing");
  nlohmann::json hdr = grid_to_json(f.grid);
  hdr["count"] = f.values.size();
  os << "hjhom-field v1\n" << hdr.dump() << "\n";
  for (double v : f.values) os << fmt_double(v) << "\n";
}

ScalarField load_field(const std::string& path) {
  std::ifstream is(path);
  if (!is) fail(Err::InvalidConfig, "cannot open " + path);
  std::string magic, hdr;
  std::getline(is, magic);
  if (magic != "hjhom-field v1") fail(Err::InvalidConfig, path + ": not a field file");
  std::getline(is, hdr);
  nlohmann::json j = nlohmann::json::parse(hdr);
  ScalarField f(grid_from_json(j));
  const std::size_t count = j.at("count").get<std::size_t>();
  if (count != f.values.size()) fail(Err::InvalidConfig, path + ": header count mismatch");
  for (std::size_t i = 0; i < count; ++i) {
    std::string line;
    if (!std::getline(is, line)) fail(Err::InvalidConfig, path + ": truncated payload");
    f.values[i] = std::strtod(line.c_str(), nullptr);
  }
  return f;
}

void export_csv(const ScalarField& f, const std::string& path) {
  std::ofstream os(path);
  if (!os) fail(Err::InvalidConfig, "cannot open " + path + " for writing");
  const char* names[3] = {"x", "y", "z"};
  for (int a = 0; a < f.grid.dim; ++a) os << names[a] << ",";
  os << "value\n";
  for_each_node(f.grid, [&](const Idx& i, std::size_t s) {
    const Vec x = f.grid.coord(i);
    for (int a = 0; a < f.grid.dim; ++a) os << fmt_double(x[a]) << ",";
    os << fmt_double(f.values[s]) << "\n";
  });
}

} // namespace hjhom
