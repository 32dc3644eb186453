#pragma once
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hjhom/grid.hpp"
#include "hjhom/parallel.hpp"

namespace hjhom {

struct ScalarField {
  Grid grid;
  std::vector<double> values;

  ScalarField() = default;
  explicit ScalarField(const Grid& g, double fill = 0.0)
      : grid(g), values(g.node_count(), fill) {}

  double& at(const Idx& i) { return values[grid.lin(i)]; }
  double at(const Idx& i) const { return values[grid.lin(i)]; }
};

struct VectorField {
  Grid grid;
  std::vector<Vec> values;

  VectorField() = default;
  explicit VectorField(const Grid& g) : grid(g), values(g.node_count(), vzero) {}

  Vec& at(const Idx& i) { return values[grid.lin(i)]; }
  const Vec& at(const Idx& i) const { return values[grid.lin(i)]; }
};

// One-sided differences per axis: (backward, forward). Requesting a missing
// neighbor on a bounded axis is a boundary-stencil error, never silently
// one-sided.
std::pair<Vec, Vec> upwind_gradients(const ScalarField& f, const Idx& node);

// Multilinear interpolation; periodic axes wrap, bounded axes reject queries
// outside the node hull.
double interpolate(const ScalarField& f, const Vec& x);
Vec interpolate(const VectorField& f, const Vec& x);

// Max over the window of |H(g_up(node), y(node)) - mu| with the upwind
// gradient chosen per node as the one-sided combination maximizing H
// (Godunov selection for convex H, enumerated over the 2^dim sign choices).
using HamFn = std::function<double(const Vec& p, const Vec& y)>;
double pde_residual(const ScalarField& f, const HamFn& ham, double mu,
                    std::span<const std::size_t> window, Exec exec = Exec::Parallel);

// Nodes inside [lo,hi] (coordinates), excluding a ball around `center` of
// radius `exclude_radius` and a fraction of the bounded-axis extent next to
// each boundary. Used to build report windows.
std::vector<std::size_t> window_nodes(const Grid& g, const Vec& lo, const Vec& hi,
                                      const Vec& center, double exclude_radius,
                                      double boundary_margin_frac);

bool all_finite(const ScalarField& f);
double max_abs_diff(const ScalarField& a, const ScalarField& b);

// Discrete Lipschitz constant: max over grid edges of |du|/h.
double lipschitz_constant(const ScalarField& f);

// Serialization: two-line text header (magic, JSON layout) followed by one
// value per line at full precision; CSV export carries node coordinates.
void save_field(const ScalarField& f, const std::string& path);
ScalarField load_field(const std::string& path);
void export_csv(const ScalarField& f, const std::string& path);

} // namespace hjhom
