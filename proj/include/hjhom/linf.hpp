#pragma once
#include <cstdint>
#include <span>
#include <vector>

#include "hjhom/effective.hpp"

namespace hjhom {

// Effective Lagrangian on a velocity grid via a discrete Legendre transform
// of the level table. +inf marks velocities whose maximizer hit the momentum
// grid boundary (the transform is untrusted there).
struct LagrangianTable {
  int dim = 1;
  Grid qgrid;
  std::vector<double> value;

  double at(const Idx& i) const { return value[qgrid.lin(i)]; }
};
LagrangianTable legendre(const HbarTable& t, const Grid& qgrid);

// u(x) = max over nodes y of g(y) - t L((y - x)/t), on a bounded grid.
// Velocities off the table or marked +inf are excluded; a point with no
// admissible velocity at all is a reachability error. t = 0 is the identity.
ScalarField hopf_lax(const ScalarField& g, const LagrangianTable& L, double t,
                     Exec exec = Exec::Parallel);

// Convexity defects of sampled (t, v) data: each interior time is compared
// against the chord through its neighbors with general spacing weights.
struct ConvexityCheck {
  double max_defect = 0.0; // positive = convexity violation
  int worst_index = -1;
};
ConvexityCheck convexity_criterion(std::span<const double> times, std::span<const double> values);

// Evolution form: runs the max-evolution over the time ladder and checks the
// per-probe value sequences; time 0 stands for the initial field itself.
struct EvolutionConvexity {
  double max_defect = 0.0;
  int worst_probe = -1;
  int worst_index = -1;
};
EvolutionConvexity convexity_criterion(const ScalarField& u, const LagrangianTable& L,
                                       std::span<const double> times, std::span<const Vec> probes,
                                       Exec exec = Exec::Parallel);

// Comparison with the cone family on ball windows. The cone vertex must lie
// outside the open window (a vertex inside is an invalid config); the window
// boundary is a 1.5-grid-step shell of the ball. Positive excess means an
// interior max (above side) or interior min (below side) beat the boundary:
// the comparison principle failed there.
struct CdfConfig {
  Vec center = vzero;   // window ball center
  double radius = 0.0;  // window ball radius
  Vec x0 = vzero;       // cone vertex, outside the window (may leave the box)
  double mu = 0.0;      // cone level
};
struct CdfReport {
  double worst_above = 0.0;
  double worst_below = 0.0;
  int worst_above_index = -1; // witnessing configs
  int worst_below_index = -1;
  std::vector<double> above, below; // per config
};
CdfReport check_cdf(const ScalarField& u, const ConeProvider& cone,
                    std::span<const CdfConfig> configs);

// Random well-posed configs: window balls stay inside the box, vertices are
// sampled in the box but off the window, and levels follow a geometric mesh
// above the cone family's minimum level.
std::vector<CdfConfig> random_cdf_configs(const Grid& g, double min_lv, double mu_span,
                                          int count, std::uint64_t seed);

// Absolutely minimizing interpolation of boundary data with respect to the
// cone family: interior nodes relax to the value balancing the tightest
// cone from above against the tightest cone from below over the neighbor
// ring. Cones with shift/scale/gauge structure use the exact pairwise
// balance; general cones bisect on the level. The output is audited against
// the cone comparison on random windows and rejected if it fails.
struct AmleParams {
  double tol = 1e-11;
  int max_sweeps = 100000;
  bool audit = true;           // post-hoc comparison check on random windows
  int audit_configs = 100;
  double audit_tol = -1.0;     // < 0: auto, scaled to sweep tol and field size
  double audit_mu_span = -1.0; // < 0: auto = Lipschitz(u) + 1 above the min level
  std::uint64_t audit_seed = 0x5EEDu;
};
struct AmleResult {
  ScalarField u;
  bool unique = true;   // false when the cone family has a flat bottom
  int sweeps = 0;
  double final_change = 0.0;
  CdfReport audit;      // empty when the audit is disabled
};
// warm, when given on the same layout, seeds the interior iterate (boundary
// values still come from boundary_data); a coarse-to-fine cascade cuts the
// sweep count dramatically on fine grids.
AmleResult construct_amle(const ScalarField& boundary_data, const ConeProvider& cone,
                          const AmleParams& params = {}, const ScalarField* warm = nullptr);

} // namespace hjhom
