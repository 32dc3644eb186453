#pragma once
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "hjhom/corrector.hpp"
#include "hjhom/eikonal.hpp"

namespace hjhom {

// Effective level sampled on a momentum grid, averaged over medium seeds.
struct HbarTable {
  int dim = 1;
  Grid pgrid; // bounded grid over momentum space
  std::vector<double> value;
  std::vector<double> spread;           // max - min across seeds
  std::vector<std::uint8_t> reliable;   // extrapolation fit accepted
  std::vector<double> deltas;
  std::vector<std::uint64_t> seeds;

  double at(const Idx& i) const { return value[pgrid.lin(i)]; }
};

void save_table(const HbarTable& t, const std::string& path);
HbarTable load_table(const std::string& path);

struct TableBuildParams {
  std::vector<double> deltas = {0.4, 0.2, 0.1};
  MarchParams march;
  bool warm_chain = true; // serpentine momentum order, reusing fields
};

// One medium realization per seed, one discounted-schedule estimate per
// momentum node; the table stores the seed average.
HbarTable build_table(const HamiltonianSpec& spec, const EnvParams& envp,
                      std::span<const std::uint64_t> seeds, const Grid& pgrid,
                      const Grid& ygrid, const TableBuildParams& params = {});

// Midpoint convexity defects along axes and planar diagonals.
struct ConvexityReport {
  double max_defect = 0.0;
  Idx where{0, 0, 0};
  int checks = 0;
};
ConvexityReport convexity_report(const HbarTable& t);

// Iterated midpoint relaxation: the largest directionally-convex minorant
// (exact envelope in 1d, axis+diagonal approximation in higher dimension).
HbarTable convexify(const HbarTable& t);

struct ArgminRegion {
  double min_value = 0.0;
  Vec argmin = vzero;
  std::vector<Idx> nodes;     // nodes within tol of the minimum
  bool flat = false;          // region wider than a couple of grid steps
  bool touches_boundary = false;
};
ArgminRegion argmin_region(const HbarTable& t, double tol);

// Cone source backed by a (convexified) table: support(mu, theta) maximizes
// p.theta over sublevel nodes plus interpolated axis-edge crossings. Sublevel
// sets that touch the momentum-grid boundary are out of range.
ConeProvider make_table_provider(const HbarTable& t);

// Cone source for positively 1-homogeneous effective levels sampled on unit
// directions: the sublevel set is the hull of { mu * dir_i / value_i }.
ConeProvider make_homogeneous_provider(std::span<const Vec> dirs, std::span<const double> hbar,
                                       int dim);

// 1d separable oracle (quadrature + bisection): the effective level solves
// integral over one period of sqrt(mu - V) = |p| above the threshold
// momentum, and equals max V below it.
double oracle_hbar_separable_1d(const std::function<double(double)>& V, double p, int n = 8192);
double oracle_threshold_separable_1d(const std::function<double(double)>& V, int n = 8192);

// 1d metric oracle: effective level |p| / E[1/c] for a finite coefficient law.
double oracle_hbar_metric_1d(std::span<const double> values, std::span<const double> probs,
                             double p);

// Shrinking-scale comparison: solve the distance problem on boxes of
// microscopic size window/eps, rescale, and compare against the effective
// cone on the fixed macroscopic window.
struct HomogConfig {
  double mu = 1.0;
  double window = 1.0;     // macroscopic comparison half-width
  double margin = 0.4;     // extra solve box beyond the window
  double h_micro = 0.05;   // microscopic grid spacing
  std::vector<double> eps = {0.5, 0.25, 0.125};
  SweepParams sweep;
};
struct HomogResult {
  std::vector<double> eps;
  std::vector<double> sup_err;
  double final_err = 0.0;
  bool decreasing = false; // within 15% slack per step
};
HomogResult homogenization_experiment(const HamiltonianSpec& spec, const EnvParams& envp,
                                      std::uint64_t seed, const ConeProvider& cone,
                                      const HomogConfig& cfg);

} // namespace hjhom
