#pragma once
#include <cstdint>
#include <span>
#include <vector>

#include "hjhom/media.hpp"

namespace hjhom {

// Jacobi time-marching for the discounted problem
//   delta v + H(p + Dv, y) = 0   on a fully periodic box,
// with the Lax-Friedrichs numerical Hamiltonian and the monotone CFL step
// dt = 1 / (delta + sum_a 2 sigma_a / h_a). Started from the constant
// subsolution -max_y H(p,y) / delta, iterates increase monotonically and the
// residual sup |delta v + H_LF| equals max-change/dt at every step.
struct MarchParams {
  double tol = 1e-7;      // residual target for sup |delta v + H_LF|
  int max_steps = 20000000;
  Exec exec = Exec::Parallel;
  double sigma_margin = 1.2;
  bool record_trace = false; // keep the per-step residual sequence
  // When positive these pin the LF viscosity and the gradient clamp instead
  // of deriving them from (p, medium). Solves whose values are compared
  // across p must share one numerical Hamiltonian -- the O(sigma h) scheme
  // bias otherwise differs per p and pollutes the comparison.
  Vec sigma_override = vzero;
  double clamp_override = 0.0;
};

struct DiscountedSolve {
  ScalarField v;
  double delta = 0.0;
  Vec p = vzero;
  double residual = 0.0;
  int steps = 0;
  bool converged = false;
  double crude_lo = 0.0;  // min_y H(p, y): -delta v must stay above it
  double crude_hi = 0.0;  // ... and below this
  std::vector<double> residual_trace; // filled when record_trace is set
};

DiscountedSolve solve_discounted(const HamiltonianSpec& spec, const EnvironmentRealization& env,
                                 const Vec& p, double delta, const Grid& grid,
                                 const MarchParams& params = {},
                                 const ScalarField* warm = nullptr);

// Level estimate from one discounted solve: m(delta) = -delta * (average of v
// over the torus). Every node's -delta v(y) estimates the level, so the full
// average is the lowest-noise readout; windows that grow with 1/delta would
// sweep new medium cells in between schedule legs and alias that into the
// delta-trend.
double discount_estimate(const DiscountedSolve& s);

// Upper bound max_y H(p + Dv, y) with centered differences; any periodic
// Lipschitz perturbation gives an upper bound for the effective level.
double subcorrector_upper_bound(const HamiltonianSpec& spec, const EnvironmentRealization& env,
                                const Vec& p, const ScalarField& v);

struct HbarPointResult {
  double hbar = 0.0;        // extrapolated level
  double m_last = 0.0;      // raw estimate at the smallest delta
  std::vector<double> deltas;
  std::vector<double> m;
  double alpha = 0.0;       // fitted decay rate of m(delta) - hbar
  double fit_residual = 0.0;
  bool reliable = false;
  double crude_lo = 0.0, crude_hi = 0.0;
  double subcorrector_ub = 0.0;
  // Flatness diagnostic: oscillation of -delta v over the torus, per schedule
  // entry. Oscillation beyond 5% of the level at the smallest delta marks the
  // estimate unreliable (the level is still y-dependent there). window_capped
  // records that the torus is smaller than the 1/delta localization scale, so
  // finite-size effects are in play.
  double oscillation = 0.0; // at the smallest delta
  bool window_capped = false;
  std::vector<double> leg_oscillation, leg_residual;
  std::vector<int> leg_steps;
};

// Run the delta schedule (descending), warm-starting each solve from the
// previous one rescaled by the discount ratio, then fit m(delta) = hbar +
// c delta^alpha with alpha grid-searched over [0.3, 1].
HbarPointResult hbar_point(const HamiltonianSpec& spec, const EnvironmentRealization& env,
                           const Vec& p, const Grid& grid, std::span<const double> deltas,
                           const MarchParams& params = {},
                           std::vector<ScalarField>* warm_io = nullptr);

// CSV: one row (delta, m, oscillation, residual, steps) per schedule entry,
// then an extrapolation row flagged by delta = 0 carrying (hbar, alpha,
// fit_residual, reliable).
void save_point_csv(const HbarPointResult& r, const std::string& path);

// Regularity of p -> v^delta(0): midpoint concavity (v(p) + v(q))/2 <=
// v((p+q)/2), and the Lipschitz quotient of the level estimate,
// |delta v(0;p) - delta v(0;q)| / |p-q|.
struct MidpointCheck {
  Vec p = vzero, q = vzero;
  double vp = 0.0, vq = 0.0, vmid = 0.0;
  double defect = 0.0;   // (vp + vq)/2 - vmid, positive = violation
  double quotient = 0.0; // delta |vp - vq| / |p - q| (0 when p == q)
};
struct MidpointReport {
  double worst_defect = 0.0;
  double worst_quotient = 0.0;
  std::vector<MidpointCheck> checks;
};
MidpointReport p_regularity_report(const HamiltonianSpec& spec, const EnvironmentRealization& env,
                                   std::span<const std::array<Vec, 2>> pairs, double delta,
                                   const Grid& grid, const MarchParams& params = {});

// Fill params.sigma_override / clamp_override so every p in `ps` runs under
// one numerical Hamiltonian: the clamp covers the largest sublevel set seen
// by any of them and the viscosity dominates |dH/dp| there.
void common_march_frame(const HamiltonianSpec& spec, const EnvironmentRealization& env,
                        const Grid& grid, std::span<const Vec> ps, MarchParams& params);

} // namespace hjhom
