#pragma once
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hjhom/media.hpp"

namespace hjhom {

using PFn = std::function<double(const Vec&)>;

// Support function of the sublevel set {H <= mu} in direction theta, by
// maximizing the per-ray segment endpoint over a refined direction mesh with
// doubling+bisection along each ray. Handles sublevel sets that do not
// contain the origin. mu below min H is an empty-sublevel error.
double cone_support(const PFn& H, int dim, double mu, const Vec& theta, double tol);

// Cone function source: evaluates generalized cone values d_mu(v) = support
// function of {H <= mu} applied 1-homogeneously. Three backings share this
// surface: closed-form p-only catalogs, arbitrary p-only evaluators, and
// effective-Hamiltonian tables (built in effective.cpp).
struct ConeProvider {
  int dim = 1;
  double min_lv = 0.0;
  bool flat = false; // argmin region of the underlying H has interior

  // Fast structure when cones factor as shift.v + scale(mu) * gauge(v);
  // all catalog p-only kinds do.
  bool gauge_form = false;
  Vec shift = vzero;
  std::function<double(double)> scale;
  std::function<double(const Vec&)> gauge;

  std::function<double(double, const Vec&)> support_fn;

  double min_level() const { return min_lv; }
  double support(double mu, const Vec& theta) const;
  // Positively 1-homogeneous cone value at displacement v.
  double value(double mu, const Vec& v) const;
};

ConeProvider make_ponly_provider(const HamiltonianSpec& spec);
ConeProvider make_pfn_provider(const PFn& H, int dim, double tol = 1e-9);

inline double cone_value(const ConeProvider& prov, double mu, const Vec& x0, const Vec& y) {
  return prov.value(mu, y - x0);
}

struct SweepParams {
  double tol = -1.0;       // < 0: auto = h_min^2 * max(1, |mu|)
  int max_sweeps = 2000;   // directional sweeps (2^dim per cycle)
  double sigma_margin = 1.2;
  Vec p_offset = vzero;    // solve H(p_offset + Du) = mu
  double source_ball_h = 6.0; // frozen local-cone seed radius, in units of hmax
};

// One sweeping candidate value for a node from its 2*dim neighbor values
// (up/um = +/- neighbor along each axis); the scheme applies
// u <- min(u, candidate). Nondecreasing in every neighbor value whenever
// sigma dominates the Hamiltonian's p-slopes over the clamped argument box,
// which is what makes the sweep monotone. Exposed for direct stencil tests.
double lf_node_candidate(const PFn& H, int dim, const double* up, const double* um, const Vec& h,
                         const Vec& sigma, double mu, const Vec& p_offset, double clamp_r);

struct DistanceField {
  ScalarField field;
  Vec x0 = vzero;          // vertex snapped to the nearest node
  double mu = 0.0;
  Vec p_offset = vzero;
  struct Report {
    double sweep_tol = 0.0;
    double last_change = 0.0;
    int sweeps = 0;
    bool converged = false;
    double residual = 0.0;       // Godunov residual over the report window
    double scheme_tol = 0.0;     // solver's own accuracy claim
    double lipschitz = 0.0;      // measured discrete Lipschitz constant
    double lip_bound = 0.0;      // a-priori bound from the sublevel radius
    double sublevel_R = 0.0;
    Vec sigma = vzero;
    std::size_t window_size = 0;
  } report;
};

// Lax-Friedrichs fast sweeping for H(p_offset + Du, y) = mu with u(x0) = 0.
// Gauss-Seidel over the 2^dim axis orderings, min-updates, source ring frozen
// to the coefficient-frozen local cone, linear outflow extrapolation on
// bounded boundaries. Single-threaded by design (order-dependent).
DistanceField solve_distance(const HamiltonianSpec& spec, const EnvironmentRealization& env,
                             double mu, const Vec& x0, const Grid& grid,
                             const SweepParams& params = {});

// d_eps(y) = eps * d(y/eps): same index layout on an eps-scaled grid.
DistanceField rescale_distance(const DistanceField& d, double eps);

struct SubadditivityResult {
  double max_violation = 0.0; // positive part of d_x(y) - d_z(y) - d_x(z)
  std::vector<double> per_triple;
};
SubadditivityResult check_subadditivity(const HamiltonianSpec& spec, const EnvironmentRealization& env,
                                        double mu, std::span<const std::array<Vec, 3>> triples,
                                        const Grid& grid, const SweepParams& params = {});

void save_distance(const DistanceField& d, const std::string& base_path);

} // namespace hjhom
