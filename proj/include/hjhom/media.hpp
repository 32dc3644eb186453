#pragma once
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hjhom/field.hpp"
#include "hjhom/grid.hpp"

namespace hjhom {

// Hamiltonian catalog. Every kind is convex and coercive in p with coefficient
// bounds [lambda, Lambda] declared up front:
//   POnly            (sum_i diag_i (p_i - shift_i)^2)^(power/2), power in {1,2}
//   Separable        |p|^2 + V(y)
//   Metric           c(y) |p|
//   AnisoHomogeneous p.a(y)p / (2|p|), a(y) = scale(y) * base, H(0) = 0
//   QuadraticDrift   |p|^2/2 + b(y).p, b divergence-free with zero mean
enum class HamKind { POnly, Separable, Metric, AnisoHomogeneous, QuadraticDrift };

struct POnlyParams {
  double power = 2.0;        // 1 (gauge) or 2 (quadratic)
  Vec diag = {1.0, 1.0, 1.0};
  Vec shift = vzero;
};

struct Mat3 {
  // symmetric, stored row-major; only the upper-left dim x dim block is used
  std::array<double, 9> m = {1, 0, 0, 0, 1, 0, 0, 0, 1};
  Vec mul(const Vec& v) const {
    return {m[0] * v[0] + m[1] * v[1] + m[2] * v[2],
            m[3] * v[0] + m[4] * v[1] + m[5] * v[2],
            m[6] * v[0] + m[7] * v[1] + m[8] * v[2]};
  }
};

struct HamiltonianSpec {
  HamKind kind = HamKind::POnly;
  int dim = 1;
  POnlyParams ponly;
  Mat3 aniso_base;
  double lambda = 1.0;  // declared lower coefficient bound
  double Lambda = 1.0;  // declared upper coefficient bound
};

// Environment kinds. iid-checkerboard draws one value per stationarity-lattice
// cell from a finite law; the lattice origin is jittered per seed (a uniform
// phase in [0,cell)^dim), which is how stationarity shifts enter sampling.
enum class EnvKind { Periodic, IidCheckerboard, SmoothedBump, StreamDrift };

struct EnvParams {
  EnvKind kind = EnvKind::Periodic;
  double cell = 1.0;                      // stationarity lattice spacing
  std::vector<double> values = {-1.0, 1.0};
  std::vector<double> probs = {0.5, 0.5}; // checkerboard law
  std::array<int, 3> waves = {1, 1, 0};   // periodic / stream formula wave numbers
  double amplitude = 1.0;
  double offset = 0.0;                    // coeff = offset + amplitude * formula
  double bump_radius = 0.35;              // smoothed-bump support radius
  double jitter = 0.4;                    // bump center jitter, fraction of cell
  bool stream_bumps = false;              // stream built from bumps instead of the sine formula
};

struct EnvironmentRealization {
  EnvKind kind = EnvKind::Periodic;
  std::uint64_t seed = 0;
  double cell = 1.0;
  Vec phase = vzero;          // lattice phase jitter
  EnvParams params;
  Grid grid;                  // sampling grid the realization was built on
  ScalarField scalar;         // V / c / aniso scale (node-sampled kinds)
  ScalarField stream;         // psi for StreamDrift
  VectorField drift;          // b = curl(psi), centered differences
  double lipschitz = 0.0;     // measured coefficient Lipschitz constant
  int dim = 1;

  // Scalar coefficient at an arbitrary point: piecewise-constant per lattice
  // cell for the checkerboard, multilinear otherwise.
  double coeff_at(const Vec& y) const;
  Vec drift_at(const Vec& y) const;

  // Checkerboard cells are drawn as value[hash(seed, cell index)], so two
  // realizations with the same seed agree wherever their grids overlap.
  double cell_value(const Idx& cell_idx) const;
  Idx cell_of(const Vec& y) const;
};

// Sample the medium on `grid`. The grid's periodicity decides whether the
// checkerboard lattice wraps (torus media) or extends indefinitely (boxes).
EnvironmentRealization sample_environment(const HamiltonianSpec& spec, const EnvParams& params,
                                          std::uint64_t seed, const Grid& grid);

double eval_h(const HamiltonianSpec& spec, const Vec& p, const Vec& y,
              const EnvironmentRealization& env);

// min over p of H(p, y) — closed form per kind; feasibility checks.
double min_over_p(const HamiltonianSpec& spec, const Vec& y, const EnvironmentRealization& env);
double min_over_p_grid(const HamiltonianSpec& spec, const EnvironmentRealization& env, const Grid& g);

// Per-axis bound on |dH/dp_i| over {|p| <= radius} x realized coefficients.
Vec grad_bound(const HamiltonianSpec& spec, const EnvironmentRealization& env, double radius);

// Smallest R (per doubling-then-bisection along a direction mesh) such that
// min over sampled y of H(p, y) > level whenever |p| >= R. Certified against
// the sampled y only; search cap 1e6 triggers a coercivity-violation error.
double sublevel_radius(const HamiltonianSpec& spec, const EnvironmentRealization& env,
                       double level, std::span<const Vec> y_samples);

// b = (d(psi)/dy2, -d(psi)/dy1) by centered differences on the periodic grid;
// exactly divergence-free (centered operators commute) and mean-zero.
VectorField drift_from_stream(const ScalarField& psi);

// Coefficient samples packed per node of a solver grid so hot loops never
// re-interpolate the environment.
struct MediumView {
  HamKind kind;
  int dim = 1;
  POnlyParams ponly;
  Mat3 base;
  std::vector<double> c0;  // V / c / aniso scale per node
  std::vector<Vec> cb;     // drift per node
};
MediumView make_medium_view(const HamiltonianSpec& spec, const EnvironmentRealization& env,
                            const Grid& g);
double view_eval(const MediumView& v, const Vec& p, std::size_t node);
double view_min_over_p(const MediumView& v, std::size_t node);

// Monomorphized per-kind evaluators so solver inner loops carry no dispatch.
struct EvalPOnly {
  POnlyParams q; int dim;
  double operator()(const Vec& p, std::size_t) const {
    double s = 0.0;
    for (int a = 0; a < dim; ++a) {
      const double d = p[a] - q.shift[a];
      s += q.diag[a] * d * d;
    }
    return q.power == 2.0 ? s : std::sqrt(s);
  }
};
struct EvalSeparable {
  const double* V;
  double operator()(const Vec& p, std::size_t n) const { return norm2(p) + V[n]; }
};
struct EvalMetric {
  const double* c;
  double operator()(const Vec& p, std::size_t n) const { return c[n] * norm(p); }
};
struct EvalAniso {
  const double* s; Mat3 base;
  double operator()(const Vec& p, std::size_t n) const {
    const double pn = norm(p);
    if (pn == 0.0) return 0.0;
    return s[n] * dot(p, base.mul(p)) / (2.0 * pn);
  }
};
struct EvalDrift {
  const Vec* b;
  double operator()(const Vec& p, std::size_t n) const { return 0.5 * norm2(p) + dot(b[n], p); }
};

template <class F>
decltype(auto) dispatch_view(const MediumView& v, F&& f) {
  switch (v.kind) {
    case HamKind::POnly: return f(EvalPOnly{v.ponly, v.dim});
    case HamKind::Separable: return f(EvalSeparable{v.c0.data()});
    case HamKind::Metric: return f(EvalMetric{v.c0.data()});
    case HamKind::AnisoHomogeneous: return f(EvalAniso{v.c0.data(), v.base});
    case HamKind::QuadraticDrift: return f(EvalDrift{v.cb.data()});
  }
  fail(Err::InvalidConfig, "unknown Hamiltonian kind");
}

// JSON descriptor round-trip for specs/params (medium identity lives in
// (spec, params, seed); realizations are reproduced, not stored).
std::string describe_medium(const HamiltonianSpec& spec, const EnvParams& params, std::uint64_t seed);

} // namespace hjhom
