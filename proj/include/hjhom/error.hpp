#pragma once
#include <stdexcept>
#include <string>

namespace hjhom {

// Typed failure modes so callers (and tests) can match on the cause instead of
// parsing message strings. `detail` carries a numeric diagnostic where one
// exists (last residual for non-convergence, the offending level, ...).
enum class Err {
  BoundaryStencil,      // one-sided difference requested on a non-periodic edge
  OutOfDomain,          // interpolation query outside the grid hull
  EmptyWindow,          // residual/report window contains no nodes
  GridTooSmall,         // fewer than 3 cells on an active axis
  DegenerateMedium,     // declared coefficient bounds violated by a realization
  CoercivityViolation,  // sublevel radius search exceeded its cap
  EmptySublevel,        // cone query below the minimum of the Hamiltonian
  InfeasibleLevel,      // eikonal level below the grid-local minimum of H
  NonConvergence,       // iteration budget exhausted; detail = last residual
  RangeTooSmall,        // table argmin/sublevel touches the p-grid boundary
  Reachability,         // Hopf-Lax target with no admissible source node
  ConstructedFieldRejected, // AMLE output failed its own comparison audit
  InvalidConfig,        // config/schema violation (unknown key, bad value)
};

class Error : public std::runtime_error {
public:
  Error(Err code, const std::string& msg, double detail = 0.0)
      : std::runtime_error(msg), code(code), detail(detail) {}
  Err code;
  double detail;
};

[[noreturn]] inline void fail(Err code, const std::string& msg, double detail = 0.0) {
  throw Error(code, msg, detail);
}

} // namespace hjhom
