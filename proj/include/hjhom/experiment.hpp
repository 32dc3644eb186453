#pragma once
#include <cstdint>
#include <string>

#include "hjhom/effective.hpp"

namespace hjhom {

// Drive one experiment from a JSON config:
//   experiment: hbar-table | distance | homogenize | amle | check-cdf |
//               oracle-compare | subadditivity
// plus hamiltonian / environment / grid sections and one section named after
// the experiment. Unknown keys anywhere are fatal. An optional top-level
// "assert" array of {metric, max/min/equals} entries is checked against the
// summary scalars and recorded per entry. Outputs land in out_dir:
//   summary.json   deterministic results + per-assertion pass/fail
//   manifest.json  config echo, tool version, wall time, per-stage status,
//                  and every other artifact with its content hash
//   per-experiment fields, tables, CSVs, and plot series
// A solver failure keeps the partial artifacts and adds failure.json.
//
// expected_kind, when nonempty, requires the config's experiment to match
// (the kind subcommands route through this). The HJHOM_WORKERS environment
// variable overrides the workers argument.
//
// Exit codes: 0 pass, 1 config validation failure, 2 solver failure,
// 3 assertion failure (artifacts are still complete).
int run_experiment_file(const std::string& config_path, const std::string& out_dir,
                        int workers, std::int64_t seed_override,
                        const std::string& expected_kind = "");

// Medium descriptor for a config, without running anything.
std::string describe_config(const std::string& config_path);

// Two-column plot series (text, '#' header naming axes and units), one file
// per curve. The table form writes one axis slice through the argmin per
// dimension into out_dir; the others write a single file at the given path.
void emit_plotdata(const HbarTable& t, const std::string& out_dir);
void emit_plotdata(const HomogResult& r, const std::string& path);
void emit_plotdata(const HbarPointResult& r, const std::string& path);

} // namespace hjhom
