// Command-line front end: run experiments from JSON configs, or describe the
// medium a config would sample. See include/hjhom/experiment.hpp for the
// config schema and exit codes (0 pass, 1 validation, 2 solver failure,
// 3 assertion failure).
#include <cstdio>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"

#include "hjhom/experiment.hpp"
#include "hjhom/error.hpp"

int main(int argc, char** argv) {
  CLI::App app{"numerical laboratory for generalized distance functions and effective levels"};
  app.require_subcommand(1);

  std::string config, out = "out";
  int workers = 0;
  std::int64_t seed_override = -1;

  // "run" accepts any experiment kind; the kind subcommands insist the config
  // matches, so pipelines can pin what a step is allowed to do.
  const std::vector<std::pair<std::string, std::string>> runners = {
      {"run", "run one experiment from a JSON config"},
      {"hbar-table", "tabulate the effective level over a momentum grid"},
      {"distance", "solve one generalized distance field"},
      {"homogenize", "compare rescaled distances against an effective cone"},
      {"amle", "construct a local-balance interpolant"},
      {"check-cdf", "audit a field against random cone-comparison windows"},
      {"oracle-compare", "check tabulated levels against closed-form oracles"},
      {"subadditivity", "check the distance triangle inequality on point triples"},
  };
  for (const auto& [name, blurb] : runners) {
    CLI::App* sc = app.add_subcommand(name, blurb);
    sc->add_option("--config", config, "experiment config (JSON)")->required();
    sc->add_option("--out", out, "output directory");
    sc->add_option("--workers", workers,
                   "worker threads (0 = library default; HJHOM_WORKERS overrides)");
    sc->add_option("--seed-override", seed_override, "replace the config seed (>= 0)");
  }

  CLI::App* describe = app.add_subcommand("describe", "print the medium descriptor for a config");
  describe->add_option("--config", config, "experiment config (JSON)")->required();

  app.add_subcommand("version", "print the tool version");

  CLI11_PARSE(app, argc, argv);

  if (app.got_subcommand("version")) {
    std::printf("hjhom 1.0\n");
    return 0;
  }
  if (app.got_subcommand("describe")) {
    try {
      std::printf("%s\n", hjhom::describe_config(config).c_str());
      return 0;
    } catch (const hjhom::Error& e) {
      std::fprintf(stderr, "%s\n", e.what());
      return 1;
    } catch (const std::exception& e) {
      std::fprintf(stderr, "config error: %s\n", e.what());
      return 1;
    }
  }
  for (const auto& [name, blurb] : runners)
    if (app.got_subcommand(name))
      return hjhom::run_experiment_file(config, out, workers, seed_override,
                                        name == "run" ? "" : name);
  return 1;
}
