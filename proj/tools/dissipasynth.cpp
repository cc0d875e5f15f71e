// dissipasynth run|record|synth|verify|sweep <config.json> [--out DIR] [--seed K]
//              [--alpha-grid lo:hi:steps]
#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>

#include "dissipasynth/experiment.hpp"

using namespace dissipasynth;

int main(int argc, char** argv) {
  CLI::App app{"Data-driven dissipative output-feedback synthesis"};
  app.require_subcommand(1);

  std::string config, out, alpha_grid;
  std::uint64_t seed = 0;
  for (const char* name : {"run", "record", "synth", "verify", "sweep"}) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("config", config, "experiment config (JSON)")->required();
    sub->add_option("--out", out, "output directory");
    sub->add_option("--seed", seed, "top-level seed");
    sub->add_option("--alpha-grid", alpha_grid, "log grid lo:hi:steps");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << Json{{"event", "error"}, {"kind", "usage"}, {"message", e.what()}}.dump() << '\n';
    return kExitConfig;
  }

  CLI::App* sub = app.get_subcommands().front();
  CliOverrides ov;
  try {
    if (sub->count("--out")) ov.out = out;
    if (sub->count("--seed")) ov.seed = seed;
    if (sub->count("--alpha-grid")) ov.alpha_grid = parse_alpha_grid(alpha_grid);
    if (const char* tol = std::getenv("DISSIPASYNTH_SOLVER_TOL")) {
      char* end = nullptr;
      ov.solver_tol = std::strtod(tol, &end);
      if (end == tol || *end != '\0') throw ConfigError("DISSIPASYNTH_SOLVER_TOL is not a number");
    }
  } catch (const ConfigError& e) {
    std::cerr << Json{{"event", "error"}, {"kind", "config"}, {"message", e.what()}}.dump() << '\n';
    return kExitConfig;
  }
  return run_stage(*parse_stage(sub->get_name()), config, ov, std::cerr);
}
