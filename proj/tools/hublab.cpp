// Copyright 2026 The hublab Authors
// SPDX-License-Identifier: Apache-2.0

// hublab: batch front end. `hublab <command> --config <path> [--out <dir>]
// [--workers N] [--seed S]`; `sweep` expands comma-separated value lists in
// the target command's section into a Cartesian grid.

#include <cstdint>
#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "hublab/cli.hpp"

namespace {

struct Options {
  std::string config;
  std::string out = ".";
  int workers = 1;
  std::uint64_t seed = 1;
};

void add_common_options(CLI::App* sub, Options& opt) {
  sub->add_option("--config", opt.config, "run configuration file")
      ->required();
  sub->add_option("--out", opt.out, "output directory (default: .)");
  sub->add_option("--workers", opt.workers, "worker count for sweeps")
      ->check(CLI::PositiveNumber);
  sub->add_option("--seed", opt.seed, "seed for randomized commands");
}

const char* describe(const std::string& name) {
  if (name == "gamma") return "dual-quadrature lattice Green constant";
  if (name == "scatter") return "scattering length and zero-energy identities";
  if (name == "phi") return "zero-energy solution table and disk cache";
  if (name == "eos") return "free-gas equation of state point";
  if (name == "filter") return "momentum filter and soft potential diagnostics";
  if (name == "dyson-certify") return "operator lower-bound certification";
  if (name == "ed") return "interacting ground state and interaction shift";
  if (name == "lt-check") return "pair kinetic-energy lower-bound check";
  if (name == "trace-check") return "randomized trace-bound check";
  return "";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hublab: lattice gas numerical laboratory"};
  app.set_version_flag("--version", hublab::kVersion);
  app.require_subcommand(1);

  Options opt;
  for (const auto& schema : hublab::command_schemas())
    add_common_options(app.add_subcommand(schema.name, describe(schema.name)),
                       opt);
  add_common_options(
      app.add_subcommand("sweep",
                         "Cartesian sweep over a command's parameter lists"),
      opt);

  CLI11_PARSE(app, argc, argv);
  const std::string command = app.get_subcommands().front()->get_name();

  try {
    hublab::RunConfig cfg =
        hublab::parse_config(hublab::read_text_file(opt.config));
    hublab::RunContext ctx;
    ctx.out_dir = opt.out;
    ctx.seed = opt.seed;
    ctx.workers = opt.workers;

    if (command == "sweep") {
      hublab::SweepOutcome sw = hublab::run_sweep(cfg, ctx);
      std::fprintf(stderr, "sweep [%s]: %d/%d points ok, %zu files (%.2f s)\n",
                   cfg.command.c_str(), sw.total - sw.failed, sw.total,
                   sw.files.size(), sw.wall_seconds);
      for (std::size_t i = 0; i < sw.statuses.size(); ++i)
        if (sw.statuses[i] != "ok")
          std::fprintf(stderr, "  point %zu: %s\n", i, sw.statuses[i].c_str());
      return sw.failed == 0 ? 0 : 1;
    }

    if (cfg.command != command) {
      std::fprintf(stderr,
                   "error: config section [%s] does not match command '%s'\n",
                   cfg.command.c_str(), command.c_str());
      return 2;
    }
    hublab::ResultRecord rec = hublab::run_single(cfg, ctx);
    std::fprintf(stderr, "%s: hash %s", rec.command.c_str(),
                 rec.config_hash.c_str());
    for (const std::string& f : rec.files)
      std::fprintf(stderr, " %s", f.c_str());
    std::fprintf(stderr, " (%.2f s)\n", rec.wall_seconds);
    return 0;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}
