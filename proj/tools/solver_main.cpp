#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "sev/run.hpp"
#include "sev/version.hpp"

int main(int argc, char** argv) {
  CLI::App app{"variational solver for a singularly perturbed elliptic problem"};
  app.set_version_flag("--version", SEV_VERSION_STRING);
  app.require_subcommand(1);

  sev::RunOptions opts;
  std::string config, out_dir;

  const auto add_task = [&](const std::string& name, const std::string& desc) {
    CLI::App* sub = app.add_subcommand(name, desc);
    sub->add_option("--config", config, "JSON run configuration")
        ->required()
        ->check(CLI::ExistingFile);
    sub->add_option("--out", out_dir, "output directory (overrides the config)");
    sub->add_flag("--force", opts.force, "solve even when a hypothesis check fails");
    sub->add_flag("--log-iterates", opts.log_iterates,
                  "write one NDJSON record per iteration");
    sub->callback([&, name] { opts.task = name; });
    return sub;
  };

  add_task("verify", "check the structural hypotheses and write a report");
  add_task("hardy", "discrete singular-weight constants under refinement");
  add_task("spectrum", "eigenvalues of the linearized operator off the region");
  add_task("solve", "one critical point (mountain-pass or constraint-set method)");
  add_task("multi", "several sign-changing critical points");
  add_task("normalized", "fixed-mass ground state with its multiplier");
  add_task("normalized-multi", "several fixed-mass critical points");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  opts.config_path = config;
  opts.out_dir = out_dir;
  return sev::run(opts, std::cout, std::cerr);
}
