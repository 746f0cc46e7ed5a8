// fedcpf: run, compare and sweep federated experiments; check model gradients.

#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fedcpf/harness.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Masked personalized federated learning experiments"};
  app.require_subcommand(1);

  fedcpf::CommonOptions common;
  std::uint64_t seed_override = 0;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config_path, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", seed_override, "override the config seed");
    sub->add_option("--out", common.out, "output directory");
    sub->add_option("--workers", common.workers, "parallel jobs")->check(CLI::PositiveNumber);
  };

  auto* run = app.add_subcommand("run", "run one experiment");
  add_common(run);

  std::vector<std::string> methods;
  std::vector<std::uint64_t> seeds;
  auto* compare = app.add_subcommand("compare", "run several methods over several seeds");
  add_common(compare);
  compare->add_option("--methods", methods, "comma-separated methods")->delimiter(',')->required();
  compare->add_option("--seeds", seeds, "comma-separated seeds")->delimiter(',')->required();

  std::string param;
  std::vector<double> values;
  auto* sweep = app.add_subcommand("sweep", "vary rho or acc over a list of values");
  add_common(sweep);
  sweep->add_option("--param", param, "rho or acc")->required()->check(CLI::IsMember({"rho", "acc"}));
  sweep->add_option("--values", values, "comma-separated values")->delimiter(',')->required();

  std::uint64_t grad_seed = 1;
  bool corrupt = false;
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of the model gradient");
  gradcheck->add_option("--seed", grad_seed, "base seed");
  gradcheck->add_flag("--corrupt-gradient", corrupt, "perturb the analytic gradient (negative control)")
      ->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : fedcpf::kExitValidation;
  }

  for (auto* sub : {run, compare, sweep}) {
    if (sub->parsed() && sub->count("--seed") > 0) common.seed = seed_override;
  }

  if (run->parsed()) return fedcpf::cmd_run(common);
  if (compare->parsed()) {
    if (common.seed) seeds = {*common.seed};
    return fedcpf::cmd_compare(common, methods, seeds);
  }
  if (sweep->parsed()) return fedcpf::cmd_sweep(common, param, values);
  return fedcpf::cmd_gradcheck(grad_seed, corrupt);
}
