// distmatch: train policies whose return law matches a target, solve the
// analytic oracles, run verification suites and summarize runs.

#include <CLI11.hpp>

#include <iostream>

#include "distmatch/app.hpp"

int main(int argc, char** argv) {
  using namespace distmatch::app;

  CLI::App cli{"Distribution matching by policy gradient"};
  cli.require_subcommand(1);

  Overrides overrides;
  std::uint64_t seed = 0;
  std::size_t threads = 0;
  std::string scale;
  auto add_overrides = [&](CLI::App* sub) {
    sub->add_option("--seed", seed, "Override train.seed");
    sub->add_option("--threads", threads, "Worker threads (falls back to DISTMATCH_THREADS)")
        ->check(CLI::PositiveNumber);
    sub->add_option("--scale", scale, "Preset scale")->check(CLI::IsMember({"desk", "paper"}));
  };

  std::string path;
  auto* train = cli.add_subcommand("train", "Train a policy from a run config");
  train->add_option("config", path, "Run config (JSON)")->required();
  add_overrides(train);

  auto* oracle = cli.add_subcommand("oracle", "Solve the analytic oracle of a run config");
  oracle->add_option("config", path, "Run config (JSON)")->required();
  add_overrides(oracle);

  std::string suite;
  auto* verify = cli.add_subcommand("verify", "Run a verification suite");
  verify->add_option("suite", suite, "gradients, bias, epps, bernoulli, oracle-roundtrip or all")
      ->required();
  verify->add_option("--seed", seed, "Random seed");

  auto* report = cli.add_subcommand("report", "Summarize a finished run directory");
  report->add_option("run_dir", path, "Run output directory")->required();

  try {
    cli.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return cli.exit(e) == 0 ? 0 : kExitConfig;
  }

  auto collect = [&](CLI::App* sub) {
    if (sub->count("--seed") > 0) overrides.seed = seed;
    if (sub->count("--threads") > 0) overrides.threads = threads;
    if (sub->count("--scale") > 0) overrides.scale = scale;
  };

  if (train->parsed()) {
    collect(train);
    return cmd_train(path, overrides, std::cout);
  }
  if (oracle->parsed()) {
    collect(oracle);
    return cmd_oracle(path, overrides, std::cout);
  }
  if (verify->parsed()) return cmd_verify(suite, verify->count("--seed") ? seed : 1, std::cout);
  return cmd_report(path, std::cout);
}
