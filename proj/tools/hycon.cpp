#include <iostream>

#include "CLI11.hpp"

#include "commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Clustered multi-agent hybrid consensus: validate, certify, simulate"};
  app.require_subcommand(1);

  hycon::cli::CommandArgs args;
  std::uint64_t seed = 0;
  std::string out, noise, reset;
  double horizon = 0.0;

  for (const char* name : {"validate", "certify", "simulate", "rendezvous", "montecarlo"}) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", args.config, "JSON run configuration")->required();
    sub->add_option("--seed", seed, "reset-policy / Monte Carlo master seed");
    sub->add_option("--out", out, "output directory");
    sub->add_option("--noise", noise, "measurement noise")
        ->check(CLI::IsMember({"none", "paper", "custom"}));
    sub->add_option("--reset", reset, "timer reset policy")
        ->check(CLI::IsMember({"uniform", "midpoint", "max"}));
    sub->add_option("--horizon", horizon, "simulated seconds")->check(CLI::PositiveNumber);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  CLI::App* sub = app.get_subcommands().front();
  if (sub->count("--seed")) args.seed = seed;
  if (sub->count("--out")) args.out = out;
  if (sub->count("--noise")) args.noise = noise;
  if (sub->count("--reset")) args.reset = reset;
  if (sub->count("--horizon")) args.horizon = horizon;
  return hycon::cli::run_command(sub->get_name(), args, std::cout, std::cerr);
}
