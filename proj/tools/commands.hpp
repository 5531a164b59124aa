#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>

namespace hycon::cli {

/// Command-line overrides on top of the config file.
struct CommandArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> noise;
  std::optional<std::string> reset;
  std::optional<double> horizon;
};

// Exit codes: 0 success or certified, 1 domain failure, 2 usage or config error.
int cmd_validate(const CommandArgs& a, std::ostream& out);
int cmd_certify(const CommandArgs& a, std::ostream& out);
int cmd_simulate(const CommandArgs& a, std::ostream& out);
int cmd_rendezvous(const CommandArgs& a, std::ostream& out);
int cmd_montecarlo(const CommandArgs& a, std::ostream& out);

/// Dispatches by name and turns exceptions into messages on `err` and exit codes.
int run_command(const std::string& name, const CommandArgs& a, std::ostream& out,
                std::ostream& err);

}  // namespace hycon::cli
