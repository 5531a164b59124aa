#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "json.hpp"

#include "hycon/certificate.hpp"
#include "hycon/ensemble.hpp"
#include "hycon/hybridsim.hpp"
#include "hycon/network.hpp"
#include "hycon/scenarios.hpp"

namespace hycon {

using Json = nlohmann::json;

struct CertificateConfig {
  double sigma = 1.0;
  double epsilon = 0.5;
  CertificateOptions options;
  std::string P_file;  // resolved path, empty if none
  bool search = true;
};

struct SimulationConfig {
  double horizon = 1.0;
  std::uint64_t seed = 0;
  ResetPolicy reset = ResetPolicy::Uniform;
  double sample_dt = 1e-3;
  bool sample_after_jumps = true;
  std::string noise = "none";  // none | paper | custom
  PerturbationSpec perturbation;
  // initial condition
  std::optional<Eigen::VectorXd> x0;
  double random_box = 2.0;
  std::uint64_t initial_seed = 7;
  std::string initial_timers = "random";  // random | max
};

struct ScenarioConfig {
  double ell = 0.53;
  double rk4_step = 1e-3;
  std::uint64_t heading_seed = 1;
  int keep_every = 10;
};

struct OutputConfig {
  std::string dir = "out";
  bool full_state = false;
};

/// Schema-validated run configuration with every component resolved.
struct RunConfig {
  Json doc;
  std::string base_dir;
  std::string hash;  // FNV-1a 64 of the canonical document, hex

  ClusteredNetwork network;
  Plant plant;
  GainSet gains;
  bool craft_plant = false;

  CertificateConfig certificate;
  SimulationConfig simulation;
  ScenarioConfig scenario;
  std::optional<MonteCarloOptions> montecarlo;
  double montecarlo_threshold = 1e-2;
  OutputConfig output;
};

/// Throws Error(Config) with a field path on schema violations; network
/// invariant failures keep their own codes.
RunConfig parse_config(const Json& doc, const std::string& base_dir = ".");
RunConfig load_config(const std::string& path);

EnsembleSystem build_system(const RunConfig& cfg);
HybridState initial_state(const RunConfig& cfg, const EnsembleSystem& sys);
SimOptions simulation_options(const RunConfig& cfg, const EnsembleSystem& sys);

std::uint64_t fnv1a64(const std::string& bytes);
std::string hex64(std::uint64_t v);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);

}  // namespace hycon
