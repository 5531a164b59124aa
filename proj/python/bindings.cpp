// Python bindings: config-driven entry points plus a few numeric building blocks.

#include <optional>
#include <sstream>
#include <string>

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "commands.hpp"
#include "hycon/certificate.hpp"
#include "hycon/config.hpp"
#include "hycon/error.hpp"
#include "hycon/hybridsim.hpp"
#include "hycon/scenarios.hpp"
#include "hycon/spectral.hpp"

namespace py = pybind11;
using namespace hycon;

namespace {

RunConfig load(const std::string& path, std::optional<double> horizon, std::optional<std::uint64_t> seed,
               std::optional<std::string> noise, std::optional<std::string> reset) {
  RunConfig cfg = load_config(path);
  if (horizon) cfg.simulation.horizon = *horizon;
  if (seed) cfg.simulation.seed = *seed;
  if (noise) cfg.simulation.noise = *noise;
  if (reset) cfg.simulation.reset = parse_reset_policy(*reset);
  return cfg;
}

py::dict report_dict(const CertificateReport& r) {
  py::dict d;
  d["certified"] = r.certified;
  d["lambda_max_lower"] = r.lambda_max_lower;
  d["lambda_max_upper"] = r.lambda_max_upper;
  d["vertex_max_lambda"] = r.vertex_max_lambda;
  d["vertex_count"] = r.vertex_count;
  d["mu"] = r.mu;
  d["alpha1"] = r.alpha1;
  d["alpha2"] = r.alpha2;
  d["kappa"] = r.kappa;
  d["alpha"] = r.alpha;
  d["kappa2"] = r.kappa2;
  d["N_star"] = r.N_star;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Clustered hybrid consensus: spectral reduction, event-exact simulation, certificates";

  // Messages start with the error code name, e.g. "DisconnectedCluster: ...".
  py::register_exception<Error>(m, "HyconError", PyExc_RuntimeError);

  m.def(
      "decompose",
      [](const Eigen::MatrixXd& L) {
        const SpectralDecomposition d = decompose(L);
        return py::dict(py::arg("V") = d.V, py::arg("D") = d.D, py::arg("S") = d.S);
      },
      py::arg("laplacian"), "V, D, S with L = V diag(D) Vᵀ and S = I - 11ᵀ/N.");

  m.def(
      "system_info",
      [](const std::string& path) {
        const RunConfig cfg = load_config(path);
        const EnsembleSystem sys = build_system(cfg);
        const auto& d = sys.dims();
        py::dict out;
        out["N"] = d.N;
        out["M"] = d.M;
        out["M_star"] = d.M_star;
        out["reduced_dimension"] = d.rho();
        out["lambda2"] = sys.spectral().D(0);
        out["F11_hurwitz"] = sys.F11_hurwitz();
        out["config_hash"] = cfg.hash;
        return out;
      },
      py::arg("config"));

  m.def(
      "preset_reduced_dimension",
      [] { return make_craft_system(craft14_network(), CraftPresetParams{}).dims().rho(); });

  m.def(
      "certify",
      [](const std::string& path) {
        const RunConfig cfg = load_config(path);
        const EnsembleSystem sys = build_system(cfg);
        SearchSpec spec;
        spec.epsilon = cfg.certificate.epsilon;
        const SearchResult s = search_P(sys, cfg.certificate.sigma, spec, cfg.certificate.options);
        if (!s.params) {
          py::dict d;
          d["certified"] = false;
          d["message"] = s.message;
          return d;
        }
        py::dict d = report_dict(corner_check(sys, *s.params, cfg.certificate.options));
        d["message"] = s.message;
        return d;
      },
      py::arg("config"), "Searches the restricted P family and runs the vertex check.");

  m.def(
      "simulate",
      [](const std::string& path, std::optional<double> horizon, std::optional<std::uint64_t> seed,
         std::optional<std::string> noise, std::optional<std::string> reset) {
        const RunConfig cfg = load(path, horizon, seed, noise, reset);
        const EnsembleSystem sys = build_system(cfg);
        HybridTrace tr;
        {
          py::gil_scoped_release nogil;
          tr = simulate(sys, initial_state(cfg, sys), simulation_options(cfg, sys));
        }
        const auto n = static_cast<Eigen::Index>(tr.samples.size());
        Eigen::VectorXd t(n), dist(n), xc(n);
        Eigen::VectorXi j(n);
        for (Eigen::Index k = 0; k < n; ++k) {
          t(k) = tr.samples[k].t;
          j(k) = tr.samples[k].j;
          dist(k) = tr.samples[k].distance;
          xc(k) = tr.samples[k].norm_xcirc;
        }
        py::dict d;
        d["t"] = t;
        d["j"] = j;
        d["distance"] = dist;
        d["norm_xcirc"] = xc;
        d["jumps"] = tr.jumps.size();
        d["trace_csv"] = trace_to_csv(tr);
        return d;
      },
      py::arg("config"), py::arg("horizon") = py::none(), py::arg("seed") = py::none(),
      py::arg("noise") = py::none(), py::arg("reset") = py::none());

  m.def(
      "run_command",
      [](const std::string& name, const std::string& config, std::optional<std::string> out,
         std::optional<std::uint64_t> seed, std::optional<double> horizon) {
        cli::CommandArgs a;
        a.config = config;
        a.out = out;
        a.seed = seed;
        a.horizon = horizon;
        std::ostringstream o, e;
        int code;
        {
          py::gil_scoped_release nogil;
          code = cli::run_command(name, a, o, e);
        }
        return py::make_tuple(code, o.str(), e.str());
      },
      py::arg("name"), py::arg("config"), py::arg("out") = py::none(), py::arg("seed") = py::none(),
      py::arg("horizon") = py::none(), "Same as the CLI subcommand; returns (exit_code, stdout, stderr).");
}
