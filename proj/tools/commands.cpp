#include "commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>

#include "hycon/config.hpp"
#include "hycon/error.hpp"

namespace hycon::cli {

namespace fs = std::filesystem;
using OJson = nlohmann::ordered_json;

namespace {

RunConfig load(const CommandArgs& a) {
  if (a.config.empty()) throw Error(ErrorCode::Config, "--config is required");
  RunConfig cfg = load_config(a.config);
  SimulationConfig& sc = cfg.simulation;
  if (a.seed) {
    sc.seed = *a.seed;
    if (cfg.montecarlo) cfg.montecarlo->seed = *a.seed;
  }
  if (a.noise) {
    if (*a.noise != "none" && *a.noise != "paper" && *a.noise != "custom") {
      throw Error(ErrorCode::Config, "--noise: expected none, paper or custom");
    }
    sc.noise = *a.noise;
  }
  if (a.reset) {
    try {
      sc.reset = parse_reset_policy(*a.reset);
    } catch (const Error&) {
      throw Error(ErrorCode::Config, "--reset: expected uniform, midpoint or max");
    }
    if (cfg.montecarlo) cfg.montecarlo->reset = sc.reset;
  }
  if (a.horizon) {
    if (!(*a.horizon > 0.0)) throw Error(ErrorCode::Config, "--horizon must be positive");
    sc.horizon = *a.horizon;
    if (cfg.montecarlo) cfg.montecarlo->horizon = *a.horizon;
  }
  if (a.out) cfg.output.dir = *a.out;
  return cfg;
}

std::string join(const NodeSet& s) {
  std::ostringstream os;
  os << '{';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? ", " : "") << s[i];
  os << '}';
  return os.str();
}

struct Certificate {
  bool requested = false;
  std::optional<CertificateParams> params;
  std::string source;
  std::string message;
  std::optional<CertificateReport> report;
};

Certificate obtain_certificate(const RunConfig& cfg, const EnsembleSystem& sys) {
  Certificate c;
  if (!cfg.doc.contains("certificate")) return c;
  c.requested = true;
  if (!cfg.certificate.P_file.empty()) {
    CertificateParams p = params_from_csv(read_file(cfg.certificate.P_file), sys);
    p.validate(sys);
    c.params = std::move(p);
    c.source = "file";
    c.message = "P read from " + cfg.certificate.P_file;
  } else if (cfg.certificate.search) {
    SearchSpec spec;
    spec.epsilon = cfg.certificate.epsilon;
    SearchResult r = search_P(sys, cfg.certificate.sigma, spec, cfg.certificate.options);
    c.source = "search";
    c.message = r.message;
    c.params = r.params;
  }
  if (c.params) c.report = corner_check(sys, *c.params, cfg.certificate.options);
  return c;
}

OJson vec_json(const Eigen::VectorXd& v) {
  return OJson(std::vector<double>(v.data(), v.data() + v.size()));
}

// ‖x°‖ statistics over the last quarter of the horizon.
OJson noise_band(const HybridTrace& tr, double horizon) {
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0, log_sum = 0.0;
  int n = 0;
  for (const TraceSample& s : tr.samples) {
    if (s.t < 0.75 * horizon || !s.trigger.empty()) continue;
    lo = std::min(lo, s.norm_xcirc);
    hi = std::max(hi, s.norm_xcirc);
    log_sum += std::log(std::max(s.norm_xcirc, 1e-300));
    ++n;
  }
  OJson j;
  j["window"] = {0.75 * horizon, horizon};
  j["samples"] = n;
  j["min"] = n ? lo : 0.0;
  j["max"] = hi;
  j["geometric_mean"] = n ? std::exp(log_sum / n) : 0.0;
  return j;
}

OJson decay_fit(const HybridTrace& tr, bool use_distance) {
  std::vector<double> ts, vs;
  for (const TraceSample& s : tr.samples) {
    if (!s.trigger.empty()) continue;
    ts.push_back(s.t);
    vs.push_back(use_distance ? s.distance : s.norm_xcirc);
  }
  const LinearFit f = fit_log_decay(ts, vs);
  return OJson{{"slope", f.slope}, {"intercept", f.intercept}, {"points", f.points}};
}

OJson time_bound_json(const TimeBoundCheck& c) {
  OJson j;
  j["lower_ok"] = c.lower_ok;
  j["upper_ok"] = c.upper_ok;
  j["lower_violations"] = c.lower_violations;
  j["upper_violations"] = c.upper_violations;
  j["relaxed_upper_violations"] = c.relaxed_upper_violations;
  OJson first = OJson::array();
  for (const Violation& v : c.violations) {
    first.push_back({{"t", v.t}, {"j", v.j}, {"lower", v.lower}, {"upper", v.upper}});
  }
  j["first_violations"] = first;
  return j;
}

OJson gaps_json(const EnsembleSystem& sys, const HybridTrace& tr) {
  OJson j;
  bool all_ok = true;
  for (const auto& [label, gaps] : inter_jump_gaps(tr)) {
    // gaps[0] runs from the initial timer value, not from a reset
    if (gaps.size() < 2) continue;
    const bool agent = label.rfind("agent", 0) == 0;
    const int idx = std::stoi(label.substr(5)) - 1;
    const TimerBounds b = agent ? sys.gains().agent_timers[idx] : sys.gains().inter_timers[idx];
    const auto [mn, mx] = std::minmax_element(gaps.begin() + 1, gaps.end());
    const bool ok = *mn >= b.lower - 1e-9 && *mx <= b.upper + 1e-9;
    all_ok = all_ok && ok;
    j[label] = {{"min", *mn}, {"max", *mx}, {"bounds", {b.lower, b.upper}}, {"ok", ok}};
  }
  return OJson{{"ok", all_ok}, {"per_timer", j}};
}

void write_outputs(const fs::path& dir, const std::string& name, const std::string& content,
                   std::ostream& out) {
  const fs::path p = dir / name;
  write_file(p.string(), content);
  out << "wrote " << p.string() << '\n';
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

int cmd_validate(const CommandArgs& a, std::ostream& out) {
  const RunConfig cfg = load(a);
  const ClusteredNetwork& net = cfg.network;
  out << "config " << a.config << " (hash " << cfg.hash << ")\n";
  out << "network: N=" << net.size() << ", " << net.edges().size() << " edges, connected\n";
  for (int k = 0; k < net.num_clusters(); ++k) {
    out << "  cluster " << k + 1 << ": " << join(net.partition()[k]) << " connected\n";
  }
  for (int r = 0; r < net.num_inter_clusters(); ++r) {
    const InterCluster& ic = net.inter_clusters()[r];
    out << "  inter-cluster " << r + 1 << ": clusters (" << ic.cluster_a + 1 << ','
        << ic.cluster_b + 1 << "), nodes " << join(ic.nodes) << ", " << ic.edges.size()
        << " cross edges\n";
  }
  out << "M=" << net.num_clusters() << ", M*=" << net.num_inter_clusters() << '\n';

  const EnsembleSystem sys = build_system(cfg);
  const Dimensions& d = sys.dims();
  const PlantDiagnostics pd = diagnose(sys.plant());
  out << "plant: n=" << d.n << ", m=" << d.m << ", d=" << sys.plant().d()
      << ", controllable " << (pd.controllable ? "yes" : "no") << ", observable "
      << (pd.observable ? "yes" : "no") << '\n';
  out << std::setprecision(6) << "spectrum: lambda_2=" << sys.spectral().D(0)
      << ", lambda_N=" << sys.spectral().D(d.N - 2) << '\n';
  out << "reduced state dimension " << d.rho() << ", N*=" << d.N + d.M_star
      << ", T_min=" << sys.T_min() << ", T_max=" << sys.T_max() << '\n';
  out << "F11 Hurwitz: " << (sys.F11_hurwitz() ? "yes" : "no") << '\n';
  out << "ok\n";
  return 0;
}

int cmd_certify(const CommandArgs& a, std::ostream& out) {
  const RunConfig cfg = load(a);
  if (!cfg.doc.contains("certificate")) {
    throw Error(ErrorCode::Config, "config.certificate: missing section");
  }
  const EnsembleSystem sys = build_system(cfg);
  const Certificate cert = obtain_certificate(cfg, sys);
  const fs::path dir(cfg.output.dir);

  OJson j;
  j["config_hash"] = cfg.hash;
  j["source"] = cert.source;
  j["message"] = cert.message;
  if (!cert.report) {
    j["certified"] = false;
    write_outputs(dir, "certificate.json", j.dump(2) + "\n", out);
    out << "Infeasible: " << cert.message << '\n';
    return 1;
  }
  const CertificateReport& r = *cert.report;
  j["report"] = OJson::parse(report_to_json(r));
  write_outputs(dir, "certificate.json", j.dump(2) + "\n", out);
  if (cert.source == "search") write_outputs(dir, "P.csv", params_to_csv(*cert.params), out);

  out << std::setprecision(6);
  out << "lambda_max M(0,0) = " << r.lambda_max_lower << ", lambda_max M(T2,T4) = "
      << r.lambda_max_upper << '\n';
  if (r.vertices_checked) {
    out << "vertices: " << r.vertex_count << " checked, max lambda_max = " << r.vertex_max_lambda
        << '\n';
  } else {
    out << "sampled " << r.grid_samples << " interior points, max lambda_max = "
        << r.grid_max_lambda << '\n';
  }
  if (!r.certified) {
    out << "not certified";
    if (!r.corner_lower_ok) out << ": lower corner lambda_max " << r.lambda_max_lower;
    else if (!r.corner_upper_ok) out << ": upper corner lambda_max " << r.lambda_max_upper;
    else if (r.vertices_checked && !r.vertices_ok) out << ": vertex lambda_max " << r.vertex_max_lambda;
    out << '\n';
    return 1;
  }
  out << "certified: mu=" << r.mu << ", kappa=" << r.kappa << ", alpha=" << r.alpha
      << ", kappa2=" << r.kappa2 << ", N*=" << r.N_star << '\n';
  return 0;
}

int cmd_simulate(const CommandArgs& a, std::ostream& out) {
  const auto t0 = std::chrono::steady_clock::now();
  const RunConfig cfg = load(a);
  const EnsembleSystem sys = build_system(cfg);
  const Certificate cert = obtain_certificate(cfg, sys);
  const HybridState init = initial_state(cfg, sys);
  SimOptions opts = simulation_options(cfg, sys);
  if (cert.params) opts.lyapunov = make_lyapunov(sys, *cert.params);

  HybridTrace tr = simulate(sys, init, opts);
  tr.config_hash = cfg.hash;
  const SimulationConfig& sc = cfg.simulation;

  OJson j;
  j["config_hash"] = cfg.hash;
  j["seed"] = sc.seed;
  j["horizon"] = sc.horizon;
  j["reset"] = to_string(sc.reset);
  j["noise"] = sc.noise;
  j["N"] = sys.dims().N;
  j["M"] = sys.dims().M;
  j["M_star"] = sys.dims().M_star;
  j["reduced_dimension"] = sys.dims().rho();
  j["jumps"] = {{"total", tr.jumps.size()}, {"agent", tr.agent_jumps}, {"inter", tr.inter_jumps}};
  j["samples"] = tr.samples.size();
  const double d0 = tr.samples.front().distance;
  j["initial_distance"] = d0;
  j["final_distance"] = tr.samples.back().distance;
  j["final_norm_xcirc"] = tr.samples.back().norm_xcirc;
  j["decay_fit_distance"] = decay_fit(tr, true);
  j["decay_fit_xcirc"] = decay_fit(tr, false);
  j["noise_band_xcirc"] = noise_band(tr, sc.horizon);
  j["hybrid_time_bounds"] = time_bound_json(check_hybrid_time_bounds(tr));
  j["inter_jump_gaps"] = gaps_json(sys, tr);

  if (cert.requested) {
    OJson c;
    c["source"] = cert.source;
    c["message"] = cert.message;
    if (cert.report) {
      const CertificateReport& r = *cert.report;
      c["certified"] = r.certified;
      std::size_t increases = 0;
      for (const JumpRecord& jr : tr.jumps) {
        if (jr.V_after - jr.V_before > 1e-12 * jr.V_before) ++increases;
      }
      c["jump_V_increases"] = increases;
      if (r.certified) {
        const bool noisy = opts.noise.enabled;
        const double dsup = noisy ? noise_sup(sys, opts.noise, sc.horizon) : 0.0;
        std::size_t viol = 0;
        double worst_ratio = 0.0;
        for (const TraceSample& s : tr.samples) {
          const double env = noisy ? iss_envelope(r, d0, dsup, s.t, s.j)
                                   : ges_envelope(r, d0, s.t, s.j);
          worst_ratio = std::max(worst_ratio, s.distance / env);
          if (s.distance > env) ++viol;
        }
        c["envelope"] = noisy ? "iss" : "ges";
        c["noise_sup"] = dsup;
        c["envelope_violations"] = viol;
        c["worst_distance_to_envelope_ratio"] = worst_ratio;
        if (!noisy) {
          const double omega = 0.1 * d0;
          try {
            const double ts = t_star(r, d0, omega);
            std::size_t late = 0;
            for (const TraceSample& s : tr.samples) {
              if (s.t >= ts && s.distance > omega) ++late;
            }
            c["t_star"] = {{"omega", omega}, {"t_star", ts}, {"violations", late}};
          } catch (const Error& e) {
            c["t_star"] = {{"omega", omega}, {"error", e.what()}};
          }
        }
      }
    }
    j["certificate"] = c;
  }

  const fs::path dir(cfg.output.dir);
  write_outputs(dir, "trace.csv", trace_to_csv(tr, cfg.output.full_state), out);
  write_outputs(dir, "jumps.csv", jumps_to_csv(tr), out);
  write_outputs(dir, "summary.json", j.dump(2) + "\n", out);
  out << std::setprecision(6) << tr.jumps.size() << " jumps, final |xi|_A "
      << tr.samples.back().distance << ", final |x°| " << tr.samples.back().norm_xcirc
      << ", slope " << j["decay_fit_distance"]["slope"].get<double>() << " 1/s ("
      << seconds_since(t0) << " s)\n";
  return 0;
}

int cmd_rendezvous(const CommandArgs& a, std::ostream& out) {
  const auto t0 = std::chrono::steady_clock::now();
  const RunConfig cfg = load(a);
  if (!cfg.craft_plant) {
    throw Error(ErrorCode::Config, "config.plant: rendezvous needs plant.virtual_craft");
  }
  const EnsembleSystem sys = build_system(cfg);
  const HybridState init = initial_state(cfg, sys);
  const ScenarioConfig& scn = cfg.scenario;
  const auto crafts = crafts_from_state(sys, init, scn.ell, scn.heading_seed);
  RendezvousResult res = rendezvous_run(sys, crafts, init, simulation_options(cfg, sys), scn.ell,
                                        scn.rk4_step, scn.keep_every);
  res.trace.config_hash = cfg.hash;

  OJson j;
  j["config_hash"] = cfg.hash;
  j["seed"] = cfg.simulation.seed;
  j["horizon"] = cfg.simulation.horizon;
  j["noise"] = cfg.simulation.noise;
  j["ell"] = scn.ell;
  j["rk4_step"] = scn.rk4_step;
  j["N"] = sys.dims().N;
  j["jumps"] = res.trace.jumps.size();
  j["final_bow_spread"] = res.final_bow_spread;
  j["final_reference_spread"] = res.final_reference_spread;
  j["max_tracking_error"] = res.max_tracking_error;
  j["max_rigidity_error"] = res.max_rigidity_error;
  j["final_norm_xcirc"] = res.trace.samples.back().norm_xcirc;
  j["noise_band_xcirc"] = noise_band(res.trace, cfg.simulation.horizon);
  OJson fin = OJson::array();
  for (const CraftState& c : res.trajectory.back().crafts) {
    const Eigen::Vector2d b = c.bow(scn.ell);
    fin.push_back({{"c", vec_json(c.c)}, {"theta", c.theta}, {"bow", vec_json(b)}});
  }
  j["final_crafts"] = fin;

  const fs::path dir(cfg.output.dir);
  write_outputs(dir, "crafts.csv", craft_trajectory_to_csv(res, scn.ell), out);
  write_outputs(dir, "trace.csv", trace_to_csv(res.trace), out);
  write_outputs(dir, "jumps.csv", jumps_to_csv(res.trace), out);
  write_outputs(dir, "summary.json", j.dump(2) + "\n", out);
  out << std::setprecision(6) << "final bow spread " << res.final_bow_spread
      << ", max tracking error " << res.max_tracking_error << " (" << seconds_since(t0)
      << " s)\n";
  return 0;
}

int cmd_montecarlo(const CommandArgs& a, std::ostream& out) {
  const auto t0 = std::chrono::steady_clock::now();
  const RunConfig cfg = load(a);
  if (!cfg.montecarlo) throw Error(ErrorCode::Config, "config.montecarlo: missing section");
  MonteCarloOptions mo = *cfg.montecarlo;
  mo.keep_series = true;
  const auto runs = monte_carlo(mo);

  OJson j = OJson::parse(monte_carlo_to_json(runs, mo, cfg.montecarlo_threshold));
  j["config_hash"] = cfg.hash;
  const fs::path dir(cfg.output.dir);
  write_outputs(dir, "montecarlo.json", j.dump(2) + "\n", out);
  for (const MonteCarloRun& r : runs) {
    std::ostringstream os;
    os << std::setprecision(17) << "t,norm_xcirc\n";
    for (const auto& [t, v] : r.series) os << t << ',' << v << '\n';
    std::ostringstream name;
    name << "runs/run_" << std::setw(3) << std::setfill('0') << r.index + 1 << ".csv";
    write_file((dir / name.str()).string(), os.str());
  }
  out << "wrote " << runs.size() << " per-run CSVs under " << (dir / "runs").string() << '\n';
  out << j["below_threshold"].get<int>() << "/" << runs.size() << " runs end with |x°| below "
      << cfg.montecarlo_threshold << " (" << std::setprecision(4) << seconds_since(t0) << " s)\n";
  return 0;
}

int run_command(const std::string& name, const CommandArgs& a, std::ostream& out,
                std::ostream& err) {
  try {
    if (name == "validate") return cmd_validate(a, out);
    if (name == "certify") return cmd_certify(a, out);
    if (name == "simulate") return cmd_simulate(a, out);
    if (name == "rendezvous") return cmd_rendezvous(a, out);
    if (name == "montecarlo") return cmd_montecarlo(a, out);
    err << "unknown command " << name << '\n';
    return 2;
  } catch (const Error& e) {
    err << e.what() << '\n';
    return e.code() == ErrorCode::Config || e.code() == ErrorCode::Io ? 2 : 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace hycon::cli
