#include "hycon/config.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <random>
#include <set>
#include <sstream>

#include "hycon/error.hpp"

namespace hycon {

namespace fs = std::filesystem;

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw Error(ErrorCode::Config, path + ": " + what);
}

void allow(const Json& obj, const std::string& path, std::initializer_list<const char*> keys) {
  if (!obj.is_object()) fail(path, "expected an object");
  std::set<std::string> ok(keys.begin(), keys.end());
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!ok.count(it.key())) fail(path + "." + it.key(), "unknown key");
  }
}

const Json& need(const Json& obj, const char* key, const std::string& path) {
  if (!obj.contains(key)) fail(path + "." + key, "missing field");
  return obj.at(key);
}

double number(const Json& v, const std::string& path) {
  if (!v.is_number()) fail(path, "expected a number");
  return v.get<double>();
}

double number_or(const Json& obj, const char* key, const std::string& path, double dflt) {
  return obj.contains(key) ? number(obj.at(key), path + "." + key) : dflt;
}

std::int64_t integer(const Json& v, const std::string& path) {
  if (!v.is_number_integer()) fail(path, "expected an integer");
  return v.get<std::int64_t>();
}

std::uint64_t seed_or(const Json& obj, const char* key, const std::string& path,
                      std::uint64_t dflt) {
  if (!obj.contains(key)) return dflt;
  const Json& v = obj.at(key);
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  const std::int64_t s = integer(v, path + "." + key);
  if (s < 0) fail(path + "." + key, "expected a non-negative integer");
  return static_cast<std::uint64_t>(s);
}

bool boolean_or(const Json& obj, const char* key, const std::string& path, bool dflt) {
  if (!obj.contains(key)) return dflt;
  if (!obj.at(key).is_boolean()) fail(path + "." + key, "expected true or false");
  return obj.at(key).get<bool>();
}

std::string string_or(const Json& obj, const char* key, const std::string& path,
                      const std::string& dflt) {
  if (!obj.contains(key)) return dflt;
  if (!obj.at(key).is_string()) fail(path + "." + key, "expected a string");
  return obj.at(key).get<std::string>();
}

Eigen::VectorXd vector(const Json& v, const std::string& path) {
  if (!v.is_array()) fail(path, "expected an array of numbers");
  Eigen::VectorXd out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    out(static_cast<Eigen::Index>(i)) = number(v[i], path + "[" + std::to_string(i) + "]");
  }
  return out;
}

Eigen::MatrixXd matrix(const Json& v, const std::string& path) {
  if (!v.is_array() || v.empty()) fail(path, "expected a non-empty array of rows");
  const std::size_t rows = v.size();
  if (!v[0].is_array() || v[0].empty()) fail(path + "[0]", "expected a non-empty row");
  const std::size_t cols = v[0].size();
  Eigen::MatrixXd out(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    const std::string rp = path + "[" + std::to_string(i) + "]";
    if (!v[i].is_array() || v[i].size() != cols) fail(rp, "rows must have equal length");
    for (std::size_t k = 0; k < cols; ++k) {
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) =
          number(v[i][k], rp + "[" + std::to_string(k) + "]");
    }
  }
  return out;
}

TimerBounds interval(const Json& v, const std::string& path) {
  if (!v.is_array() || v.size() != 2) fail(path, "expected [lower, upper]");
  TimerBounds b{number(v[0], path + "[0]"), number(v[1], path + "[1]")};
  if (!(b.lower > 0.0 && b.lower <= b.upper)) fail(path, "need 0 < lower <= upper");
  return b;
}

std::pair<double, double> range(const Json& v, const std::string& path) {
  if (!v.is_array() || v.size() != 2) fail(path, "expected [lo, hi]");
  return {number(v[0], path + "[0]"), number(v[1], path + "[1]")};
}

std::string resolve(const std::string& base, const std::string& p) {
  fs::path q(p);
  return q.is_absolute() ? q.string() : (fs::path(base) / q).string();
}

ClusteredNetwork parse_network_body(const Json& n, const std::string& path) {
  allow(n, path, {"nodes", "edges", "clusters"});
  const std::int64_t nodes = integer(need(n, "nodes", path), path + ".nodes");
  const Json& e = need(n, "edges", path);
  if (!e.is_array()) fail(path + ".edges", "expected an array of [p, q] pairs");
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < e.size(); ++i) {
    const std::string ep = path + ".edges[" + std::to_string(i) + "]";
    if (!e[i].is_array() || e[i].size() != 2) fail(ep, "expected [p, q]");
    edges.emplace_back(static_cast<int>(integer(e[i][0], ep + "[0]")),
                       static_cast<int>(integer(e[i][1], ep + "[1]")));
  }
  const Json& c = need(n, "clusters", path);
  if (!c.is_array()) fail(path + ".clusters", "expected an array of node lists");
  std::vector<NodeSet> partition;
  for (std::size_t i = 0; i < c.size(); ++i) {
    const std::string cp = path + ".clusters[" + std::to_string(i) + "]";
    if (!c[i].is_array()) fail(cp, "expected a node list");
    NodeSet s;
    for (std::size_t k = 0; k < c[i].size(); ++k) {
      s.push_back(static_cast<int>(integer(c[i][k], cp + "[" + std::to_string(k) + "]")));
    }
    partition.push_back(std::move(s));
  }
  return ClusteredNetwork::build(static_cast<int>(nodes), std::move(edges), std::move(partition));
}

ClusteredNetwork parse_network(const Json& n, const std::string& base) {
  const std::string path = "network";
  if (!n.is_object()) fail(path, "expected an object");
  if (n.contains("file")) {
    allow(n, path, {"file"});
    if (!n.at("file").is_string()) fail(path + ".file", "expected a path");
    const std::string file = resolve(base, n.at("file").get<std::string>());
    Json sub;
    try {
      sub = Json::parse(read_file(file));
    } catch (const Json::parse_error& e) {
      fail(path + ".file", std::string("cannot parse ") + file + ": " + e.what());
    }
    return parse_network_body(sub, file);
  }
  if (n.contains("random")) {
    allow(n, path, {"random"});
    const Json& r = n.at("random");
    const std::string rp = path + ".random";
    allow(r, rp, {"nodes", "clusters", "extra_edge_prob", "seed"});
    return random_clustered_network(static_cast<int>(integer(need(r, "nodes", rp), rp + ".nodes")),
                                    static_cast<int>(integer(need(r, "clusters", rp), rp + ".clusters")),
                                    number_or(r, "extra_edge_prob", rp, 0.1), seed_or(r, "seed", rp, 1));
  }
  if (n.contains("preset")) {
    allow(n, path, {"preset"});
    if (n.at("preset") != "craft14") fail(path + ".preset", "only \"craft14\" is known");
    return craft14_network();
  }
  return parse_network_body(n, path);
}

}  // namespace

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path);
  out << content;
  if (!out) throw Error(ErrorCode::Io, "write failed for " + path);
}

RunConfig parse_config(const Json& doc, const std::string& base_dir) {
  allow(doc, "config", {"schema_version", "network", "plant", "gains", "timers", "certificate",
                        "simulation", "scenario", "montecarlo", "output"});
  const std::int64_t version = integer(need(doc, "schema_version", "config"), "config.schema_version");
  if (version != 1) fail("config.schema_version", "only version 1 is supported");

  RunConfig cfg;
  cfg.doc = doc;
  cfg.base_dir = base_dir;
  cfg.hash = hex64(fnv1a64(doc.dump()));

  cfg.network = parse_network(need(doc, "network", "config"), base_dir);
  const int N = cfg.network.size();
  const int M_star = cfg.network.num_inter_clusters();

  // plant
  {
    const Json& p = need(doc, "plant", "config");
    const std::string path = "plant";
    if (p.is_object() && p.contains("virtual_craft")) {
      allow(p, path, {"virtual_craft"});
      const Json& v = p.at("virtual_craft");
      const std::string vp = path + ".virtual_craft";
      allow(v, vp, {"mass", "damping"});
      VirtualPlantParams vpp;
      if (v.contains("mass")) vpp.mass = matrix(v.at("mass"), vp + ".mass");
      if (v.contains("damping")) vpp.damping = matrix(v.at("damping"), vp + ".damping");
      if (vpp.mass.rows() != 2 || vpp.damping.rows() != 2) fail(vp, "mass and damping are 2 × 2");
      cfg.plant = virtual_plant(vpp);
      cfg.craft_plant = true;
    } else {
      allow(p, path, {"A", "B", "H"});
      cfg.plant.A = matrix(need(p, "A", path), path + ".A");
      cfg.plant.B = matrix(need(p, "B", path), path + ".B");
      cfg.plant.H = matrix(need(p, "H", path), path + ".H");
      try {
        cfg.plant.validate();
      } catch (const Error& e) {
        fail(path, e.what());
      }
    }
  }

  // gains and timers
  {
    const Json& g = need(doc, "gains", "config");
    const std::string path = "gains";
    allow(g, path, {"K_u", "K_eta", "K_zeta", "K_eta_per_agent", "K_zeta_per_pair"});
    cfg.gains.K_u = matrix(need(g, "K_u", path), path + ".K_u");
    if (g.contains("K_eta_per_agent")) {
      const Json& a = g.at("K_eta_per_agent");
      if (!a.is_array() || static_cast<int>(a.size()) != N) {
        fail(path + ".K_eta_per_agent", "expected one matrix per agent");
      }
      for (std::size_t p = 0; p < a.size(); ++p) {
        cfg.gains.K_eta.push_back(matrix(a[p], path + ".K_eta_per_agent[" + std::to_string(p) + "]"));
      }
    } else {
      cfg.gains.K_eta.assign(N, matrix(need(g, "K_eta", path), path + ".K_eta"));
    }
    if (g.contains("K_zeta_per_pair")) {
      const Json& a = g.at("K_zeta_per_pair");
      const std::string ap = path + ".K_zeta_per_pair";
      if (!a.is_array() || static_cast<int>(a.size()) != M_star) {
        fail(ap, "expected one list per inter-cluster");
      }
      for (std::size_t r = 0; r < a.size(); ++r) {
        const std::string rp = ap + "[" + std::to_string(r) + "]";
        if (!a[r].is_array() || static_cast<int>(a[r].size()) != N) {
          fail(rp, "expected one matrix per agent");
        }
        std::vector<Eigen::MatrixXd> row;
        for (std::size_t p = 0; p < a[r].size(); ++p) {
          row.push_back(matrix(a[r][p], rp + "[" + std::to_string(p) + "]"));
        }
        cfg.gains.K_zeta.push_back(std::move(row));
      }
    } else {
      const Eigen::MatrixXd K = matrix(need(g, "K_zeta", path), path + ".K_zeta");
      cfg.gains.K_zeta.assign(M_star, std::vector<Eigen::MatrixXd>(N, K));
    }

    const Json& t = need(doc, "timers", "config");
    const std::string tp = "timers";
    allow(t, tp, {"agent", "inter", "agent_per", "inter_per"});
    if (t.contains("agent_per")) {
      const Json& a = t.at("agent_per");
      if (!a.is_array() || static_cast<int>(a.size()) != N) fail(tp + ".agent_per", "one interval per agent");
      for (std::size_t p = 0; p < a.size(); ++p) {
        cfg.gains.agent_timers.push_back(interval(a[p], tp + ".agent_per[" + std::to_string(p) + "]"));
      }
    } else {
      cfg.gains.agent_timers.assign(N, interval(need(t, "agent", tp), tp + ".agent"));
    }
    if (t.contains("inter_per")) {
      const Json& a = t.at("inter_per");
      if (!a.is_array() || static_cast<int>(a.size()) != M_star) {
        fail(tp + ".inter_per", "one interval per inter-cluster");
      }
      for (std::size_t r = 0; r < a.size(); ++r) {
        cfg.gains.inter_timers.push_back(interval(a[r], tp + ".inter_per[" + std::to_string(r) + "]"));
      }
    } else if (M_star > 0) {
      cfg.gains.inter_timers.assign(M_star, interval(need(t, "inter", tp), tp + ".inter"));
    }
  }

  if (doc.contains("certificate")) {
    const Json& c = doc.at("certificate");
    const std::string path = "certificate";
    allow(c, path, {"sigma", "epsilon", "margin", "grid_samples", "grid_seed", "max_exact_timers",
                    "P_file", "search"});
    cfg.certificate.sigma = number(need(c, "sigma", path), path + ".sigma");
    cfg.certificate.epsilon = number_or(c, "epsilon", path, 0.5);
    cfg.certificate.options.margin = number_or(c, "margin", path, 1e-9);
    if (c.contains("grid_samples")) {
      cfg.certificate.options.grid_samples =
          static_cast<int>(integer(c.at("grid_samples"), path + ".grid_samples"));
    }
    cfg.certificate.options.grid_seed = seed_or(c, "grid_seed", path, 1);
    if (c.contains("max_exact_timers")) {
      cfg.certificate.options.max_exact_timers =
          static_cast<int>(integer(c.at("max_exact_timers"), path + ".max_exact_timers"));
    }
    const std::string pf = string_or(c, "P_file", path, "");
    if (!pf.empty()) {
      cfg.certificate.P_file = resolve(base_dir, pf);
      if (!fs::exists(cfg.certificate.P_file)) fail(path + ".P_file", "no such file " + pf);
    }
    cfg.certificate.search = boolean_or(c, "search", path, cfg.certificate.P_file.empty());
  }

  if (doc.contains("simulation")) {
    const Json& s = doc.at("simulation");
    const std::string path = "simulation";
    allow(s, path, {"horizon", "seed", "reset", "sample_dt", "sample_after_jumps", "noise",
                    "perturbation", "initial"});
    SimulationConfig& sc = cfg.simulation;
    sc.horizon = number(need(s, "horizon", path), path + ".horizon");
    if (!(sc.horizon > 0.0)) fail(path + ".horizon", "must be positive");
    sc.seed = seed_or(s, "seed", path, 0);
    try {
      sc.reset = parse_reset_policy(string_or(s, "reset", path, "uniform"));
    } catch (const Error&) {
      fail(path + ".reset", "expected uniform, midpoint or max");
    }
    sc.sample_dt = number_or(s, "sample_dt", path, 1e-3);
    if (!(sc.sample_dt > 0.0)) fail(path + ".sample_dt", "must be positive");
    sc.sample_after_jumps = boolean_or(s, "sample_after_jumps", path, true);
    sc.noise = string_or(s, "noise", path, "none");
    if (sc.noise != "none" && sc.noise != "paper" && sc.noise != "custom") {
      fail(path + ".noise", "expected none, paper or custom");
    }
    if (s.contains("perturbation")) {
      const Json& p = s.at("perturbation");
      const std::string pp = path + ".perturbation";
      allow(p, pp, {"a1", "a2", "w1", "w2", "w3", "w4"});
      PerturbationSpec& ps = sc.perturbation;
      ps.a1 = number_or(p, "a1", pp, ps.a1);
      ps.a2 = number_or(p, "a2", pp, ps.a2);
      ps.w1 = number_or(p, "w1", pp, ps.w1);
      ps.w2 = number_or(p, "w2", pp, ps.w2);
      ps.w3 = number_or(p, "w3", pp, ps.w3);
      ps.w4 = number_or(p, "w4", pp, ps.w4);
      if (ps.a1 < 0.0 || ps.a2 < 0.0) fail(pp, "amplitudes must be non-negative");
    }
    if (s.contains("initial")) {
      const Json& i = s.at("initial");
      const std::string ip = path + ".initial";
      allow(i, ip, {"x", "random_box", "seed", "timers"});
      if (i.contains("x")) sc.x0 = vector(i.at("x"), ip + ".x");
      sc.random_box = number_or(i, "random_box", ip, sc.random_box);
      sc.initial_seed = seed_or(i, "seed", ip, sc.initial_seed);
      sc.initial_timers = string_or(i, "timers", ip, "random");
      if (sc.initial_timers != "random" && sc.initial_timers != "max") {
        fail(ip + ".timers", "expected random or max");
      }
    }
  }

  if (doc.contains("scenario")) {
    const Json& s = doc.at("scenario");
    const std::string path = "scenario";
    allow(s, path, {"ell", "rk4_step", "heading_seed", "keep_every"});
    cfg.scenario.ell = number_or(s, "ell", path, cfg.scenario.ell);
    if (!(cfg.scenario.ell > 0.0)) fail(path + ".ell", "must be positive");
    cfg.scenario.rk4_step = number_or(s, "rk4_step", path, cfg.scenario.rk4_step);
    cfg.scenario.heading_seed = seed_or(s, "heading_seed", path, cfg.scenario.heading_seed);
    if (s.contains("keep_every")) {
      cfg.scenario.keep_every = static_cast<int>(integer(s.at("keep_every"), path + ".keep_every"));
    }
  }

  if (doc.contains("montecarlo")) {
    const Json& m = doc.at("montecarlo");
    const std::string path = "montecarlo";
    allow(m, path, {"runs", "seed", "nodes", "clusters", "extra_edge_prob", "amplitude_range",
                    "horizon", "sample_dt", "box", "K_u_scale", "threshold"});
    MonteCarloOptions mo;
    mo.runs = static_cast<int>(integer(need(m, "runs", path), path + ".runs"));
    mo.seed = seed_or(m, "seed", path, mo.seed);
    if (m.contains("nodes")) mo.n_nodes = static_cast<int>(integer(m.at("nodes"), path + ".nodes"));
    if (m.contains("clusters")) {
      const auto [lo, hi] = range(m.at("clusters"), path + ".clusters");
      mo.min_clusters = static_cast<int>(lo);
      mo.max_clusters = static_cast<int>(hi);
    }
    mo.extra_edge_prob = number_or(m, "extra_edge_prob", path, mo.extra_edge_prob);
    if (m.contains("amplitude_range")) {
      std::tie(mo.amplitude_lo, mo.amplitude_hi) = range(m.at("amplitude_range"), path + ".amplitude_range");
    }
    mo.horizon = number_or(m, "horizon", path, mo.horizon);
    mo.sample_dt = number_or(m, "sample_dt", path, mo.sample_dt);
    mo.box = number_or(m, "box", path, mo.box);
    mo.preset.K_u_scale = number_or(m, "K_u_scale", path, mo.preset.K_u_scale);
    cfg.montecarlo_threshold = number_or(m, "threshold", path, cfg.montecarlo_threshold);
    cfg.montecarlo = mo;
  }

  if (doc.contains("output")) {
    const Json& o = doc.at("output");
    allow(o, "output", {"dir", "full_state"});
    cfg.output.dir = string_or(o, "dir", "output", cfg.output.dir);
    cfg.output.full_state = boolean_or(o, "full_state", "output", false);
  }
  return cfg;
}

RunConfig load_config(const std::string& path) {
  Json doc;
  try {
    doc = Json::parse(read_file(path));
  } catch (const Json::parse_error& e) {
    throw Error(ErrorCode::Config, path + ": " + e.what());
  }
  const fs::path p(path);
  return parse_config(doc, p.has_parent_path() ? p.parent_path().string() : ".");
}

EnsembleSystem build_system(const RunConfig& cfg) {
  return EnsembleSystem::build(cfg.network, cfg.plant, cfg.gains);
}

HybridState initial_state(const RunConfig& cfg, const EnsembleSystem& sys) {
  const SimulationConfig& sc = cfg.simulation;
  HybridState s;
  if (sc.x0) {
    if (sc.x0->size() != sys.dims().n * sys.dims().N) {
      fail("simulation.initial.x", "expected " + std::to_string(sys.dims().n * sys.dims().N) + " entries");
    }
    s = make_state(sys, *sc.x0);
    if (sc.initial_timers == "random") {
      std::mt19937_64 rng(sc.initial_seed);
      for (int p = 0; p < sys.dims().N; ++p) {
        s.tau(p) = std::uniform_real_distribution<double>(0.0, sys.gains().agent_timers[p].upper)(rng);
      }
      for (int r = 0; r < sys.dims().M_star; ++r) {
        s.rho(r) = std::uniform_real_distribution<double>(0.0, sys.gains().inter_timers[r].upper)(rng);
      }
    }
    return s;
  }
  s = random_initial_state(sys, sc.initial_seed, sc.random_box);
  if (sc.initial_timers == "max") {
    s.tau = tau_upper(sys);
    s.rho = rho_upper(sys);
  }
  return s;
}

SimOptions simulation_options(const RunConfig& cfg, const EnsembleSystem& sys) {
  const SimulationConfig& sc = cfg.simulation;
  SimOptions o;
  o.horizon = sc.horizon;
  o.reset = sc.reset;
  o.seed = sc.seed;
  o.sample_dt = sc.sample_dt;
  o.sample_after_jumps = sc.sample_after_jumps;
  PerturbationSpec ps = sc.noise == "paper" ? PerturbationSpec{} : sc.perturbation;
  ps.enabled = sc.noise != "none";
  o.noise = make_noise(ps, sys.dims().m);
  return o;
}

}  // namespace hycon
