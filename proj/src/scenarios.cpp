#include "hycon/scenarios.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iomanip>
#include <numbers>
#include <random>
#include <sstream>
#include <thread>

#include "json.hpp"

#include "hycon/error.hpp"

namespace hycon {

Eigen::Vector2d CraftState::bow(double ell) const {
  return c + ell * Eigen::Vector2d(std::cos(theta), std::sin(theta));
}

double wrap_angle(double a) {
  constexpr double pi = std::numbers::pi;
  double w = std::remainder(a, 2.0 * pi);  // [-π, π]
  if (w <= -pi) w += 2.0 * pi;
  return w;
}

Eigen::Vector2d inverse_map(double theta, const Eigen::Vector2d& bow_velocity, double ell) {
  if (!(ell > 0.0)) throw Error(ErrorCode::Config, "bow offset must be positive");
  const double c = std::cos(theta), s = std::sin(theta);
  // R(θ)⁻¹ = R(θ)ᵀ
  const double along = c * bow_velocity.x() + s * bow_velocity.y();
  const double across = -s * bow_velocity.x() + c * bow_velocity.y();
  return {along, across / ell};
}

namespace {

Eigen::Vector3d craft_rate(const Eigen::Vector3d& q, double ell, const Eigen::Vector2d& bdot) {
  const Eigen::Vector2d u = inverse_map(q(2), bdot, ell);
  return {u(0) * std::cos(q(2)), u(0) * std::sin(q(2)), u(1)};
}

}  // namespace

CraftState integrate_craft(CraftState s, double ell,
                           const std::function<Eigen::Vector2d(double)>& bow_velocity, double t0,
                           double t1, double h) {
  if (!(h > 0.0)) throw Error(ErrorCode::Config, "step must be positive");
  Eigen::Vector3d q(s.c.x(), s.c.y(), s.theta);
  double t = t0;
  while (t < t1 - 1e-15) {
    const double dt = std::min(h, t1 - t);
    const Eigen::Vector3d k1 = craft_rate(q, ell, bow_velocity(t));
    const Eigen::Vector3d k2 = craft_rate(q + 0.5 * dt * k1, ell, bow_velocity(t + 0.5 * dt));
    const Eigen::Vector3d k3 = craft_rate(q + 0.5 * dt * k2, ell, bow_velocity(t + 0.5 * dt));
    const Eigen::Vector3d k4 = craft_rate(q + dt * k3, ell, bow_velocity(t + dt));
    q += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    q(2) = wrap_angle(q(2));
    t += dt;
  }
  s.c = q.head<2>();
  s.theta = q(2);
  return s;
}

Plant virtual_plant(const VirtualPlantParams& p) {
  Eigen::LLT<Eigen::Matrix2d> llt(0.5 * (p.mass + p.mass.transpose()));
  if (llt.info() != Eigen::Success || (p.mass - p.mass.transpose()).norm() > 1e-12) {
    throw Error(ErrorCode::NotPositiveDefinite, "mass matrix must be symmetric positive definite");
  }
  if (p.damping.isZero()) throw Error(ErrorCode::Config, "damping matrix must be nonzero");
  const Eigen::Matrix2d Minv = p.mass.inverse();
  Plant pl;
  pl.A = Eigen::MatrixXd::Zero(4, 4);
  pl.A.topRightCorner(2, 2) = Eigen::Matrix2d::Identity();
  pl.A.bottomRightCorner(2, 2) = -Minv * p.damping;
  pl.B = Eigen::MatrixXd::Zero(4, 2);
  pl.B.bottomRows(2) = Minv;
  pl.H = Eigen::MatrixXd::Zero(2, 4);
  pl.H.leftCols(2) = Eigen::Matrix2d::Identity();
  return pl;
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> paper_perturbations(double t,
                                                                const PerturbationSpec& spec,
                                                                int m) {
  const double dp = spec.a1 * std::sin(spec.w1 * t) * std::sin(spec.w2 * t);
  const double dpr = spec.a2 * std::sin(spec.w3 * t) * std::cos(spec.w4 * t);
  return {Eigen::VectorXd::Constant(m, dp), Eigen::VectorXd::Constant(m, dpr)};
}

NoiseModel make_noise(const PerturbationSpec& spec, int m) {
  NoiseModel nm;
  nm.enabled = spec.enabled;
  nm.delta_p = [spec, m](double t, int) { return paper_perturbations(t, spec, m).first; };
  nm.delta_pr = [spec, m](double t, int, int) { return paper_perturbations(t, spec, m).second; };
  return nm;
}

ClusteredNetwork craft14_network() {
  std::vector<Edge> edges = {
      // clusters
      {1, 2}, {2, 3}, {1, 3}, {4, 5}, {5, 6}, {4, 6}, {7, 8}, {8, 9}, {7, 9},
      {10, 11}, {11, 12}, {10, 12}, {13, 14},
      // cross edges, two per realized cluster pair
      {1, 4}, {3, 6}, {1, 10}, {2, 12}, {2, 13}, {3, 13}, {4, 7}, {5, 9},
      {5, 13}, {6, 13}, {7, 10}, {8, 11}, {8, 14}, {9, 14}, {11, 14}, {12, 14},
  };
  std::vector<NodeSet> partition = {{1, 2, 3}, {4, 5, 6}, {7, 8, 9}, {10, 11, 12}, {13, 14}};
  return ClusteredNetwork::build(14, std::move(edges), std::move(partition));
}

EnsembleSystem make_craft_system(ClusteredNetwork net, const CraftPresetParams& p) {
  Plant plant = virtual_plant(p.plant);
  GainSet g = GainSet::homogeneous(net, p.K_u_scale * Eigen::MatrixXd::Identity(2, 2), p.K_est,
                                   p.K_est, {p.T1, p.T2}, {p.T3, p.T4});
  return EnsembleSystem::build(std::move(net), std::move(plant), std::move(g));
}

HybridState random_initial_state(const EnsembleSystem& sys, std::uint64_t seed, double box) {
  const Dimensions& d = sys.dims();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> pos(-box, box);
  Eigen::VectorXd x = Eigen::VectorXd::Zero(d.n * d.N);
  const int half = std::max(1, d.m);
  for (int p = 0; p < d.N; ++p) {
    for (int i = 0; i < half && i < d.n; ++i) x(p * d.n + i) = pos(rng);
  }
  HybridState s = make_state(sys, x);
  for (int p = 0; p < d.N; ++p) {
    s.tau(p) = std::uniform_real_distribution<double>(0.0, sys.gains().agent_timers[p].upper)(rng);
  }
  for (int r = 0; r < d.M_star; ++r) {
    s.rho(r) = std::uniform_real_distribution<double>(0.0, sys.gains().inter_timers[r].upper)(rng);
  }
  return s;
}

std::vector<CraftState> crafts_from_state(const EnsembleSystem& sys, const HybridState& s,
                                          double ell, std::uint64_t seed) {
  const Dimensions& d = sys.dims();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> heading(-std::numbers::pi, std::numbers::pi);
  std::vector<CraftState> out(d.N);
  for (int p = 0; p < d.N; ++p) {
    out[p].theta = wrap_angle(heading(rng));
    const Eigen::Vector2d b = s.x.segment(p * d.n, 2);
    out[p].c = b - ell * Eigen::Vector2d(std::cos(out[p].theta), std::sin(out[p].theta));
  }
  return out;
}

RendezvousResult rendezvous_run(const EnsembleSystem& sys, const std::vector<CraftState>& crafts,
                                const HybridState& initial, SimOptions opts, double ell, double h,
                                int keep_every) {
  const Dimensions& d = sys.dims();
  if (d.n != 4 || d.m != 2) {
    throw Error(ErrorCode::DimensionMismatch, "rendezvous needs the virtual craft plant (n=4, m=2)");
  }
  if (static_cast<int>(crafts.size()) != d.N) {
    throw Error(ErrorCode::DimensionMismatch, "need one craft per agent");
  }
  RendezvousResult res;
  // Plant states at t = k h/2.
  std::vector<double> times;
  std::vector<Eigen::VectorXd> xs;
  auto user_observer = opts.observer;
  opts.observer = [&](double t, int j, const HybridState& s) {
    if (times.empty() || t > times.back()) {
      times.push_back(t);
      xs.push_back(s.x);
    }
    if (user_observer) user_observer(t, j, s);
  };
  opts.sample_dt = 0.5 * h;
  opts.sample_after_jumps = false;
  res.trace = simulate(sys, initial, opts);

  std::vector<CraftState> cur = crafts;
  auto track = [&](double t, const Eigen::VectorXd& x, bool keep) {
    for (int p = 0; p < d.N; ++p) {
      const Eigen::Vector2d b = cur[p].bow(ell);
      res.max_tracking_error =
          std::max(res.max_tracking_error, (b - x.segment(p * d.n, 2)).norm());
      res.max_rigidity_error =
          std::max(res.max_rigidity_error, std::abs((b - cur[p].c).norm() - ell));
    }
    if (keep) res.trajectory.push_back({t, cur, x});
  };
  track(times.front(), xs.front(), true);
  int step = 0;
  for (std::size_t k = 0; k + 2 < times.size(); k += 2) {
    const double t0 = times[k], t1 = times[k + 2];
    const std::size_t k0 = k;
    for (int p = 0; p < d.N; ++p) {
      auto ref = [&](double t) -> Eigen::Vector2d {
        const std::size_t idx = t <= t0 ? k0 : (t >= t1 ? k0 + 2 : k0 + 1);
        return xs[idx].segment(p * d.n + 2, 2);
      };
      cur[p] = integrate_craft(cur[p], ell, ref, t0, t1, t1 - t0);
    }
    ++step;
    track(t1, xs[k + 2], keep_every > 0 && step % keep_every == 0);
  }

  const auto& last = cur;
  const Eigen::VectorXd& xl = xs.back();
  for (int p = 0; p < d.N; ++p) {
    for (int q = p + 1; q < d.N; ++q) {
      res.final_bow_spread =
          std::max(res.final_bow_spread, (last[p].bow(ell) - last[q].bow(ell)).norm());
      res.final_reference_spread = std::max(
          res.final_reference_spread, (xl.segment(p * d.n, 2) - xl.segment(q * d.n, 2)).norm());
    }
  }
  return res;
}

std::string craft_trajectory_to_csv(const RendezvousResult& r, double ell) {
  std::ostringstream os;
  os << std::setprecision(17);
  if (r.trajectory.empty()) return "t\n";
  const int N = static_cast<int>(r.trajectory.front().crafts.size());
  const int n = N > 0 ? static_cast<int>(r.trajectory.front().x.size()) / N : 0;
  os << "t";
  for (int p = 1; p <= N; ++p) {
    os << ",c1_" << p << ",c2_" << p << ",theta_" << p << ",b1_" << p << ",b2_" << p;
    for (int i = 1; i <= n / 2; ++i) os << ",x1_" << p << '_' << i;
    for (int i = 1; i <= n - n / 2; ++i) os << ",x2_" << p << '_' << i;
  }
  os << '\n';
  for (const CraftSample& s : r.trajectory) {
    os << s.t;
    for (int p = 0; p < N; ++p) {
      const CraftState& c = s.crafts[p];
      const Eigen::Vector2d b = c.bow(ell);
      os << ',' << c.c.x() << ',' << c.c.y() << ',' << c.theta << ',' << b.x() << ',' << b.y();
      for (int i = 0; i < n; ++i) os << ',' << s.x(p * n + i);
    }
    os << '\n';
  }
  return os.str();
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  // splitmix64 step
  std::uint64_t z = master + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::vector<MonteCarloRun> monte_carlo(const MonteCarloOptions& opts) {
  if (opts.runs < 1) throw Error(ErrorCode::Config, "runs must be at least 1");
  if (opts.min_clusters < 1 || opts.max_clusters < opts.min_clusters ||
      opts.max_clusters > opts.n_nodes) {
    throw Error(ErrorCode::Config, "cluster range must satisfy 1 <= min <= max <= nodes");
  }
  if (opts.amplitude_lo < 0.0 || opts.amplitude_hi < opts.amplitude_lo) {
    throw Error(ErrorCode::Config, "amplitude range must satisfy 0 <= lo <= hi");
  }
  auto run_one = [&opts](int k) {
    const std::uint64_t seed = derive_seed(opts.seed, static_cast<std::uint64_t>(k));
    std::mt19937_64 rng(seed);
    const int M = std::uniform_int_distribution<int>(opts.min_clusters, opts.max_clusters)(rng);
    const double amp = opts.amplitude_hi > opts.amplitude_lo
                           ? std::uniform_real_distribution<double>(opts.amplitude_lo,
                                                                    opts.amplitude_hi)(rng)
                           : opts.amplitude_lo;
    const std::uint64_t net_seed = rng();
    const std::uint64_t init_seed = rng();
    const std::uint64_t sim_seed = rng();

    EnsembleSystem sys = make_craft_system(
        random_clustered_network(opts.n_nodes, M, opts.extra_edge_prob, net_seed), opts.preset);
    HybridState init = random_initial_state(sys, init_seed, opts.box);

    PerturbationSpec pert;
    pert.enabled = amp > 0.0;
    pert.a1 = amp;
    pert.a2 = amp;
    SimOptions so;
    so.horizon = opts.horizon;
    so.reset = opts.reset;
    so.seed = sim_seed;
    so.sample_dt = opts.sample_dt;
    so.sample_after_jumps = false;
    so.jump_metrics = false;
    so.noise = make_noise(pert, sys.dims().m);
    HybridTrace tr = simulate(sys, init, so);

    MonteCarloRun run;
    run.index = k;
    run.seed = seed;
    run.N = sys.dims().N;
    run.M = sys.dims().M;
    run.M_star = sys.dims().M_star;
    run.lambda2 = sys.spectral().D(0);
    run.amplitude = amp;
    run.initial_xcirc = tr.samples.front().norm_xcirc;
    run.final_xcirc = tr.samples.back().norm_xcirc;
    std::vector<double> ts, vs;
    for (const TraceSample& s : tr.samples) {
      if (s.t >= 0.75 * opts.horizon) run.tail_max_xcirc = std::max(run.tail_max_xcirc, s.norm_xcirc);
      if (s.t <= 0.5 * opts.horizon) {
        ts.push_back(s.t);
        vs.push_back(s.norm_xcirc);
      }
    }
    run.slope = fit_log_decay(ts, vs).slope;
    run.jumps = tr.jumps.size();
    if (opts.keep_series) {
      run.series.reserve(tr.samples.size());
      for (const TraceSample& s : tr.samples) run.series.emplace_back(s.t, s.norm_xcirc);
    }
    return run;
  };

  // Runs are independent and seeded by index, so the worker count does not
  // change the result.
  std::vector<MonteCarloRun> out(opts.runs);
  const int workers = std::clamp(
      opts.threads > 0 ? opts.threads : static_cast<int>(std::thread::hardware_concurrency()), 1,
      opts.runs);
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::atomic<bool> failed{false};
  auto work = [&] {
    for (int k = next++; k < opts.runs && !failed; k = next++) {
      try {
        out[k] = run_one(k);
      } catch (...) {
        if (!failed.exchange(true)) failure = std::current_exception();
      }
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

std::string monte_carlo_to_json(const std::vector<MonteCarloRun>& runs,
                                const MonteCarloOptions& opts, double threshold) {
  nlohmann::ordered_json j;
  j["runs"] = opts.runs;
  j["seed"] = opts.seed;
  j["n_nodes"] = opts.n_nodes;
  j["clusters"] = {opts.min_clusters, opts.max_clusters};
  j["extra_edge_prob"] = opts.extra_edge_prob;
  j["amplitude_range"] = {opts.amplitude_lo, opts.amplitude_hi};
  j["horizon"] = opts.horizon;
  j["K_u_scale"] = opts.preset.K_u_scale;
  j["threshold"] = threshold;
  int below = 0;
  double worst = 0.0;
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const MonteCarloRun& r : runs) {
    if (r.final_xcirc < threshold) ++below;
    worst = std::max(worst, r.final_xcirc);
    arr.push_back({{"index", r.index},
                   {"seed", r.seed},
                   {"N", r.N},
                   {"M", r.M},
                   {"M_star", r.M_star},
                   {"lambda2", r.lambda2},
                   {"amplitude", r.amplitude},
                   {"initial_xcirc", r.initial_xcirc},
                   {"final_xcirc", r.final_xcirc},
                   {"tail_max_xcirc", r.tail_max_xcirc},
                   {"slope", r.slope},
                   {"jumps", r.jumps}});
  }
  j["below_threshold"] = below;
  j["worst_final_xcirc"] = worst;
  j["results"] = arr;
  return j.dump(2);
}

}  // namespace hycon
