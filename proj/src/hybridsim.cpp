#include "hycon/hybridsim.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

#include <unsupported/Eigen/MatrixFunctions>

#include "hycon/error.hpp"

namespace hycon {

namespace {

constexpr double kTimerTol = 1e-12;

double sample_reset(const TimerBounds& b, ResetPolicy policy, std::mt19937_64& rng) {
  switch (policy) {
    case ResetPolicy::Midpoint:
      return 0.5 * (b.lower + b.upper);
    case ResetPolicy::Max:
      return b.upper;
    case ResetPolicy::Uniform:
      break;
  }
  if (b.lower == b.upper) return b.upper;
  return std::uniform_real_distribution<double>(b.lower, b.upper)(rng);
}

void check_state(const EnsembleSystem& sys, const HybridState& s) {
  const Dimensions& d = sys.dims();
  if (s.x.size() != d.n * d.N || s.eta.size() != d.eta_size() || s.zeta.size() != d.zeta_size() ||
      s.tau.size() != d.N || s.rho.size() != d.M_star) {
    throw Error(ErrorCode::DimensionMismatch, "hybrid state does not match the system dimensions");
  }
  for (int p = 0; p < d.N; ++p) {
    if (s.tau(p) < 0.0 || s.tau(p) > sys.gains().agent_timers[p].upper + kTimerTol) {
      throw Error(ErrorCode::TimerOutOfRange, "tau_" + std::to_string(p + 1) + " outside [0, T2]");
    }
  }
  for (int r = 0; r < d.M_star; ++r) {
    if (s.rho(r) < 0.0 || s.rho(r) > sys.gains().inter_timers[r].upper + kTimerTol) {
      throw Error(ErrorCode::TimerOutOfRange, "rho_" + std::to_string(r + 1) + " outside [0, T4]");
    }
  }
}

}  // namespace

HybridState make_state(const EnsembleSystem& sys, const Eigen::VectorXd& x) {
  const Dimensions& d = sys.dims();
  if (x.size() != d.n * d.N) throw Error(ErrorCode::DimensionMismatch, "x must have length nN");
  HybridState s;
  s.x = x;
  s.eta = Eigen::VectorXd::Zero(d.eta_size());
  s.zeta = Eigen::VectorXd::Zero(d.zeta_size());
  s.tau.resize(d.N);
  for (int p = 0; p < d.N; ++p) s.tau(p) = sys.gains().agent_timers[p].upper;
  s.rho.resize(d.M_star);
  for (int r = 0; r < d.M_star; ++r) s.rho(r) = sys.gains().inter_timers[r].upper;
  return s;
}

std::string Trigger::label() const {
  return (kind == Kind::Agent ? "agent" : "inter") + std::to_string(index + 1);
}

ResetPolicy parse_reset_policy(const std::string& s) {
  if (s == "uniform") return ResetPolicy::Uniform;
  if (s == "midpoint") return ResetPolicy::Midpoint;
  if (s == "max") return ResetPolicy::Max;
  throw Error(ErrorCode::Config, "unknown reset policy '" + s + "'");
}

std::string to_string(ResetPolicy p) {
  switch (p) {
    case ResetPolicy::Uniform: return "uniform";
    case ResetPolicy::Midpoint: return "midpoint";
    case ResetPolicy::Max: return "max";
  }
  return "uniform";
}

Event next_event(const HybridState& s) {
  double dt = std::numeric_limits<double>::infinity();
  if (s.tau.size() > 0) dt = std::min(dt, s.tau.minCoeff());
  if (s.rho.size() > 0) dt = std::min(dt, s.rho.minCoeff());
  Event ev;
  ev.dt = std::max(dt, 0.0);
  for (Eigen::Index p = 0; p < s.tau.size(); ++p) {
    if (s.tau(p) <= dt + kTimerTol) ev.triggers.push_back({Trigger::Kind::Agent, int(p)});
  }
  for (Eigen::Index r = 0; r < s.rho.size(); ++r) {
    if (s.rho(r) <= dt + kTimerTol) ev.triggers.push_back({Trigger::Kind::InterCluster, int(r)});
  }
  return ev;
}

FlowPropagator::FlowPropagator(const EnsembleSystem& sys, std::size_t cache_limit)
    : sys_(&sys), cache_limit_(cache_limit) {
  const Dimensions& d = sys.dims();
  const Plant& pl = sys.plant();
  const Eigen::MatrixXd BK = pl.B * sys.gains().K_u;
  group_of_.resize(d.N);
  active_.resize(d.N);
  for (int p = 0; p < d.N; ++p) {
    for (int r = 0; r < d.M_star; ++r) {
      if (sys.zeta_active(p, r)) active_[p].push_back(r);
    }
    const int k = static_cast<int>(active_[p].size());
    const int size = d.n + d.m * (1 + k);
    Eigen::MatrixXd G = Eigen::MatrixXd::Zero(size, size);
    G.topLeftCorner(d.n, d.n) = pl.A;
    for (int i = 0; i <= k; ++i) G.block(0, d.n + i * d.m, d.n, d.m) = BK;
    G.block(d.n, d.n, d.m, d.m) = sys.gains().K_eta[p];
    for (int i = 0; i < k; ++i) {
      const int off = d.n + d.m * (1 + i);
      G.block(off, off, d.m, d.m) = sys.gains().K_zeta[active_[p][i]][p];
    }
    int g = -1;
    for (std::size_t i = 0; i < generators_.size(); ++i) {
      if (generators_[i].rows() == size && generators_[i] == G) {
        g = static_cast<int>(i);
        break;
      }
    }
    if (g < 0) {
      g = static_cast<int>(generators_.size());
      generators_.push_back(std::move(G));
    }
    group_of_[p] = g;
  }
}

const std::vector<Eigen::MatrixXd>& FlowPropagator::exponentials(double dt) {
  const auto key = static_cast<std::int64_t>(std::llround(dt * 1e12));
  auto it = cache_.find(key);
  if (it != cache_.end()) return it->second;
  if (cache_.size() >= cache_limit_) cache_.clear();
  std::vector<Eigen::MatrixXd> e;
  e.reserve(generators_.size());
  for (const auto& G : generators_) e.push_back((G * dt).exp());
  return cache_.emplace(key, std::move(e)).first->second;
}

void FlowPropagator::advance(HybridState& s, double dt) {
  if (dt == 0.0) return;
  const Dimensions& d = sys_->dims();
  const auto& E = exponentials(dt);
  for (int p = 0; p < d.N; ++p) {
    const auto& act = active_[p];
    const int size = d.n + d.m * (1 + static_cast<int>(act.size()));
    w_.resize(size);
    w_.head(d.n) = s.x.segment(p * d.n, d.n);
    w_.segment(d.n, d.m) = s.eta.segment(p * d.m, d.m);
    for (std::size_t i = 0; i < act.size(); ++i) {
      w_.segment(d.n + d.m * (1 + i), d.m) = s.zeta.segment(d.zeta_offset(p, act[i]), d.m);
    }
    wn_.noalias() = E[group_of_[p]] * w_;
    s.x.segment(p * d.n, d.n) = wn_.head(d.n);
    s.eta.segment(p * d.m, d.m) = wn_.segment(d.n, d.m);
    for (std::size_t i = 0; i < act.size(); ++i) {
      s.zeta.segment(d.zeta_offset(p, act[i]), d.m) = wn_.segment(d.n + d.m * (1 + i), d.m);
    }
  }
}

void flow(const EnsembleSystem& sys, FlowPropagator& prop, HybridState& s, double dt) {
  (void)sys;
  if (dt < 0.0) throw Error(ErrorCode::EventSkipped, "negative flow duration");
  const Event ev = next_event(s);
  if (dt > ev.dt + kTimerTol) {
    throw Error(ErrorCode::EventSkipped, "flow of " + std::to_string(dt) +
                                             " s passes a timer expiring after " +
                                             std::to_string(ev.dt) + " s");
  }
  prop.advance(s, dt);
  s.tau = (s.tau.array() - dt).max(0.0).matrix();
  s.rho = (s.rho.array() - dt).max(0.0).matrix();
}

Eigen::VectorXd jump(const EnsembleSystem& sys, HybridState& s, const Trigger& trig,
                     ResetPolicy policy, const NoiseModel& noise, double t,
                     std::mt19937_64& rng) {
  const Dimensions& d = sys.dims();
  Eigen::VectorXd delta = Eigen::VectorXd::Zero(d.eta_size());
  if (trig.kind == Trigger::Kind::Agent) {
    const int p = trig.index;
    if (p < 0 || p >= d.N) throw Error(ErrorCode::UnknownNode, "no agent " + std::to_string(p + 1));
    if (s.tau(p) > kTimerTol) {
      throw Error(ErrorCode::NotInJumpSet, "tau_" + std::to_string(p + 1) + " is not zero");
    }
    Eigen::VectorXd v = sys.intra_cluster_sum(s.x, p);
    if (noise.enabled && noise.delta_p) {
      delta.segment(p * d.m, d.m) = noise.delta_p(t, p);
      v += delta.segment(p * d.m, d.m);
    }
    s.eta.segment(p * d.m, d.m) = v;
    s.tau(p) = sample_reset(sys.gains().agent_timers[p], policy, rng);
  } else {
    const int r = trig.index;
    if (r < 0 || r >= d.M_star) {
      throw Error(ErrorCode::UnknownNode, "no inter-cluster " + std::to_string(r + 1));
    }
    if (s.rho(r) > kTimerTol) {
      throw Error(ErrorCode::NotInJumpSet, "rho_" + std::to_string(r + 1) + " is not zero");
    }
    for (int v : sys.network().inter_clusters()[r].nodes) {
      const int p = v - 1;
      Eigen::VectorXd val = sys.inter_cluster_sum(s.x, p, r);
      if (noise.enabled && noise.delta_pr) {
        delta.segment(p * d.m, d.m) = noise.delta_pr(t, p, r);
        val += delta.segment(p * d.m, d.m);
      }
      s.zeta.segment(d.zeta_offset(p, r), d.m) = val;
    }
    s.rho(r) = sample_reset(sys.gains().inter_timers[r], policy, rng);
  }
  return delta;
}

double distance_to_attractor(const EnsembleSystem& sys, const HybridState& s) {
  return sys.reduced_state(s.x, s.eta, s.zeta).norm();
}

HybridTrace simulate(const EnsembleSystem& sys, const HybridState& initial,
                     const SimOptions& opts) {
  check_state(sys, initial);
  if (!(opts.horizon > 0.0)) throw Error(ErrorCode::Config, "horizon must be positive");
  if (!(opts.sample_dt > 0.0)) throw Error(ErrorCode::Config, "sample_dt must be positive");

  const Dimensions& d = sys.dims();
  const int a = d.xcirc_size(), b = d.eta_size();

  HybridTrace tr;
  tr.seed = opts.seed;
  tr.N = d.N;
  tr.M_star = d.M_star;
  tr.T_min = sys.T_min();
  tr.T_max = sys.T_max();

  FlowPropagator prop(sys);
  std::mt19937_64 rng(opts.seed);
  HybridState s = initial;
  double t = 0.0;
  int j = 0;

  auto lyap = [&](const Eigen::VectorXd& z) {
    return opts.lyapunov ? opts.lyapunov(z, s.tau, s.rho)
                         : std::numeric_limits<double>::quiet_NaN();
  };
  auto record = [&](const std::string& trigger) {
    TraceSample smp;
    smp.t = t;
    smp.j = j;
    smp.trigger = trigger;
    Eigen::VectorXd z = sys.reduced_state(s.x, s.eta, s.zeta);
    smp.norm_xcirc = z.head(a).norm();
    smp.norm_eta_tilde = z.segment(a, b).norm();
    smp.norm_zeta_tilde = z.tail(d.zeta_size()).norm();
    smp.distance = z.norm();
    smp.V = lyap(z);
    if (opts.store_full) {
      smp.state = s;
      smp.z = std::move(z);
    }
    if (opts.observer) opts.observer(t, j, s);
    tr.samples.push_back(std::move(smp));
  };

  tr.initial_z = sys.reduced_state(s.x, s.eta, s.zeta);
  record("");

  long long grid_k = 1;
  while (true) {
    const Event ev = next_event(s);
    const double t_event = t + ev.dt;
    const double t_grid = std::min(static_cast<double>(grid_k) * opts.sample_dt, opts.horizon);
    if (t_grid <= t_event) {
      flow(sys, prop, s, std::min(t_grid - t, ev.dt));
      t = t_grid;
      record("");
      if (t >= opts.horizon) break;
      while (static_cast<double>(grid_k) * opts.sample_dt <= t) ++grid_k;
      continue;
    }
    flow(sys, prop, s, ev.dt);
    t = t_event;
    for (const Trigger& trig : ev.triggers) {
      if (trig.kind == Trigger::Kind::Agent) {
        s.tau(trig.index) = 0.0;
      } else {
        s.rho(trig.index) = 0.0;
      }
    }
    for (const Trigger& trig : ev.triggers) {
      JumpRecord rec;
      rec.t = t;
      rec.trigger = trig;
      if (opts.jump_metrics) {
        Eigen::VectorXd z = sys.reduced_state(s.x, s.eta, s.zeta);
        rec.distance_before = z.norm();
        rec.V_before = lyap(z);
      }
      rec.delta = jump(sys, s, trig, opts.reset, opts.noise, t, rng);
      ++j;
      rec.j = j;
      rec.reset_value = trig.kind == Trigger::Kind::Agent ? s.tau(trig.index) : s.rho(trig.index);
      if (opts.jump_metrics) {
        Eigen::VectorXd z = sys.reduced_state(s.x, s.eta, s.zeta);
        rec.distance_after = z.norm();
        rec.V_after = lyap(z);
      }
      if (trig.kind == Trigger::Kind::Agent) {
        ++tr.agent_jumps;
      } else {
        ++tr.inter_jumps;
      }
      tr.jumps.push_back(std::move(rec));
      if (opts.sample_after_jumps) record(trig.label());
    }
  }
  return tr;
}

std::vector<Eigen::VectorXd> replay_reduced(const EnsembleSystem& sys, const HybridTrace& trace) {
  const Dimensions& d = sys.dims();
  const int a = d.xcirc_size(), b = d.eta_size();
  const Eigen::MatrixXd& F = sys.F();
  Eigen::VectorXd z = trace.initial_z;
  double t = 0.0;
  auto propagate = [&](double t_to) {
    const double dt = t_to - t;
    if (dt > 0.0) z = (F * dt).exp() * z;
    t = t_to;
  };
  std::vector<Eigen::VectorXd> out;
  out.reserve(trace.samples.size());
  std::size_t ji = 0;
  for (const TraceSample& smp : trace.samples) {
    while (ji < trace.jumps.size() && trace.jumps[ji].j <= smp.j) {
      const JumpRecord& rec = trace.jumps[ji];
      propagate(rec.t);
      if (rec.trigger.kind == Trigger::Kind::Agent) {
        const int p = rec.trigger.index;
        z.segment(a + p * d.m, d.m) = rec.delta.segment(p * d.m, d.m);
      } else {
        const int r = rec.trigger.index;
        for (int v : sys.network().inter_clusters()[r].nodes) {
          const int p = v - 1;
          z.segment(a + b + d.zeta_offset(p, r), d.m) = rec.delta.segment(p * d.m, d.m);
        }
      }
      ++ji;
    }
    propagate(smp.t);
    out.push_back(z);
  }
  return out;
}

std::map<std::string, std::vector<double>> inter_jump_gaps(const HybridTrace& trace) {
  std::map<std::string, double> last;
  std::map<std::string, std::vector<double>> gaps;
  for (const JumpRecord& rec : trace.jumps) {
    const std::string key = rec.trigger.label();
    auto it = last.find(key);
    if (it != last.end()) gaps[key].push_back(rec.t - it->second);
    last[key] = rec.t;
  }
  return gaps;
}

LinearFit fit_log_decay(const std::vector<double>& t, const std::vector<double>& value,
                        double floor) {
  double st = 0, sy = 0, stt = 0, sty = 0;
  int k = 0;
  for (std::size_t i = 0; i < t.size() && i < value.size(); ++i) {
    if (!(value[i] > floor)) continue;
    const double y = std::log(value[i]);
    st += t[i];
    sy += y;
    stt += t[i] * t[i];
    sty += t[i] * y;
    ++k;
  }
  LinearFit fit;
  fit.points = k;
  if (k < 2) return fit;
  const double den = k * stt - st * st;
  if (den == 0.0) return fit;
  fit.slope = (k * sty - st * sy) / den;
  fit.intercept = (sy - fit.slope * st) / k;
  return fit;
}

std::string trace_to_csv(const HybridTrace& trace, bool full_state) {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "t,j,trigger,|xi|_A,V,norm_xcirc,norm_eta_tilde,norm_zeta_tilde";
  const bool full = full_state && !trace.samples.empty() && trace.samples.front().state.x.size() > 0;
  if (full) {
    const HybridState& s0 = trace.samples.front().state;
    for (Eigen::Index i = 0; i < s0.x.size(); ++i) os << ",x" << i + 1;
    for (Eigen::Index i = 0; i < s0.eta.size(); ++i) os << ",eta" << i + 1;
    for (Eigen::Index i = 0; i < s0.zeta.size(); ++i) os << ",zeta" << i + 1;
    for (Eigen::Index i = 0; i < s0.tau.size(); ++i) os << ",tau" << i + 1;
    for (Eigen::Index i = 0; i < s0.rho.size(); ++i) os << ",rho" << i + 1;
  }
  os << '\n';
  for (const TraceSample& s : trace.samples) {
    os << s.t << ',' << s.j << ',' << s.trigger << ',' << s.distance << ',' << s.V << ','
       << s.norm_xcirc << ',' << s.norm_eta_tilde << ',' << s.norm_zeta_tilde;
    if (full) {
      for (const Eigen::VectorXd* v : {&s.state.x, &s.state.eta, &s.state.zeta, &s.state.tau,
                                       &s.state.rho}) {
        for (Eigen::Index i = 0; i < v->size(); ++i) os << ',' << (*v)(i);
      }
    }
    os << '\n';
  }
  return os.str();
}

std::string jumps_to_csv(const HybridTrace& trace) {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "t,j,trigger,reset_value,V_before,V_after,distance_before,distance_after,delta_norm\n";
  for (const JumpRecord& r : trace.jumps) {
    os << r.t << ',' << r.j << ',' << r.trigger.label() << ',' << r.reset_value << ','
       << r.V_before << ',' << r.V_after << ',' << r.distance_before << ',' << r.distance_after
       << ',' << (r.delta.size() ? r.delta.norm() : 0.0) << '\n';
  }
  return os.str();
}

}  // namespace hycon
