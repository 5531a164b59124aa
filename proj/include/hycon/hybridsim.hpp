#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hycon/ensemble.hpp"

namespace hycon {

/// Raw coordinates of the closed loop plus the timers. ζ is stacked r-major.
struct HybridState {
  Eigen::VectorXd x;     // nN
  Eigen::VectorXd eta;   // mN
  Eigen::VectorXd zeta;  // mNM*
  Eigen::VectorXd tau;   // N, in [0, T2^p]
  Eigen::VectorXd rho;   // M*, in [0, T4^r]
};

/// Zero estimators, timers at their upper bounds.
HybridState make_state(const EnsembleSystem& sys, const Eigen::VectorXd& x);

struct Trigger {
  enum class Kind { Agent, InterCluster };
  Kind kind = Kind::Agent;
  int index = 0;  // 0-based agent p or inter-cluster r

  /// "agent3" / "inter1", 1-based.
  std::string label() const;
  friend bool operator==(const Trigger& a, const Trigger& b) {
    return a.kind == b.kind && a.index == b.index;
  }
};

enum class ResetPolicy { Uniform, Midpoint, Max };
ResetPolicy parse_reset_policy(const std::string& s);
std::string to_string(ResetPolicy p);

/// Measurement noise injected at jumps. Signals depend on continuous time only.
struct NoiseModel {
  bool enabled = false;
  std::function<Eigen::VectorXd(double t, int p)> delta_p;
  std::function<Eigen::VectorXd(double t, int p, int r)> delta_pr;
};

struct Event {
  double dt = 0.0;
  std::vector<Trigger> triggers;  // agents ascending, then inter-clusters ascending
};

/// Timers within 1e-12 s of the minimum count as simultaneous.
Event next_event(const HybridState& s);

/// Exact flow of the raw coordinates. The per-agent blocks (x_p, η_p, active ζ_pr)
/// are decoupled, so one small exponential per distinct block matrix suffices.
class FlowPropagator {
 public:
  explicit FlowPropagator(const EnsembleSystem& sys, std::size_t cache_limit = 4096);

  /// Propagates x, η, ζ by dt; timers untouched.
  void advance(HybridState& s, double dt);
  std::size_t cache_size() const { return cache_.size(); }

 private:
  const std::vector<Eigen::MatrixXd>& exponentials(double dt);

  const EnsembleSystem* sys_;
  std::vector<Eigen::MatrixXd> generators_;  // distinct agent block matrices
  std::vector<int> group_of_;                // agent -> generator index
  std::vector<std::vector<int>> active_;     // agent -> active inter-clusters
  std::map<std::int64_t, std::vector<Eigen::MatrixXd>> cache_;
  std::size_t cache_limit_;
  Eigen::VectorXd w_, wn_;
};

/// Flow for dt seconds. Throws EventSkipped if a timer would pass below zero.
void flow(const EnsembleSystem& sys, FlowPropagator& prop, HybridState& s, double dt);

/// One jump of the trigger. Throws NotInJumpSet unless the trigger's timer is 0.
/// Returns the injected noise, stacked over agents (mN, zeros where not injected).
Eigen::VectorXd jump(const EnsembleSystem& sys, HybridState& s, const Trigger& trig,
                     ResetPolicy policy, const NoiseModel& noise, double t, std::mt19937_64& rng);

/// |ξ|_A = ‖(x°, η̃, ζ̃)‖
double distance_to_attractor(const EnsembleSystem& sys, const HybridState& s);

using LyapunovFn = std::function<double(const Eigen::VectorXd& z, const Eigen::VectorXd& tau,
                                        const Eigen::VectorXd& rho)>;
using SampleObserver = std::function<void(double t, int j, const HybridState& s)>;

struct SimOptions {
  double horizon = 1.0;
  ResetPolicy reset = ResetPolicy::Uniform;
  NoiseModel noise;
  std::uint64_t seed = 0;
  double sample_dt = 1e-3;
  bool sample_after_jumps = true;
  bool jump_metrics = true;  // V and |ξ|_A before/after every jump
  bool store_full = false;   // keep x, η, ζ, τ, ρ and z in every sample
  LyapunovFn lyapunov;       // optional
  SampleObserver observer;   // called at every recorded sample
};

struct TraceSample {
  double t = 0.0;
  int j = 0;
  std::string trigger;  // non-empty for samples taken right after a jump
  double distance = 0.0;
  double V = 0.0;  // NaN without a Lyapunov function
  double norm_xcirc = 0.0;
  double norm_eta_tilde = 0.0;
  double norm_zeta_tilde = 0.0;
  HybridState state;  // filled only with store_full
  Eigen::VectorXd z;  // filled only with store_full
};

struct JumpRecord {
  double t = 0.0;
  int j = 0;  // value after the jump
  Trigger trigger;
  double reset_value = 0.0;
  double V_before = 0.0, V_after = 0.0;
  double distance_before = 0.0, distance_after = 0.0;
  Eigen::VectorXd delta;  // injected noise, mN
};

struct HybridTrace {
  std::vector<TraceSample> samples;
  std::vector<JumpRecord> jumps;
  Eigen::VectorXd initial_z;
  std::uint64_t seed = 0;
  std::string config_hash;
  int N = 0, M_star = 0;
  double T_min = 0.0, T_max = 0.0;
  std::size_t agent_jumps = 0, inter_jumps = 0;
};

/// Event-exact execution up to the horizon.
HybridTrace simulate(const EnsembleSystem& sys, const HybridState& initial,
                     const SimOptions& opts);

/// Replays ż = Fz along the trace's jump log (η̃/ζ̃ blocks set to the injected
/// noise at jumps) and returns z at every sample time. Needs initial_z only.
std::vector<Eigen::VectorXd> replay_reduced(const EnsembleSystem& sys, const HybridTrace& trace);

/// Timer gaps per trigger (time between consecutive jumps of the same timer).
std::map<std::string, std::vector<double>> inter_jump_gaps(const HybridTrace& trace);

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  int points = 0;
};
/// Least-squares fit of log(value) against t over samples with value > floor.
LinearFit fit_log_decay(const std::vector<double>& t, const std::vector<double>& value,
                        double floor = 1e-300);

std::string trace_to_csv(const HybridTrace& trace, bool full_state = false);
std::string jumps_to_csv(const HybridTrace& trace);

}  // namespace hycon
