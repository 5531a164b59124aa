#pragma once

#include <cstdint>
#include <exception>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "hycon/ensemble.hpp"
#include "hycon/hybridsim.hpp"

namespace hycon {

/// Unicycle-like craft: centre of mass c, heading θ, bow b = c + ℓ(cos θ, sin θ).
struct CraftState {
  Eigen::Vector2d c = Eigen::Vector2d::Zero();
  double theta = 0.0;

  Eigen::Vector2d bow(double ell) const;
};

/// Principal value in (-π, π].
double wrap_angle(double a);

/// (v, ω) = D⁻¹ R(θ)⁻¹ ḃ with D = diag(1, ℓ).
Eigen::Vector2d inverse_map(double theta, const Eigen::Vector2d& bow_velocity, double ell);

/// Fixed-step RK4 of the craft kinematics driven by the inverse map of a bow
/// velocity reference, from t0 to t1.
CraftState integrate_craft(CraftState s, double ell,
                           const std::function<Eigen::Vector2d(double)>& bow_velocity, double t0,
                           double t1, double h);

struct VirtualPlantParams {
  Eigen::Matrix2d mass = Eigen::Matrix2d::Identity();
  Eigen::Matrix2d damping = 2.66 * Eigen::Matrix2d::Identity();
};

/// A = [[0, I], [0, -𝙼⁻¹𝙲]], B = [[0], [𝙼⁻¹]], H = [I 0].
Plant virtual_plant(const VirtualPlantParams& p);

struct PerturbationSpec {
  bool enabled = false;
  double a1 = 0.07;  // agent amplitude
  double a2 = 0.04;  // inter-cluster amplitude
  double w1 = 0.015, w2 = 0.2;   // δ_p = a1 sin(w1 t) sin(w2 t)
  double w3 = 0.095, w4 = 0.4;   // δ_pr = a2 sin(w3 t) cos(w4 t)
};

/// (δ_p(t), δ_pr(t)), each a scalar times 1_m.
std::pair<Eigen::VectorXd, Eigen::VectorXd> paper_perturbations(double t,
                                                                const PerturbationSpec& spec,
                                                                int m);
NoiseModel make_noise(const PerturbationSpec& spec, int m);

/// Gains and timers of the 14-craft experiment.
struct CraftPresetParams {
  double ell = 0.53;
  double sigma = 500.0;
  double K_u_scale = 0.5;
  Eigen::Matrix2d K_est = (Eigen::Matrix2d() << -2.33, -1.33, 1.33, -5.66).finished();
  double T1 = 0.001, T2 = 0.01, T3 = 0.001, T4 = 0.01;
  VirtualPlantParams plant;
};

/// Constructed 14-node topology with 5 clusters and 8 inter-clusters in which
/// every agent belongs to exactly two inter-clusters.
ClusteredNetwork craft14_network();

EnsembleSystem make_craft_system(ClusteredNetwork net, const CraftPresetParams& p);

/// x1 = bows drawn uniformly in [-box, box]², x2 = 0, η = ζ = 0, timers uniform in [0, T].
HybridState random_initial_state(const EnsembleSystem& sys, std::uint64_t seed, double box);

/// Crafts whose bows sit on the x1 blocks of the state, headings uniform.
std::vector<CraftState> crafts_from_state(const EnsembleSystem& sys, const HybridState& s,
                                          double ell, std::uint64_t seed);

struct CraftSample {
  double t = 0.0;
  std::vector<CraftState> crafts;
  Eigen::VectorXd x;  // virtual plant states
};

struct RendezvousResult {
  HybridTrace trace;
  std::vector<CraftSample> trajectory;  // every RK4 step
  double final_bow_spread = 0.0;        // max_{p,q} ‖b_p - b_q‖
  double final_reference_spread = 0.0;  // same for x1
  double max_tracking_error = 0.0;      // max ‖b_p - x1_p‖
  double max_rigidity_error = 0.0;      // max |‖b_p - c_p‖ - ℓ|
};

/// Runs the hybrid closed loop and drives the crafts with the inverse map of x2.
/// The simulator samples at h/2 so each RK4 step has exact stage values.
RendezvousResult rendezvous_run(const EnsembleSystem& sys, const std::vector<CraftState>& crafts,
                                const HybridState& initial, SimOptions opts, double ell,
                                double h = 1e-3, int keep_every = 1);

std::string craft_trajectory_to_csv(const RendezvousResult& r, double ell);

struct MonteCarloOptions {
  int runs = 30;
  std::uint64_t seed = 1;
  int n_nodes = 14;
  int min_clusters = 2, max_clusters = 7;
  double extra_edge_prob = 0.2;
  double amplitude_lo = 0.0, amplitude_hi = 0.075;
  double horizon = 60.0;
  double sample_dt = 0.01;
  double box = 2.0;
  ResetPolicy reset = ResetPolicy::Uniform;
  int threads = 0;           // 0 = hardware concurrency
  bool keep_series = false;  // keep (t, ‖x°‖) per run
  CraftPresetParams preset = [] {
    CraftPresetParams p;
    p.K_u_scale = 1.5;
    return p;
  }();
};

struct MonteCarloRun {
  int index = 0;
  std::uint64_t seed = 0;
  int N = 0, M = 0, M_star = 0;
  double lambda2 = 0.0;
  double amplitude = 0.0;
  double initial_xcirc = 0.0;
  double final_xcirc = 0.0;
  double tail_max_xcirc = 0.0;  // max over the last quarter
  double slope = 0.0;           // log-linear fit of ‖x°‖ over the first half
  std::size_t jumps = 0;
  std::vector<std::pair<double, double>> series;
};

std::vector<MonteCarloRun> monte_carlo(const MonteCarloOptions& opts);
std::string monte_carlo_to_json(const std::vector<MonteCarloRun>& runs,
                                const MonteCarloOptions& opts, double threshold = 1e-2);

/// Per-run seed derived from the master seed.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);

}  // namespace hycon
