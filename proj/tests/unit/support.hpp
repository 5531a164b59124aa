#pragma once

#include <algorithm>
#include <random>
#include <string>

#include <Eigen/Dense>

#include "doctest.h"

#include "hycon/certificate.hpp"
#include "hycon/ensemble.hpp"
#include "hycon/error.hpp"
#include "hycon/hybridsim.hpp"
#include "hycon/network.hpp"
#include "hycon/scenarios.hpp"
#include "hycon/spectral.hpp"

#define CHECK_ERROR(expr, expected)                              \
  do {                                                           \
    bool thrown_ = false;                                        \
    try {                                                        \
      (void)(expr);                                              \
    } catch (const hycon::Error& e_) {                           \
      thrown_ = true;                                            \
      CHECK_MESSAGE(e_.code() == (expected), e_.what());         \
    }                                                            \
    CHECK_MESSAGE(thrown_, #expr " did not throw");              \
  } while (0)

namespace testing {

inline std::string data_dir() { return HYCON_TEST_DATA; }
inline std::string config_dir() { return HYCON_CONFIG_DIR; }

inline hycon::ClusteredNetwork four_node() {
  return hycon::ClusteredNetwork::build(4, {{1, 2}, {3, 4}, {2, 3}}, {{1, 2}, {3, 4}});
}

inline hycon::Plant scalar_plant(double a = 0.0) {
  hycon::Plant p;
  p.A = Eigen::MatrixXd::Constant(1, 1, a);
  p.B = Eigen::MatrixXd::Ones(1, 1);
  p.H = Eigen::MatrixXd::Ones(1, 1);
  return p;
}

/// N=3 path, clusters {1,2},{3}: the certified toy instance.
inline hycon::EnsembleSystem toy_system(double K_u = 0.5, double T1 = 0.02, double T2 = 0.05,
                                        double K_est = -1.0) {
  auto net = hycon::ClusteredNetwork::build(3, {{1, 2}, {2, 3}}, {{1, 2}, {3}});
  auto g = hycon::GainSet::homogeneous(net, Eigen::MatrixXd::Constant(1, 1, K_u),
                                       Eigen::MatrixXd::Constant(1, 1, K_est),
                                       Eigen::MatrixXd::Constant(1, 1, K_est), {T1, T2}, {T1, T2});
  return hycon::EnsembleSystem::build(std::move(net), scalar_plant(), std::move(g));
}

/// Damped oscillator agents, n=2, m=d=1.
inline hycon::Plant oscillator_plant() {
  hycon::Plant p;
  p.A = (Eigen::MatrixXd(2, 2) << 0, 1, -1, -0.5).finished();
  p.B = (Eigen::MatrixXd(2, 1) << 0, 1).finished();
  p.H = (Eigen::MatrixXd(1, 2) << 1, 0).finished();
  return p;
}

/// Seeded N=5 system on a random clustered network.
inline hycon::EnsembleSystem five_agent_system(std::uint64_t seed) {
  auto net = hycon::random_clustered_network(5, 3, 0.3, seed);
  auto g = hycon::GainSet::homogeneous(net, Eigen::MatrixXd::Constant(1, 1, 0.8),
                                       Eigen::MatrixXd::Constant(1, 1, -2.0),
                                       Eigen::MatrixXd::Constant(1, 1, -1.5), {0.01, 0.04},
                                       {0.02, 0.06});
  return hycon::EnsembleSystem::build(std::move(net), oscillator_plant(), std::move(g));
}

inline Eigen::VectorXd random_vector(int n, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v(i) = g(rng);
  return v;
}

inline Eigen::MatrixXd random_spd(int n, std::mt19937_64& rng) {
  Eigen::MatrixXd a(n, n);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < n; ++k) a(i, k) = g(rng);
  return a * a.transpose() + 0.5 * Eigen::MatrixXd::Identity(n, n);
}

/// ζ with zeros where p ∉ V^r, as required of any reachable state.
inline Eigen::VectorXd random_zeta(const hycon::EnsembleSystem& sys, std::mt19937_64& rng) {
  const auto& d = sys.dims();
  Eigen::VectorXd z = random_vector(d.zeta_size(), rng);
  for (int r = 0; r < d.M_star; ++r)
    for (int p = 0; p < d.N; ++p)
      if (!sys.zeta_active(p, r)) z.segment(d.zeta_offset(p, r), d.m).setZero();
  return z;
}

/// Independent Laplacian from an edge list.
inline Eigen::MatrixXd laplacian_of(int N, const std::vector<hycon::Edge>& edges) {
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(N, N);
  for (auto [a, b] : edges) {
    L(a - 1, a - 1) += 1;
    L(b - 1, b - 1) += 1;
    L(a - 1, b - 1) -= 1;
    L(b - 1, a - 1) -= 1;
  }
  return L;
}

inline bool bfs_connected(const hycon::NodeSet& nodes, const std::vector<hycon::Edge>& edges) {
  if (nodes.empty()) return false;
  std::vector<int> seen{nodes.front()};
  for (std::size_t i = 0; i < seen.size(); ++i) {
    for (auto [a, b] : edges) {
      int other = a == seen[i] ? b : (b == seen[i] ? a : 0);
      if (other && std::find(nodes.begin(), nodes.end(), other) != nodes.end() &&
          std::find(seen.begin(), seen.end(), other) == seen.end())
        seen.push_back(other);
    }
  }
  return seen.size() == nodes.size();
}

}  // namespace testing
