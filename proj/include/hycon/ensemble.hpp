#pragma once

#include <complex>
#include <vector>

#include <Eigen/Dense>

#include "hycon/network.hpp"
#include "hycon/spectral.hpp"

namespace hycon {

/// Identical LTI agent: ẋ = A x + B u, y = H x.
struct Plant {
  Eigen::MatrixXd A;  // n × n
  Eigen::MatrixXd B;  // n × d
  Eigen::MatrixXd H;  // m × n

  int n() const { return static_cast<int>(A.rows()); }
  int d() const { return static_cast<int>(B.cols()); }
  int m() const { return static_cast<int>(H.rows()); }
  void validate() const;
};

struct PlantDiagnostics {
  int controllability_rank = 0;
  int observability_rank = 0;
  bool controllable = false;
  bool observable = false;
};
PlantDiagnostics diagnose(const Plant& plant);

struct TimerBounds {
  double lower = 0.0;
  double upper = 0.0;
};

/// Controller and estimator gains plus the timer intervals that drive resets.
struct GainSet {
  Eigen::MatrixXd K_u;                               // d × m
  std::vector<Eigen::MatrixXd> K_eta;                // per agent, m × m
  std::vector<std::vector<Eigen::MatrixXd>> K_zeta;  // [r][p], m × m
  std::vector<TimerBounds> agent_timers;             // [T1^p, T2^p]
  std::vector<TimerBounds> inter_timers;             // [T3^r, T4^r]

  static GainSet homogeneous(const ClusteredNetwork& net, const Eigen::MatrixXd& K_u,
                             const Eigen::MatrixXd& K_eta, const Eigen::MatrixXd& K_zeta,
                             TimerBounds agent, TimerBounds inter);
};

struct Dimensions {
  int n = 0, m = 0, d = 0;
  int N = 0, M = 0, M_star = 0;

  int xcirc_size() const { return n * (N - 1); }
  int eta_size() const { return m * N; }
  int zeta_size() const { return m * N * M_star; }
  /// ϱ = n(N-1) + mN + mNM*
  int rho() const { return xcirc_size() + eta_size() + zeta_size(); }
  /// Offset of ζ_pr inside a stacked ζ (r-major, then agent).
  int zeta_offset(int p, int r) const { return (r * N + p) * m; }
};

struct FullDerivative {
  Eigen::VectorXd x_dot;
  Eigen::VectorXd eta_dot;
  Eigen::VectorXd zeta_dot;
  Eigen::VectorXd u;  // stacked controller values u_p
};

/// C: η̃ = η + C x°.
Eigen::MatrixXd build_coupling_C(const ClusteredNetwork& net, const SpectralDecomposition& dec,
                                 const Eigen::MatrixXd& H, int n);

struct InterClusterCoupling {
  std::vector<Eigen::MatrixXd> per_inter_cluster;  // I_r, each mN × n(N-1)
  Eigen::MatrixXd stacked;                         // I, mNM* × n(N-1)
};
/// I_r and I: ζ̃_r = ζ_r + I_r x°.
InterClusterCoupling build_coupling_I(const ClusteredNetwork& net,
                                      const SpectralDecomposition& dec, const Eigen::MatrixXd& H,
                                      int n);

/// Closed-loop ensemble: network, spectral data, plant, gains and the reduced flow matrix F.
class EnsembleSystem {
 public:
  static EnsembleSystem build(ClusteredNetwork net, Plant plant, GainSet gains);

  const ClusteredNetwork& network() const { return net_; }
  const SpectralDecomposition& spectral() const { return dec_; }
  const Plant& plant() const { return plant_; }
  const GainSet& gains() const { return gains_; }
  const Dimensions& dims() const { return dims_; }

  const Eigen::MatrixXd& C() const { return C_; }
  const Eigen::MatrixXd& I() const { return I_.stacked; }
  const Eigen::MatrixXd& I_r(int r) const { return I_.per_inter_cluster.at(r); }
  const Eigen::MatrixXd& F11() const { return F11_; }
  const Eigen::MatrixXd& F12() const { return F12_; }
  const Eigen::MatrixXd& F13() const { return F13_; }
  const Eigen::MatrixXd& F() const { return F_; }
  const Eigen::MatrixXd& K_eta_stacked() const { return K_eta_; }
  const Eigen::MatrixXd& K_zeta_stacked() const { return K_zeta_; }

  double T_min() const;
  double T_max() const;

  /// ζ_pr is a live estimator only when agent p belongs to inter-cluster r.
  bool zeta_active(int p, int r) const { return zeta_active_[r * dims_.N + p]; }

  /// Σ_{q ∈ N_p ∩ C_p} (y_q - y_p), stacked over agents.
  Eigen::VectorXd intra_cluster_sums(const Eigen::VectorXd& x) const;
  /// Σ over the cross-edge neighbours of p in inter-cluster r, stacked over agents (zero if p ∉ V^r).
  Eigen::VectorXd inter_cluster_sums(const Eigen::VectorXd& x, int r) const;
  /// Single-agent versions of the two sums above (p 0-based).
  Eigen::VectorXd intra_cluster_sum(const Eigen::VectorXd& x, int p) const;
  Eigen::VectorXd inter_cluster_sum(const Eigen::VectorXd& x, int p, int r) const;

  Eigen::VectorXd eta_tilde(const Eigen::VectorXd& x, const Eigen::VectorXd& eta) const;
  Eigen::VectorXd zeta_tilde(const Eigen::VectorXd& x, const Eigen::VectorXd& zeta) const;
  /// z = (x°, η̃, ζ̃).
  Eigen::VectorXd reduced_state(const Eigen::VectorXd& x, const Eigen::VectorXd& eta,
                                const Eigen::VectorXd& zeta) const;

  /// u_p = K_u(η_p + Σ_r ζ_pr), stacked.
  Eigen::VectorXd controller(const Eigen::VectorXd& eta, const Eigen::VectorXd& zeta) const;

  /// Full-coordinate flow, written through η̃ and ζ̃ and the parent Laplacian.
  FullDerivative full_flow(const Eigen::VectorXd& x, const Eigen::VectorXd& eta,
                           const Eigen::VectorXd& zeta) const;

  /// Eigenvalues of A - λ_i B K_u H for every nonzero Laplacian eigenvalue λ_i.
  std::vector<Eigen::VectorXcd> mode_eigenvalues() const;
  bool F11_hurwitz() const;

 private:
  EnsembleSystem() = default;
  void check_lengths(const Eigen::VectorXd& x, const Eigen::VectorXd* eta,
                     const Eigen::VectorXd* zeta) const;

  ClusteredNetwork net_;
  SpectralDecomposition dec_;
  Plant plant_;
  GainSet gains_;
  Dimensions dims_;
  Eigen::MatrixXd C_;
  InterClusterCoupling I_;
  Eigen::MatrixXd F11_, F12_, F13_, F_;
  Eigen::MatrixXd K_eta_, K_zeta_;
  Eigen::MatrixXd L_;
  std::vector<bool> zeta_active_;
  std::vector<NeighborPartition> neighbor_parts_;
};

/// Kronecker product for dense matrices.
Eigen::MatrixXd kron(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);
/// Block-diagonal assembly.
Eigen::MatrixXd block_diag(const std::vector<Eigen::MatrixXd>& blocks);

}  // namespace hycon
