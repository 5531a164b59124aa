#include "hycon/ensemble.hpp"

#include <algorithm>
#include <limits>

#include "hycon/error.hpp"

namespace hycon {

Eigen::MatrixXd kron(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  Eigen::MatrixXd out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    }
  }
  return out;
}

Eigen::MatrixXd block_diag(const std::vector<Eigen::MatrixXd>& blocks) {
  Eigen::Index rows = 0, cols = 0;
  for (const auto& b : blocks) {
    rows += b.rows();
    cols += b.cols();
  }
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(rows, cols);
  Eigen::Index r = 0, c = 0;
  for (const auto& b : blocks) {
    out.block(r, c, b.rows(), b.cols()) = b;
    r += b.rows();
    c += b.cols();
  }
  return out;
}

void Plant::validate() const {
  if (A.rows() == 0 || A.rows() != A.cols()) {
    throw Error(ErrorCode::DimensionMismatch, "A must be square and non-empty");
  }
  if (B.rows() != A.rows() || B.cols() == 0) {
    throw Error(ErrorCode::DimensionMismatch, "B must have n rows and at least one column");
  }
  if (H.cols() != A.rows() || H.rows() == 0) {
    throw Error(ErrorCode::DimensionMismatch, "H must have n columns and at least one row");
  }
}

PlantDiagnostics diagnose(const Plant& plant) {
  plant.validate();
  const int n = plant.n();
  Eigen::MatrixXd ctrb(n, n * plant.d());
  Eigen::MatrixXd obsv(n * plant.m(), n);
  Eigen::MatrixXd ab = plant.B;
  Eigen::MatrixXd ha = plant.H;
  for (int k = 0; k < n; ++k) {
    ctrb.middleCols(k * plant.d(), plant.d()) = ab;
    obsv.middleRows(k * plant.m(), plant.m()) = ha;
    ab = plant.A * ab;
    ha = ha * plant.A;
  }
  PlantDiagnostics out;
  out.controllability_rank = static_cast<int>(Eigen::FullPivLU<Eigen::MatrixXd>(ctrb).rank());
  out.observability_rank = static_cast<int>(Eigen::FullPivLU<Eigen::MatrixXd>(obsv).rank());
  out.controllable = out.controllability_rank == n;
  out.observable = out.observability_rank == n;
  return out;
}

GainSet GainSet::homogeneous(const ClusteredNetwork& net, const Eigen::MatrixXd& K_u,
                             const Eigen::MatrixXd& K_eta, const Eigen::MatrixXd& K_zeta,
                             TimerBounds agent, TimerBounds inter) {
  GainSet g;
  g.K_u = K_u;
  g.K_eta.assign(net.size(), K_eta);
  g.K_zeta.assign(net.num_inter_clusters(), std::vector<Eigen::MatrixXd>(net.size(), K_zeta));
  g.agent_timers.assign(net.size(), agent);
  g.inter_timers.assign(net.num_inter_clusters(), inter);
  return g;
}

Eigen::MatrixXd build_coupling_C(const ClusteredNetwork& net, const SpectralDecomposition& dec,
                                 const Eigen::MatrixXd& H, int n) {
  if (H.cols() != n || dec.size() != net.size()) {
    throw Error(ErrorCode::DimensionMismatch, "H, decomposition and network disagree");
  }
  // Row block p of eᵀ L0 (I ⊗ V) is e_pᵀ L[C_p] V, which is row p of (Σ_c L[V_c]) V.
  return kron(net.intra_cluster_laplacian() * dec.V, H);
}

InterClusterCoupling build_coupling_I(const ClusteredNetwork& net,
                                      const SpectralDecomposition& dec, const Eigen::MatrixXd& H,
                                      int n) {
  if (H.cols() != n || dec.size() != net.size()) {
    throw Error(ErrorCode::DimensionMismatch, "H, decomposition and network disagree");
  }
  InterClusterCoupling out;
  const Eigen::Index rows = H.rows() * net.size();
  const Eigen::Index cols = static_cast<Eigen::Index>(n) * (net.size() - 1);
  out.stacked = Eigen::MatrixXd::Zero(rows * net.num_inter_clusters(), cols);
  for (int r = 0; r < net.num_inter_clusters(); ++r) {
    out.per_inter_cluster.push_back(kron(net.inter_cluster_laplacian(r) * dec.V, H));
    out.stacked.middleRows(r * rows, rows) = out.per_inter_cluster.back();
  }
  return out;
}

EnsembleSystem EnsembleSystem::build(ClusteredNetwork net, Plant plant, GainSet gains) {
  plant.validate();
  const int N = net.size();
  const int M_star = net.num_inter_clusters();
  const int n = plant.n(), m = plant.m(), d = plant.d();

  if (gains.K_u.rows() != d || gains.K_u.cols() != m) {
    throw Error(ErrorCode::DimensionMismatch, "K_u must be d × m");
  }
  if (static_cast<int>(gains.K_eta.size()) != N ||
      static_cast<int>(gains.agent_timers.size()) != N) {
    throw Error(ErrorCode::DimensionMismatch, "need one K_eta and one timer interval per agent");
  }
  if (static_cast<int>(gains.K_zeta.size()) != M_star ||
      static_cast<int>(gains.inter_timers.size()) != M_star) {
    throw Error(ErrorCode::DimensionMismatch,
                "need one K_zeta row and one timer interval per inter-cluster");
  }
  for (const auto& k : gains.K_eta) {
    if (k.rows() != m || k.cols() != m) throw Error(ErrorCode::DimensionMismatch, "K_eta is m × m");
  }
  for (const auto& row : gains.K_zeta) {
    if (static_cast<int>(row.size()) != N) {
      throw Error(ErrorCode::DimensionMismatch, "K_zeta needs one matrix per agent");
    }
    for (const auto& k : row) {
      if (k.rows() != m || k.cols() != m) {
        throw Error(ErrorCode::DimensionMismatch, "K_zeta is m × m");
      }
    }
  }
  auto check_timer = [](const TimerBounds& t, const char* what) {
    if (!(t.lower > 0.0 && t.lower <= t.upper)) {
      throw Error(ErrorCode::Config, std::string(what) + " bounds must satisfy 0 < lower <= upper");
    }
  };
  for (const auto& t : gains.agent_timers) check_timer(t, "agent timer");
  for (const auto& t : gains.inter_timers) check_timer(t, "inter-cluster timer");

  EnsembleSystem sys;
  sys.dec_ = decompose(net.laplacian());
  sys.L_ = net.laplacian();
  sys.dims_ = {n, m, d, N, net.num_clusters(), M_star};
  sys.C_ = build_coupling_C(net, sys.dec_, plant.H, n);
  sys.I_ = build_coupling_I(net, sys.dec_, plant.H, n);

  const Eigen::MatrixXd BK = plant.B * gains.K_u;
  const Eigen::MatrixXd BKH = BK * plant.H;
  sys.F11_ = kron(Eigen::MatrixXd::Identity(N - 1, N - 1), plant.A) -
             kron(sys.dec_.D_matrix(), BKH);
  sys.F12_ = kron(sys.dec_.V.transpose(), BK);
  sys.F13_ = kron(Eigen::RowVectorXd::Ones(M_star), sys.F12_);

  sys.K_eta_ = block_diag(gains.K_eta);
  std::vector<Eigen::MatrixXd> zeta_blocks;
  for (const auto& row : gains.K_zeta) zeta_blocks.insert(zeta_blocks.end(), row.begin(), row.end());
  sys.K_zeta_ = zeta_blocks.empty() ? Eigen::MatrixXd(0, 0) : block_diag(zeta_blocks);

  const Dimensions& dm = sys.dims_;
  const int a = dm.xcirc_size(), b = dm.eta_size(), c = dm.zeta_size();
  const Eigen::MatrixXd& C = sys.C_;
  const Eigen::MatrixXd& I = sys.I_.stacked;
  sys.F_ = Eigen::MatrixXd::Zero(dm.rho(), dm.rho());
  sys.F_.block(0, 0, a, a) = sys.F11_;
  sys.F_.block(0, a, a, b) = sys.F12_;
  sys.F_.block(0, a + b, a, c) = sys.F13_;
  sys.F_.block(a, 0, b, a) = C * sys.F11_ - sys.K_eta_ * C;
  sys.F_.block(a, a, b, b) = C * sys.F12_ + sys.K_eta_;
  sys.F_.block(a, a + b, b, c) = C * sys.F13_;
  if (c > 0) {
    sys.F_.block(a + b, 0, c, a) = I * sys.F11_ - sys.K_zeta_ * I;
    sys.F_.block(a + b, a, c, b) = I * sys.F12_;
    sys.F_.block(a + b, a + b, c, c) = I * sys.F13_ + sys.K_zeta_;
  }

  sys.zeta_active_.assign(static_cast<std::size_t>(N) * M_star, false);
  for (int r = 0; r < M_star; ++r) {
    for (int v : net.inter_clusters()[r].nodes) sys.zeta_active_[r * N + (v - 1)] = true;
  }
  sys.neighbor_parts_.reserve(N);
  for (int p = 1; p <= N; ++p) sys.neighbor_parts_.push_back(net.partition_neighbors({p}));

  sys.net_ = std::move(net);
  sys.plant_ = std::move(plant);
  sys.gains_ = std::move(gains);
  return sys;
}

double EnsembleSystem::T_min() const {
  double t = std::numeric_limits<double>::infinity();
  for (const auto& b : gains_.agent_timers) t = std::min(t, b.lower);
  for (const auto& b : gains_.inter_timers) t = std::min(t, b.lower);
  return t;
}

double EnsembleSystem::T_max() const {
  double t = 0.0;
  for (const auto& b : gains_.agent_timers) t = std::max(t, b.upper);
  for (const auto& b : gains_.inter_timers) t = std::max(t, b.upper);
  return t;
}

void EnsembleSystem::check_lengths(const Eigen::VectorXd& x, const Eigen::VectorXd* eta,
                                   const Eigen::VectorXd* zeta) const {
  if (x.size() != dims_.n * dims_.N) {
    throw Error(ErrorCode::DimensionMismatch, "x must have length nN");
  }
  if (eta && eta->size() != dims_.eta_size()) {
    throw Error(ErrorCode::DimensionMismatch, "eta must have length mN");
  }
  if (zeta && zeta->size() != dims_.zeta_size()) {
    throw Error(ErrorCode::DimensionMismatch, "zeta must have length mNM*");
  }
}

Eigen::VectorXd EnsembleSystem::intra_cluster_sum(const Eigen::VectorXd& x, int p) const {
  const int n = dims_.n;
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(n);
  const auto& nbrs = neighbor_parts_.at(p).same_cluster;
  for (int q : nbrs) acc += x.segment((q - 1) * n, n);
  acc -= static_cast<double>(nbrs.size()) * x.segment(p * n, n);
  return plant_.H * acc;
}

Eigen::VectorXd EnsembleSystem::inter_cluster_sum(const Eigen::VectorXd& x, int p, int r) const {
  const int n = dims_.n;
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(n);
  const auto& nbrs = neighbor_parts_.at(p).per_inter_cluster.at(r);
  for (int q : nbrs) acc += x.segment((q - 1) * n, n);
  acc -= static_cast<double>(nbrs.size()) * x.segment(p * n, n);
  return plant_.H * acc;
}

Eigen::VectorXd EnsembleSystem::intra_cluster_sums(const Eigen::VectorXd& x) const {
  check_lengths(x, nullptr, nullptr);
  Eigen::VectorXd out(dims_.eta_size());
  for (int p = 0; p < dims_.N; ++p) out.segment(p * dims_.m, dims_.m) = intra_cluster_sum(x, p);
  return out;
}

Eigen::VectorXd EnsembleSystem::inter_cluster_sums(const Eigen::VectorXd& x, int r) const {
  check_lengths(x, nullptr, nullptr);
  Eigen::VectorXd out(dims_.eta_size());
  for (int p = 0; p < dims_.N; ++p) {
    out.segment(p * dims_.m, dims_.m) = inter_cluster_sum(x, p, r);
  }
  return out;
}

Eigen::VectorXd EnsembleSystem::eta_tilde(const Eigen::VectorXd& x,
                                          const Eigen::VectorXd& eta) const {
  check_lengths(x, &eta, nullptr);
  return eta - intra_cluster_sums(x);
}

Eigen::VectorXd EnsembleSystem::zeta_tilde(const Eigen::VectorXd& x,
                                           const Eigen::VectorXd& zeta) const {
  check_lengths(x, nullptr, &zeta);
  Eigen::VectorXd out = zeta;
  const int block = dims_.eta_size();
  for (int r = 0; r < dims_.M_star; ++r) out.segment(r * block, block) -= inter_cluster_sums(x, r);
  return out;
}

Eigen::VectorXd EnsembleSystem::reduced_state(const Eigen::VectorXd& x, const Eigen::VectorXd& eta,
                                              const Eigen::VectorXd& zeta) const {
  Eigen::VectorXd z(dims_.rho());
  z << disagreement_coordinate(x, dec_, dims_.n), eta_tilde(x, eta), zeta_tilde(x, zeta);
  return z;
}

Eigen::VectorXd EnsembleSystem::controller(const Eigen::VectorXd& eta,
                                           const Eigen::VectorXd& zeta) const {
  if (eta.size() != dims_.eta_size() || zeta.size() != dims_.zeta_size()) {
    throw Error(ErrorCode::DimensionMismatch, "estimator lengths do not match the system");
  }
  Eigen::VectorXd w = eta;
  const int block = dims_.eta_size();
  for (int r = 0; r < dims_.M_star; ++r) w += zeta.segment(r * block, block);
  Eigen::Map<const Eigen::MatrixXd> wm(w.data(), dims_.m, dims_.N);
  Eigen::MatrixXd u = gains_.K_u * wm;
  return Eigen::Map<Eigen::VectorXd>(u.data(), u.size());
}

FullDerivative EnsembleSystem::full_flow(const Eigen::VectorXd& x, const Eigen::VectorXd& eta,
                                         const Eigen::VectorXd& zeta) const {
  check_lengths(x, &eta, &zeta);
  const int n = dims_.n, m = dims_.m, N = dims_.N;
  const Eigen::MatrixXd BK = plant_.B * gains_.K_u;
  const Eigen::MatrixXd BKH = BK * plant_.H;

  const Eigen::VectorXd et = eta_tilde(x, eta);
  const Eigen::VectorXd zt = zeta_tilde(x, zeta);
  Eigen::VectorXd zsum = Eigen::VectorXd::Zero(dims_.eta_size());
  for (int r = 0; r < dims_.M_star; ++r) zsum += zt.segment(r * m * N, m * N);

  FullDerivative out;
  out.x_dot.resize(n * N);
  for (int p = 0; p < N; ++p) {
    Eigen::VectorXd xp_dot = plant_.A * x.segment(p * n, n);
    for (int q = 0; q < N; ++q) {
      if (L_(p, q) != 0.0) xp_dot -= L_(p, q) * (BKH * x.segment(q * n, n));
    }
    xp_dot += BK * (et.segment(p * m, m) + zsum.segment(p * m, m));
    out.x_dot.segment(p * n, n) = xp_dot;
  }
  out.eta_dot = K_eta_ * eta;
  out.zeta_dot = dims_.M_star > 0 ? Eigen::VectorXd(K_zeta_ * zeta) : Eigen::VectorXd(0);
  out.u = controller(eta, zeta);
  return out;
}

std::vector<Eigen::VectorXcd> EnsembleSystem::mode_eigenvalues() const {
  std::vector<Eigen::VectorXcd> out;
  const Eigen::MatrixXd BKH = plant_.B * gains_.K_u * plant_.H;
  for (Eigen::Index i = 0; i < dec_.D.size(); ++i) {
    Eigen::MatrixXd mode = plant_.A - dec_.D(i) * BKH;
    out.push_back(Eigen::EigenSolver<Eigen::MatrixXd>(mode, false).eigenvalues());
  }
  return out;
}

bool EnsembleSystem::F11_hurwitz() const {
  for (const auto& ev : mode_eigenvalues()) {
    if (ev.real().maxCoeff() >= 0.0) return false;
  }
  return true;
}

}  // namespace hycon
