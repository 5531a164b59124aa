#include "support.hpp"

#include <cmath>

using namespace hycon;

namespace {

// Σ_{q ∈ N_p, same cluster} H(x_q - x_p), straight from the edge list.
Eigen::VectorXd intra_sum_oracle(const ClusteredNetwork& net, const Eigen::MatrixXd& H,
                                 const Eigen::VectorXd& x, int p) {
  const int n = static_cast<int>(H.cols());
  Eigen::VectorXd s = Eigen::VectorXd::Zero(H.rows());
  for (auto [a, b] : net.edges()) {
    if (net.cluster_of(NodeId{a}) != net.cluster_of(NodeId{b})) continue;
    int q = a == p + 1 ? b : (b == p + 1 ? a : 0);
    if (q) s += H * (x.segment(n * (q - 1), n) - x.segment(n * p, n));
  }
  return s;
}

// Σ over cross edges of inter-cluster r incident to p.
Eigen::VectorXd inter_sum_oracle(const ClusteredNetwork& net, const Eigen::MatrixXd& H,
                                 const Eigen::VectorXd& x, int p, int r) {
  const int n = static_cast<int>(H.cols());
  Eigen::VectorXd s = Eigen::VectorXd::Zero(H.rows());
  for (auto [a, b] : net.inter_clusters()[r].edges) {
    int q = a == p + 1 ? b : (b == p + 1 ? a : 0);
    if (q) s += H * (x.segment(n * (q - 1), n) - x.segment(n * p, n));
  }
  return s;
}

EnsembleSystem random_system(std::uint64_t seed, int N, int M, int n, int m, int d) {
  std::mt19937_64 rng(seed);
  auto net = random_clustered_network(N, M, 0.3, seed);
  Plant pl;
  pl.A = Eigen::MatrixXd::Random(n, n);
  pl.B = Eigen::MatrixXd::Random(n, d);
  pl.H = Eigen::MatrixXd::Random(m, n);
  GainSet g;
  g.K_u = Eigen::MatrixXd::Random(d, m);
  for (int p = 0; p < N; ++p) {
    g.K_eta.push_back(Eigen::MatrixXd::Random(m, m));
    g.agent_timers.push_back({0.01, 0.02});
  }
  for (int r = 0; r < net.num_inter_clusters(); ++r) {
    std::vector<Eigen::MatrixXd> row;
    for (int p = 0; p < N; ++p) row.push_back(Eigen::MatrixXd::Random(m, m));
    g.K_zeta.push_back(row);
    g.inter_timers.push_back({0.01, 0.03});
  }
  return EnsembleSystem::build(std::move(net), std::move(pl), std::move(g));
}

}  // namespace

TEST_SUITE("ensemble") {

TEST_CASE("C and I against neighbor sums on the four-node example") {
  auto net = testing::four_node();
  std::mt19937_64 rng(4);
  const Plant pl = testing::oscillator_plant();
  auto g = GainSet::homogeneous(net, Eigen::MatrixXd::Ones(1, 1), -Eigen::MatrixXd::Ones(1, 1),
                                -Eigen::MatrixXd::Ones(1, 1), {0.01, 0.02}, {0.01, 0.02});
  const auto sys = EnsembleSystem::build(net, pl, g);
  for (int trial = 0; trial < 10; ++trial) {
    const Eigen::VectorXd x = testing::random_vector(8, rng);
    const Eigen::VectorXd xc = disagreement_coordinate(x, sys.spectral(), 2);
    const Eigen::VectorXd Cx = sys.C() * xc;
    const Eigen::VectorXd Ix = sys.I_r(0) * xc;
    for (int p = 0; p < 4; ++p) {
      CHECK((Cx.segment(p, 1) + intra_sum_oracle(net, pl.H, x, p)).norm() <= 1e-10);
      CHECK((Ix.segment(p, 1) + inter_sum_oracle(net, pl.H, x, p, 0)).norm() <= 1e-10);
    }
    // agents 1 and 4 are not in V^1
    CHECK(Ix(0) == 0.0);
    CHECK(Ix(3) == 0.0);
  }
  // consensus contributes nothing
  Eigen::VectorXd cons(8);
  for (int p = 0; p < 4; ++p) cons.segment(2 * p, 2) << 0.3, -1.2;
  const Eigen::VectorXd xc = disagreement_coordinate(cons, sys.spectral(), 2);
  CHECK((sys.C() * xc).norm() < 1e-13);
  CHECK((sys.I() * xc).norm() < 1e-13);
}

TEST_CASE("singleton cluster gives a zero row of C") {
  const auto sys = testing::toy_system();
  CHECK(sys.C().row(2).norm() == 0.0);
}

TEST_CASE("C, I and tilde variables on random heterogeneous systems") {
  for (std::uint64_t seed = 1; seed <= 12; ++seed) {
    const int n = 1 + seed % 3, m = 1 + seed % 2, d = 1 + (seed + 1) % 2;
    const auto sys = random_system(seed, 3 + static_cast<int>(seed % 6), 1 + static_cast<int>(seed % 3), n, m, d);
    const auto& D = sys.dims();
    std::mt19937_64 rng(seed);
    const Eigen::VectorXd x = testing::random_vector(n * D.N, rng);
    const Eigen::VectorXd eta = testing::random_vector(D.eta_size(), rng);
    const Eigen::VectorXd zeta = testing::random_zeta(sys, rng);
    const Eigen::VectorXd xc = disagreement_coordinate(x, sys.spectral(), n);
    const Eigen::VectorXd Cx = sys.C() * xc;
    for (int p = 0; p < D.N; ++p) {
      CHECK((Cx.segment(p * m, m) + intra_sum_oracle(sys.network(), sys.plant().H, x, p)).norm() <= 1e-10);
      for (int r = 0; r < D.M_star; ++r) {
        const Eigen::VectorXd Ix = sys.I_r(r) * xc;
        CHECK((Ix.segment(p * m, m) + inter_sum_oracle(sys.network(), sys.plant().H, x, p, r)).norm() <= 1e-10);
      }
    }
    CHECK((sys.eta_tilde(x, eta) - (eta + sys.C() * xc)).norm() <= 1e-10);
    CHECK((sys.zeta_tilde(x, zeta) - (zeta + sys.I() * xc)).norm() <= 1e-10);
  }
}

TEST_CASE("reduced/full consistency of F (master test)") {
  for (std::uint64_t seed = 1; seed <= 15; ++seed) {
    const int n = 1 + seed % 3, m = 1 + seed % 2, d = 1 + seed % 2;
    const int N = 2 + static_cast<int>(seed % 7);
    const auto sys = random_system(100 + seed, N, 1 + static_cast<int>(seed % std::min(4, N)), n, m, d);
    const auto& D = sys.dims();
    std::mt19937_64 rng(seed);
    const Eigen::VectorXd x = testing::random_vector(n * D.N, rng);
    const Eigen::VectorXd eta = testing::random_vector(D.eta_size(), rng);
    const Eigen::VectorXd zeta = testing::random_zeta(sys, rng);
    const auto fd = sys.full_flow(x, eta, zeta);

    // oracle 1: agent-wise ẋ_p = A x_p + B u_p with u_p = K_u(η_p + Σ_r ζ_pr)
    for (int p = 0; p < D.N; ++p) {
      Eigen::VectorXd v = eta.segment(p * m, m);
      for (int r = 0; r < D.M_star; ++r) v += zeta.segment(D.zeta_offset(p, r), m);
      const Eigen::VectorXd u = sys.gains().K_u * v;
      CHECK((fd.u.segment(p * d, d) - u).norm() <= 1e-12);
      const Eigen::VectorXd xd = sys.plant().A * x.segment(p * n, n) + sys.plant().B * u;
      CHECK((fd.x_dot.segment(p * n, n) - xd).norm() <= 1e-10);
      CHECK((fd.eta_dot.segment(p * m, m) - sys.gains().K_eta[p] * eta.segment(p * m, m)).norm() <= 1e-12);
    }

    // oracle 2: differentiate z = (x°, η̃, ζ̃) through the full flow
    const Eigen::VectorXd xcd = disagreement_coordinate(fd.x_dot, sys.spectral(), n);
    Eigen::VectorXd zdot(D.rho());
    zdot << xcd, fd.eta_dot + sys.C() * xcd, fd.zeta_dot + sys.I() * xcd;
    const Eigen::VectorXd Fz = sys.F() * sys.reduced_state(x, eta, zeta);
    CHECK((Fz - zdot).norm() <= 1e-8 * std::max(1.0, zdot.norm()));
  }
}

TEST_CASE("F11, F12, F13 closed forms and zero-error reduction") {
  const auto sys = random_system(7, 6, 3, 2, 2, 1);
  const auto& D = sys.dims();
  const auto& pl = sys.plant();
  const Eigen::MatrixXd BKH = pl.B * sys.gains().K_u * pl.H;
  const Eigen::MatrixXd F11 = kron(Eigen::MatrixXd::Identity(D.N - 1, D.N - 1), pl.A) -
                              kron(sys.spectral().D_matrix(), BKH);
  CHECK((sys.F11() - F11).norm() < 1e-13);
  const Eigen::MatrixXd F12 = kron(sys.spectral().V.transpose(), pl.B * sys.gains().K_u);
  CHECK((sys.F12() - F12).norm() < 1e-13);
  const Eigen::MatrixXd F13 = F12 * kron(Eigen::MatrixXd::Ones(1, D.M_star),
                                         Eigen::MatrixXd::Identity(D.eta_size(), D.eta_size()));
  CHECK((sys.F13() - F13).norm() < 1e-13);
  CHECK(sys.F().rows() == D.rho());

  // η̃ = 0, ζ̃ = 0 ⇒ ẋ° = F11 x°
  std::mt19937_64 rng(3);
  const Eigen::VectorXd x = testing::random_vector(2 * D.N, rng);
  const Eigen::VectorXd eta = -sys.C() * disagreement_coordinate(x, sys.spectral(), 2);
  const Eigen::VectorXd zeta = -sys.I() * disagreement_coordinate(x, sys.spectral(), 2);
  CHECK(sys.eta_tilde(x, eta).norm() < 1e-12);
  const auto fd = sys.full_flow(x, eta, zeta);
  const Eigen::VectorXd lhs = disagreement_coordinate(fd.x_dot, sys.spectral(), 2);
  CHECK((lhs - sys.F11() * disagreement_coordinate(x, sys.spectral(), 2)).norm() < 1e-10);
}

TEST_CASE("K_u = 0 decouples F") {
  const auto sys = testing::toy_system(0.0);
  CHECK(sys.F11().norm() == 0.0);  // I⊗A with A = 0
  CHECK(sys.F12().norm() == 0.0);
  CHECK(sys.F13().norm() == 0.0);
  CHECK_FALSE(sys.F11_hurwitz());
}

TEST_CASE("single cluster: no inter-cluster rows") {
  auto net = ClusteredNetwork::build(3, {{1, 2}, {2, 3}}, {{1, 2, 3}});
  auto g = GainSet::homogeneous(net, Eigen::MatrixXd::Ones(1, 1), -Eigen::MatrixXd::Ones(1, 1),
                                -Eigen::MatrixXd::Ones(1, 1), {0.01, 0.02}, {0.01, 0.02});
  const auto sys = EnsembleSystem::build(net, testing::oscillator_plant(), g);
  CHECK(sys.dims().M_star == 0);
  CHECK(sys.dims().rho() == 2 * 2 + 1 * 3);
  CHECK(sys.F().rows() == 7);
}

TEST_CASE("consensus state flows with the open-loop plant") {
  const auto sys = testing::five_agent_system(2);
  Eigen::VectorXd x(10);
  for (int p = 0; p < 5; ++p) x.segment(2 * p, 2) << 1.0, -0.4;
  const auto fd = sys.full_flow(x, Eigen::VectorXd::Zero(5), Eigen::VectorXd::Zero(sys.dims().zeta_size()));
  CHECK(fd.u.norm() == 0.0);
  for (int p = 0; p < 5; ++p)
    CHECK((fd.x_dot.segment(2 * p, 2) - sys.plant().A * x.segment(2 * p, 2)).norm() < 1e-14);
}

TEST_CASE("two-agent pair reduces to the controller form") {
  auto net = ClusteredNetwork::build(2, {{1, 2}}, {{1}, {2}});
  auto g = GainSet::homogeneous(net, Eigen::MatrixXd::Constant(1, 1, 0.7), -Eigen::MatrixXd::Ones(1, 1),
                                -Eigen::MatrixXd::Ones(1, 1), {0.01, 0.02}, {0.01, 0.02});
  const auto sys = EnsembleSystem::build(net, testing::scalar_plant(0.3), g);
  Eigen::VectorXd x(2), eta(2), zeta(2);
  x << 1.0, -2.0;
  eta << 0.5, 0.25;
  zeta << 0.1, -0.2;
  const auto fd = sys.full_flow(x, eta, zeta);
  // ẋ_p = a x_p + k(η_p + ζ_p1), scalar arithmetic by hand
  CHECK(fd.x_dot(0) == doctest::Approx(0.3 * 1.0 + 0.7 * (0.5 + 0.1)).epsilon(1e-14));
  CHECK(fd.x_dot(1) == doctest::Approx(0.3 * -2.0 + 0.7 * (0.25 - 0.2)).epsilon(1e-14));
  // η̃ has no same-cluster neighbors; ζ̃_p1 = ζ_p1 - (y_q - y_p)
  const Eigen::VectorXd zt = sys.zeta_tilde(x, zeta);
  CHECK(zt(0) == doctest::Approx(0.1 - (-2.0 - 1.0)).epsilon(1e-14));
  CHECK(zt(1) == doctest::Approx(-0.2 - (1.0 + 2.0)).epsilon(1e-14));
}

TEST_CASE("mode eigenvalues and F11 Hurwitz diagnostic") {
  const auto sys = testing::toy_system(0.5);
  const auto modes = sys.mode_eigenvalues();
  REQUIRE(modes.size() == 2);
  for (int i = 0; i < 2; ++i)
    CHECK(modes[i](0).real() == doctest::Approx(-0.5 * sys.spectral().D(i)).epsilon(1e-12));
  CHECK(sys.F11_hurwitz());
  const auto pd = diagnose(testing::oscillator_plant());
  CHECK(pd.controllable);
  CHECK(pd.observable);
  Plant un = testing::oscillator_plant();
  un.H << 0, 1;
  un.A << -1, 0, 0, -2;
  CHECK_FALSE(diagnose(un).observable);
}

TEST_CASE("dimension and timer validation") {
  auto net = testing::four_node();
  Plant bad = testing::oscillator_plant();
  bad.B = Eigen::MatrixXd::Ones(3, 1);
  CHECK_ERROR(bad.validate(), ErrorCode::DimensionMismatch);
  auto g = GainSet::homogeneous(net, Eigen::MatrixXd::Ones(2, 1), -Eigen::MatrixXd::Ones(1, 1),
                                -Eigen::MatrixXd::Ones(1, 1), {0.01, 0.02}, {0.01, 0.02});
  CHECK_ERROR(EnsembleSystem::build(net, testing::oscillator_plant(), g), ErrorCode::DimensionMismatch);
  g = GainSet::homogeneous(net, Eigen::MatrixXd::Ones(1, 1), -Eigen::MatrixXd::Ones(1, 1),
                           -Eigen::MatrixXd::Ones(1, 1), {0.03, 0.02}, {0.01, 0.02});
  CHECK_ERROR(EnsembleSystem::build(net, testing::oscillator_plant(), g), ErrorCode::Config);
  g.agent_timers.assign(4, {0.0, 0.02});
  CHECK_ERROR(EnsembleSystem::build(net, testing::oscillator_plant(), g), ErrorCode::Config);
  g.agent_timers.assign(3, {0.01, 0.02});
  CHECK_ERROR(EnsembleSystem::build(net, testing::oscillator_plant(), g), ErrorCode::DimensionMismatch);
  const auto sys = testing::toy_system();
  CHECK_ERROR(sys.full_flow(Eigen::VectorXd::Zero(2), Eigen::VectorXd::Zero(3), Eigen::VectorXd::Zero(3)),
              ErrorCode::DimensionMismatch);
}

TEST_CASE("preset dimension is 304") {
  const auto sys = make_craft_system(craft14_network(), CraftPresetParams{});
  const auto& D = sys.dims();
  CHECK(D.N == 14);
  CHECK(D.M == 5);
  CHECK(D.M_star == 8);
  CHECK(D.n == 4);
  CHECK(D.m == 2);
  CHECK(D.rho() == 304);
  CHECK(sys.F().rows() == 304);
}

}
