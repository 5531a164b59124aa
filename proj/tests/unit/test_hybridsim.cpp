#include "support.hpp"

#include <cmath>
#include <set>

using namespace hycon;

namespace {

HybridState state_with(const EnsembleSystem& sys, const Eigen::VectorXd& x, const Eigen::VectorXd& tau,
                       const Eigen::VectorXd& rho) {
  HybridState s = make_state(sys, x);
  s.tau = tau;
  s.rho = rho;
  return s;
}

// Matrix of the full linear flow on (x, η, ζ), recovered column by column.
Eigen::MatrixXd full_operator(const EnsembleSystem& sys) {
  const auto& d = sys.dims();
  const int nx = d.n * d.N, ne = d.eta_size(), nz = d.zeta_size();
  Eigen::MatrixXd G(nx + ne + nz, nx + ne + nz);
  for (int c = 0; c < G.cols(); ++c) {
    Eigen::VectorXd e = Eigen::VectorXd::Unit(G.cols(), c);
    const auto fd = sys.full_flow(e.head(nx), e.segment(nx, ne), e.tail(nz));
    G.col(c) << fd.x_dot, fd.eta_dot, fd.zeta_dot;
  }
  return G;
}

// exp(M) by scaling and squaring around a plain Taylor sum.
Eigen::MatrixXd taylor_expm(const Eigen::MatrixXd& M) {
  int s = 0;
  double nrm = M.cwiseAbs().rowwise().sum().maxCoeff();
  while (nrm > 0.05) {
    nrm /= 2;
    ++s;
  }
  const Eigen::MatrixXd A = M / std::pow(2.0, s);
  Eigen::MatrixXd term = Eigen::MatrixXd::Identity(M.rows(), M.cols()), sum = term;
  for (int k = 1; k < 25; ++k) {
    term = term * A / k;
    sum += term;
  }
  for (int i = 0; i < s; ++i) sum = sum * sum;
  return sum;
}

Eigen::VectorXd stack(const HybridState& s) {
  Eigen::VectorXd v(s.x.size() + s.eta.size() + s.zeta.size());
  v << s.x, s.eta, s.zeta;
  return v;
}

}  // namespace

TEST_SUITE("hybridsim") {

TEST_CASE("next_event examples") {
  HybridState s;
  s.tau = Eigen::VectorXd::Constant(1, 0.5);
  s.rho = Eigen::VectorXd();
  Event ev = next_event(s);
  CHECK(ev.dt == 0.5);
  REQUIRE(ev.triggers.size() == 1);
  CHECK(ev.triggers[0].label() == "agent1");

  s.tau = Eigen::Vector2d(0.2, 0.2);
  ev = next_event(s);
  CHECK(ev.dt == doctest::Approx(0.2));
  CHECK(ev.triggers.size() == 2);

  s.tau = Eigen::Vector2d(0.0, 0.3);
  ev = next_event(s);
  CHECK(ev.dt == 0.0);
  CHECK(ev.triggers.size() == 1);

  // agents first, then inter-clusters; 1e-12 counts as simultaneous
  s.tau = Eigen::Vector2d(0.1 + 5e-13, 0.1);
  s.rho = Eigen::VectorXd::Constant(1, 0.1);
  ev = next_event(s);
  REQUIRE(ev.triggers.size() == 3);
  CHECK(ev.triggers[0].label() == "agent1");
  CHECK(ev.triggers[1].label() == "agent2");
  CHECK(ev.triggers[2].label() == "inter1");
}

TEST_CASE("periodic resets land on exact multiples") {
  auto net = ClusteredNetwork::build(2, {{1, 2}}, {{1, 2}});
  auto g = GainSet::homogeneous(net, Eigen::MatrixXd::Ones(1, 1), -Eigen::MatrixXd::Ones(1, 1),
                                -Eigen::MatrixXd::Ones(1, 1), {1.0, 1.0}, {1.0, 1.0});
  const auto sys = EnsembleSystem::build(net, testing::scalar_plant(), g);
  HybridState s = state_with(sys, Eigen::Vector2d(1, -1), Eigen::Vector2d(0.5, 0.75), Eigen::VectorXd());
  SimOptions o;
  o.horizon = 3.9;
  o.reset = ResetPolicy::Max;
  o.sample_dt = 0.1;
  const auto tr = simulate(sys, s, o);
  std::vector<double> agent1;
  for (const auto& jr : tr.jumps)
    if (jr.trigger.index == 0) agent1.push_back(jr.t);
  CHECK(agent1 == std::vector<double>{0.5, 1.5, 2.5, 3.5});
  CHECK(tr.jumps.size() == 8);  // floor((3.9-0.5)/1)+1 + floor((3.9-0.75)/1)+1
}

TEST_CASE("event count matches the closed form for periodic timers") {
  auto net = ClusteredNetwork::build(3, {{1, 2}, {2, 3}}, {{1, 2}, {3}});
  auto g = GainSet::homogeneous(net, Eigen::MatrixXd::Constant(1, 1, 0.5), -Eigen::MatrixXd::Ones(1, 1),
                                -Eigen::MatrixXd::Ones(1, 1), {0.25, 0.25}, {0.125, 0.125});
  const auto sys = EnsembleSystem::build(net, testing::scalar_plant(), g);
  const Eigen::Vector3d tau0(0.0625, 0.25, 0.1875);
  const Eigen::VectorXd rho0 = Eigen::VectorXd::Constant(1, 0.03125);
  SimOptions o;
  o.horizon = 5.01;
  o.reset = ResetPolicy::Uniform;  // T1 = T2, so every policy is periodic
  const auto tr = simulate(sys, state_with(sys, Eigen::Vector3d(1, 0, -1), tau0, rho0), o);
  std::size_t expected = 0;
  for (int p = 0; p < 3; ++p) expected += static_cast<std::size_t>(std::floor((o.horizon - tau0(p)) / 0.25)) + 1;
  expected += static_cast<std::size_t>(std::floor((o.horizon - rho0(0)) / 0.125)) + 1;
  CHECK(tr.jumps.size() == expected);
  CHECK(tr.agent_jumps + tr.inter_jumps == expected);
}

TEST_CASE("flow: identity, semigroup, exact exponential, frozen plant") {
  const auto sys = testing::five_agent_system(3);
  std::mt19937_64 rng(1);
  const auto& d = sys.dims();
  HybridState s = make_state(sys, testing::random_vector(d.n * d.N, rng));
  s.eta = testing::random_vector(d.eta_size(), rng);
  s.zeta = testing::random_zeta(sys, rng);
  FlowPropagator prop(sys);

  HybridState a = s;
  flow(sys, prop, a, 0.0);
  CHECK((stack(a) - stack(s)).norm() == 0.0);

  HybridState b = s, c = s;
  flow(sys, prop, b, 0.003);
  flow(sys, prop, b, 0.0045);
  flow(sys, prop, c, 0.0075);
  CHECK((stack(b) - stack(c)).norm() <= 1e-10);
  CHECK((b.tau - c.tau).norm() <= 1e-15);
  CHECK((c.tau - (s.tau.array() - 0.0075).matrix()).norm() <= 1e-15);

  // oracle: Taylor exponential of the full operator
  const Eigen::MatrixXd G = full_operator(sys);
  const Eigen::VectorXd expect = taylor_expm(G * 0.0075) * stack(s);
  CHECK((stack(c) - expect).norm() <= 1e-10 * std::max(1.0, expect.norm()));

  HybridState e = s;
  CHECK_ERROR(flow(sys, prop, e, s.tau.minCoeff() + 1e-6), ErrorCode::EventSkipped);
}

TEST_CASE("flow with A = B = 0 and zero estimator gains keeps x and η") {
  auto net = testing::four_node();
  Plant pl;
  pl.A = Eigen::MatrixXd::Zero(1, 1);
  pl.B = Eigen::MatrixXd::Zero(1, 1);
  pl.H = Eigen::MatrixXd::Ones(1, 1);
  auto g = GainSet::homogeneous(net, Eigen::MatrixXd::Ones(1, 1), Eigen::MatrixXd::Zero(1, 1),
                                Eigen::MatrixXd::Zero(1, 1), {0.1, 0.2}, {0.1, 0.2});
  const auto sys = EnsembleSystem::build(net, pl, g);
  HybridState s = make_state(sys, Eigen::Vector4d(1, 2, 3, 4));
  s.eta << 0.5, -0.5, 1, 2;
  const HybridState s0 = s;
  FlowPropagator prop(sys);
  flow(sys, prop, s, 0.15);
  CHECK((s.x - s0.x).norm() == 0.0);
  CHECK((s.eta - s0.eta).norm() == 0.0);
  CHECK((s.tau - (s0.tau.array() - 0.15).matrix()).norm() <= 1e-15);
}

TEST_CASE("jump examples") {
  const auto sys = testing::toy_system();
  const Eigen::Vector3d x(0.3, -1.0, 2.0);
  HybridState s = make_state(sys, x);
  const Eigen::VectorXd xc = disagreement_coordinate(x, sys.spectral(), 1);
  s.eta = Eigen::Vector3d(1, 2, 3) - sys.C() * xc;
  s.tau(1) = 0.0;
  std::mt19937_64 rng(1);
  NoiseModel none;

  HybridState n = s;
  const Eigen::VectorXd delta = jump(sys, n, Trigger{Trigger::Kind::Agent, 1}, ResetPolicy::Midpoint, none, 0.0, rng);
  CHECK((sys.eta_tilde(n.x, n.eta) - Eigen::Vector3d(1, 0, 3)).norm() <= 1e-12);
  CHECK(n.tau(1) == doctest::Approx(0.035));
  CHECK((n.x - s.x).norm() == 0.0);
  CHECK(delta.norm() == 0.0);

  NoiseModel noisy;
  noisy.enabled = true;
  noisy.delta_p = [](double, int p) { return Eigen::VectorXd::Constant(1, p == 1 ? 0.05 : 0.0); };
  noisy.delta_pr = [](double, int, int) { return Eigen::VectorXd::Zero(1); };
  HybridState q = s;
  jump(sys, q, Trigger{Trigger::Kind::Agent, 1}, ResetPolicy::Max, noisy, 0.0, rng);
  CHECK(sys.eta_tilde(q.x, q.eta)(1) == doctest::Approx(0.05).epsilon(1e-12));
  CHECK(q.tau(1) == 0.05);

  HybridState bad = s;
  CHECK_ERROR(jump(sys, bad, Trigger{Trigger::Kind::Agent, 0}, ResetPolicy::Max, none, 0.0, rng),
              ErrorCode::NotInJumpSet);
}

TEST_CASE("inter-cluster jump zeroes its own block only") {
  // path 1-2-3 with singleton clusters: inter-clusters {1,2} and {2,3}
  auto net = ClusteredNetwork::build(3, {{1, 2}, {2, 3}}, {{1}, {2}, {3}});
  auto g = GainSet::homogeneous(net, Eigen::MatrixXd::Ones(1, 1), -Eigen::MatrixXd::Ones(1, 1),
                                -Eigen::MatrixXd::Ones(1, 1), {0.1, 0.2}, {0.1, 0.2});
  const auto sys = EnsembleSystem::build(net, testing::scalar_plant(), g);
  REQUIRE(sys.dims().M_star == 2);
  std::mt19937_64 rng(2);
  HybridState s = make_state(sys, Eigen::Vector3d(1, -2, 0.5));
  s.zeta = testing::random_zeta(sys, rng);
  s.rho(0) = 0.0;
  const Eigen::VectorXd before = sys.zeta_tilde(s.x, s.zeta);
  jump(sys, s, Trigger{Trigger::Kind::InterCluster, 0}, ResetPolicy::Uniform, NoiseModel{}, 0.0, rng);
  const Eigen::VectorXd after = sys.zeta_tilde(s.x, s.zeta);
  CHECK(after.head(3).norm() <= 1e-12);
  CHECK((after.tail(3) - before.tail(3)).norm() == 0.0);
  CHECK(s.zeta(2) == 0.0);  // agent 3 is not in inter-cluster 1
  CHECK(s.rho(0) >= 0.1);
  CHECK(s.rho(0) <= 0.2);
}

TEST_CASE("distance to the attractor") {
  auto net = ClusteredNetwork::build(2, {{1, 2}}, {{1, 2}});
  auto g = GainSet::homogeneous(net, Eigen::MatrixXd::Ones(1, 1), -Eigen::MatrixXd::Ones(1, 1),
                                -Eigen::MatrixXd::Ones(1, 1), {0.1, 0.2}, {0.1, 0.2});
  const auto sys = EnsembleSystem::build(net, testing::scalar_plant(), g);
  HybridState s = make_state(sys, Eigen::Vector2d(0.7, 0.7));
  CHECK(distance_to_attractor(sys, s) == 0.0);
  s.eta << 3, 4;
  CHECK(distance_to_attractor(sys, s) == doctest::Approx(5.0).epsilon(1e-15));

  const auto big = testing::five_agent_system(4);
  std::mt19937_64 rng(8);
  HybridState r = make_state(big, testing::random_vector(10, rng));
  r.eta = testing::random_vector(5, rng);
  r.zeta = testing::random_zeta(big, rng);
  const double xc = disagreement_coordinate(r.x, big.spectral(), 2).norm();
  const double et = big.eta_tilde(r.x, r.eta).norm();
  const double zt = big.zeta_tilde(r.x, r.zeta).norm();
  CHECK(distance_to_attractor(big, r) == doctest::Approx(std::sqrt(xc * xc + et * et + zt * zt)).epsilon(1e-13));
}

TEST_CASE("attractor is forward invariant") {
  const auto sys = testing::five_agent_system(5);
  Eigen::VectorXd x(10);
  for (int p = 0; p < 5; ++p) x.segment(2 * p, 2) << 0.4, 1.1;
  SimOptions o;
  o.horizon = 2.0;
  o.seed = 9;
  const auto tr = simulate(sys, make_state(sys, x), o);
  double worst = 0.0;
  for (const auto& s : tr.samples) worst = std::max(worst, s.distance);
  CHECK(worst <= 1e-12);
}

TEST_CASE("simultaneous triggers are serialized with one j each") {
  const auto sys = testing::toy_system();
  HybridState s = state_with(sys, Eigen::Vector3d(1, 0, -1), Eigen::Vector3d(0.01, 0.01, 0.01),
                             Eigen::VectorXd::Constant(1, 0.01));
  SimOptions o;
  o.horizon = 0.015;
  o.sample_dt = 0.005;
  const auto tr = simulate(sys, s, o);
  REQUIRE(tr.jumps.size() == 4);
  const char* order[] = {"agent1", "agent2", "agent3", "inter1"};
  for (int k = 0; k < 4; ++k) {
    CHECK(tr.jumps[k].trigger.label() == order[k]);
    CHECK(tr.jumps[k].t == doctest::Approx(0.01));
    CHECK(tr.jumps[k].j == k + 1);
  }
  // samples: (t, j) non-decreasing lexicographically, j constant while t grows
  for (std::size_t k = 1; k < tr.samples.size(); ++k) {
    const auto& p = tr.samples[k - 1];
    const auto& c = tr.samples[k];
    CHECK((c.t > p.t || (c.t == p.t && c.j > p.j)));
    if (c.t > p.t) CHECK(c.j == p.j);
  }
}

TEST_CASE("inter-jump gaps respect the reset intervals") {
  const auto sys = testing::five_agent_system(6);
  std::mt19937_64 rng(2);
  for (ResetPolicy pol : {ResetPolicy::Uniform, ResetPolicy::Midpoint, ResetPolicy::Max}) {
    SimOptions o;
    o.horizon = 3.0;
    o.reset = pol;
    o.seed = 4;
    const auto tr = simulate(sys, make_state(sys, testing::random_vector(10, rng)), o);
    for (const auto& [label, gaps] : inter_jump_gaps(tr)) {
      const bool agent = label.rfind("agent", 0) == 0;
      const int idx = std::stoi(label.substr(5)) - 1;
      const TimerBounds b = agent ? sys.gains().agent_timers[idx] : sys.gains().inter_timers[idx];
      for (std::size_t k = 1; k < gaps.size(); ++k) {
        CHECK(gaps[k] >= b.lower - 1e-12);
        CHECK(gaps[k] <= b.upper + 1e-12);
        if (pol == ResetPolicy::Max) CHECK(gaps[k] == doctest::Approx(b.upper).epsilon(1e-9));
        if (pol == ResetPolicy::Midpoint)
          CHECK(gaps[k] == doctest::Approx(0.5 * (b.lower + b.upper)).epsilon(1e-9));
      }
    }
  }
}

TEST_CASE("reduced replay matches the full simulation") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto sys = testing::five_agent_system(seed);
    std::mt19937_64 rng(seed);
    HybridState s = make_state(sys, testing::random_vector(10, rng));
    for (int p = 0; p < 5; ++p) s.tau(p) = 0.04 * (p + 1) / 5.0;
    SimOptions o;
    o.horizon = 2.0;
    o.seed = seed;
    o.store_full = true;
    o.sample_dt = 0.01;
    if (seed == 3) o.noise = make_noise(PerturbationSpec{true}, 1);
    const auto tr = simulate(sys, s, o);
    const auto replay = replay_reduced(sys, tr);
    REQUIRE(replay.size() == tr.samples.size());
    double worst = 0.0;
    for (std::size_t k = 0; k < replay.size(); ++k) worst = std::max(worst, (replay[k] - tr.samples[k].z).norm());
    CHECK(worst <= 1e-6);
  }
}

TEST_CASE("nominal jumps never increase V for block-diagonal P") {
  const auto sys = testing::five_agent_system(7);
  std::mt19937_64 rng(3);
  const auto& d = sys.dims();
  CertificateParams c;
  c.sigma = 30.0;
  c.P1 = testing::random_spd(d.xcirc_size(), rng);
  for (int k = 0; k < d.N; ++k) c.P2.push_back(testing::random_spd(d.m, rng));
  for (int l = 0; l < d.M_star; ++l) c.P3.push_back(testing::random_spd(d.eta_size(), rng));
  SimOptions o;
  o.horizon = 2.0;
  o.lyapunov = make_lyapunov(sys, c);
  const auto tr = simulate(sys, make_state(sys, testing::random_vector(10, rng)), o);
  REQUIRE(!tr.jumps.empty());
  std::size_t bad = 0;
  for (const auto& jr : tr.jumps)
    if (jr.V_after - jr.V_before > 1e-12 * jr.V_before) ++bad;
  CHECK(bad == 0);
}

TEST_CASE("determinism and CSV format") {
  const auto sys = testing::five_agent_system(8);
  std::mt19937_64 rng(5);
  const HybridState s = make_state(sys, testing::random_vector(10, rng));
  SimOptions o;
  o.horizon = 1.0;
  o.seed = 42;
  const auto a = simulate(sys, s, o);
  const auto b = simulate(sys, s, o);
  CHECK(trace_to_csv(a) == trace_to_csv(b));
  CHECK(jumps_to_csv(a) == jumps_to_csv(b));
  o.seed = 43;
  CHECK(jumps_to_csv(simulate(sys, s, o)) != jumps_to_csv(a));

  const std::string csv = trace_to_csv(a);
  CHECK(csv.rfind("t,j,trigger,|xi|_A,V,norm_xcirc,norm_eta_tilde,norm_zeta_tilde\n", 0) == 0);
  CHECK(trace_to_csv(a, true) == csv);  // nothing stored, nothing added
  o.store_full = true;
  const std::string full = trace_to_csv(simulate(sys, s, o), true);
  CHECK(full.find(",x1,") != std::string::npos);
  CHECK(full.find(",tau5,") != std::string::npos);
}

TEST_CASE("log-linear fit") {
  std::vector<double> t, v;
  for (int k = 0; k <= 100; ++k) {
    t.push_back(0.1 * k);
    v.push_back(3.0 * std::exp(-0.7 * 0.1 * k));
  }
  const LinearFit f = fit_log_decay(t, v);
  CHECK(f.slope == doctest::Approx(-0.7).epsilon(1e-12));
  CHECK(f.intercept == doctest::Approx(std::log(3.0)).epsilon(1e-12));
  CHECK(f.points == 101);
}

TEST_CASE("reset policy names") {
  CHECK(parse_reset_policy("midpoint") == ResetPolicy::Midpoint);
  CHECK(to_string(ResetPolicy::Max) == "max");
  CHECK_THROWS_AS(parse_reset_policy("random"), Error);
}

}
