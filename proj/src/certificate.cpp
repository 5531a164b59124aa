#include "hycon/certificate.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "json.hpp"

#include "hycon/error.hpp"

namespace hycon {

namespace {

constexpr double kTol = 1e-12;

// Offsets of the scaled blocks: agents first, then inter-clusters.
struct Layout {
  int a = 0;            // size of the P1 block
  int K = 0;            // number of scaled blocks, N + M*
  std::vector<int> off; // start row of block k
  std::vector<int> len;
};

Layout layout_of(const EnsembleSystem& sys) {
  const Dimensions& d = sys.dims();
  Layout l;
  l.a = d.xcirc_size();
  l.K = d.N + d.M_star;
  for (int p = 0; p < d.N; ++p) {
    l.off.push_back(l.a + p * d.m);
    l.len.push_back(d.m);
  }
  for (int r = 0; r < d.M_star; ++r) {
    l.off.push_back(l.a + d.eta_size() + r * d.m * d.N);
    l.len.push_back(d.m * d.N);
  }
  return l;
}

const Eigen::MatrixXd& block_of(const CertificateParams& c, int N, int k) {
  return k < N ? c.P2[k] : c.P3[k - N];
}

std::vector<double> upper_bounds(const EnsembleSystem& sys) {
  std::vector<double> T;
  for (const auto& b : sys.gains().agent_timers) T.push_back(b.upper);
  for (const auto& b : sys.gains().inter_timers) T.push_back(b.upper);
  return T;
}

std::vector<double> scales_of(const EnsembleSystem& sys, double sigma, const Eigen::VectorXd& tau,
                              const Eigen::VectorXd& rho) {
  const Dimensions& d = sys.dims();
  if (tau.size() != d.N || rho.size() != d.M_star) {
    throw Error(ErrorCode::DimensionMismatch, "timer vectors do not match N and M*");
  }
  const auto T = upper_bounds(sys);
  std::vector<double> s(d.N + d.M_star);
  for (int k = 0; k < d.N + d.M_star; ++k) {
    const double w = k < d.N ? tau(k) : rho(k - d.N);
    if (w < -kTol || w > T[k] + kTol) {
      throw Error(ErrorCode::TimerOutOfRange,
                  (k < d.N ? "tau_" + std::to_string(k + 1) : "rho_" + std::to_string(k - d.N + 1)) +
                      " outside its interval");
    }
    s[k] = std::exp(sigma * w);
  }
  return s;
}

Eigen::MatrixXd P_from_scales(const EnsembleSystem& sys, const CertificateParams& c,
                              const std::vector<double>& s) {
  const Layout l = layout_of(sys);
  const int rho = sys.dims().rho();
  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(rho, rho);
  P.topLeftCorner(l.a, l.a) = c.P1;
  for (int k = 0; k < l.K; ++k) {
    P.block(l.off[k], l.off[k], l.len[k], l.len[k]) = s[k] * block_of(c, sys.dims().N, k);
  }
  return P;
}

Eigen::MatrixXd M_from_scales(const EnsembleSystem& sys, const CertificateParams& c,
                              const std::vector<double>& s) {
  const Layout l = layout_of(sys);
  const Eigen::MatrixXd& F = sys.F();
  const int rho = sys.dims().rho();
  const int N = sys.dims().N;
  Eigen::MatrixXd PF(rho, rho);
  PF.topRows(l.a).noalias() = c.P1 * F.topRows(l.a);
  for (int k = 0; k < l.K; ++k) {
    PF.middleRows(l.off[k], l.len[k]).noalias() =
        s[k] * block_of(c, N, k) * F.middleRows(l.off[k], l.len[k]);
  }
  Eigen::MatrixXd M = PF + PF.transpose();
  for (int k = 0; k < l.K; ++k) {
    M.block(l.off[k], l.off[k], l.len[k], l.len[k]) -= c.sigma * s[k] * block_of(c, N, k);
  }
  return 0.5 * (M + M.transpose());
}

double lambda_max(const Eigen::MatrixXd& S) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(S, Eigen::EigenvaluesOnly);
  return eig.eigenvalues().maxCoeff();
}

double lambda_min(const Eigen::MatrixXd& S) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(S, Eigen::EigenvaluesOnly);
  return eig.eigenvalues().minCoeff();
}

void require_spd(const Eigen::MatrixXd& S, const std::string& name) {
  if ((S - S.transpose()).cwiseAbs().maxCoeff() > 1e-10 * std::max(1.0, S.cwiseAbs().maxCoeff())) {
    throw Error(ErrorCode::NotPositiveDefinite, name + " is not symmetric");
  }
  if (!(lambda_min(0.5 * (S + S.transpose())) > 0.0)) {
    throw Error(ErrorCode::NotPositiveDefinite, name + " is not positive definite");
  }
}

}  // namespace

void CertificateParams::validate(const EnsembleSystem& sys) const {
  const Dimensions& d = sys.dims();
  if (!(sigma > 0.0)) throw Error(ErrorCode::Config, "sigma must be positive");
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw Error(ErrorCode::Config, "epsilon must lie in (0,1)");
  if (P1.rows() != d.xcirc_size() || P1.cols() != d.xcirc_size()) {
    throw Error(ErrorCode::DimensionMismatch, "P1 must be n(N-1) square");
  }
  if (static_cast<int>(P2.size()) != d.N || static_cast<int>(P3.size()) != d.M_star) {
    throw Error(ErrorCode::DimensionMismatch, "need N blocks P2 and M* blocks P3");
  }
  require_spd(P1, "P1");
  for (int k = 0; k < d.N; ++k) {
    if (P2[k].rows() != d.m || P2[k].cols() != d.m) {
      throw Error(ErrorCode::DimensionMismatch, "P2 blocks are m × m");
    }
    require_spd(P2[k], "P2_" + std::to_string(k + 1));
  }
  for (int r = 0; r < d.M_star; ++r) {
    if (P3[r].rows() != d.eta_size() || P3[r].cols() != d.eta_size()) {
      throw Error(ErrorCode::DimensionMismatch, "P3 blocks are mN × mN");
    }
    require_spd(P3[r], "P3_" + std::to_string(r + 1));
  }
}

Eigen::VectorXd tau_upper(const EnsembleSystem& sys) {
  Eigen::VectorXd t(sys.dims().N);
  for (int p = 0; p < sys.dims().N; ++p) t(p) = sys.gains().agent_timers[p].upper;
  return t;
}

Eigen::VectorXd rho_upper(const EnsembleSystem& sys) {
  Eigen::VectorXd t(sys.dims().M_star);
  for (int r = 0; r < sys.dims().M_star; ++r) t(r) = sys.gains().inter_timers[r].upper;
  return t;
}

Eigen::MatrixXd eval_P(const EnsembleSystem& sys, const CertificateParams& c,
                       const Eigen::VectorXd& tau, const Eigen::VectorXd& rho) {
  return P_from_scales(sys, c, scales_of(sys, c.sigma, tau, rho));
}

Eigen::MatrixXd eval_Pdot(const EnsembleSystem& sys, const CertificateParams& c,
                          const Eigen::VectorXd& tau, const Eigen::VectorXd& rho) {
  Eigen::MatrixXd P = eval_P(sys, c, tau, rho);
  const int a = sys.dims().xcirc_size();
  P.topLeftCorner(a, a).setZero();
  return -c.sigma * P;
}

Eigen::MatrixXd eval_M(const EnsembleSystem& sys, const CertificateParams& c,
                       const Eigen::VectorXd& tau, const Eigen::VectorXd& rho) {
  if (c.P1.rows() != sys.dims().xcirc_size()) {
    throw Error(ErrorCode::DimensionMismatch, "P1 does not match the system");
  }
  return M_from_scales(sys, c, scales_of(sys, c.sigma, tau, rho));
}

double convex_weight(double sigma, double w, double T) {
  return (std::exp(sigma * w) - std::exp(sigma * T)) / (1.0 - std::exp(sigma * T));
}

double lyapunov_value(const EnsembleSystem& sys, const CertificateParams& c,
                      const Eigen::VectorXd& z, const Eigen::VectorXd& tau,
                      const Eigen::VectorXd& rho) {
  const Layout l = layout_of(sys);
  if (z.size() != sys.dims().rho()) throw Error(ErrorCode::DimensionMismatch, "z has wrong length");
  const int N = sys.dims().N;
  double v = z.head(l.a).dot(c.P1 * z.head(l.a));
  for (int k = 0; k < l.K; ++k) {
    const double w = k < N ? tau(k) : rho(k - N);
    const auto zk = z.segment(l.off[k], l.len[k]);
    v += std::exp(c.sigma * w) * zk.dot(block_of(c, N, k) * zk);
  }
  return v;
}

LyapunovFn make_lyapunov(const EnsembleSystem& sys, const CertificateParams& c) {
  return [&sys, c](const Eigen::VectorXd& z, const Eigen::VectorXd& tau,
                   const Eigen::VectorXd& rho) { return lyapunov_value(sys, c, z, tau, rho); };
}

CertificateReport corner_check(const EnsembleSystem& sys, const CertificateParams& c,
                               const CertificateOptions& opts) {
  c.validate(sys);
  const Dimensions& d = sys.dims();
  const Layout l = layout_of(sys);
  const auto T = upper_bounds(sys);

  CertificateReport r;
  r.sigma = c.sigma;
  r.epsilon = c.epsilon;
  r.N_star = d.N + d.M_star;
  r.T_min = sys.T_min();
  r.T_max = sys.T_max();

  std::vector<double> lo(l.K, 1.0), hi(l.K);
  for (int k = 0; k < l.K; ++k) hi[k] = std::exp(c.sigma * T[k]);
  r.lambda_max_lower = lambda_max(M_from_scales(sys, c, lo));
  r.lambda_max_upper = lambda_max(M_from_scales(sys, c, hi));
  r.corner_lower_ok = r.lambda_max_lower < -opts.margin;
  r.corner_upper_ok = r.lambda_max_upper < -opts.margin;

  // Latin hypercube over the timer box.
  const int n = std::max(0, opts.grid_samples);
  std::mt19937_64 rng(opts.grid_seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<std::vector<int>> strata(l.K, std::vector<int>(n));
  for (auto& col : strata) {
    std::iota(col.begin(), col.end(), 0);
    std::shuffle(col.begin(), col.end(), rng);
  }
  r.grid_samples = n;
  r.grid_max_lambda = -std::numeric_limits<double>::infinity();
  std::vector<double> s(l.K);
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < l.K; ++k) {
      const double w = T[k] * (strata[k][i] + unit(rng)) / n;
      s[k] = std::exp(c.sigma * w);
    }
    r.grid_max_lambda = std::max(r.grid_max_lambda, lambda_max(M_from_scales(sys, c, s)));
  }
  if (n == 0) r.grid_max_lambda = std::numeric_limits<double>::quiet_NaN();
  r.grid_ok = n == 0 || r.grid_max_lambda < -opts.margin;

  if (l.K <= opts.max_exact_timers) {
    r.vertices_checked = true;
    r.vertex_count = 1 << l.K;
    r.vertex_max_lambda = -std::numeric_limits<double>::infinity();
    for (int mask = 0; mask < r.vertex_count; ++mask) {
      for (int k = 0; k < l.K; ++k) s[k] = (mask >> k) & 1 ? hi[k] : lo[k];
      const double lm = lambda_max(M_from_scales(sys, c, s));
      if (lm > r.vertex_max_lambda) {
        r.vertex_max_lambda = lm;
        r.worst_tau.resize(d.N);
        r.worst_rho.resize(d.M_star);
        for (int k = 0; k < l.K; ++k) {
          const double w = (mask >> k) & 1 ? T[k] : 0.0;
          (k < d.N ? r.worst_tau(k) : r.worst_rho(k - d.N)) = w;
        }
      }
    }
    r.vertices_ok = r.vertex_max_lambda < -opts.margin;
    r.mu_exact = true;
    r.mu = -r.vertex_max_lambda;
    r.note = "mu is exact: lambda_max(M) is convex in the timer scales, maximum over " +
             std::to_string(r.vertex_count) + " box vertices";
  } else {
    double worst = std::max(r.lambda_max_lower, r.lambda_max_upper);
    if (n > 0) worst = std::max(worst, r.grid_max_lambda);
    r.mu = -worst;
    r.note = "mu is a sampled estimate (" + std::to_string(n) +
             " Latin-hypercube points plus both corners); it may overstate the true value";
  }
  r.certified = r.corner_ok() && (!r.vertices_checked || r.vertices_ok) && r.mu > 0.0;

  if (r.mu > 0.0) {
    double a1 = lambda_min(c.P1), a2 = lambda_max(c.P1), pm = 0.0;
    for (int k = 0; k < l.K; ++k) {
      const Eigen::MatrixXd& B = block_of(c, d.N, k);
      a1 = std::min(a1, lambda_min(B));
      const double top = hi[k] * lambda_max(B);
      a2 = std::max(a2, top);
      pm = std::max(pm, top);
    }
    r.alpha1 = a1;
    r.alpha2 = a2;
    r.p_max = pm;
    const GesConstants g = ges_constants(a1, a2, r.mu, r.T_min, c.epsilon, r.N_star, pm);
    r.kappa = g.kappa;
    r.alpha = g.alpha;
    r.kappa2 = g.kappa2;
  }
  return r;
}

GesConstants ges_constants(double alpha1, double alpha2, double mu, double T_min, double epsilon,
                           int N_star, double p_max) {
  GesConstants g;
  const double rate = mu * T_min / alpha2;
  g.kappa = std::sqrt(alpha2 / alpha1 * std::exp((1.0 - epsilon) * rate));
  g.alpha = 0.5 * std::min(epsilon * mu / alpha2, (1.0 - epsilon) * rate / N_star);
  const double q = std::exp(-rate);
  g.kappa2 = std::sqrt(p_max * N_star * (2.0 - q) / (alpha1 * (1.0 - q)));
  return g;
}

Eigen::MatrixXd solve_lyapunov(const Eigen::MatrixXd& A, const Eigen::MatrixXd& Q) {
  const Eigen::Index n = A.rows();
  if (A.cols() != n || Q.rows() != n || Q.cols() != n) {
    throw Error(ErrorCode::DimensionMismatch, "Lyapunov data must be square and matching");
  }
  // vec(AᵀX + XA) = (I ⊗ Aᵀ + Aᵀ ⊗ I) vec(X)
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
  const Eigen::MatrixXd K = kron(I, A.transpose()) + kron(A.transpose(), I);
  Eigen::VectorXd q = Eigen::Map<const Eigen::VectorXd>(Q.data(), n * n);
  Eigen::VectorXd x = K.fullPivLu().solve(-q);
  Eigen::MatrixXd X = Eigen::Map<Eigen::MatrixXd>(x.data(), n, n);
  return 0.5 * (X + X.transpose());
}

SearchResult search_P(const EnsembleSystem& sys, double sigma, const SearchSpec& spec,
                      const CertificateOptions& opts) {
  const Dimensions& d = sys.dims();
  SearchResult res;
  res.F11_hurwitz = sys.F11_hurwitz();

  // F11 is block diagonal with blocks A - λ_i B K_u H, one per nonzero eigenvalue.
  Eigen::MatrixXd P1 = Eigen::MatrixXd::Identity(d.xcirc_size(), d.xcirc_size());
  if (res.F11_hurwitz) {
    const Eigen::MatrixXd BKH = sys.plant().B * sys.gains().K_u * sys.plant().H;
    const Eigen::MatrixXd In = Eigen::MatrixXd::Identity(d.n, d.n);
    for (int i = 0; i < d.N - 1; ++i) {
      P1.block(i * d.n, i * d.n, d.n, d.n) =
          solve_lyapunov(sys.plant().A - sys.spectral().D(i) * BKH, In);
    }
  }

  CertificateParams c;
  c.sigma = sigma;
  c.epsilon = spec.epsilon;
  c.P1 = P1;
  const Layout l = layout_of(sys);
  const auto T = upper_bounds(sys);
  std::vector<double> lo(l.K, 1.0), hi(l.K);
  for (int k = 0; k < l.K; ++k) hi[k] = std::exp(sigma * T[k]);

  auto objective = [&](double la, double lb) {
    c.P2.assign(d.N, std::exp(la) * Eigen::MatrixXd::Identity(d.m, d.m));
    c.P3.assign(d.M_star, std::exp(lb) * Eigen::MatrixXd::Identity(d.eta_size(), d.eta_size()));
    return std::max(lambda_max(M_from_scales(sys, c, lo)), lambda_max(M_from_scales(sys, c, hi)));
  };

  double la = 0.0, lb = 0.0;
  double best = objective(la, lb);
  auto minimize_along = [&](bool first) {
    const int k = std::max(3, spec.scan_points);
    const double step = (spec.log_hi - spec.log_lo) / (k - 1);
    double arg = first ? la : lb;
    for (int i = 0; i < k; ++i) {
      const double v = spec.log_lo + i * step;
      const double f = first ? objective(v, lb) : objective(la, v);
      if (f < best) {
        best = f;
        arg = v;
      }
    }
    // Golden-section refinement in the bracket around the best scan point.
    const double g = 0.5 * (std::sqrt(5.0) - 1.0);
    double x0 = arg - step, x1 = arg + step;
    auto eval = [&](double v) { return first ? objective(v, lb) : objective(la, v); };
    double u = x1 - g * (x1 - x0), w = x0 + g * (x1 - x0);
    double fu = eval(u), fw = eval(w);
    for (int it = 0; it < 40; ++it) {
      if (fu < fw) {
        x1 = w;
        w = u;
        fw = fu;
        u = x1 - g * (x1 - x0);
        fu = eval(u);
      } else {
        x0 = u;
        u = w;
        fu = fw;
        w = x0 + g * (x1 - x0);
        fw = eval(w);
      }
    }
    const double v = fu < fw ? u : w;
    const double fv = std::min(fu, fw);
    if (fv < best) {
      best = fv;
      arg = v;
    }
    (first ? la : lb) = arg;
  };

  for (int round = 0; round < spec.rounds; ++round) {
    minimize_along(true);
    if (d.M_star > 0) minimize_along(false);
  }
  best = objective(la, lb);
  res.best_margin = best;

  if (best < -opts.margin) {
    const CertificateReport rep = corner_check(sys, c, opts);
    if (rep.certified) {
      res.params = c;
      res.message = "certificate found";
      return res;
    }
    res.message = "corners pass but the full timer box does not";
    return res;
  }
  std::ostringstream os;
  os << "infeasible in family: best corner lambda_max " << std::setprecision(6) << best;
  if (!res.F11_hurwitz) os << " (F11 is not Hurwitz)";
  res.message = os.str();
  return res;
}

double ges_envelope(const CertificateReport& r, double initial_distance, double t, int j) {
  if (!r.certified) throw Error(ErrorCode::NoCertificate, "report does not certify the system");
  return r.kappa * std::exp(-r.alpha * (t + j)) * initial_distance;
}

double iss_envelope(const CertificateReport& r, double initial_distance, double delta_sup,
                    double t, int j) {
  const double decay = 2.0 * ges_envelope(r, initial_distance, t, j);
  return std::max(decay, 2.0 * r.kappa2 * delta_sup);
}

double t_star(const CertificateReport& r, double initial_distance, double omega) {
  if (!r.certified) throw Error(ErrorCode::NoCertificate, "report does not certify the system");
  const double ratio = std::sqrt(r.alpha2 / r.alpha1);
  if (!(omega > 0.0) || !(omega < ratio * initial_distance)) {
    throw Error(ErrorCode::OmegaTooLarge, "omega must lie in (0, sqrt(alpha2/alpha1)|phi(0,0)|_A)");
  }
  return 2.0 * r.alpha2 / r.mu * std::log(ratio * initial_distance / omega);
}

TimeBoundCheck check_hybrid_time_bounds(double t, int j, int N_star, double T_min, double T_max) {
  TimeBoundCheck c;
  const double ratio = static_cast<double>(j) / N_star;
  const double lower = (ratio - 1.0) * T_min;
  const double upper = ratio * T_max;
  if (t < lower - kTol) {
    c.lower_ok = false;
    ++c.lower_violations;
  }
  if (t > upper + kTol) {
    c.upper_ok = false;
    ++c.upper_violations;
  }
  if (t > (ratio + 1.0) * T_max + kTol) ++c.relaxed_upper_violations;
  if (!c.ok()) c.violations.push_back({t, j, lower, upper});
  return c;
}

TimeBoundCheck check_hybrid_time_bounds(const HybridTrace& trace) {
  TimeBoundCheck out;
  const int N_star = trace.N + trace.M_star;
  for (const TraceSample& s : trace.samples) {
    const TimeBoundCheck c = check_hybrid_time_bounds(s.t, s.j, N_star, trace.T_min, trace.T_max);
    out.lower_ok = out.lower_ok && c.lower_ok;
    out.upper_ok = out.upper_ok && c.upper_ok;
    out.lower_violations += c.lower_violations;
    out.upper_violations += c.upper_violations;
    out.relaxed_upper_violations += c.relaxed_upper_violations;
    if (!c.violations.empty() && out.violations.size() < 10) {
      out.violations.push_back(c.violations.front());
    }
  }
  return out;
}

SeriesCheck check_geometric_series(const HybridTrace& trace, const CertificateReport& r) {
  if (!(r.mu > 0.0)) throw Error(ErrorCode::NoCertificate, "mu must be positive");
  const double c = r.mu / r.alpha2;
  const double q = std::exp(-c * r.T_min);
  SeriesCheck out;
  out.bound = r.N_star * (2.0 - q) / (1.0 - q);
  double sum = 0.0, last = 0.0;
  for (const JumpRecord& rec : trace.jumps) {
    sum = sum * std::exp(-c * (rec.t - last)) + 1.0;
    last = rec.t;
    out.max_sum = std::max(out.max_sum, sum);
  }
  return out;
}

double noise_sup(const EnsembleSystem& sys, const NoiseModel& noise, double horizon, double dt) {
  if (!noise.enabled) return 0.0;
  const Dimensions& d = sys.dims();
  double sup = 0.0;
  const long long steps = static_cast<long long>(std::ceil(horizon / dt));
  for (long long i = 0; i <= steps; ++i) {
    const double t = std::min(horizon, i * dt);
    double sq = 0.0;
    if (noise.delta_p) {
      for (int p = 0; p < d.N; ++p) sq += noise.delta_p(t, p).squaredNorm();
    }
    if (noise.delta_pr) {
      for (int r = 0; r < d.M_star; ++r) {
        for (int v : sys.network().inter_clusters()[r].nodes) {
          sq += noise.delta_pr(t, v - 1, r).squaredNorm();
        }
      }
    }
    sup = std::max(sup, std::sqrt(sq));
  }
  return sup;
}

std::string report_to_json(const CertificateReport& r) {
  nlohmann::ordered_json j;
  j["certified"] = r.certified;
  j["corner_ok"] = {r.corner_lower_ok, r.corner_upper_ok};
  j["lambda_max_lower_corner"] = r.lambda_max_lower;
  j["lambda_max_upper_corner"] = r.lambda_max_upper;
  j["grid"] = {{"samples", r.grid_samples}, {"max_lambda", r.grid_max_lambda}, {"ok", r.grid_ok}};
  j["vertices"] = {{"checked", r.vertices_checked},
                   {"count", r.vertex_count},
                   {"max_lambda", r.vertex_max_lambda},
                   {"ok", r.vertices_ok}};
  if (r.vertices_checked) {
    j["vertices"]["worst_tau"] = std::vector<double>(r.worst_tau.data(), r.worst_tau.data() + r.worst_tau.size());
    j["vertices"]["worst_rho"] = std::vector<double>(r.worst_rho.data(), r.worst_rho.data() + r.worst_rho.size());
  }
  j["mu"] = r.mu;
  j["mu_exact"] = r.mu_exact;
  j["sigma"] = r.sigma;
  j["epsilon"] = r.epsilon;
  j["alpha1"] = r.alpha1;
  j["alpha2"] = r.alpha2;
  j["kappa"] = r.kappa;
  j["alpha"] = r.alpha;
  j["p_max"] = r.p_max;
  j["kappa2"] = r.kappa2;
  j["N_star"] = r.N_star;
  j["T_min"] = r.T_min;
  j["T_max"] = r.T_max;
  j["note"] = r.note;
  return j.dump(2);
}

std::string params_to_csv(const CertificateParams& c) {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "block,row,col,value\n";
  os << "sigma,0,0," << c.sigma << '\n';
  os << "epsilon,0,0," << c.epsilon << '\n';
  auto dump = [&](const std::string& name, const Eigen::MatrixXd& M) {
    for (Eigen::Index i = 0; i < M.rows(); ++i) {
      for (Eigen::Index k = 0; k < M.cols(); ++k) {
        if (M(i, k) != 0.0) os << name << ',' << i << ',' << k << ',' << M(i, k) << '\n';
      }
    }
  };
  dump("P1", c.P1);
  for (std::size_t k = 0; k < c.P2.size(); ++k) dump("P2_" + std::to_string(k + 1), c.P2[k]);
  for (std::size_t k = 0; k < c.P3.size(); ++k) dump("P3_" + std::to_string(k + 1), c.P3[k]);
  return os.str();
}

CertificateParams params_from_csv(const std::string& text, const EnsembleSystem& sys) {
  const Dimensions& d = sys.dims();
  CertificateParams c;
  c.P1 = Eigen::MatrixXd::Zero(d.xcirc_size(), d.xcirc_size());
  c.P2.assign(d.N, Eigen::MatrixXd::Zero(d.m, d.m));
  c.P3.assign(d.M_star, Eigen::MatrixXd::Zero(d.eta_size(), d.eta_size()));
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  bool have_sigma = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || (lineno == 1 && line.rfind("block", 0) == 0)) continue;
    std::istringstream ls(line);
    std::string block, f_row, f_col, f_val;
    if (!std::getline(ls, block, ',') || !std::getline(ls, f_row, ',') ||
        !std::getline(ls, f_col, ',') || !std::getline(ls, f_val)) {
      throw Error(ErrorCode::Config, "P csv line " + std::to_string(lineno) + " malformed");
    }
    int row = 0, col = 0;
    double val = 0.0;
    try {
      row = std::stoi(f_row);
      col = std::stoi(f_col);
      val = std::stod(f_val);
    } catch (const std::exception&) {
      throw Error(ErrorCode::Config, "P csv line " + std::to_string(lineno) + " malformed");
    }
    Eigen::MatrixXd* target = nullptr;
    if (block == "sigma") {
      c.sigma = val;
      have_sigma = true;
      continue;
    } else if (block == "epsilon") {
      c.epsilon = val;
      continue;
    } else if (block == "P1") {
      target = &c.P1;
    } else if (block.rfind("P2_", 0) == 0 || block.rfind("P3_", 0) == 0) {
      int k = 0;
      try {
        k = std::stoi(block.substr(3)) - 1;
      } catch (const std::exception&) {
        k = -1;
      }
      auto& vec = block[1] == '2' ? c.P2 : c.P3;
      if (k < 0 || k >= static_cast<int>(vec.size())) {
        throw Error(ErrorCode::Config, "P csv line " + std::to_string(lineno) + ": no block " + block);
      }
      target = &vec[k];
    } else {
      throw Error(ErrorCode::Config, "P csv line " + std::to_string(lineno) + ": unknown block " + block);
    }
    if (row < 0 || col < 0 || row >= target->rows() || col >= target->cols()) {
      throw Error(ErrorCode::DimensionMismatch,
                  "P csv line " + std::to_string(lineno) + ": index outside " + block);
    }
    (*target)(row, col) = val;
  }
  if (!have_sigma) throw Error(ErrorCode::Config, "P csv has no sigma row");
  return c;
}

}  // namespace hycon
