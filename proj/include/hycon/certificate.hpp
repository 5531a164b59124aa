#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hycon/ensemble.hpp"
#include "hycon/hybridsim.hpp"

namespace hycon {

/// P(τ,ρ) = diag(P1, P2,k e^{στ_k}, P3,l e^{σρ_l}).
struct CertificateParams {
  double sigma = 1.0;
  double epsilon = 0.5;
  Eigen::MatrixXd P1;               // n(N-1) square
  std::vector<Eigen::MatrixXd> P2;  // N blocks, m × m
  std::vector<Eigen::MatrixXd> P3;  // M* blocks, mN × mN

  /// Dimensions, symmetry, ε ∈ (0,1), σ > 0. NotPositiveDefinite for a bad block.
  void validate(const EnsembleSystem& sys) const;
};

Eigen::MatrixXd eval_P(const EnsembleSystem& sys, const CertificateParams& c,
                       const Eigen::VectorXd& tau, const Eigen::VectorXd& rho);
/// -σ diag(0, P2(τ), P3(ρ))
Eigen::MatrixXd eval_Pdot(const EnsembleSystem& sys, const CertificateParams& c,
                          const Eigen::VectorXd& tau, const Eigen::VectorXd& rho);
/// Fᵀ P + P F + Ṗ, symmetrized.
Eigen::MatrixXd eval_M(const EnsembleSystem& sys, const CertificateParams& c,
                       const Eigen::VectorXd& tau, const Eigen::VectorXd& rho);

/// Timer vectors at the lower corner (all zero) and upper corner (T2, T4).
Eigen::VectorXd tau_upper(const EnsembleSystem& sys);
Eigen::VectorXd rho_upper(const EnsembleSystem& sys);

/// γ(w) = (e^{σw} - e^{σT}) / (1 - e^{σT}); γ(0) = 1, γ(T) = 0.
double convex_weight(double sigma, double w, double T);

/// zᵀ P(τ,ρ) z evaluated block by block.
double lyapunov_value(const EnsembleSystem& sys, const CertificateParams& c,
                      const Eigen::VectorXd& z, const Eigen::VectorXd& tau,
                      const Eigen::VectorXd& rho);
LyapunovFn make_lyapunov(const EnsembleSystem& sys, const CertificateParams& c);

struct CertificateOptions {
  double margin = 1e-9;
  int grid_samples = 1000;
  std::uint64_t grid_seed = 1;
  /// M is affine in s_k = e^{στ_k}, so λ_max(M) is convex on the s-box and its
  /// maximum sits at a vertex; enumerate all 2^(N+M*) vertices up to this count.
  int max_exact_timers = 12;
};

struct CertificateReport {
  double lambda_max_lower = 0.0;  // λ_max M(0,0)
  double lambda_max_upper = 0.0;  // λ_max M(T2,T4)
  bool corner_lower_ok = false;
  bool corner_upper_ok = false;
  bool corner_ok() const { return corner_lower_ok && corner_upper_ok; }

  int grid_samples = 0;
  double grid_max_lambda = 0.0;
  bool grid_ok = false;

  bool vertices_checked = false;
  int vertex_count = 0;
  double vertex_max_lambda = 0.0;
  bool vertices_ok = false;
  Eigen::VectorXd worst_tau, worst_rho;  // vertex attaining vertex_max_lambda

  /// Corners pass and, when enumerated, every vertex passes.
  bool certified = false;
  /// Exact when the vertices were enumerated, a sampled estimate otherwise.
  bool mu_exact = false;
  double mu = 0.0;

  double sigma = 0.0, epsilon = 0.0;
  double alpha1 = 0.0, alpha2 = 0.0;
  double kappa = 0.0, alpha = 0.0;
  double p_max = 0.0, kappa2 = 0.0;
  int N_star = 0;
  double T_min = 0.0, T_max = 0.0;
  std::string note;
};

struct GesConstants {
  double kappa = 0.0, alpha = 0.0, kappa2 = 0.0;
};
/// κ, α from the GES bound and κ₂ from the ISS bound.
GesConstants ges_constants(double alpha1, double alpha2, double mu, double T_min, double epsilon,
                           int N_star, double p_max);

CertificateReport corner_check(const EnsembleSystem& sys, const CertificateParams& c,
                               const CertificateOptions& opts = {});

/// Restricted family: P1 solves F11ᵀP1 + P1F11 = -I (identity when F11 is not
/// Hurwitz), P2,k = a I, P3,l = b I with (a, b) chosen by coordinate descent on
/// the worst corner eigenvalue.
struct SearchSpec {
  double epsilon = 0.5;
  double log_lo = -12.0, log_hi = 6.0;  // natural-log bounds for a and b
  int scan_points = 37;
  int rounds = 6;
};

struct SearchResult {
  std::optional<CertificateParams> params;
  double best_margin = 0.0;  // max of the two corner λ_max at the best point
  bool F11_hurwitz = false;
  std::string message;
};

SearchResult search_P(const EnsembleSystem& sys, double sigma, const SearchSpec& spec = {},
                      const CertificateOptions& opts = {});

/// Solves AᵀX + XA = -Q for Hurwitz A.
Eigen::MatrixXd solve_lyapunov(const Eigen::MatrixXd& A, const Eigen::MatrixXd& Q);

double ges_envelope(const CertificateReport& r, double initial_distance, double t, int j);
double iss_envelope(const CertificateReport& r, double initial_distance, double delta_sup,
                    double t, int j);
double t_star(const CertificateReport& r, double initial_distance, double omega);

struct Violation {
  double t = 0.0;
  int j = 0;
  double lower = 0.0, upper = 0.0;
};
struct TimeBoundCheck {
  bool lower_ok = true;
  bool upper_ok = true;
  bool ok() const { return lower_ok && upper_ok; }
  std::vector<Violation> violations;  // first few only
  std::size_t lower_violations = 0, upper_violations = 0;
  /// Same check against t ≤ (j/N* + 1) T_max, which holds between jumps too.
  std::size_t relaxed_upper_violations = 0;
};

/// (j/N* - 1) T_min ≤ t ≤ (j/N*) T_max at every sample.
TimeBoundCheck check_hybrid_time_bounds(const HybridTrace& trace);
/// Same check for a single point.
TimeBoundCheck check_hybrid_time_bounds(double t, int j, int N_star, double T_min, double T_max);

/// max_j Σ_{s ≤ j} exp(-(μ/α2)(t_j - t_s)) along the jump log, and its bound
/// N*(2 - q)/(1 - q) with q = exp(-μ T_min/α2).
struct SeriesCheck {
  double max_sum = 0.0;
  double bound = 0.0;
  bool ok() const { return max_sum <= bound; }
};
SeriesCheck check_geometric_series(const HybridTrace& trace, const CertificateReport& r);

/// sup over sampled t ∈ [0, horizon] of the norm of the stacked injected noise.
double noise_sup(const EnsembleSystem& sys, const NoiseModel& noise, double horizon,
                 double dt = 1e-3);

std::string report_to_json(const CertificateReport& r);
/// Rows "block,row,col,value"; block is P1, P2_k, P3_l, plus sigma and epsilon rows.
std::string params_to_csv(const CertificateParams& c);
CertificateParams params_from_csv(const std::string& text, const EnsembleSystem& sys);

}  // namespace hycon
