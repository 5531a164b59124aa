#pragma once

#include <string>

#include <Eigen/Dense>

namespace hycon {

/// Orthonormal basis of range(L) with the agreement direction split off:
/// L = V D Vᵀ, VᵀV = I, V Vᵀ = S = I - 11ᵀ/N.
struct SpectralDecomposition {
  Eigen::MatrixXd V;            // N × (N-1)
  Eigen::VectorXd D;            // diagonal of D, ascending, strictly positive
  Eigen::MatrixXd S;            // N × N projection
  Eigen::VectorXd eigenvalues;  // all N, ascending, eigenvalues(0) == 0

  int size() const { return static_cast<int>(S.rows()); }
  Eigen::MatrixXd D_matrix() const { return D.asDiagonal(); }
};

struct SpectralOptions {
  double connectivity_threshold = 1e-8;  // λ_2 must exceed this
  double cluster_tolerance = 1e-8;       // eigenvalues closer than this share an eigenspace
  double symmetry_tolerance = 1e-12;
};

/// Throws NotSymmetric or NotConnected.
SpectralDecomposition decompose(const Eigen::MatrixXd& laplacian, const SpectralOptions& opts = {});

/// x° = (Vᵀ ⊗ I_n) x for a stacked nN vector x.
Eigen::VectorXd disagreement_coordinate(const Eigen::VectorXd& x, const SpectralDecomposition& dec,
                                        int n);

/// (S ⊗ I_n) x, the component of x orthogonal to the agreement subspace.
Eigen::VectorXd disagreement_projection(const Eigen::VectorXd& x, const SpectralDecomposition& dec,
                                        int n);

/// Residuals of the three identities, for diagnostics and tests.
struct SpectralResiduals {
  double reconstruction;  // ‖L - V D Vᵀ‖
  double orthonormality;  // ‖VᵀV - I‖
  double projection;      // ‖S - V Vᵀ‖
};
SpectralResiduals residuals(const Eigen::MatrixXd& laplacian, const SpectralDecomposition& dec);

/// Columns: eigenvalue, then the V column entries; first row is the agreement vector.
std::string decomposition_to_csv(const SpectralDecomposition& dec);

}  // namespace hycon
