#include "hycon/spectral.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>
#include <vector>

#include "hycon/error.hpp"

namespace hycon {

namespace {

// Flip so the first entry with non-negligible magnitude is positive.
void fix_sign(Eigen::Ref<Eigen::VectorXd> v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (std::abs(v(i)) > 1e-12) {
      if (v(i) < 0) v = -v;
      return;
    }
  }
}

}  // namespace

SpectralDecomposition decompose(const Eigen::MatrixXd& laplacian, const SpectralOptions& opts) {
  const Eigen::Index n = laplacian.rows();
  if (n != laplacian.cols() || n < 2) {
    throw Error(ErrorCode::DimensionMismatch, "Laplacian must be square with N >= 2");
  }
  const double scale = std::max(1.0, laplacian.cwiseAbs().maxCoeff());
  if ((laplacian - laplacian.transpose()).cwiseAbs().maxCoeff() > opts.symmetry_tolerance * scale) {
    throw Error(ErrorCode::NotSymmetric, "Laplacian is not symmetric");
  }

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(laplacian);
  if (eig.info() != Eigen::Success) {
    throw Error(ErrorCode::NotConnected, "eigensolver did not converge");
  }
  const Eigen::VectorXd& lambda = eig.eigenvalues();
  if (lambda(1) <= opts.connectivity_threshold) {
    throw Error(ErrorCode::NotConnected,
                "second smallest eigenvalue " + std::to_string(lambda(1)) + " is not positive");
  }

  // Gram-Schmidt over the eigenvectors with v1 = 1/sqrt(N) pinned first. Vectors
  // of one eigenspace are orthonormalized together, then sign-normalized when the
  // eigenspace is one-dimensional.
  const Eigen::VectorXd v1 = Eigen::VectorXd::Constant(n, 1.0 / std::sqrt(static_cast<double>(n)));
  Eigen::MatrixXd basis(n, n - 1);
  Eigen::Index col = 0;
  Eigen::Index k = 1;
  while (k < n) {
    Eigen::Index end = k + 1;
    while (end < n && lambda(end) - lambda(end - 1) <= opts.cluster_tolerance) ++end;
    const Eigen::Index first = col;
    for (Eigen::Index i = k; i < end; ++i) {
      Eigen::VectorXd w = eig.eigenvectors().col(i);
      for (int pass = 0; pass < 2; ++pass) {
        w -= v1.dot(w) * v1;
        for (Eigen::Index c = 0; c < col; ++c) w -= basis.col(c).dot(w) * basis.col(c);
      }
      w.normalize();
      basis.col(col++) = w;
    }
    if (col - first == 1) fix_sign(basis.col(first));
    k = end;
  }

  SpectralDecomposition dec;
  dec.V = std::move(basis);
  dec.D = lambda.tail(n - 1);
  dec.eigenvalues = lambda;
  dec.eigenvalues(0) = 0.0;
  dec.S = Eigen::MatrixXd::Identity(n, n) - Eigen::MatrixXd::Constant(n, n, 1.0 / n);
  return dec;
}

Eigen::VectorXd disagreement_coordinate(const Eigen::VectorXd& x, const SpectralDecomposition& dec,
                                        int n) {
  const int agents = dec.size();
  if (n <= 0 || x.size() != static_cast<Eigen::Index>(agents) * n) {
    throw Error(ErrorCode::DimensionMismatch, "state has length " + std::to_string(x.size()) +
                                                  ", expected N*n = " +
                                                  std::to_string(agents * n));
  }
  // Block i of x° is sum_p V(p,i) x_p, i.e. the (n × N) reshaped state times V.
  Eigen::Map<const Eigen::MatrixXd> blocks(x.data(), n, agents);
  Eigen::MatrixXd out = blocks * dec.V;
  return Eigen::Map<Eigen::VectorXd>(out.data(), out.size());
}

Eigen::VectorXd disagreement_projection(const Eigen::VectorXd& x, const SpectralDecomposition& dec,
                                        int n) {
  const int agents = dec.size();
  if (n <= 0 || x.size() != static_cast<Eigen::Index>(agents) * n) {
    throw Error(ErrorCode::DimensionMismatch, "state length does not match N*n");
  }
  Eigen::Map<const Eigen::MatrixXd> blocks(x.data(), n, agents);
  Eigen::MatrixXd out = blocks * dec.S;
  return Eigen::Map<Eigen::VectorXd>(out.data(), out.size());
}

SpectralResiduals residuals(const Eigen::MatrixXd& laplacian, const SpectralDecomposition& dec) {
  const Eigen::Index k = dec.V.cols();
  return {
      (laplacian - dec.V * dec.D.asDiagonal() * dec.V.transpose()).norm(),
      (dec.V.transpose() * dec.V - Eigen::MatrixXd::Identity(k, k)).norm(),
      (dec.S - dec.V * dec.V.transpose()).norm(),
  };
}

std::string decomposition_to_csv(const SpectralDecomposition& dec) {
  std::ostringstream os;
  os << std::setprecision(17);
  const int n = dec.size();
  os << "eigenvalue";
  for (int p = 1; p <= n; ++p) os << ",v" << p;
  os << "\n0";
  for (int p = 0; p < n; ++p) os << ',' << 1.0 / std::sqrt(static_cast<double>(n));
  os << "\n";
  for (Eigen::Index i = 0; i < dec.V.cols(); ++i) {
    os << dec.D(i);
    for (int p = 0; p < n; ++p) os << ',' << dec.V(p, i);
    os << "\n";
  }
  return os.str();
}

}  // namespace hycon
