#pragma once

#include "mrrce/numerics.hpp"

#include <utility>

namespace mrrce {

constexpr double kRhoMax = 1.0 - 1e-6;  // keeps C_rho numerically SPD

/// Equicorrelation structure C_rho = (1-rho) I + rho J on q coordinates.
struct EquicorrStructure {
  Index q;
  double rho;

  EquicorrStructure(Index q_, double rho_) : q(q_), rho(rho_) {
    if (q < 1) throw std::invalid_argument("EquicorrStructure: q must be >= 1");
    if (!(rho >= 0.0 && rho < 1.0))
      throw std::invalid_argument("EquicorrStructure: rho must lie in [0,1)");
  }

  Matrix matrix() const {
    Matrix c = Matrix::Constant(q, q, rho);
    c.diagonal().setOnes();
    return c;
  }
};

/// Eigenvalues of C_rho: 1+(q-1)rho once, then 1-rho with multiplicity q-1.
inline Vector equicorr_eigenvalues(Index q, double rho) {
  if (q < 1) throw std::invalid_argument("equicorr_eigenvalues: q must be >= 1");
  if (!(rho >= 0.0 && rho < 1.0))
    throw std::invalid_argument("equicorr_eigenvalues: rho must lie in [0,1)");
  Vector d = Vector::Constant(q, 1.0 - rho);
  d[0] = 1.0 + (q - 1) * rho;
  return d;
}

/// Fixed orthonormal eigenbasis of every C_rho: the constant vector 1/sqrt(q)
/// first, then the Helmert contrasts. Depends only on q, never on rho.
inline Matrix equicorr_eigenbasis(Index q) {
  if (q < 1) throw std::invalid_argument("equicorr_eigenbasis: q must be >= 1");
  Matrix u = Matrix::Zero(q, q);
  u.col(0).setConstant(1.0 / std::sqrt(static_cast<double>(q)));
  for (Index j = 1; j < q; ++j) {
    const double norm = std::sqrt(static_cast<double>(j) * (j + 1));
    for (Index i = 0; i < j; ++i) u(i, j) = 1.0 / norm;
    u(j, j) = -static_cast<double>(j) / norm;
  }
  return u;
}

/// Parameters Theta = {Omega, sigma^2, rho}. The precision matrix may be in
/// either basis; operations state which one they expect.
struct ParameterSet {
  SpdMatrix omega;
  double sigma2;
  double rho;

  ParameterSet(SpdMatrix omega_, double sigma2_, double rho_)
      : omega(std::move(omega_)), sigma2(sigma2_), rho(rho_) {
    if (!(sigma2 > 0.0)) throw std::invalid_argument("ParameterSet: sigma2 must be positive");
    if (!(rho >= 0.0 && rho <= kRhoMax))
      throw std::invalid_argument("ParameterSet: rho must lie in [0, 1-1e-6]");
  }
};

/// Predictor/response pair. Column means are retained when centered so that
/// predictions can be mapped back to the original scale.
struct Dataset {
  Matrix Z;  // n x p
  Matrix Y;  // n x q
  bool centered = false;
  Vector z_means;  // empty unless centered
  Vector y_means;
};

inline Dataset center_columns(const Matrix& raw_z, const Matrix& raw_y) {
  if (raw_z.rows() != raw_y.rows())
    throw std::invalid_argument("center_columns: Z and Y row counts differ");
  if (raw_z.rows() < 2) throw std::invalid_argument("center_columns: need n >= 2");
  Dataset d;
  d.z_means = raw_z.colwise().mean();
  d.y_means = raw_y.colwise().mean();
  d.Z = raw_z.rowwise() - d.z_means.transpose();
  d.Y = raw_y.rowwise() - d.y_means.transpose();
  d.centered = true;
  return d;
}

/// Data rotated into the coordinate system where the coefficient prior is
/// diagonal: Y_t = L^T Y U, Z_t = L^T Z, with C_rho = U D U^T and
/// Z Z^T = L diag(S) L^T.
struct TransformedProblem {
  Matrix Y_t;  // n x q
  Matrix Z_t;  // n x p
  Matrix U;    // q x q orthogonal
  Matrix L;    // n x n orthogonal
  Vector S;    // length n, nonnegative
};

inline TransformedProblem to_transformed(const Dataset& data) {
  if (!data.centered) throw std::invalid_argument("to_transformed: data must be centered");
  TransformedProblem tp;
  tp.U = equicorr_eigenbasis(data.Y.cols());
  const Index n = data.Z.rows(), p = data.Z.cols();
  if (p < n) {
    // Z Z^T has rank <= p: take its nonzero eigenpairs from the p x p Gram
    // and complete the basis with Householder QR. The QR of a matrix with
    // orthonormal columns returns those columns up to sign, so the first
    // block stays an exact eigenbasis.
    EigenFactorization g = sym_eigen((data.Z.transpose() * data.Z).eval());
    const double tol = 1e-12 * std::max(g.values[0], 0.0);
    Index r = 0;
    while (r < p && g.values[r] > tol) ++r;
    Matrix uz(n, r);
    for (Index k = 0; k < r; ++k)
      uz.col(k) = data.Z * g.vectors.col(k) / std::sqrt(g.values[k]);
    Eigen::HouseholderQR<Matrix> qr(uz);
    tp.L = qr.householderQ() * Matrix::Identity(n, n);
    for (Index k = 0; k < r; ++k)
      if (tp.L.col(k).dot(uz.col(k)) < 0.0) tp.L.col(k) = -tp.L.col(k);
    tp.S = Vector::Zero(n);
    tp.S.head(r) = g.values.head(r);
  } else {
    EigenFactorization g = sym_eigen((data.Z * data.Z.transpose()).eval());
    tp.L = std::move(g.vectors);
    tp.S = g.values.cwiseMax(0.0);
  }
  tp.Y_t = tp.L.transpose() * data.Y * tp.U;
  tp.Z_t = tp.L.transpose() * data.Z;
  return tp;
}

/// Inverse of Gamma_t = Gamma U.
inline Matrix back_transform_gamma(const Matrix& gamma_t, const Matrix& u) {
  return gamma_t * u.transpose();
}

/// Inverse of Omega_t = U^T Omega U; eigenvalues are preserved.
inline SpdMatrix back_transform_precision(const SpdMatrix& omega_t, const Matrix& u) {
  return SpdMatrix(u * omega_t.mat() * u.transpose());
}

}  // namespace mrrce
