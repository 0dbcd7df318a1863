#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace mrrce {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Numerical failure inside a solver (singular system, non-convergence).
class SolverError : public std::runtime_error {
 public:
  explicit SolverError(const std::string& what) : std::runtime_error(what) {}
};

namespace detail {

inline double max_abs(const Matrix& m) {
  return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

inline void check_symmetric(const Matrix& m, const char* who) {
  if (m.rows() != m.cols())
    throw std::invalid_argument(std::string(who) + ": matrix not square (" +
                                std::to_string(m.rows()) + "x" + std::to_string(m.cols()) + ")");
  const double scale = std::max(1.0, max_abs(m));
  if (max_abs(m - m.transpose()) > 1e-10 * scale)
    throw std::invalid_argument(std::string(who) + ": matrix not symmetric within 1e-10");
}

}  // namespace detail

/// Square matrix validated symmetric positive definite on construction.
class SpdMatrix {
 public:
  explicit SpdMatrix(Matrix m) : m_(std::move(m)) {
    detail::check_symmetric(m_, "SpdMatrix");
    if (!m_.allFinite()) throw std::invalid_argument("SpdMatrix: non-finite entries");
    m_ = ((m_ + m_.transpose()) * 0.5).eval();
    Eigen::LLT<Matrix> llt(m_);
    if (llt.info() != Eigen::Success)
      throw std::invalid_argument("SpdMatrix: matrix not positive definite");
  }

  const Matrix& mat() const { return m_; }
  Index size() const { return m_.rows(); }

  static SpdMatrix identity(Index n) { return SpdMatrix(Matrix::Identity(n, n)); }

 private:
  Matrix m_;
};

/// Eigendecomposition of a symmetric matrix, eigenvalues sorted nonincreasing.
struct EigenFactorization {
  Matrix vectors;  // orthogonal, columns are eigenvectors
  Vector values;   // nonincreasing
};

/// Symmetric eigendecomposition with PSD clamping of tiny negative eigenvalues.
/// Negative eigenvalues with magnitude below 1e-12 * lambda_max are set to zero
/// (Gram matrices Z Z^T with p < n are rank deficient by construction).
inline EigenFactorization sym_eigen(const Matrix& m) {
  detail::check_symmetric(m, "sym_eigen");
  Eigen::SelfAdjointEigenSolver<Matrix> es(((m + m.transpose()) * 0.5).eval());
  if (es.info() != Eigen::Success) throw SolverError("sym_eigen: eigensolver failed");
  const Index n = m.rows();
  EigenFactorization f;
  f.values = Vector(n);
  f.vectors = Matrix(n, n);
  // Eigen returns increasing order; reverse.
  for (Index i = 0; i < n; ++i) {
    f.values[i] = es.eigenvalues()[n - 1 - i];
    f.vectors.col(i) = es.eigenvectors().col(n - 1 - i);
  }
  const double lmax = std::max(f.values[0], 0.0);
  const double clamp = 1e-12 * lmax;
  for (Index i = 0; i < n; ++i)
    if (f.values[i] < 0.0 && -f.values[i] <= std::max(clamp, 1e-300)) f.values[i] = 0.0;
  return f;
}

inline EigenFactorization sym_eigen(const SpdMatrix& m) { return sym_eigen(m.mat()); }

namespace detail {

/// Condition estimate (eigenvalue ratio) used in solver error messages.
inline double condition_estimate(const Matrix& a) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(a);
  if (es.info() != Eigen::Success) return std::numeric_limits<double>::infinity();
  const double lo = es.eigenvalues().minCoeff(), hi = es.eigenvalues().maxCoeff();
  if (lo <= 0.0) return std::numeric_limits<double>::infinity();
  return hi / lo;
}

}  // namespace detail

/// Solve a x = b for symmetric positive definite a via Cholesky.
inline Matrix spd_solve(const Matrix& a, const Matrix& b) {
  if (a.rows() != a.cols() || a.rows() != b.rows())
    throw std::invalid_argument("spd_solve: nonconformable dimensions");
  Eigen::LLT<Matrix> llt(a);
  if (llt.info() != Eigen::Success)
    throw SolverError("spd_solve: matrix indefinite or singular (condition estimate " +
                      std::to_string(detail::condition_estimate(a)) + ")");
  Matrix x = llt.solve(b);
  // One refinement step, then enforce the residual contract.
  x += llt.solve(b - a * x);
  const double bnorm = b.norm();
  if (bnorm > 0.0 && (a * x - b).norm() > 1e-8 * bnorm)
    throw SolverError("spd_solve: residual above 1e-8 (condition estimate " +
                      std::to_string(detail::condition_estimate(a)) + ")");
  return x;
}

inline Matrix spd_solve(const SpdMatrix& a, const Matrix& b) { return spd_solve(a.mat(), b); }

/// Kronecker product.
inline Matrix kron(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

/// Column-stacking vectorization.
inline Matrix vec(const Matrix& m) {
  Matrix v(m.size(), 1);
  Index k = 0;
  for (Index j = 0; j < m.cols(); ++j)
    for (Index i = 0; i < m.rows(); ++i) v(k++, 0) = m(i, j);
  return v;
}

inline Matrix unvec(const Matrix& v, Index rows, Index cols) {
  if (v.cols() != 1 || v.rows() != rows * cols)
    throw std::invalid_argument("unvec: length " + std::to_string(v.rows()) +
                                " does not match " + std::to_string(rows) + "x" +
                                std::to_string(cols));
  Matrix m(rows, cols);
  Index k = 0;
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = v(k++, 0);
  return m;
}

/// Counter-based splittable generator: output t is mix(key + t * golden), so
/// identical seeds give identical streams and child streams never share state.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : key_(mix(seed ^ 0x9e3779b97f4a7c15ull)) {}

  /// Independent child stream, e.g. one per replication index.
  Rng child(std::uint64_t stream) const {
    Rng r(*this);
    r.key_ = mix(key_ ^ mix(stream + 0x632be59bd9b4e019ull));
    r.counter_ = 0;
    return r;
  }

  std::uint64_t next_u64() { return mix(key_ + 0x9e3779b97f4a7c15ull * ++counter_); }

  /// Uniform on (0, 1].
  double uniform() { return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53; }

  /// Standard normal via Box-Muller; two uniforms per draw, no cached spare.
  double normal() {
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  /// Matrix of i.i.d. standard normals, filled in row-major order.
  Matrix normal_matrix(Index rows, Index cols) {
    Matrix m(rows, cols);
    for (Index i = 0; i < rows; ++i)
      for (Index j = 0; j < cols; ++j) m(i, j) = normal();
    return m;
  }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xbf58476d1ce4e5b9ull;
    z ^= z >> 27;
    z *= 0x94d049bb133111ebull;
    z ^= z >> 31;
    return z;
  }

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

namespace detail {

/// Symmetric PSD square root via eigendecomposition, tiny negatives clamped.
inline Matrix sym_sqrt(const Matrix& m) {
  EigenFactorization f = sym_eigen(m);
  Vector s = f.values.cwiseMax(0.0).cwiseSqrt();
  return f.vectors * s.asDiagonal() * f.vectors.transpose();
}

}  // namespace detail

/// Draw from MVN_{n x q}(0, I_n, col_cov): rows are i.i.d. N_q(0, col_cov).
inline Matrix sample_matrix_normal(Rng& rng, Index n, const SpdMatrix& col_cov) {
  const Matrix b = detail::sym_sqrt(col_cov.mat());
  return rng.normal_matrix(n, col_cov.size()) * b.transpose();
}

/// Draw from MVN(0, row_cov, col_cov): result = A Z0 B^T with A A^T = row_cov,
/// B B^T = col_cov (symmetric square roots).
inline Matrix sample_matrix_normal(Rng& rng, const SpdMatrix& row_cov, const SpdMatrix& col_cov) {
  const Matrix a = detail::sym_sqrt(row_cov.mat());
  const Matrix b = detail::sym_sqrt(col_cov.mat());
  return a * rng.normal_matrix(row_cov.size(), col_cov.size()) * b.transpose();
}

}  // namespace mrrce
