#pragma once

#include "mrrce/numerics.hpp"

namespace test_helpers {

using mrrce::Index;
using mrrce::Matrix;
using mrrce::Rng;
using mrrce::Vector;

/// Random SPD matrix A A^T / n + eps I.
inline Matrix random_spd(Rng& rng, Index n, double eps = 0.1) {
  const Matrix a = rng.normal_matrix(n, n);
  return a * a.transpose() / static_cast<double>(n) + eps * Matrix::Identity(n, n);
}

inline double rel_err(const Matrix& got, const Matrix& want) {
  const double denom = want.norm();
  return denom == 0.0 ? got.norm() : (got - want).norm() / denom;
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
  return (a - b).cwiseAbs().maxCoeff();
}

}  // namespace test_helpers
