#pragma once

#include "mrrce/model.hpp"

#include <string>

namespace mrrce {

enum class ErrorKind { Identity, Ar1, Fgn, Equicorr };

struct ErrorStructure {
  ErrorKind kind = ErrorKind::Identity;
  double param = 0.0;  // rho_e for ar1/equicorr, Hurst exponent for fgn
};

struct SimConfig {
  Index n = 50;
  Index p = 20;
  Index q = 5;
  double rho = 0.0;      // coefficient intra-group correlation
  double sigma = 1.0;    // coefficient scale
  double s = 0.0;        // element sparsity
  double s_g = 0.0;      // group (row) sparsity
  double rho_z = 0.7;    // predictor AR parameter
  ErrorStructure error_structure;
  double error_scale = 1.0;  // multiplies the error draw; 0 gives noiseless data
  std::uint64_t seed = 0;
};

struct SimInstance {
  Dataset data;        // uncentered raw (Z, Y)
  Matrix gamma_true;   // p x q
  Matrix sigma_z;      // predictor covariance
  Matrix error_cov;    // original-basis error covariance
  Matrix errors;       // the drawn E, retained so Y = Z Gamma + E reconstructs exactly
};

/// Predictor rows i.i.d. N_p(0, Sigma_Z) with (Sigma_Z)_ij = rho_z^|i-j|.
inline Matrix ar1_covariance(Index p, double rho_z) {
  Matrix s(p, p);
  for (Index i = 0; i < p; ++i)
    for (Index j = 0; j < p; ++j) s(i, j) = std::pow(rho_z, std::abs(double(i - j)));
  return s;
}

inline Matrix gen_predictors(Rng& rng, Index n, Index p, double rho_z) {
  if (!(rho_z > -1.0 && rho_z < 1.0))
    throw std::invalid_argument("gen_predictors: rho_z must lie in (-1, 1)");
  return sample_matrix_normal(rng, n, SpdMatrix(ar1_covariance(p, rho_z)));
}

/// Gamma = W .* K .* Q: equicorrelated rows, element mask, row mask.
inline Matrix gen_coefficients(Rng& rng, Index p, Index q, double sigma, double rho, double s,
                               double s_g) {
  if (!(s >= 0.0 && s <= 1.0 && s_g >= 0.0 && s_g <= 1.0))
    throw std::invalid_argument("gen_coefficients: sparsity levels must lie in [0,1]");
  const Matrix c = EquicorrStructure(q, rho).matrix();
  // Draw at unit scale and multiply by sigma so sigma = 0 is representable.
  Matrix w = sigma * sample_matrix_normal(rng, p, SpdMatrix(c));
  for (Index i = 0; i < p; ++i)
    for (Index j = 0; j < q; ++j)
      if (rng.uniform() > 1.0 - s) w(i, j) = 0.0;  // K mask
  for (Index i = 0; i < p; ++i)
    if (rng.uniform() > 1.0 - s_g) w.row(i).setZero();  // Q mask
  return w;
}

/// Transformed error covariance per structure, rotated back to the original
/// basis: Sigma = U Sigma_t U^T.
inline SpdMatrix gen_error_cov(const ErrorStructure& structure, Index q, const Matrix& u) {
  Matrix st(q, q);
  switch (structure.kind) {
    case ErrorKind::Identity:
      st = Matrix::Identity(q, q);
      break;
    case ErrorKind::Ar1:
      for (Index i = 0; i < q; ++i)
        for (Index j = 0; j < q; ++j)
          st(i, j) = std::pow(structure.param, std::abs(double(i - j)));
      break;
    case ErrorKind::Fgn: {
      const double h2 = 2.0 * structure.param;
      for (Index i = 0; i < q; ++i)
        for (Index j = 0; j < q; ++j) {
          const double k = std::abs(double(i - j));
          st(i, j) = 0.5 * (std::pow(k + 1.0, h2) - 2.0 * std::pow(k, h2) +
                            std::pow(std::abs(k - 1.0), h2));
        }
      break;
    }
    case ErrorKind::Equicorr:
      st = Matrix::Constant(q, q, structure.param);
      st.diagonal().setOnes();
      break;
  }
  Matrix sigma = u * st * u.transpose();
  try {
    return SpdMatrix(std::move(sigma));
  } catch (const std::invalid_argument&) {
    throw SolverError("gen_error_cov: structure parameters give a non-PD covariance");
  }
}

/// Full generator; draw order is (Z, W, K, Q, E) from a single stream, so an
/// identical seed reproduces the instance bit for bit.
inline SimInstance simulate(const SimConfig& config, Rng rng) {
  SimInstance inst;
  inst.sigma_z = ar1_covariance(config.p, config.rho_z);
  inst.data.Z = gen_predictors(rng, config.n, config.p, config.rho_z);
  inst.gamma_true =
      gen_coefficients(rng, config.p, config.q, config.sigma, config.rho, config.s, config.s_g);
  const Matrix u = equicorr_eigenbasis(config.q);
  const SpdMatrix sigma = gen_error_cov(config.error_structure, config.q, u);
  inst.error_cov = sigma.mat();
  inst.errors = config.error_scale * sample_matrix_normal(rng, config.n, sigma);
  inst.data.Y = inst.data.Z * inst.gamma_true + inst.errors;
  inst.data.centered = false;
  return inst;
}

inline SimInstance simulate(const SimConfig& config) { return simulate(config, Rng(config.seed)); }

inline std::string error_kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Identity: return "identity";
    case ErrorKind::Ar1: return "ar1";
    case ErrorKind::Fgn: return "fgn";
    case ErrorKind::Equicorr: return "equicorr";
  }
  return "unknown";
}

}  // namespace mrrce
