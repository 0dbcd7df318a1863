#pragma once

#include "mrrce/evaluation.hpp"
#include "mrrce/glasso.hpp"
#include "mrrce/model.hpp"

#include <algorithm>
#include <functional>
#include <utility>
#include <vector>

namespace mrrce {

/// Conditional moments of the latent coefficient matrix given the data.
struct EStepMoments {
  Matrix Q1;          // q x q, E[(Y - Z Gamma)^T (Y - Z Gamma) | Y]
  Matrix Q2;          // q x q, E[Gamma^T Gamma | Y]
  Matrix gamma_mean;  // p x q, E[Gamma | Y]
};

enum class StoppingRule { ParameterChange, LoglikRelative };

struct FitConfig {
  double lambda_omega = 0.0;
  double tol = 1e-4;
  int max_iter = 200;
  StoppingRule stopping_rule = StoppingRule::LoglikRelative;
  double glasso_tol = 1e-6;
  int glasso_max_iter = 500;
};

struct FitResult {
  Matrix gamma_star;         // p x q predicted coefficients, original basis
  Matrix omega_original;     // U Omega_t U^T
  Matrix omega_transformed;  // basis in which the EM ran
  double sigma2 = 0.0;
  double rho = 0.0;
  double lambda_omega = 0.0;
  std::vector<double> objective_trace;  // penalized observed-data objective
  int iterations = 0;
  bool converged = false;

  /// Primary parameter report (original-basis precision).
  ParameterSet theta() const { return ParameterSet(SpdMatrix(omega_original), sigma2, rho); }
};

namespace detail {

/// Per-row covariances V_t = Sigma_t + sigma^2 s_t D of the transformed data.
/// Rows of Y_t are independent because Z_t Z_t^T = diag(S).
struct RowCovariances {
  std::vector<Eigen::LLT<Matrix>> llt;  // one factor per row
  Matrix sigma_tilde;                   // Omega_t^{-1}
  Vector d;                             // equicorrelation eigenvalues at rho
};

inline RowCovariances row_covariances(const TransformedProblem& tp, const ParameterSet& theta) {
  RowCovariances rc;
  const Index n = tp.Y_t.rows(), q = tp.Y_t.cols();
  Eigen::LLT<Matrix> om(theta.omega.mat());
  rc.sigma_tilde = om.solve(Matrix::Identity(q, q));
  rc.sigma_tilde = ((rc.sigma_tilde + rc.sigma_tilde.transpose()) * 0.5).eval();
  rc.d = equicorr_eigenvalues(q, theta.rho);
  rc.llt.reserve(n);
  for (Index t = 0; t < n; ++t) {
    Matrix v = rc.sigma_tilde;
    v.diagonal() += (theta.sigma2 * tp.S[t]) * rc.d;
    rc.llt.emplace_back(v);
    if (rc.llt.back().info() != Eigen::Success)
      throw SolverError("e_step: row covariance not positive definite at row " +
                        std::to_string(t));
  }
  return rc;
}

}  // namespace detail

/// E-step moments, computed row by row. In the transformed coordinates the
/// joint covariance of (vec A Gamma, vec Y) has all-diagonal n x n blocks, so
/// the nq x nq system decouples into n independent q x q solves; the result
/// is exact and matches e_step_dense to rounding error.
inline EStepMoments e_step(const TransformedProblem& tp, const ParameterSet& theta) {
  const Index n = tp.Y_t.rows(), p = tp.Z_t.cols(), q = tp.Y_t.cols();
  if (theta.omega.size() != q) throw std::invalid_argument("e_step: omega dimension mismatch");
  detail::RowCovariances rc = detail::row_covariances(tp, theta);
  const double s2 = theta.sigma2;
  const Vector& d = rc.d;

  const Matrix g = tp.Z_t.transpose() * tp.Z_t;  // p x p Gram
  const double tr_g = g.trace();

  // W rows: V_t^{-1} y_t; T0/T1 accumulate V_t^{-1} weighted by |z_t|^2, z_t^T G z_t.
  Matrix w(n, q);
  Matrix t0 = Matrix::Zero(q, q), t1 = Matrix::Zero(q, q);
  for (Index t = 0; t < n; ++t) {
    w.row(t) = rc.llt[t].solve(tp.Y_t.row(t).transpose()).transpose();
    const Vector zt = tp.Z_t.row(t).transpose();
    const double a = zt.squaredNorm();
    if (a == 0.0) continue;
    const Matrix vinv = rc.llt[t].solve(Matrix::Identity(q, q));
    t0 += a * vinv;
    t1 += (zt.dot(g * zt)) * vinv;
  }

  EStepMoments m;
  m.gamma_mean = s2 * (tp.Z_t.transpose() * w) * d.asDiagonal();

  const Matrix dd = d.asDiagonal();
  Matrix q2 = m.gamma_mean.transpose() * m.gamma_mean;
  q2 += s2 * static_cast<double>(p) * dd;
  q2 -= (s2 * s2) * dd * t0 * dd;
  m.Q2 = ((q2 + q2.transpose()) * 0.5).eval();

  Matrix egg = m.gamma_mean.transpose() * g * m.gamma_mean;  // E[Gamma^T G Gamma | Y]
  egg += (s2 * tr_g) * dd;
  egg -= (s2 * s2) * dd * t1 * dd;
  const Matrix yz = tp.Y_t.transpose() * tp.Z_t;  // q x p
  Matrix q1 = tp.Y_t.transpose() * tp.Y_t - yz * m.gamma_mean -
              m.gamma_mean.transpose() * yz.transpose() + egg;
  m.Q1 = ((q1 + q1.transpose()) * 0.5).eval();
  return m;
}

/// Dense reference E-step: builds the full joint Gaussian of (g, y) with
/// Sigma_11 = sigma^2 D (x) A A^T, Sigma_12 = sigma^2 D (x) A Z^T and
/// Sigma_22 = Sigma (x) I_n + sigma^2 D (x) Z Z^T, then conditions directly.
inline EStepMoments e_step_dense(const TransformedProblem& tp, const ParameterSet& theta) {
  const Index n = tp.Y_t.rows(), p = tp.Z_t.cols(), q = tp.Y_t.cols();
  Eigen::LLT<Matrix> om(theta.omega.mat());
  Matrix sigma_tilde = om.solve(Matrix::Identity(q, q));
  const Matrix delta_inv =
      (theta.sigma2 * equicorr_eigenvalues(q, theta.rho)).asDiagonal().toDenseMatrix();

  const Matrix s22 = kron(sigma_tilde, Matrix::Identity(n, n)) +
                     kron(delta_inv, tp.Z_t * tp.Z_t.transpose());
  Eigen::LDLT<Matrix> f(s22);
  if (f.info() != Eigen::Success || (f.vectorD().array() <= 0.0).any())
    throw SolverError("e_step_dense: Sigma22 numerically singular (condition estimate " +
                      std::to_string(detail::condition_estimate(s22)) + ")");
  const Matrix y = vec(tp.Y_t);

  // A = I_p branch: mean and conditional covariance of vec(Gamma).
  const Matrix s12 = kron(delta_inv, tp.Z_t.transpose());
  const Matrix s11 = kron(delta_inv, Matrix::Identity(p, p));
  const Matrix s22inv_s21 = f.solve(s12.transpose());
  const Matrix cond_cov = s11 - s12 * s22inv_s21;
  EStepMoments m;
  m.gamma_mean = unvec(s12 * f.solve(y), p, q);

  const Matrix g = tp.Z_t.transpose() * tp.Z_t;
  Matrix q2(q, q), egg(q, q);
  for (Index i = 0; i < q; ++i)
    for (Index j = 0; j < q; ++j) {
      const Matrix block = cond_cov.block(i * p, j * p, p, p);
      q2(i, j) = m.gamma_mean.col(i).dot(m.gamma_mean.col(j)) + block.trace();
      egg(i, j) = m.gamma_mean.col(i).dot(g * m.gamma_mean.col(j)) + (g * block).trace();
    }
  m.Q2 = ((q2 + q2.transpose()) * 0.5).eval();
  const Matrix yz = tp.Y_t.transpose() * tp.Z_t;
  Matrix q1 = tp.Y_t.transpose() * tp.Y_t - yz * m.gamma_mean -
              m.gamma_mean.transpose() * yz.transpose() + egg;
  m.Q1 = ((q1 + q1.transpose()) * 0.5).eval();
  return m;
}

/// Precision M-step: graphical lasso on Q1 / n.
inline SpdMatrix m_step_omega(const Matrix& q1, Index n, double lambda_omega, double tol = 1e-6,
                              int max_iter = 500) {
  GlassoProblem prob{(q1 / static_cast<double>(n)).eval(), lambda_omega};
  return SpdMatrix(glasso_fit(prob, tol, max_iter).omega);
}

/// Variance M-step. With Delta diagonal the objective depends only on the
/// diagonal of Q2; equating the two eigenvalue-group variances gives the
/// closed form, with rho clamped to [0, 1-1e-6].
inline std::pair<double, double> m_step_variance(const Matrix& q2, Index p) {
  const Index q = q2.rows();
  for (Index j = 0; j < q; ++j)
    if (!(q2(j, j) > 0.0))
      throw std::invalid_argument("m_step_variance: Q2 diagonal must be positive");
  const double dp = static_cast<double>(p);
  if (q == 1) return {q2(0, 0) / dp, 0.0};
  const double v1 = q2(0, 0) / dp;
  double tail = 0.0;
  for (Index j = 1; j < q; ++j) tail += q2(j, j);
  const double v2 = tail / (dp * (q - 1));
  double sigma2, rho;
  if (v1 > v2) {
    rho = (v1 - v2) / (v1 + (q - 1) * v2);
    sigma2 = (v1 + (q - 1) * v2) / q;
  } else {
    rho = 0.0;
    sigma2 = q2.diagonal().sum() / (dp * q);
  }
  rho = std::min(rho, kRhoMax);
  return {sigma2, rho};
}

/// Value of the variance M-step objective tr[(1/p) Delta Q2] - log|Delta| at
/// (sigma2, rho); used by the grid oracle and invariants.
inline double variance_objective(const Matrix& q2, Index p, double sigma2, double rho) {
  const Index q = q2.rows();
  const Vector d = equicorr_eigenvalues(q, rho);
  double val = 0.0;
  for (Index j = 0; j < q; ++j) {
    const double dj = sigma2 * d[j];
    val += q2(j, j) / dj / static_cast<double>(p) + std::log(dj);
  }
  return val;
}

/// E-BLUP for the transformed coefficients:
///   gamma* = (Zb^T R^-1 Zb + L^-1)^-1 Zb^T R^-1 y
/// with Zb = I_q (x) Z_t, L = sigma^2 D (x) I_p, R = Omega^-1 (x) I_n.
/// The Kronecker structure reduces this to a pq x pq solve.
inline Matrix blup(const TransformedProblem& tp, const ParameterSet& theta) {
  const Index p = tp.Z_t.cols(), q = tp.Y_t.cols();
  const Vector d = equicorr_eigenvalues(q, theta.rho);
  const Matrix gram = tp.Z_t.transpose() * tp.Z_t;
  Matrix lhs = kron(theta.omega.mat(), gram);
  for (Index j = 0; j < q; ++j)
    lhs.block(j * p, j * p, p, p).diagonal().array() += 1.0 / (theta.sigma2 * d[j]);
  const Matrix rhs = vec(tp.Z_t.transpose() * tp.Y_t * theta.omega.mat());
  Eigen::LDLT<Matrix> f(lhs);
  if (f.info() != Eigen::Success || (f.vectorD().array() <= 0.0).any())
    throw SolverError("blup: singular system");
  return unvec(f.solve(rhs), p, q);
}

/// Henderson's alternative form gamma* = L Zb^T Psi^-1 y with
/// Psi = Zb L Zb^T + R, built literally with Kronecker products. Used as the
/// second route of the dual-formula agreement check.
inline Matrix blup_henderson(const TransformedProblem& tp, const ParameterSet& theta) {
  const Index n = tp.Y_t.rows(), p = tp.Z_t.cols(), q = tp.Y_t.cols();
  const Vector d = equicorr_eigenvalues(q, theta.rho);
  const Matrix zb = kron(Matrix::Identity(q, q), tp.Z_t);
  const Matrix lmat =
      kron((theta.sigma2 * d).asDiagonal().toDenseMatrix(), Matrix::Identity(p, p));
  Eigen::LLT<Matrix> om(theta.omega.mat());
  const Matrix rmat = kron(om.solve(Matrix::Identity(q, q)), Matrix::Identity(n, n));
  const Matrix psi = zb * lmat * zb.transpose() + rmat;
  Eigen::LDLT<Matrix> f(psi);
  if (f.info() != Eigen::Success) throw SolverError("blup_henderson: singular Psi");
  return unvec(lmat * zb.transpose() * f.solve(vec(tp.Y_t)), p, q);
}

/// Penalized observed-data objective tracked by the EM loop:
///   (1/n) * [-2 log p(y; Theta)] + lambda * sum_{j != k} |omega_jk|
/// with y the transformed data, marginally Gaussian with per-row covariance
/// Sigma_t + sigma^2 s_t D. The 1/n scaling keeps the penalty commensurate
/// with the likelihood term of the estimation objective.
inline double observed_objective(const TransformedProblem& tp, const ParameterSet& theta,
                                 double lambda_omega) {
  const Index n = tp.Y_t.rows(), q = tp.Y_t.cols();
  detail::RowCovariances rc = detail::row_covariances(tp, theta);
  double nll2 = static_cast<double>(n) * q * std::log(2.0 * M_PI);
  for (Index t = 0; t < n; ++t) {
    double logdet = 0.0;
    for (Index j = 0; j < q; ++j) logdet += 2.0 * std::log(rc.llt[t].matrixL()(j, j));
    const Vector yt = tp.Y_t.row(t).transpose();
    nll2 += logdet + yt.dot(rc.llt[t].solve(yt));
  }
  double pen = 0.0;
  for (Index i = 0; i < q; ++i)
    for (Index j = 0; j < q; ++j)
      if (i != j) pen += std::abs(theta.omega.mat()(i, j));
  return nll2 / static_cast<double>(n) + lambda_omega * pen;
}

/// Full MrRCE fit: EM on the transformed problem starting from
/// Omega_0 = I_q, sigma^2 = 1, rho = 0, followed by E-BLUP prediction and the
/// back-transform to the original basis.
inline FitResult fit(const Dataset& data, const FitConfig& config) {
  if (!data.centered) throw std::invalid_argument("fit: data must be centered");
  if (!(config.tol > 0.0)) throw std::invalid_argument("fit: tol must be positive");
  const TransformedProblem tp = to_transformed(data);
  const Index n = data.Y.rows(), q = data.Y.cols(), p = data.Z.cols();

  Matrix omega = Matrix::Identity(q, q);
  double sigma2 = 1.0, rho = 0.0;

  FitResult result;
  result.lambda_omega = config.lambda_omega;
  result.objective_trace.push_back(
      observed_objective(tp, ParameterSet(SpdMatrix(omega), sigma2, rho), config.lambda_omega));
  result.converged = false;

  int t = 0;
  while (t < config.max_iter) {
    ++t;
    const ParameterSet theta(SpdMatrix(omega), sigma2, rho);
    const EStepMoments mom = e_step(tp, theta);

    const Matrix s_hat = mom.Q1 / static_cast<double>(n);
    Matrix omega_new =
        m_step_omega(mom.Q1, n, config.lambda_omega, config.glasso_tol, config.glasso_max_iter)
            .mat();
    // The glasso stops at a KKT tolerance; keep the previous iterate if it
    // happens to score better so every M-step is a true descent step.
    if (glasso_objective(s_hat, config.lambda_omega, omega_new) >
        glasso_objective(s_hat, config.lambda_omega, omega))
      omega_new = omega;

    const auto [sigma2_new, rho_new] = m_step_variance(mom.Q2, p);

    const double param_change = (omega_new - omega).cwiseAbs().sum() +
                                std::abs(sigma2_new - sigma2) + std::abs(rho_new - rho);
    omega = omega_new;
    sigma2 = sigma2_new;
    rho = rho_new;

    const double obj =
        observed_objective(tp, ParameterSet(SpdMatrix(omega), sigma2, rho), config.lambda_omega);
    const double prev = result.objective_trace.back();
    result.objective_trace.push_back(obj);

    if (config.stopping_rule == StoppingRule::ParameterChange) {
      if (param_change < config.tol) {
        result.converged = true;
        break;
      }
    } else {
      if (std::abs(prev - obj) < config.tol * std::max(std::abs(prev), 1e-12)) {
        result.converged = true;
        break;
      }
    }
  }
  result.iterations = t;

  const ParameterSet theta(SpdMatrix(omega), sigma2, rho);
  result.gamma_star = back_transform_gamma(blup(tp, theta), tp.U);
  result.omega_transformed = omega;
  result.omega_original = back_transform_precision(SpdMatrix(omega), tp.U).mat();
  result.sigma2 = sigma2;
  result.rho = rho;
  return result;
}

/// Cross-validation table for the penalty selection.
struct CvTable {
  std::vector<double> lambdas;
  Matrix fold_mse;   // lambdas x folds, +inf marks a failed cell
  Vector mean_mse;   // row means
};

/// Select lambda_omega by k-fold CV on validation predictive MSE.
/// Ties break toward the larger penalty. Failed cells (solver errors on hard
/// penalty values) score +inf and never win.
inline std::pair<double, CvTable> select_lambda(const Dataset& data,
                                                std::vector<double> lambdas, int folds,
                                                const FitConfig& config, Rng rng) {
  if (lambdas.empty()) throw std::invalid_argument("select_lambda: empty lambda list");
  if (folds < 2) throw std::invalid_argument("select_lambda: need folds >= 2");
  const Index n = data.Y.rows();
  std::sort(lambdas.begin(), lambdas.end(), std::greater<>());
  const std::vector<int> fold_of = kfold_split(n, folds, rng);

  CvTable table;
  table.lambdas = lambdas;
  table.fold_mse = Matrix::Zero(static_cast<Index>(lambdas.size()), folds);

  for (int f = 0; f < folds; ++f) {
    std::vector<Index> train, val;
    for (Index i = 0; i < n; ++i) (fold_of[static_cast<std::size_t>(i)] == f ? val : train).push_back(i);
    Matrix ztr(static_cast<Index>(train.size()), data.Z.cols());
    Matrix ytr(static_cast<Index>(train.size()), data.Y.cols());
    for (std::size_t i = 0; i < train.size(); ++i) {
      ztr.row(static_cast<Index>(i)) = data.Z.row(train[i]);
      ytr.row(static_cast<Index>(i)) = data.Y.row(train[i]);
    }
    const Dataset dtr = center_columns(ztr, ytr);
    for (std::size_t li = 0; li < lambdas.size(); ++li) {
      FitConfig c = config;
      c.lambda_omega = lambdas[li];
      double mse;
      try {
        const FitResult r = fit(dtr, c);
        double sse = 0.0;
        for (Index vi : val) {
          const Vector zc = data.Z.row(vi).transpose() - dtr.z_means;
          const Vector pred = r.gamma_star.transpose() * zc + dtr.y_means;
          sse += (data.Y.row(vi).transpose() - pred).squaredNorm();
        }
        mse = sse / (static_cast<double>(val.size()) * data.Y.cols());
      } catch (const SolverError&) {
        mse = std::numeric_limits<double>::infinity();
      }
      table.fold_mse(static_cast<Index>(li), f) = mse;
    }
  }
  table.mean_mse = table.fold_mse.rowwise().mean();
  Index best = 0;
  for (Index i = 1; i < table.mean_mse.size(); ++i)
    if (table.mean_mse[i] < table.mean_mse[best]) best = i;  // strict: ties keep larger lambda
  return {table.lambdas[static_cast<std::size_t>(best)], table};
}

/// Maximum elementwise difference between the E-BLUP and the multivariate
/// ridge estimator with K = (Sigma_0 (x) I_p) Lambda^-1, valid under the
/// scalar-error hypothesis Omega = (1/sigma_eps2) I.
inline double ridge_equivalence_check(const TransformedProblem& tp, double sigma_eps2,
                                      const ParameterSet& theta) {
  const Index p = tp.Z_t.cols(), q = tp.Y_t.cols();
  const Matrix expected = Matrix::Identity(q, q) / sigma_eps2;
  if ((theta.omega.mat() - expected).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, 1.0 / sigma_eps2))
    throw std::invalid_argument("ridge_equivalence_check: omega must equal (1/sigma_eps2) I");

  const Matrix gamma_blup = blup(tp, theta);

  const Vector d = equicorr_eigenvalues(q, theta.rho);
  Matrix k = Matrix::Zero(p * q, p * q);
  for (Index j = 0; j < q; ++j)
    k.block(j * p, j * p, p, p).diagonal().setConstant(sigma_eps2 / (theta.sigma2 * d[j]));
  const Matrix gram = tp.Z_t.transpose() * tp.Z_t;
  Matrix lhs = kron(Matrix::Identity(q, q), gram) + k;
  const Matrix rhs = vec(tp.Z_t.transpose() * tp.Y_t);
  const Matrix gamma_rr = unvec(Eigen::LDLT<Matrix>(lhs).solve(rhs), p, q);

  return (gamma_blup - gamma_rr).cwiseAbs().maxCoeff();
}

}  // namespace mrrce
