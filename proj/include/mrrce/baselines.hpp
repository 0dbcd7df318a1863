#pragma once

#include "mrrce/evaluation.hpp"
#include "mrrce/glasso.hpp"
#include "mrrce/model.hpp"

#include <map>
#include <string>
#include <vector>

namespace mrrce {

struct CoefEstimate {
  Matrix B_hat;  // p x q
  std::string method;
  std::map<std::string, double> hyperparams;
};

/// q separate least-squares regressions.
inline CoefEstimate ols_fit(const Dataset& data) {
  const Matrix gram = data.Z.transpose() * data.Z;
  Eigen::LLT<Matrix> llt(gram);
  if (llt.info() != Eigen::Success) {
    Eigen::ColPivHouseholderQR<Matrix> qr(data.Z);
    if (qr.rank() < data.Z.cols()) throw SolverError("ols_fit: rank-deficient predictor matrix");
    return {qr.solve(data.Y), "ols", {}};
  }
  return {llt.solve(data.Z.transpose() * data.Y), "ols", {}};
}

namespace detail {

/// Hat-matrix diagonals and fitted values for the ridge estimator at one
/// penalty, from a precomputed eigendecomposition of Z^T Z.
struct RidgeWork {
  Matrix v;     // eigenvectors of Z^T Z
  Matrix zv;    // Z * V
  Vector evals; // eigenvalues of Z^T Z
  Matrix c;     // (ZV)^T Y
};

inline RidgeWork ridge_work(const Dataset& data) {
  RidgeWork w;
  EigenFactorization f = sym_eigen((data.Z.transpose() * data.Z).eval());
  w.v = std::move(f.vectors);
  w.zv = data.Z * w.v;
  w.evals = std::move(f.values);
  w.c = w.zv.transpose() * data.Y;
  return w;
}

/// Per-response leave-one-out squared error at penalty lambda, via the
/// closed-form e_i / (1 - h_ii) identity.
inline Vector ridge_loo_sse(const RidgeWork& w, const Dataset& data, double lambda) {
  const Vector shrink = (w.evals.array() + lambda).inverse().matrix();
  const Matrix yhat = w.zv * shrink.asDiagonal() * w.c;
  const Vector h = (w.zv * shrink.asDiagonal()).cwiseProduct(w.zv).rowwise().sum();
  Vector sse = Vector::Zero(data.Y.cols());
  for (Index i = 0; i < data.Y.rows(); ++i) {
    const double denom = 1.0 - h[i];
    if (denom <= 0.0) return Vector::Constant(data.Y.cols(), std::numeric_limits<double>::infinity());
    for (Index j = 0; j < data.Y.cols(); ++j) {
      const double r = (data.Y(i, j) - yhat(i, j)) / denom;
      sse[j] += r * r;
    }
  }
  return sse;
}

inline Matrix ridge_coefs(const Dataset& data, const RidgeWork& w, double lambda) {
  const Vector shrink = (w.evals.array() + lambda).inverse().matrix();
  return w.v * shrink.asDiagonal() * w.v.transpose() * (data.Z.transpose() * data.Y);
}

}  // namespace detail

/// Ridge with one penalty shared across all pq coefficients, selected by
/// closed-form LOO-CV summed over responses.
inline CoefEstimate ridge_fit_shared(const Dataset& data, const std::vector<double>& lambdas) {
  if (lambdas.empty()) throw std::invalid_argument("ridge_fit_shared: empty grid");
  const detail::RidgeWork w = detail::ridge_work(data);
  std::vector<double> grid = lambdas;
  std::sort(grid.begin(), grid.end(), std::greater<>());
  double best = std::numeric_limits<double>::infinity(), best_lambda = grid.front();
  for (double lambda : grid) {
    const double total = detail::ridge_loo_sse(w, data, lambda).sum();
    if (total < best) {
      best = total;
      best_lambda = lambda;
    }
  }
  return {detail::ridge_coefs(data, w, best_lambda), "ridge", {{"lambda", best_lambda}}};
}

/// Ridge with a per-response penalty, each selected by LOO-CV.
inline CoefEstimate ridge_fit_separate(const Dataset& data, const std::vector<double>& lambdas) {
  if (lambdas.empty()) throw std::invalid_argument("ridge_fit_separate: empty grid");
  const detail::RidgeWork w = detail::ridge_work(data);
  std::vector<double> grid = lambdas;
  std::sort(grid.begin(), grid.end(), std::greater<>());
  const Index q = data.Y.cols();
  Vector best = Vector::Constant(q, std::numeric_limits<double>::infinity());
  std::vector<double> best_lambda(static_cast<std::size_t>(q), grid.front());
  for (double lambda : grid) {
    const Vector sse = detail::ridge_loo_sse(w, data, lambda);
    for (Index j = 0; j < q; ++j)
      if (sse[j] < best[j]) {
        best[j] = sse[j];
        best_lambda[static_cast<std::size_t>(j)] = lambda;
      }
  }
  CoefEstimate est;
  est.method = "ridge_separate";
  est.B_hat = Matrix(data.Z.cols(), q);
  for (Index j = 0; j < q; ++j) {
    const double lj = best_lambda[static_cast<std::size_t>(j)];
    Dataset single;
    single.Z = data.Z;
    single.Y = data.Y.col(j);
    est.B_hat.col(j) = detail::ridge_coefs(single, w, lj);
    est.hyperparams["lambda_" + std::to_string(j)] = lj;
  }
  return est;
}

namespace detail {

// Relative KKT target for the coordinate-descent solvers; multiplied by each
// problem's own gradient scale so badly scaled features stay solvable.
constexpr double kCdKktTol = 5e-8;

/// Stationarity residual of 0.5 |y - Z b|^2 + lambda |b|_1.
inline double lasso_kkt_violation(const Matrix& z, const Vector& y, double lambda,
                                  const Vector& beta) {
  const Vector grad = z.transpose() * (y - z * beta);
  double v = 0.0;
  for (Index j = 0; j < beta.size(); ++j) {
    if (beta[j] == 0.0)
      v = std::max(v, std::abs(grad[j]) - lambda);
    else
      v = std::max(v, std::abs(grad[j] - lambda * (beta[j] > 0 ? 1.0 : -1.0)));
  }
  return v;
}

/// Cyclic coordinate descent for 0.5 |y - Z b|^2 + lambda |b|_1. Stops on the
/// exact KKT residual, checked periodically; a fully stalled sweep also stops
/// (no coordinate can improve further in floating point).
inline Vector lasso_cd(const Matrix& z, const Vector& y, double lambda, Vector beta,
                       double tol_scale, int max_sweeps = 100000) {
  const Index p = z.cols();
  const Vector col_sq = z.colwise().squaredNorm();
  Vector r = y - z * beta;
  const double stall = 1e-14 * std::max(1.0, tol_scale);
  const double kkt_tol =
      kCdKktTol * std::max(1.0, (z.transpose() * y).cwiseAbs().maxCoeff());
  for (int sweep = 1; sweep <= max_sweeps; ++sweep) {
    double max_change = 0.0;
    for (Index j = 0; j < p; ++j) {
      if (col_sq[j] == 0.0) {
        beta[j] = 0.0;
        continue;
      }
      const double c = z.col(j).dot(r) + col_sq[j] * beta[j];
      const double bnew = soft_threshold(c, lambda) / col_sq[j];
      const double delta = bnew - beta[j];
      if (delta != 0.0) {
        r -= z.col(j) * delta;
        beta[j] = bnew;
        max_change = std::max(max_change, std::abs(delta) * std::sqrt(col_sq[j]));
      }
    }
    if (max_change <= stall) return beta;
    if (sweep % 10 == 0 && lasso_kkt_violation(z, y, lambda, beta) <= kkt_tol) return beta;
  }
  if (lasso_kkt_violation(z, y, lambda, beta) <= 10 * kkt_tol) return beta;
  throw SolverError("lasso_cd: no convergence");
}

/// Row-wise stationarity residual of 0.5 |Y - Z B|_F^2 + lambda sum_i |B_i|_2.
inline double group_lasso_kkt_violation(const Matrix& z, const Matrix& y, double lambda,
                                        const Matrix& b) {
  const Matrix grad = z.transpose() * (y - z * b);
  double v = 0.0;
  for (Index i = 0; i < b.rows(); ++i) {
    const double rn = b.row(i).norm();
    if (rn == 0.0)
      v = std::max(v, grad.row(i).norm() - lambda);
    else
      v = std::max(v, (grad.row(i) - lambda * b.row(i) / rn).norm());
  }
  return v;
}

/// Block coordinate descent over rows of B for
/// 0.5 |Y - Z B|_F^2 + lambda * sum_i |B_i|_2, with exact-KKT stopping.
inline Matrix group_lasso_cd(const Matrix& z, const Matrix& y, double lambda, Matrix b,
                             double tol_scale, int max_sweeps = 100000) {
  const Index p = z.cols();
  const Vector col_sq = z.colwise().squaredNorm();
  Matrix r = y - z * b;
  const double stall = 1e-14 * std::max(1.0, tol_scale);
  const double kkt_tol =
      kCdKktTol * std::max(1.0, (z.transpose() * y).rowwise().norm().maxCoeff());
  for (int sweep = 1; sweep <= max_sweeps; ++sweep) {
    double max_change = 0.0;
    for (Index i = 0; i < p; ++i) {
      if (col_sq[i] == 0.0) {
        b.row(i).setZero();
        continue;
      }
      const Eigen::RowVectorXd c = z.col(i).transpose() * r + col_sq[i] * b.row(i);
      Eigen::RowVectorXd bnew;
      const double norm = c.norm();
      if (norm <= lambda)
        bnew = Eigen::RowVectorXd::Zero(y.cols());
      else
        bnew = c * ((1.0 - lambda / norm) / col_sq[i]);
      const Eigen::RowVectorXd delta = bnew - b.row(i);
      const double change = delta.norm() * std::sqrt(col_sq[i]);
      if (change > 0.0) {
        r -= z.col(i) * delta;
        b.row(i) = bnew;
        max_change = std::max(max_change, change);
      }
    }
    if (max_change <= stall) return b;
    if (sweep % 10 == 0 && group_lasso_kkt_violation(z, y, lambda, b) <= kkt_tol) return b;
  }
  if (group_lasso_kkt_violation(z, y, lambda, b) <= 10 * kkt_tol) return b;
  throw SolverError("group_lasso_cd: no convergence");
}

struct FoldData {
  Dataset train;  // re-centered
  Matrix z_val;   // raw validation rows
  Matrix y_val;
};

inline std::vector<FoldData> make_folds(const Dataset& data, int folds, Rng rng) {
  const Index n = data.Y.rows();
  const std::vector<int> fold_of = kfold_split(n, folds, rng);
  std::vector<FoldData> out(static_cast<std::size_t>(folds));
  for (int f = 0; f < folds; ++f) {
    std::vector<Index> tr, va;
    for (Index i = 0; i < n; ++i) (fold_of[static_cast<std::size_t>(i)] == f ? va : tr).push_back(i);
    Matrix ztr(static_cast<Index>(tr.size()), data.Z.cols()),
        ytr(static_cast<Index>(tr.size()), data.Y.cols());
    Matrix zva(static_cast<Index>(va.size()), data.Z.cols()),
        yva(static_cast<Index>(va.size()), data.Y.cols());
    for (std::size_t i = 0; i < tr.size(); ++i) {
      ztr.row(static_cast<Index>(i)) = data.Z.row(tr[i]);
      ytr.row(static_cast<Index>(i)) = data.Y.row(tr[i]);
    }
    for (std::size_t i = 0; i < va.size(); ++i) {
      zva.row(static_cast<Index>(i)) = data.Z.row(va[i]);
      yva.row(static_cast<Index>(i)) = data.Y.row(va[i]);
    }
    out[static_cast<std::size_t>(f)] = {center_columns(ztr, ytr), std::move(zva), std::move(yva)};
  }
  return out;
}

}  // namespace detail

/// q separate lasso regressions, per-response penalty by k-fold CV on
/// validation MSE (ties toward the larger penalty).
inline CoefEstimate lasso_fit_separate(const Dataset& data, int folds,
                                       const std::vector<double>& lambdas, Rng rng) {
  if (folds < 2) throw std::invalid_argument("lasso_fit_separate: need folds >= 2");
  if (lambdas.empty()) throw std::invalid_argument("lasso_fit_separate: empty grid");
  std::vector<double> grid = lambdas;
  std::sort(grid.begin(), grid.end(), std::greater<>());
  const auto fold_data = detail::make_folds(data, folds, rng);
  const Index p = data.Z.cols(), q = data.Y.cols();

  CoefEstimate est;
  est.method = "lasso_separate";
  est.B_hat = Matrix(p, q);
  for (Index j = 0; j < q; ++j) {
    Vector mean_mse = Vector::Zero(static_cast<Index>(grid.size()));
    for (const auto& fd : fold_data) {
      Vector beta = Vector::Zero(p);  // warm start down the path
      const double scale = fd.train.Y.col(j).norm();
      for (std::size_t li = 0; li < grid.size(); ++li) {
        beta = detail::lasso_cd(fd.train.Z, fd.train.Y.col(j), grid[li], beta, scale);
        const Matrix zc = fd.z_val.rowwise() - fd.train.z_means.transpose();
        const Vector pred = ((zc * beta).array() + fd.train.y_means[j]).matrix();
        mean_mse[static_cast<Index>(li)] +=
            (fd.y_val.col(j) - pred).squaredNorm() / static_cast<double>(fd.y_val.rows());
      }
    }
    Index best = 0;
    for (Index li = 1; li < mean_mse.size(); ++li)
      if (mean_mse[li] < mean_mse[best]) best = li;
    const double lj = grid[static_cast<std::size_t>(best)];
    est.B_hat.col(j) =
        detail::lasso_cd(data.Z, data.Y.col(j), lj, Vector::Zero(p), data.Y.col(j).norm());
    est.hyperparams["lambda_" + std::to_string(j)] = lj;
  }
  return est;
}

/// L1/L2 penalty over the rows of B; one penalty selected by k-fold CV.
inline CoefEstimate group_lasso_fit(const Dataset& data, int folds,
                                    const std::vector<double>& lambdas, Rng rng) {
  if (folds < 2) throw std::invalid_argument("group_lasso_fit: need folds >= 2");
  if (lambdas.empty()) throw std::invalid_argument("group_lasso_fit: empty grid");
  std::vector<double> grid = lambdas;
  std::sort(grid.begin(), grid.end(), std::greater<>());
  const auto fold_data = detail::make_folds(data, folds, rng);
  const Index p = data.Z.cols(), q = data.Y.cols();

  Vector mean_mse = Vector::Zero(static_cast<Index>(grid.size()));
  for (const auto& fd : fold_data) {
    Matrix b = Matrix::Zero(p, q);
    const double scale = fd.train.Y.norm();
    for (std::size_t li = 0; li < grid.size(); ++li) {
      b = detail::group_lasso_cd(fd.train.Z, fd.train.Y, grid[li], b, scale);
      const Matrix zc = fd.z_val.rowwise() - fd.train.z_means.transpose();
      const Matrix pred = (zc * b).rowwise() + fd.train.y_means.transpose();
      mean_mse[static_cast<Index>(li)] +=
          (fd.y_val - pred).squaredNorm() /
          (static_cast<double>(fd.y_val.rows()) * q);
    }
  }
  Index best = 0;
  for (Index li = 1; li < mean_mse.size(); ++li)
    if (mean_mse[li] < mean_mse[best]) best = li;
  const double lambda = grid[static_cast<std::size_t>(best)];
  return {detail::group_lasso_cd(data.Z, data.Y, lambda, Matrix::Zero(p, q), data.Y.norm()),
          "group_lasso",
          {{"lambda", lambda}}};
}

/// MRCE: joint L1 penalties on B and on the off-diagonal of Omega.
struct MrceProblem {
  Dataset data;
  double lambda1;  // L1 on B
  double lambda2;  // L1 on off-diagonal Omega
};

struct MrceFit {
  CoefEstimate coef;
  Matrix omega;
  std::vector<double> objective_trace;
  int iterations = 0;
  bool converged = false;
};

namespace detail {

inline double mrce_objective(const Matrix& z, const Matrix& y, const Matrix& b,
                             const Matrix& omega, double lambda1, double lambda2) {
  const Matrix r = y - z * b;
  const Matrix s = r.transpose() * r / static_cast<double>(y.rows());
  return glasso_objective(s, lambda2, omega) + lambda1 * b.cwiseAbs().sum();
}

/// Elementwise stationarity residual of
/// tr[(1/n)(Y-ZB)^T Omega (Y-ZB)] + lambda1 |B|_1.
inline double mrce_b_kkt_violation(const Matrix& z, const Matrix& y, const Matrix& omega,
                                   double lambda1, const Matrix& b) {
  const Matrix grad = 2.0 / static_cast<double>(y.rows()) * z.transpose() * (z * b - y) * omega;
  double v = 0.0;
  for (Index i = 0; i < b.rows(); ++i)
    for (Index c = 0; c < b.cols(); ++c) {
      if (b(i, c) == 0.0)
        v = std::max(v, std::abs(grad(i, c)) - lambda1);
      else
        v = std::max(v, std::abs(grad(i, c) + lambda1 * (b(i, c) > 0 ? 1.0 : -1.0)));
    }
  return v;
}

/// Coordinate descent for tr[(1/n)(Y-ZB)^T Omega (Y-ZB)] + lambda1 |B|_1
/// with Omega fixed, exact-KKT stopping.
inline Matrix mrce_b_step(const Matrix& z, const Matrix& y, const Matrix& omega, double lambda1,
                          Matrix b, int max_sweeps = 20000) {
  const Index n = y.rows(), p = z.cols(), q = y.cols();
  const Vector col_sq = z.colwise().squaredNorm();
  Matrix r = y - z * b;
  const double stall = 1e-14 * std::max(1.0, y.norm());
  const double kkt_tol =
      kCdKktTol *
      std::max(1.0, (2.0 / n * z.transpose() * y * omega).cwiseAbs().maxCoeff());
  for (int sweep = 1; sweep <= max_sweeps; ++sweep) {
    double max_change = 0.0;
    for (Index i = 0; i < p; ++i) {
      if (col_sq[i] == 0.0) continue;
      Vector v = r.transpose() * z.col(i);  // updated in place as row i changes
      Eigen::RowVectorXd delta_row = Eigen::RowVectorXd::Zero(q);
      for (Index c = 0; c < q; ++c) {
        const double a = 2.0 / n * col_sq[i] * omega(c, c);
        const double grad_term = omega.row(c).dot(v);
        const double target = b(i, c) + 2.0 / n * grad_term / a;
        const double bnew = soft_threshold(target, lambda1 / a);
        const double delta = bnew - b(i, c);
        if (delta != 0.0) {
          b(i, c) = bnew;
          v[c] -= col_sq[i] * delta;
          delta_row[c] += delta;
          max_change = std::max(max_change, std::abs(delta) * std::sqrt(col_sq[i]));
        }
      }
      if (delta_row.cwiseAbs().maxCoeff() > 0.0) r -= z.col(i) * delta_row;
    }
    if (max_change <= stall) break;
    if (sweep % 10 == 0 && mrce_b_kkt_violation(z, y, omega, lambda1, b) <= kkt_tol) break;
  }
  return b;
}

}  // namespace detail

inline MrceFit mrce_fit(const MrceProblem& problem, double tol = 1e-6, int max_iter = 50) {
  if (problem.lambda1 < 0.0 || problem.lambda2 < 0.0)
    throw std::invalid_argument("mrce_fit: penalties must be nonnegative");
  const Matrix& z = problem.data.Z;
  const Matrix& y = problem.data.Y;
  const Index n = y.rows(), p = z.cols(), q = y.cols();

  Matrix b = Matrix::Zero(p, q);
  Matrix omega = Matrix::Identity(q, q);
  MrceFit out;
  out.objective_trace.push_back(
      detail::mrce_objective(z, y, b, omega, problem.lambda1, problem.lambda2));
  for (int it = 1; it <= max_iter; ++it) {
    b = detail::mrce_b_step(z, y, omega, problem.lambda1, b);
    const Matrix r = y - z * b;
    const Matrix s = (r.transpose() * r / static_cast<double>(n)).eval();
    detail::GlassoState state;
    state.w = omega.inverse();  // warm start near the previous solution
    state.beta = Matrix::Zero(q, q);
    Matrix omega_new = detail::glasso_fit_impl(s, problem.lambda2, 1e-6, 500, &state).omega;
    if (glasso_objective(s, problem.lambda2, omega_new) > glasso_objective(s, problem.lambda2, omega))
      omega_new = omega;
    omega = omega_new;
    const double obj = detail::mrce_objective(z, y, b, omega, problem.lambda1, problem.lambda2);
    const double prev = out.objective_trace.back();
    out.objective_trace.push_back(obj);
    out.iterations = it;
    if (std::abs(prev - obj) <= tol * std::max(1.0, std::abs(prev))) {
      out.converged = true;
      break;
    }
  }
  out.coef.B_hat = b;
  out.coef.method = "mrce";
  out.coef.hyperparams = {{"lambda1", problem.lambda1},
                          {"lambda2", problem.lambda2},
                          {"iterations", static_cast<double>(out.iterations)},
                          {"converged", out.converged ? 1.0 : 0.0}};
  out.omega = omega;
  return out;
}

/// CV selection for MRCE over a (lambda1, lambda2) grid, validation MSE.
inline MrceFit mrce_select(const Dataset& data, const std::vector<double>& l1_grid,
                           const std::vector<double>& l2_grid, int folds, Rng rng,
                           double tol = 1e-6, int max_iter = 50) {
  if (l1_grid.empty() || l2_grid.empty()) throw std::invalid_argument("mrce_select: empty grid");
  std::vector<double> g1 = l1_grid, g2 = l2_grid;
  std::sort(g1.begin(), g1.end(), std::greater<>());
  std::sort(g2.begin(), g2.end(), std::greater<>());
  const auto fold_data = detail::make_folds(data, folds, rng);

  double best = std::numeric_limits<double>::infinity();
  double best_l1 = g1.front(), best_l2 = g2.front();
  for (double l1 : g1)
    for (double l2 : g2) {
      double mse = 0.0;
      bool ok = true;
      for (const auto& fd : fold_data) {
        try {
          const MrceFit f = mrce_fit({fd.train, l1, l2}, tol, max_iter);
          const Matrix zc = fd.z_val.rowwise() - fd.train.z_means.transpose();
          const Matrix pred = (zc * f.coef.B_hat).rowwise() + fd.train.y_means.transpose();
          mse += (fd.y_val - pred).squaredNorm() /
                 (static_cast<double>(fd.y_val.rows()) * fd.y_val.cols());
        } catch (const SolverError&) {
          ok = false;
          break;
        }
      }
      if (ok && mse < best) {
        best = mse;
        best_l1 = l1;
        best_l2 = l2;
      }
    }
  return mrce_fit({data, best_l1, best_l2}, tol, max_iter);
}

}  // namespace mrrce
