#pragma once

#include "mrrce/numerics.hpp"

#include <vector>

namespace mrrce {

/// L1-penalized precision estimation: minimize over Omega > 0
///   tr(S Omega) - log|Omega| + lambda * sum_{j != k} |omega_jk|.
struct GlassoProblem {
  Matrix S;       // symmetric PSD sample covariance
  double lambda;  // nonnegative off-diagonal penalty
};

struct GlassoSolution {
  Matrix omega;  // symmetric positive definite
  Matrix sigma;  // its inverse
  int iterations;
  double max_kkt_violation;
};

inline double glasso_objective(const Matrix& s, double lambda, const Matrix& omega) {
  Eigen::LLT<Matrix> llt(omega);
  if (llt.info() != Eigen::Success) return std::numeric_limits<double>::infinity();
  double logdet = 0.0;
  for (Index i = 0; i < omega.rows(); ++i) logdet += 2.0 * std::log(llt.matrixL()(i, i));
  double pen = 0.0;
  for (Index i = 0; i < omega.rows(); ++i)
    for (Index j = 0; j < omega.cols(); ++j)
      if (i != j) pen += std::abs(omega(i, j));
  return (s * omega).trace() - logdet + lambda * pen;
}

namespace detail {

/// Stationarity residual of the penalized objective at (omega, sigma = omega^-1):
/// sigma_jj = s_jj; |sigma_jk - s_jk| <= lambda where omega_jk = 0; and
/// sigma_jk - s_jk = lambda * sign(omega_jk) at nonzeros.
inline double glasso_kkt_violation(const Matrix& s, double lambda, const Matrix& omega,
                                   const Matrix& sigma) {
  double viol = 0.0;
  const Index q = s.rows();
  for (Index j = 0; j < q; ++j) {
    viol = std::max(viol, std::abs(sigma(j, j) - s(j, j)));
    for (Index k = 0; k < q; ++k) {
      if (j == k) continue;
      const double diff = sigma(j, k) - s(j, k);
      if (omega(j, k) == 0.0)
        viol = std::max(viol, std::abs(diff) - lambda);
      else
        viol = std::max(viol, std::abs(diff - lambda * (omega(j, k) > 0 ? 1.0 : -1.0)));
    }
  }
  return viol;
}

inline double soft_threshold(double x, double t) {
  if (x > t) return x - t;
  if (x < -t) return x + t;
  return 0.0;
}

/// Rebuild Omega from the working covariance W and the per-column lasso
/// coefficients, then invert. Returns false if W is not usable yet.
inline bool glasso_recover(const Matrix& w, const Matrix& beta, Matrix* omega, Matrix* sigma) {
  const Index q = w.rows();
  Matrix om(q, q);
  for (Index j = 0; j < q; ++j) {
    double dot = 0.0;
    for (Index i = 0; i < q; ++i)
      if (i != j) dot += w(i, j) * beta(i, j);
    const double denom = w(j, j) - dot;
    if (!(denom > 0.0)) return false;
    om(j, j) = 1.0 / denom;
    for (Index i = 0; i < q; ++i)
      if (i != j) om(i, j) = -beta(i, j) * om(j, j);
  }
  om = ((om + om.transpose()) * 0.5).eval();
  Eigen::LLT<Matrix> llt(om);
  if (llt.info() != Eigen::Success) return false;
  *omega = om;
  *sigma = llt.solve(Matrix::Identity(q, q));
  return true;
}

struct GlassoState {
  Matrix w;     // working covariance estimate
  Matrix beta;  // column j holds the lasso coefficients for column j
};

inline GlassoSolution glasso_fit_impl(const Matrix& s, double lambda, double tol, int max_iter,
                                      GlassoState* state) {
  check_symmetric(s, "glasso_fit");
  if (lambda < 0.0) throw std::invalid_argument("glasso_fit: lambda must be nonnegative");
  const Index q = s.rows();

  if (q == 1) {
    if (!(s(0, 0) > 0.0)) throw SolverError("glasso_fit: singular 1x1 input");
    GlassoSolution sol;
    sol.omega = Matrix::Constant(1, 1, 1.0 / s(0, 0));
    sol.sigma = s;
    sol.iterations = 0;
    sol.max_kkt_violation = 0.0;
    return sol;
  }
  for (Index j = 0; j < q; ++j)
    if (!(s(j, j) > 0.0)) throw SolverError("glasso_fit: nonpositive diagonal in S");

  if (lambda == 0.0) {
    Eigen::LLT<Matrix> llt(s);
    if (llt.info() != Eigen::Success)
      throw SolverError("glasso_fit: lambda=0 requires positive definite S (condition estimate " +
                        std::to_string(condition_estimate(s)) + ")");
    GlassoSolution sol;
    sol.sigma = s;
    sol.omega = llt.solve(Matrix::Identity(q, q));
    sol.omega = ((sol.omega + sol.omega.transpose()) * 0.5).eval();
    sol.iterations = 0;
    sol.max_kkt_violation = glasso_kkt_violation(s, lambda, sol.omega, sol.sigma);
    return sol;
  }

  Matrix& w = state->w;
  Matrix& beta = state->beta;
  if (w.rows() != q) {  // cold start
    w = s;
    beta = Matrix::Zero(q, q);
  }
  w.diagonal() = s.diagonal();  // diagonal is never penalized

  const double inner_tol = 1e-4 * tol * std::max(1.0, max_abs(s));
  double viol = std::numeric_limits<double>::infinity();
  Matrix omega, sigma;

  for (int iter = 1; iter <= max_iter; ++iter) {
    for (Index j = 0; j < q; ++j) {
      // Lasso subproblem for column j: min 0.5 b^T W11 b - s12^T b + lambda |b|_1.
      for (int sweep = 0; sweep < 1000; ++sweep) {
        double max_delta = 0.0;
        for (Index k = 0; k < q; ++k) {
          if (k == j) continue;
          double grad = s(k, j);
          for (Index l = 0; l < q; ++l)
            if (l != j && l != k) grad -= w(k, l) * beta(l, j);
          const double bnew = soft_threshold(grad, lambda) / w(k, k);
          max_delta = std::max(max_delta, std::abs(bnew - beta(k, j)));
          beta(k, j) = bnew;
        }
        if (max_delta <= inner_tol) break;
      }
      for (Index k = 0; k < q; ++k) {
        if (k == j) continue;
        double wkj = 0.0;
        for (Index l = 0; l < q; ++l)
          if (l != j) wkj += w(k, l) * beta(l, j);
        w(k, j) = wkj;
        w(j, k) = wkj;
      }
    }
    if (glasso_recover(w, beta, &omega, &sigma)) {
      viol = glasso_kkt_violation(s, lambda, omega, sigma);
      if (viol <= tol) {
        GlassoSolution sol;
        sol.omega = omega;
        sol.sigma = sigma;
        sol.iterations = iter;
        sol.max_kkt_violation = viol;
        return sol;
      }
    }
  }
  throw SolverError("glasso_fit: no convergence after " + std::to_string(max_iter) +
                    " sweeps (max KKT violation " + std::to_string(viol) + ")");
}

}  // namespace detail

inline GlassoSolution glasso_fit(const GlassoProblem& problem, double tol = 1e-6,
                                 int max_iter = 500) {
  detail::GlassoState state;
  return detail::glasso_fit_impl(problem.S, problem.lambda, tol, max_iter, &state);
}

/// Warm-started solution path over a strictly descending penalty sequence.
inline std::vector<GlassoSolution> glasso_path(const Matrix& s, const std::vector<double>& lambdas,
                                               double tol = 1e-6, int max_iter = 500) {
  if (lambdas.empty()) throw std::invalid_argument("glasso_path: empty lambda list");
  for (std::size_t i = 1; i < lambdas.size(); ++i)
    if (!(lambdas[i] < lambdas[i - 1]))
      throw std::invalid_argument("glasso_path: lambdas must be strictly descending");
  std::vector<GlassoSolution> out;
  out.reserve(lambdas.size());
  detail::GlassoState state;
  for (double lambda : lambdas)
    out.push_back(detail::glasso_fit_impl(s, lambda, tol, max_iter, &state));
  return out;
}

}  // namespace mrrce
