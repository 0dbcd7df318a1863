#pragma once

#include "mrrce/numerics.hpp"

#include <numeric>
#include <set>
#include <variant>
#include <vector>

namespace mrrce {

/// Per-replication metric values for one method, with summary statistics.
struct MetricReport {
  std::string method;
  std::vector<double> values;
  double mean = 0.0;
  double std_dev = 0.0;

  static MetricReport from_values(std::string method, std::vector<double> values) {
    MetricReport r;
    r.method = std::move(method);
    r.values = std::move(values);
    const double n = static_cast<double>(r.values.size());
    r.mean = std::accumulate(r.values.begin(), r.values.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : r.values) ss += (v - r.mean) * (v - r.mean);
    r.std_dev = r.values.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
    return r;
  }
};

/// Model error tr[(G - Ghat)^T Sigma_Z (G - Ghat)].
inline double model_error(const Matrix& gamma_true, const Matrix& gamma_hat,
                          const Matrix& sigma_z) {
  if (gamma_true.rows() != gamma_hat.rows() || gamma_true.cols() != gamma_hat.cols() ||
      sigma_z.rows() != gamma_true.rows() || sigma_z.rows() != sigma_z.cols())
    throw std::invalid_argument("model_error: dimension mismatch");
  const Matrix d = gamma_true - gamma_hat;
  return (d.transpose() * sigma_z * d).trace();
}

/// Forecast MSE normalized by n_test * q.
inline double forecast_mse(const Matrix& y_true, const Matrix& y_pred) {
  if (y_true.rows() != y_pred.rows() || y_true.cols() != y_pred.cols())
    throw std::invalid_argument("forecast_mse: shape mismatch");
  return (y_true - y_pred).squaredNorm() /
         (static_cast<double>(y_true.rows()) * y_true.cols());
}

namespace detail {

/// Regularized incomplete beta I_x(a, b) via the continued fraction
/// (Lentz's method), absolute error below 1e-10 over the needed range.
inline double betacf(double a, double b, double x) {
  constexpr int kMaxIter = 300;
  constexpr double kEps = 1e-15, kFpMin = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0, d = 1.0 - qab * x / qap;
  if (std::abs(d) < kFpMin) d = kFpMin;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::abs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::abs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) break;
  }
  return h;
}

inline double reg_incomplete_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                          a * std::log(x) + b * std::log(1.0 - x);
  const double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * betacf(a, b, x) / a;
  return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

}  // namespace detail

struct TTestResult {
  double t;
  double p_two_sided;
};

/// Paired t-test on differences a - b. Degenerate conventions: all-zero
/// differences give t = 0, p = 1; zero spread with nonzero mean gives p = 0.
inline TTestResult paired_t_test(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("paired_t_test: length mismatch");
  if (a.size() < 2) throw std::invalid_argument("paired_t_test: need at least 2 pairs");
  const double n = static_cast<double>(a.size());
  double mean = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) mean += a[i] - b[i];
  mean /= n;
  double ss = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i] - mean;
    ss += d * d;
  }
  const double sd = std::sqrt(ss / (n - 1.0));
  if (sd == 0.0) {
    if (mean == 0.0) return {0.0, 1.0};
    return {mean > 0 ? std::numeric_limits<double>::infinity()
                     : -std::numeric_limits<double>::infinity(),
            0.0};
  }
  const double t = mean / (sd / std::sqrt(n));
  const double nu = n - 1.0;
  const double p = detail::reg_incomplete_beta(nu / 2.0, 0.5, nu / (nu + t * t));
  return {t, p};
}

/// Random k-fold partition; fold sizes differ by at most one.
inline std::vector<int> kfold_split(Index n, int k, Rng rng) {
  if (k < 2 || k > n) throw std::invalid_argument("kfold_split: need 2 <= k <= n");
  std::vector<Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Index{0});
  for (Index i = n - 1; i > 0; --i) {
    const Index j = static_cast<Index>(rng.next_u64() % static_cast<std::uint64_t>(i + 1));
    std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
  }
  std::vector<int> fold(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i)
    fold[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])] =
        static_cast<int>(i % k);
  return fold;
}

inline std::vector<int> loo_split(Index n) {
  std::vector<int> fold(static_cast<std::size_t>(n));
  std::iota(fold.begin(), fold.end(), 0);
  return fold;
}

/// Expanding-window forecast evaluation plan: cutoff k trains on the first
/// initial_train + k * step points and tests on the next horizon points.
struct RollingOriginPlan {
  Index initial_train;
  Index step;
  Index horizon;
  Index num_cutoffs;
};

struct SplitIndices {
  std::vector<Index> train;
  std::vector<Index> test;
};

inline std::vector<SplitIndices> rolling_origin(const RollingOriginPlan& plan, Index n) {
  if (plan.initial_train < 1 || plan.horizon < 1 || plan.num_cutoffs < 1 || plan.step < 0)
    throw std::invalid_argument("rolling_origin: invalid plan");
  const Index last_end = plan.initial_train + (plan.num_cutoffs - 1) * plan.step + plan.horizon;
  if (last_end > n)
    throw std::invalid_argument("rolling_origin: plan overflows series length (needs " +
                                std::to_string(last_end) + ", have " + std::to_string(n) + ")");
  std::vector<SplitIndices> out;
  out.reserve(static_cast<std::size_t>(plan.num_cutoffs));
  for (Index k = 0; k < plan.num_cutoffs; ++k) {
    SplitIndices s;
    const Index train_end = plan.initial_train + k * plan.step;
    s.train.resize(static_cast<std::size_t>(train_end));
    std::iota(s.train.begin(), s.train.end(), Index{0});
    s.test.resize(static_cast<std::size_t>(plan.horizon));
    std::iota(s.test.begin(), s.test.end(), train_end);
    out.push_back(std::move(s));
  }
  return out;
}

// --- feature builders ---

struct FourierSpec {
  double period;
  int order;
};
struct HolidaySpec {
  std::set<long> times;
};
struct PiecewiseTrendSpec {
  std::vector<double> changepoints;
};
struct OneHotSpec {
  std::vector<long> categories;  // aligned with the full time axis
};

using FeatureSpec = std::variant<FourierSpec, HolidaySpec, PiecewiseTrendSpec, OneHotSpec>;
using FeatureRecipe = std::vector<FeatureSpec>;

inline Index feature_count(const FeatureRecipe& recipe) {
  Index cols = 0;
  for (const auto& spec : recipe) {
    if (const auto* f = std::get_if<FourierSpec>(&spec)) {
      cols += 2 * f->order;
    } else if (std::get_if<HolidaySpec>(&spec)) {
      cols += 1;
    } else if (const auto* tr = std::get_if<PiecewiseTrendSpec>(&spec)) {
      cols += 1 + static_cast<Index>(tr->changepoints.size());
    } else if (const auto* oh = std::get_if<OneHotSpec>(&spec)) {
      std::set<long> levels(oh->categories.begin(), oh->categories.end());
      cols += static_cast<Index>(levels.size()) - 1;
    }
  }
  return cols;
}

/// Feature matrix for the given time indices; column blocks follow recipe
/// order. Fourier emits cos/sin pairs for n = 1..order, holiday an indicator,
/// trend t plus hinge terms max(0, t - c), one-hot drops the smallest level.
inline Matrix build_features(const FeatureRecipe& recipe, const std::vector<double>& t) {
  const Index n = static_cast<Index>(t.size());
  Matrix z(n, feature_count(recipe));
  Index col = 0;
  for (const auto& spec : recipe) {
    if (const auto* f = std::get_if<FourierSpec>(&spec)) {
      if (!(f->period > 0.0)) throw std::invalid_argument("build_features: period must be > 0");
      for (int k = 1; k <= f->order; ++k) {
        for (Index i = 0; i < n; ++i) {
          const double angle = 2.0 * M_PI * k * t[static_cast<std::size_t>(i)] / f->period;
          z(i, col) = std::cos(angle);
          z(i, col + 1) = std::sin(angle);
        }
        col += 2;
      }
    } else if (const auto* h = std::get_if<HolidaySpec>(&spec)) {
      for (Index i = 0; i < n; ++i)
        z(i, col) = h->times.count(static_cast<long>(t[static_cast<std::size_t>(i)])) ? 1.0 : 0.0;
      ++col;
    } else if (const auto* tr = std::get_if<PiecewiseTrendSpec>(&spec)) {
      for (Index i = 0; i < n; ++i) z(i, col) = t[static_cast<std::size_t>(i)];
      ++col;
      for (double c : tr->changepoints) {
        for (Index i = 0; i < n; ++i)
          z(i, col) = std::max(0.0, t[static_cast<std::size_t>(i)] - c);
        ++col;
      }
    } else if (const auto* oh = std::get_if<OneHotSpec>(&spec)) {
      std::set<long> levels(oh->categories.begin(), oh->categories.end());
      bool first = true;
      for (long level : levels) {
        if (first) {  // reference level dropped
          first = false;
          continue;
        }
        for (Index i = 0; i < n; ++i) {
          const auto ti = static_cast<std::size_t>(t[static_cast<std::size_t>(i)]);
          if (ti >= oh->categories.size())
            throw std::invalid_argument("build_features: one_hot index out of range");
          z(i, col) = oh->categories[ti] == level ? 1.0 : 0.0;
        }
        ++col;
      }
    }
  }
  return z;
}

/// Scale each response column by its maximum; maxima are retained so
/// predictions can be mapped back.
inline std::pair<Matrix, Vector> scale_responses(const Matrix& y) {
  Vector maxima = y.colwise().maxCoeff();
  for (Index j = 0; j < maxima.size(); ++j)
    if (!(maxima[j] > 0.0))
      throw std::invalid_argument("scale_responses: column " + std::to_string(j) +
                                  " has nonpositive maximum");
  Matrix scaled = y * maxima.cwiseInverse().asDiagonal();
  return {scaled, maxima};
}

}  // namespace mrrce
