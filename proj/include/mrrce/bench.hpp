#pragma once

#include "mrrce/baselines.hpp"
#include "mrrce/em.hpp"
#include "mrrce/io.hpp"
#include "mrrce/simgen.hpp"

#include <atomic>
#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <thread>

namespace mrrce {

enum class Method {
  Ols = 0,
  Ridge = 1,
  RidgeSeparate = 2,
  LassoSeparate = 3,
  GroupLasso = 4,
  Mrce = 5,
  Mrrce = 6,
};

inline const char* method_name(Method m) {
  switch (m) {
    case Method::Ols: return "ols";
    case Method::Ridge: return "ridge";
    case Method::RidgeSeparate: return "ridge_separate";
    case Method::LassoSeparate: return "lasso_separate";
    case Method::GroupLasso: return "group_lasso";
    case Method::Mrce: return "mrce";
    case Method::Mrrce: return "mrrce";
  }
  return "unknown";
}

inline Method method_from_name(const std::string& name) {
  for (Method m : {Method::Ols, Method::Ridge, Method::RidgeSeparate, Method::LassoSeparate,
                   Method::GroupLasso, Method::Mrce, Method::Mrrce})
    if (name == method_name(m)) return m;
  throw SchemaError("unknown method '" + name + "'");
}

/// Per-method hyperparameter settings; grids default to log-spaced points
/// from the method's null-model threshold down to grid_ratio times it.
struct MethodSettings {
  int grid_size = 20;
  double grid_ratio = 1e-3;
  int cv_folds = 0;  // 0 = per-method default (3, except MRCE's 5)
  std::vector<double> lambda_grid;    // explicit override for 1-D grids
  std::vector<double> lambda1_grid;   // MRCE overrides
  std::vector<double> lambda2_grid;
  int mrce_grid_size = 20;
  double mrce_tol = 1e-6;
  int mrce_max_iter = 50;
  std::optional<double> lambda_omega;  // fixed penalty disables MrRCE CV
  FitConfig em;
};

inline MethodSettings parse_method_settings(const Json& j, const std::string& context) {
  io::check_keys(j,
                 {"grid_size", "grid_ratio", "cv_folds", "lambda_grid", "lambda1_grid",
                  "lambda2_grid", "mrce_grid_size", "mrce_tol", "mrce_max_iter", "lambda_omega",
                  "tol", "max_iter", "stopping_rule"},
                 context);
  MethodSettings ms;
  ms.grid_size = io::get_or<int>(j, "grid_size", ms.grid_size, context);
  ms.grid_ratio = io::get_or<double>(j, "grid_ratio", ms.grid_ratio, context);
  ms.cv_folds = io::get_or<int>(j, "cv_folds", ms.cv_folds, context);
  ms.lambda_grid = io::get_or<std::vector<double>>(j, "lambda_grid", {}, context);
  ms.lambda1_grid = io::get_or<std::vector<double>>(j, "lambda1_grid", {}, context);
  ms.lambda2_grid = io::get_or<std::vector<double>>(j, "lambda2_grid", {}, context);
  ms.mrce_grid_size = io::get_or<int>(j, "mrce_grid_size", ms.mrce_grid_size, context);
  ms.mrce_tol = io::get_or<double>(j, "mrce_tol", ms.mrce_tol, context);
  ms.mrce_max_iter = io::get_or<int>(j, "mrce_max_iter", ms.mrce_max_iter, context);
  if (j.contains("lambda_omega")) ms.lambda_omega = io::get_required<double>(j, "lambda_omega", context);
  ms.em.tol = io::get_or<double>(j, "tol", ms.em.tol, context);
  ms.em.max_iter = io::get_or<int>(j, "max_iter", ms.em.max_iter, context);
  const std::string rule = io::get_or<std::string>(j, "stopping_rule", "loglik-relative", context);
  if (rule == "loglik-relative")
    ms.em.stopping_rule = StoppingRule::LoglikRelative;
  else if (rule == "parameter-change")
    ms.em.stopping_rule = StoppingRule::ParameterChange;
  else
    throw SchemaError(context + ": stopping_rule must be 'loglik-relative' or 'parameter-change'");
  return ms;
}

namespace detail {

inline std::vector<double> log_grid(double hi, double lo, int count) {
  if (count < 1) throw std::invalid_argument("log_grid: count must be >= 1");
  std::vector<double> g;
  if (count == 1 || hi <= lo) {
    g.push_back(hi);
    return g;
  }
  const double step = std::log(lo / hi) / (count - 1);
  for (int i = 0; i < count; ++i) g.push_back(hi * std::exp(step * i));
  return g;
}

inline double max_offdiag_abs(const Matrix& m) {
  double v = 0.0;
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j)
      if (i != j) v = std::max(v, std::abs(m(i, j)));
  return v;
}

}  // namespace detail

/// One fitted estimator: the coefficient matrix plus a JSON detail record
/// (selected hyperparameters, EM state) for reports.
struct MethodFit {
  Matrix B;
  std::string method;
  Json details;
};

/// Dispatch a roster method on centered data. The rng seeds any CV fold
/// assignment the method needs.
inline MethodFit fit_method(Method method, const Dataset& data, const MethodSettings& ms,
                            Rng rng) {
  MethodFit out;
  out.method = method_name(method);
  const int folds3 = ms.cv_folds > 0 ? ms.cv_folds : 3;
  switch (method) {
    case Method::Ols: {
      out.B = ols_fit(data).B_hat;
      return out;
    }
    case Method::Ridge:
    case Method::RidgeSeparate: {
      std::vector<double> grid = ms.lambda_grid;
      if (grid.empty()) {
        const double hi = (data.Z.transpose() * data.Z).trace();
        grid = detail::log_grid(std::max(hi, 1e-12), std::max(hi, 1e-12) * 1e-6, ms.grid_size);
      }
      const CoefEstimate est =
          method == Method::Ridge ? ridge_fit_shared(data, grid) : ridge_fit_separate(data, grid);
      out.B = est.B_hat;
      for (const auto& [k, v] : est.hyperparams) out.details[k] = v;
      return out;
    }
    case Method::LassoSeparate: {
      std::vector<double> grid = ms.lambda_grid;
      if (grid.empty()) {
        const double hi = (data.Z.transpose() * data.Y).cwiseAbs().maxCoeff();
        grid = detail::log_grid(std::max(hi, 1e-12), std::max(hi, 1e-12) * ms.grid_ratio,
                                ms.grid_size);
      }
      const CoefEstimate est = lasso_fit_separate(data, folds3, grid, rng);
      out.B = est.B_hat;
      for (const auto& [k, v] : est.hyperparams) out.details[k] = v;
      return out;
    }
    case Method::GroupLasso: {
      std::vector<double> grid = ms.lambda_grid;
      if (grid.empty()) {
        const double hi = (data.Z.transpose() * data.Y).rowwise().norm().maxCoeff();
        grid = detail::log_grid(std::max(hi, 1e-12), std::max(hi, 1e-12) * ms.grid_ratio,
                                ms.grid_size);
      }
      const CoefEstimate est = group_lasso_fit(data, folds3, grid, rng);
      out.B = est.B_hat;
      for (const auto& [k, v] : est.hyperparams) out.details[k] = v;
      return out;
    }
    case Method::Mrce: {
      const double n = static_cast<double>(data.Y.rows());
      std::vector<double> g1 = ms.lambda1_grid, g2 = ms.lambda2_grid;
      if (g1.empty()) {
        const double hi = 2.0 / n * (data.Z.transpose() * data.Y).cwiseAbs().maxCoeff();
        g1 = detail::log_grid(std::max(hi, 1e-12), std::max(hi, 1e-12) * ms.grid_ratio,
                              ms.mrce_grid_size);
      }
      if (g2.empty()) {
        const double hi =
            detail::max_offdiag_abs((data.Y.transpose() * data.Y / n).eval());
        g2 = detail::log_grid(std::max(hi, 1e-12), std::max(hi, 1e-12) * ms.grid_ratio,
                              ms.mrce_grid_size);
      }
      const int folds = ms.cv_folds > 0 ? ms.cv_folds : 5;
      const MrceFit f = mrce_select(data, g1, g2, folds, rng, ms.mrce_tol, ms.mrce_max_iter);
      out.B = f.coef.B_hat;
      for (const auto& [k, v] : f.coef.hyperparams) out.details[k] = v;
      return out;
    }
    case Method::Mrrce: {
      FitConfig cfg = ms.em;
      double lambda;
      if (ms.lambda_omega.has_value()) {
        lambda = *ms.lambda_omega;
      } else {
        std::vector<double> grid = ms.lambda_grid;
        if (grid.empty()) {
          // Null threshold: largest off-diagonal of Q1/n at the initial Theta,
          // where the glasso solution is exactly diagonal.
          const TransformedProblem tp = to_transformed(data);
          const ParameterSet theta0(SpdMatrix::identity(data.Y.cols()), 1.0, 0.0);
          const Matrix s0 = e_step(tp, theta0).Q1 / static_cast<double>(data.Y.rows());
          const double hi = detail::max_offdiag_abs(s0);
          grid = detail::log_grid(std::max(hi, 1e-12), std::max(hi, 1e-12) * ms.grid_ratio,
                                  ms.grid_size);
        }
        const auto [best, table] = select_lambda(data, grid, folds3, cfg, rng);
        lambda = best;
      }
      cfg.lambda_omega = lambda;
      const FitResult r = fit(data, cfg);
      out.B = r.gamma_star;
      out.details["lambda_omega"] = lambda;
      out.details["sigma2"] = r.sigma2;
      out.details["rho"] = r.rho;
      out.details["iterations"] = r.iterations;
      out.details["converged"] = r.converged;
      out.details["omega_original"] = io::matrix_to_json(r.omega_original);
      out.details["omega_transformed"] = io::matrix_to_json(r.omega_transformed);
      return out;
    }
  }
  throw std::logic_error("fit_method: unhandled method");
}

namespace detail {

inline void parallel_for(int jobs, std::size_t count, const std::function<void(std::size_t)>& fn) {
  if (jobs <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  const int workers = std::min<std::size_t>(static_cast<std::size_t>(jobs), count);
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) fn(i);
    });
  for (auto& th : pool) th.join();
}

}  // namespace detail

// ---------- simulation benchmark (the scaled replication protocol) ----------

struct SimBenchConfig {
  SimConfig base;                 // rho is overridden per setting
  std::vector<double> rho_grid;
  int replications = 0;
  std::uint64_t seed = 0;
  std::vector<Method> roster;
  std::map<Method, MethodSettings> settings;
  Json echo;                  // config as given, hashed into reports
};

struct BenchCell {
  double value = std::numeric_limits<double>::quiet_NaN();
  bool failed = false;
  std::string error;
  double seconds = 0.0;
};

struct BenchmarkReport {
  std::vector<double> setting_values;          // rho per setting (sim bench)
  std::vector<Method> roster;
  // cells[setting][method_idx][rep]
  std::vector<std::vector<std::vector<BenchCell>>> cells;
  std::string config_hash;

  MetricReport metric(std::size_t setting, std::size_t method_idx) const {
    std::vector<double> vals;
    for (const BenchCell& c : cells[setting][method_idx])
      if (!c.failed) vals.push_back(c.value);
    return MetricReport::from_values(method_name(roster[method_idx]), std::move(vals));
  }

  /// Paired t-test of method vs MrRCE over replications where both succeeded.
  TTestResult p_vs_mrrce(std::size_t setting, std::size_t method_idx) const {
    std::size_t mr = roster.size();
    for (std::size_t i = 0; i < roster.size(); ++i)
      if (roster[i] == Method::Mrrce) mr = i;
    if (mr >= roster.size() || mr == method_idx) return {0.0, 1.0};
    std::vector<double> a, b;
    for (std::size_t r = 0; r < cells[setting][method_idx].size(); ++r) {
      const BenchCell& cm = cells[setting][method_idx][r];
      const BenchCell& cr = cells[setting][mr][r];
      if (!cm.failed && !cr.failed) {
        a.push_back(cm.value);
        b.push_back(cr.value);
      }
    }
    return paired_t_test(a, b);
  }
};

inline MethodSettings settings_for(const std::map<Method, MethodSettings>& settings, Method m) {
  const auto it = settings.find(m);
  return it == settings.end() ? MethodSettings{} : it->second;
}

inline BenchmarkReport run_bench_sim(const SimBenchConfig& config, int jobs) {
  if (config.replications < 1) throw SchemaError("bench-sim: replications must be >= 1");
  if (config.rho_grid.empty()) throw SchemaError("bench-sim: rho_grid must be nonempty");
  if (config.roster.empty()) throw SchemaError("bench-sim: roster must be nonempty");

  BenchmarkReport report;
  report.setting_values = config.rho_grid;
  report.roster = config.roster;
  report.config_hash = io::config_hash(config.echo);
  report.cells.assign(config.rho_grid.size(),
                      std::vector<std::vector<BenchCell>>(
                          config.roster.size(),
                          std::vector<BenchCell>(static_cast<std::size_t>(config.replications))));

  const Rng root(config.seed);
  const std::size_t n_cells = config.rho_grid.size() * static_cast<std::size_t>(config.replications);
  detail::parallel_for(jobs, n_cells, [&](std::size_t cell) {
    const std::size_t si = cell / static_cast<std::size_t>(config.replications);
    const std::size_t r = cell % static_cast<std::size_t>(config.replications);
    Rng cell_rng = root.child(si).child(r);

    SimConfig sc = config.base;
    sc.rho = config.rho_grid[si];
    const SimInstance inst = simulate(sc, cell_rng);
    const Dataset data = center_columns(inst.data.Z, inst.data.Y);

    for (std::size_t mi = 0; mi < config.roster.size(); ++mi) {
      const Method m = config.roster[mi];
      BenchCell& out = report.cells[si][mi][r];
      const auto t0 = std::chrono::steady_clock::now();
      try {
        const MethodFit f =
            fit_method(m, data, settings_for(config.settings, m),
                       cell_rng.child(100 + static_cast<std::uint64_t>(m)));
        out.value = model_error(inst.gamma_true, f.B, inst.sigma_z);
      } catch (const std::exception& e) {
        out.failed = true;
        out.error = e.what();
      }
      out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
  });
  return report;
}

// ---------- rolling-origin time-series benchmark ----------

struct TsBenchConfig {
  Matrix z_full;   // features for the whole history
  Matrix y_full;   // responses (already scaled if requested)
  RollingOriginPlan plan;
  std::vector<Method> roster;
  std::map<Method, MethodSettings> settings;
  std::uint64_t seed = 0;
  Json echo;
};

inline BenchmarkReport run_bench_ts(const TsBenchConfig& config, int jobs) {
  if (config.roster.empty()) throw SchemaError("bench-ts: roster must be nonempty");
  const auto windows = rolling_origin(config.plan, config.y_full.rows());

  BenchmarkReport report;
  report.roster = config.roster;
  report.config_hash = io::config_hash(config.echo);
  report.setting_values = {0.0};  // single setting; cutoffs play the replication role
  report.cells.assign(
      1, std::vector<std::vector<BenchCell>>(config.roster.size(),
                                             std::vector<BenchCell>(windows.size())));

  const Rng root(config.seed);
  detail::parallel_for(jobs, windows.size(), [&](std::size_t k) {
    const auto& w = windows[k];
    Matrix ztr(static_cast<Index>(w.train.size()), config.z_full.cols());
    Matrix ytr(static_cast<Index>(w.train.size()), config.y_full.cols());
    for (std::size_t i = 0; i < w.train.size(); ++i) {
      ztr.row(static_cast<Index>(i)) = config.z_full.row(w.train[i]);
      ytr.row(static_cast<Index>(i)) = config.y_full.row(w.train[i]);
    }
    Matrix zte(static_cast<Index>(w.test.size()), config.z_full.cols());
    Matrix yte(static_cast<Index>(w.test.size()), config.y_full.cols());
    for (std::size_t i = 0; i < w.test.size(); ++i) {
      zte.row(static_cast<Index>(i)) = config.z_full.row(w.test[i]);
      yte.row(static_cast<Index>(i)) = config.y_full.row(w.test[i]);
    }
    const Dataset data = center_columns(ztr, ytr);
    const Rng cut_rng = root.child(k);

    for (std::size_t mi = 0; mi < config.roster.size(); ++mi) {
      const Method m = config.roster[mi];
      BenchCell& out = report.cells[0][mi][k];
      const auto t0 = std::chrono::steady_clock::now();
      try {
        const MethodFit f =
            fit_method(m, data, settings_for(config.settings, m),
                       cut_rng.child(100 + static_cast<std::uint64_t>(m)));
        const Matrix zc = zte.rowwise() - data.z_means.transpose();
        const Matrix pred = (zc * f.B).rowwise() + data.y_means.transpose();
        out.value = forecast_mse(yte, pred);
      } catch (const std::exception& e) {
        out.failed = true;
        out.error = e.what();
      }
      out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
  });
  return report;
}

// ---------- report writers ----------

namespace io_detail {

inline void write_lines(const std::filesystem::path& path, const std::string& contents) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  out << contents;
}

}  // namespace io_detail

/// report.csv, plot CSV and replications.csv carry only deterministic values;
/// wall-times go to timings.csv so reruns with one seed stay byte-identical.
inline void write_sim_report(const BenchmarkReport& report, const std::filesystem::path& outdir) {
  std::filesystem::create_directories(outdir);
  std::string rep = "rho,method,mean_me,std_me,t_vs_mrrce,p_vs_mrrce,n_reps,n_failed,config_hash\n";
  std::string plot = "rho,method,mean_me\n";
  std::string reps = "rho,method,replication,me,failed\n";
  std::string times = "rho,method,total_seconds\n";
  for (std::size_t si = 0; si < report.setting_values.size(); ++si) {
    for (std::size_t mi = 0; mi < report.roster.size(); ++mi) {
      const MetricReport m = report.metric(si, mi);
      const TTestResult tt = report.p_vs_mrrce(si, mi);
      const std::size_t failed = report.cells[si][mi].size() - m.values.size();
      double secs = 0.0;
      for (const BenchCell& c : report.cells[si][mi]) secs += c.seconds;
      const std::string rho = io::format_double(report.setting_values[si]);
      rep += rho + "," + m.method + "," + io::format_double(m.mean) + "," +
             io::format_double(m.std_dev) + "," + io::format_double(tt.t) + "," +
             io::format_double(tt.p_two_sided) + "," + std::to_string(m.values.size()) + "," +
             std::to_string(failed) + "," + report.config_hash + "\n";
      plot += rho + "," + m.method + "," + io::format_double(m.mean) + "\n";
      times += rho + "," + m.method + "," + io::format_double(secs) + "\n";
      for (std::size_t r = 0; r < report.cells[si][mi].size(); ++r) {
        const BenchCell& c = report.cells[si][mi][r];
        reps += rho + "," + m.method + "," + std::to_string(r) + "," +
                io::format_double(c.value) + "," + (c.failed ? "1" : "0") + "\n";
      }
    }
  }
  io_detail::write_lines(outdir / "report.csv", rep);
  io_detail::write_lines(outdir / "plot_me_vs_rho.csv", plot);
  io_detail::write_lines(outdir / "replications.csv", reps);
  io_detail::write_lines(outdir / "timings.csv", times);
}

/// Table-1-shaped report: rows sorted ascending by mean MSE.
inline void write_ts_report(const BenchmarkReport& report, const std::filesystem::path& outdir) {
  std::filesystem::create_directories(outdir);
  std::vector<std::size_t> order(report.roster.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<MetricReport> metrics;
  metrics.reserve(report.roster.size());
  for (std::size_t mi = 0; mi < report.roster.size(); ++mi) metrics.push_back(report.metric(0, mi));
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return metrics[a].mean < metrics[b].mean; });

  std::string rep = "method,mean_mse,std_mse,t_vs_mrrce,p_vs_mrrce,n_cutoffs,n_failed,config_hash\n";
  std::string values = "method,cutoff,mse,failed\n";
  std::string times = "method,total_seconds\n";
  for (std::size_t oi : order) {
    const MetricReport& m = metrics[oi];
    const TTestResult tt = report.p_vs_mrrce(0, oi);
    const std::size_t failed = report.cells[0][oi].size() - m.values.size();
    double secs = 0.0;
    for (const BenchCell& c : report.cells[0][oi]) secs += c.seconds;
    rep += m.method + "," + io::format_double(m.mean) + "," + io::format_double(m.std_dev) + "," +
           io::format_double(tt.t) + "," + io::format_double(tt.p_two_sided) + "," +
           std::to_string(m.values.size()) + "," + std::to_string(failed) + "," +
           report.config_hash + "\n";
    times += m.method + "," + io::format_double(secs) + "\n";
    for (std::size_t k = 0; k < report.cells[0][oi].size(); ++k) {
      const BenchCell& c = report.cells[0][oi][k];
      values += m.method + "," + std::to_string(k) + "," + io::format_double(c.value) + "," +
                (c.failed ? "1" : "0") + "\n";
    }
  }
  io_detail::write_lines(outdir / "report.csv", rep);
  io_detail::write_lines(outdir / "mse_values.csv", values);
  io_detail::write_lines(outdir / "timings.csv", times);
}

}  // namespace mrrce
