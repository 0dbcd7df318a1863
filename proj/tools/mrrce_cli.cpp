// Command-line front end: config-driven simulation studies, fit/predict on
// CSV data, and the rolling-origin forecast benchmark.

#include "mrrce/mrrce.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using mrrce::Index;
using mrrce::Json;
using mrrce::Matrix;

namespace {

constexpr int kExitSchema = 2;
constexpr int kExitSolver = 3;

mrrce::ErrorStructure parse_error_structure(const Json& j, const std::string& context) {
  mrrce::io::check_keys(j, {"type", "rho_e", "hurst"}, context);
  const std::string type = mrrce::io::get_required<std::string>(j, "type", context);
  mrrce::ErrorStructure es;
  if (type == "identity") {
    es.kind = mrrce::ErrorKind::Identity;
  } else if (type == "ar1") {
    es.kind = mrrce::ErrorKind::Ar1;
    es.param = mrrce::io::get_required<double>(j, "rho_e", context);
    mrrce::io::check_range(es.param, -0.999, 0.999, "rho_e", context);
  } else if (type == "fgn") {
    es.kind = mrrce::ErrorKind::Fgn;
    es.param = mrrce::io::get_required<double>(j, "hurst", context);
    mrrce::io::check_range(es.param, 0.5, 0.999, "hurst", context);
  } else if (type == "equicorr") {
    es.kind = mrrce::ErrorKind::Equicorr;
    es.param = mrrce::io::get_required<double>(j, "rho_e", context);
    mrrce::io::check_range(es.param, 0.0, 0.999, "rho_e", context);
  } else {
    throw mrrce::SchemaError(context + ": unknown error_structure type '" + type + "'");
  }
  return es;
}

mrrce::SimConfig parse_sim_base(const Json& j, const std::string& context, bool with_rho) {
  mrrce::SimConfig sc;
  sc.n = mrrce::io::get_required<Index>(j, "n", context);
  sc.p = mrrce::io::get_required<Index>(j, "p", context);
  sc.q = mrrce::io::get_required<Index>(j, "q", context);
  if (sc.n < 2 || sc.p < 1 || sc.q < 1)
    throw mrrce::SchemaError(context + ": dimensions must satisfy n >= 2, p >= 1, q >= 1");
  if (with_rho) {
    sc.rho = mrrce::io::get_or<double>(j, "rho", 0.0, context);
    if (!(sc.rho >= 0.0 && sc.rho < 1.0))
      throw mrrce::SchemaError(context + ": field 'rho' = " + std::to_string(sc.rho) +
                               " outside [0, 1)");
  }
  sc.sigma = mrrce::io::get_or<double>(j, "sigma", 1.0, context);
  if (sc.sigma < 0.0) throw mrrce::SchemaError(context + ": field 'sigma' must be >= 0");
  sc.s = mrrce::io::get_or<double>(j, "s", 0.0, context);
  mrrce::io::check_range(sc.s, 0.0, 1.0, "s", context);
  sc.s_g = mrrce::io::get_or<double>(j, "s_g", 0.0, context);
  mrrce::io::check_range(sc.s_g, 0.0, 1.0, "s_g", context);
  sc.rho_z = mrrce::io::get_or<double>(j, "rho_z", 0.7, context);
  if (!(sc.rho_z > -1.0 && sc.rho_z < 1.0))
    throw mrrce::SchemaError(context + ": field 'rho_z' outside (-1, 1)");
  sc.error_scale = mrrce::io::get_or<double>(j, "error_scale", 1.0, context);
  if (sc.error_scale < 0.0)
    throw mrrce::SchemaError(context + ": field 'error_scale' must be >= 0");
  if (j.contains("error_structure"))
    sc.error_structure = parse_error_structure(j.at("error_structure"), context);
  sc.seed = mrrce::io::get_or<std::uint64_t>(j, "seed", 0, context);
  return sc;
}

std::vector<mrrce::Method> parse_roster(const Json& j, const std::string& context) {
  if (!j.is_array() || j.empty()) throw mrrce::SchemaError(context + ": roster must be a nonempty array");
  std::vector<mrrce::Method> roster;
  for (const auto& item : j) roster.push_back(mrrce::method_from_name(item.get<std::string>()));
  return roster;
}

std::map<mrrce::Method, mrrce::MethodSettings> parse_settings_map(const Json& j,
                                                                  const std::string& context) {
  std::map<mrrce::Method, mrrce::MethodSettings> out;
  for (const auto& item : j.items()) {
    const mrrce::Method m = mrrce::method_from_name(item.key());
    out[m] = mrrce::parse_method_settings(item.value(), context + "." + item.key());
  }
  return out;
}

void write_json(const fs::path& path, const Json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  out << j.dump(2) << "\n";
}

// ---------- simulate ----------

int cmd_simulate(const fs::path& config_path, std::optional<std::uint64_t> seed,
                 const fs::path& outdir) {
  Json j = mrrce::io::load_json(config_path);
  mrrce::io::check_keys(j,
                        {"n", "p", "q", "rho", "sigma", "s", "s_g", "rho_z", "error_structure",
                         "error_scale", "seed"},
                        "simulate");
  mrrce::SimConfig sc = parse_sim_base(j, "simulate", /*with_rho=*/true);
  if (seed) sc.seed = *seed;
  const mrrce::SimInstance inst = mrrce::simulate(sc);

  fs::create_directories(outdir);
  mrrce::io::write_csv(outdir / "Z.csv", inst.data.Z);
  mrrce::io::write_csv(outdir / "Y.csv", inst.data.Y);
  mrrce::io::write_csv(outdir / "gamma_true.csv", inst.gamma_true);
  Json meta;
  j["seed"] = sc.seed;
  meta["config"] = j;
  meta["config_hash"] = mrrce::io::config_hash(j);
  meta["error_structure"] = mrrce::error_kind_name(sc.error_structure.kind);
  write_json(outdir / "meta.json", meta);
  std::cout << "simulate: wrote " << (outdir / "Z.csv").string() << " (" << sc.n << "x" << sc.p
            << "), Y (" << sc.n << "x" << sc.q << "), gamma_true (" << sc.p << "x" << sc.q
            << ")\n";
  return 0;
}

// ---------- fit / predict ----------

int cmd_fit(const std::string& method_name, const fs::path& z_path, const fs::path& y_path,
            const fs::path& config_path, std::optional<std::uint64_t> seed, const fs::path& outdir) {
  const mrrce::Method method = mrrce::method_from_name(method_name);
  Matrix z = mrrce::io::read_csv_matrix(z_path);
  Matrix y = mrrce::io::read_csv_matrix(y_path);
  if (z.rows() != y.rows())
    throw mrrce::SchemaError("fit: Z has " + std::to_string(z.rows()) + " rows but Y has " +
                             std::to_string(y.rows()));

  Json config = Json::object();
  if (!config_path.empty()) config = mrrce::io::load_json(config_path);
  mrrce::io::check_keys(config, {"methods", "seed"}, "fit");
  std::map<mrrce::Method, mrrce::MethodSettings> settings;
  if (config.contains("methods")) settings = parse_settings_map(config.at("methods"), "fit.methods");
  std::uint64_t seed_val = mrrce::io::get_or<std::uint64_t>(config, "seed", 0, "fit");
  if (seed) seed_val = *seed;

  const mrrce::Dataset data = mrrce::center_columns(z, y);
  const mrrce::MethodFit f =
      mrrce::fit_method(method, data, mrrce::settings_for(settings, method),
                        mrrce::Rng(seed_val).child(100 + static_cast<std::uint64_t>(method)));

  fs::create_directories(outdir);
  const bool is_mrrce = method == mrrce::Method::Mrrce;
  mrrce::io::write_csv(outdir / (is_mrrce ? "gamma_star.csv" : "B_hat.csv"), f.B);
  if (is_mrrce) {
    Json theta;
    theta["omega_original"] = f.details.at("omega_original");
    theta["omega_transformed"] = f.details.at("omega_transformed");
    theta["sigma2"] = f.details.at("sigma2");
    theta["rho"] = f.details.at("rho");
    theta["lambda_omega"] = f.details.at("lambda_omega");
    theta["iterations"] = f.details.at("iterations");
    theta["converged"] = f.details.at("converged");
    write_json(outdir / "theta.json", theta);
  }
  Json report;
  report["method"] = f.method;
  report["details"] = f.details;
  report["n"] = z.rows();
  report["p"] = z.cols();
  report["q"] = y.cols();
  report["coef_file"] = is_mrrce ? "gamma_star.csv" : "B_hat.csv";
  report["z_means"] = std::vector<double>(data.z_means.data(), data.z_means.data() + data.z_means.size());
  report["y_means"] = std::vector<double>(data.y_means.data(), data.y_means.data() + data.y_means.size());
  report["seed"] = seed_val;
  report["config_hash"] = mrrce::io::config_hash(config);
  write_json(outdir / "fit_report.json", report);
  std::cout << "fit: method " << f.method << " wrote " << outdir.string() << "\n";
  return 0;
}

int cmd_predict(const fs::path& model_dir, const fs::path& z_path, const fs::path& outdir) {
  const Json report = mrrce::io::load_json(model_dir / "fit_report.json");
  const Matrix b = mrrce::io::read_csv_matrix(
      model_dir / mrrce::io::get_required<std::string>(report, "coef_file", "predict"));
  const std::vector<double> zm =
      mrrce::io::get_required<std::vector<double>>(report, "z_means", "predict");
  const std::vector<double> ym =
      mrrce::io::get_required<std::vector<double>>(report, "y_means", "predict");
  Matrix z = mrrce::io::read_csv_matrix(z_path);
  if (z.cols() != static_cast<Index>(zm.size()) || b.rows() != z.cols())
    throw mrrce::SchemaError("predict: predictor width does not match the fitted model");
  Matrix zc = z;
  for (Index j = 0; j < z.cols(); ++j) zc.col(j).array() -= zm[static_cast<std::size_t>(j)];
  Matrix yhat = zc * b;
  for (Index j = 0; j < yhat.cols(); ++j) yhat.col(j).array() += ym[static_cast<std::size_t>(j)];
  fs::create_directories(outdir);
  mrrce::io::write_csv(outdir / "y_hat.csv", yhat);
  std::cout << "predict: wrote " << (outdir / "y_hat.csv").string() << "\n";
  return 0;
}

// ---------- benchmarks ----------

int cmd_bench_sim(const fs::path& config_path, std::optional<std::uint64_t> seed, int jobs,
                  const fs::path& outdir) {
  Json j = mrrce::io::load_json(config_path);
  mrrce::io::check_keys(j,
                        {"n", "p", "q", "sigma", "s", "s_g", "rho_z", "error_structure",
                         "error_scale", "rho_grid", "replications", "seed", "roster", "methods"},
                        "bench-sim");
  mrrce::SimBenchConfig config;
  config.base = parse_sim_base(j, "bench-sim", /*with_rho=*/false);
  config.rho_grid = mrrce::io::get_required<std::vector<double>>(j, "rho_grid", "bench-sim");
  for (double rho : config.rho_grid)
    if (!(rho >= 0.0 && rho < 1.0))
      throw mrrce::SchemaError("bench-sim: field 'rho_grid' entry " + std::to_string(rho) +
                               " outside [0, 1)");
  config.replications = mrrce::io::get_required<int>(j, "replications", "bench-sim");
  config.seed = config.base.seed;
  if (seed) config.seed = *seed;
  config.roster = parse_roster(j.at("roster"), "bench-sim");
  if (j.contains("methods")) config.settings = parse_settings_map(j.at("methods"), "bench-sim.methods");
  j["seed"] = config.seed;
  config.echo = j;

  const mrrce::BenchmarkReport report = mrrce::run_bench_sim(config, jobs);
  mrrce::write_sim_report(report, outdir);
  Json meta;
  meta["config"] = j;
  meta["config_hash"] = report.config_hash;
  write_json(outdir / "meta.json", meta);
  std::cout << "bench-sim: " << config.rho_grid.size() << " settings x " << config.replications
            << " replications -> " << (outdir / "report.csv").string() << "\n";
  return 0;
}

mrrce::FeatureRecipe parse_recipe(const Json& j, const mrrce::io::CsvTable& table,
                                  const std::string& context) {
  if (!j.is_array()) throw mrrce::SchemaError(context + ": recipe must be an array");
  mrrce::FeatureRecipe recipe;
  for (const auto& spec : j) {
    const std::string type = mrrce::io::get_required<std::string>(spec, "type", context);
    if (type == "fourier") {
      mrrce::io::check_keys(spec, {"type", "period", "order"}, context);
      mrrce::FourierSpec f;
      f.period = mrrce::io::get_required<double>(spec, "period", context);
      f.order = mrrce::io::get_required<int>(spec, "order", context);
      if (!(f.period > 0.0) || f.order < 1)
        throw mrrce::SchemaError(context + ": fourier needs period > 0 and order >= 1");
      recipe.emplace_back(f);
    } else if (type == "holiday") {
      mrrce::io::check_keys(spec, {"type", "times"}, context);
      mrrce::HolidaySpec h;
      for (long t : mrrce::io::get_required<std::vector<long>>(spec, "times", context))
        h.times.insert(t);
      recipe.emplace_back(std::move(h));
    } else if (type == "trend") {
      mrrce::io::check_keys(spec, {"type", "changepoints"}, context);
      mrrce::PiecewiseTrendSpec tr;
      tr.changepoints =
          mrrce::io::get_or<std::vector<double>>(spec, "changepoints", {}, context);
      recipe.emplace_back(std::move(tr));
    } else if (type == "one_hot") {
      mrrce::io::check_keys(spec, {"type", "column"}, context);
      const std::string col = mrrce::io::get_required<std::string>(spec, "column", context);
      mrrce::OneHotSpec oh;
      const Index c = table.column(col);
      oh.categories.reserve(static_cast<std::size_t>(table.values.rows()));
      for (Index i = 0; i < table.values.rows(); ++i)
        oh.categories.push_back(static_cast<long>(table.values(i, c)));
      recipe.emplace_back(std::move(oh));
    } else {
      throw mrrce::SchemaError(context + ": unknown feature type '" + type + "'");
    }
  }
  return recipe;
}

int cmd_bench_ts(const fs::path& config_path, std::optional<std::uint64_t> seed, int jobs,
                 const fs::path& outdir) {
  Json j = mrrce::io::load_json(config_path);
  mrrce::io::check_keys(j,
                        {"data", "time_column", "response_columns", "recipe", "plan", "roster",
                         "methods", "seed", "scale_responses"},
                        "bench-ts");
  const fs::path data_path = mrrce::io::get_required<std::string>(j, "data", "bench-ts");
  const mrrce::io::CsvTable table = mrrce::io::read_csv(data_path);

  const std::string time_col = mrrce::io::get_required<std::string>(j, "time_column", "bench-ts");
  const auto resp_cols =
      mrrce::io::get_required<std::vector<std::string>>(j, "response_columns", "bench-ts");
  if (resp_cols.empty()) throw mrrce::SchemaError("bench-ts: response_columns must be nonempty");

  std::vector<double> t;
  const Index tc = table.column(time_col);
  t.reserve(static_cast<std::size_t>(table.values.rows()));
  for (Index i = 0; i < table.values.rows(); ++i) t.push_back(table.values(i, tc));

  Matrix y(table.values.rows(), static_cast<Index>(resp_cols.size()));
  for (std::size_t c = 0; c < resp_cols.size(); ++c)
    y.col(static_cast<Index>(c)) = table.values.col(table.column(resp_cols[c]));

  mrrce::TsBenchConfig config;
  config.z_full = mrrce::build_features(parse_recipe(j.at("recipe"), table, "bench-ts.recipe"), t);
  if (mrrce::io::get_or<bool>(j, "scale_responses", true, "bench-ts"))
    config.y_full = mrrce::scale_responses(y).first;
  else
    config.y_full = y;

  const Json& plan = j.at("plan");
  mrrce::io::check_keys(plan, {"initial_train", "step", "horizon", "num_cutoffs"}, "bench-ts.plan");
  config.plan.initial_train = mrrce::io::get_required<Index>(plan, "initial_train", "bench-ts.plan");
  config.plan.step = mrrce::io::get_required<Index>(plan, "step", "bench-ts.plan");
  config.plan.horizon = mrrce::io::get_required<Index>(plan, "horizon", "bench-ts.plan");
  config.plan.num_cutoffs = mrrce::io::get_required<Index>(plan, "num_cutoffs", "bench-ts.plan");

  config.roster = parse_roster(j.at("roster"), "bench-ts");
  if (j.contains("methods")) config.settings = parse_settings_map(j.at("methods"), "bench-ts.methods");
  config.seed = mrrce::io::get_or<std::uint64_t>(j, "seed", 0, "bench-ts");
  if (seed) config.seed = *seed;
  j["seed"] = config.seed;
  config.echo = j;

  mrrce::BenchmarkReport report;
  try {
    report = mrrce::run_bench_ts(config, jobs);
  } catch (const std::invalid_argument& e) {
    throw mrrce::SchemaError(std::string("bench-ts: ") + e.what());  // plan overflow etc.
  }
  mrrce::write_ts_report(report, outdir);
  Json meta;
  meta["config"] = j;
  meta["config_hash"] = report.config_hash;
  meta["p"] = config.z_full.cols();
  write_json(outdir / "meta.json", meta);
  std::cout << "bench-ts: " << config.plan.num_cutoffs << " cutoffs -> "
            << (outdir / "report.csv").string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MrRCE: multivariate random regression with covariance estimation"};
  app.require_subcommand(1);

  std::string config_path, method, z_path, y_path, model_dir, out_dir = ".";
  std::uint64_t seed_flag = 0;
  bool seed_given = false;
  int jobs = static_cast<int>(std::thread::hardware_concurrency());
  if (jobs < 1) jobs = 1;

  auto add_common = [&](CLI::App* sub, bool with_config = true) {
    if (with_config) sub->add_option("--config", config_path, "JSON config file");
    sub->add_option("--seed", seed_flag, "override the config seed")
        ->each([&](const std::string&) { seed_given = true; });
    sub->add_option("--jobs", jobs, "max concurrent cells")->envname("MRRCE_JOBS");
    sub->add_option("--out", out_dir, "output directory");
  };

  CLI::App* sim = app.add_subcommand("simulate", "generate a synthetic instance");
  add_common(sim);
  sim->get_option("--config")->required();

  CLI::App* fit = app.add_subcommand("fit", "fit one estimator on CSV data");
  fit->add_option("--method", method, "estimator name")->required();
  fit->add_option("--z", z_path, "predictor CSV")->required();
  fit->add_option("--y", y_path, "response CSV")->required();
  add_common(fit);

  CLI::App* pred = app.add_subcommand("predict", "predict responses from a fitted model");
  pred->add_option("--model", model_dir, "directory written by fit")->required();
  pred->add_option("--z", z_path, "predictor CSV")->required();
  add_common(pred);  // --config accepted for interface uniformity; unused

  CLI::App* bsim = app.add_subcommand("bench-sim", "replication study on simulated data");
  add_common(bsim);
  bsim->get_option("--config")->required();

  CLI::App* bts = app.add_subcommand("bench-ts", "rolling-origin forecast benchmark");
  add_common(bts);
  bts->get_option("--config")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitSchema;
  }

  const std::optional<std::uint64_t> seed =
      seed_given ? std::optional<std::uint64_t>(seed_flag) : std::nullopt;
  try {
    if (sim->parsed()) return cmd_simulate(config_path, seed, out_dir);
    if (fit->parsed()) return cmd_fit(method, z_path, y_path, config_path, seed, out_dir);
    if (pred->parsed()) return cmd_predict(model_dir, z_path, out_dir);
    if (bsim->parsed()) return cmd_bench_sim(config_path, seed, jobs, out_dir);
    if (bts->parsed()) return cmd_bench_ts(config_path, seed, jobs, out_dir);
  } catch (const mrrce::SchemaError& e) {
    std::cerr << "schema error: " << e.what() << "\n";
    return kExitSchema;
  } catch (const mrrce::SolverError& e) {
    std::cerr << "solver error: " << e.what() << "\n";
    return kExitSolver;
  } catch (const std::invalid_argument& e) {
    std::cerr << "schema error: " << e.what() << "\n";
    return kExitSchema;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
