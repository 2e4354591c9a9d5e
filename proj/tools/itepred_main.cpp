// Command line front end: simulation study, model fitting/prediction on CSV
// data, bootstrap validation, treatment-effect calibration, and DGM audits.

#include <CLI11.hpp>
#include <bit>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "itepred/dgm.hpp"
#include "itepred/glm.hpp"
#include "itepred/metrics.hpp"
#include "itepred/rng.hpp"
#include "itepred/serialize.hpp"
#include "itepred/strategies.hpp"
#include "itepred/study.hpp"
#include "itepred/validate.hpp"

namespace {

using namespace itepred;

std::vector<int> parse_index_list(const std::string& csv) {
  std::vector<int> out;
  std::stringstream ss(csv);
  std::string token;
  while (std::getline(ss, token, ',')) {
    if (!token.empty()) out.push_back(std::stoi(token));
  }
  return out;
}

std::vector<std::string> parse_string_list(const std::string& csv) {
  std::vector<std::string> out;
  std::stringstream ss(csv);
  std::string token;
  while (std::getline(ss, token, ',')) {
    if (!token.empty()) out.push_back(token);
  }
  return out;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

int cmd_simulate(const std::string& plan_path, const std::string& out_dir, int runs,
                 std::int64_t seed, bool resume, int threads) {
  StudyPlan plan = load_plan(plan_path);
  if (runs > 0) plan.runs = runs;
  if (seed >= 0) plan.base_seed = static_cast<std::uint64_t>(seed);
  if (threads > 0) plan.threads = threads;
  run_study(plan, out_dir, resume);
  std::cout << "wrote " << out_dir << "/runs.csv, calib.csv, aggregate.csv, meta.json\n";
  return 0;
}

int cmd_fit(const std::string& data_path, const std::string& schema_path,
            const std::string& strategy_id, std::uint64_t seed, const std::string& out_path,
            const std::string& ck_mains, const std::string& ck_interactions) {
  CsvSchema schema = load_schema(schema_path);
  Dataset data = load_csv(data_path, schema);
  StrategySpec spec = [&] {
    if (strategy_id == "hte-ck" && !ck_interactions.empty()) {
      StrategySpec s;
      s.kind = StrategyKind::HteCk;
      s.estimator = Estimator::Ridge;
      s.ck_main_columns = parse_index_list(ck_mains);
      s.ck_interaction_columns = parse_index_list(ck_interactions);
      return s;
    }
    return parse_strategy(strategy_id, static_cast<int>(data.p()));
  }();

  ModelFile model;
  model.predictor = fit_strategy(spec, data, seed);
  model.schema = schema;
  if (model.schema.covariates.empty()) {
    // Record the raw covariate columns actually used (pre dummy-coding) so
    // prediction can re-load new files identically.
    for (const auto& name : csv_header(data_path)) {
      if (name != schema.treatment && name != schema.outcome) {
        model.schema.covariates.push_back(name);
      }
    }
  }
  model.covariate_names = data.column_names;
  save_model(out_path, model);
  std::cout << "fitted " << model.predictor.id << " on " << data.n() << " subjects, "
            << data.p() << " covariate columns -> " << out_path << "\n";
  return 0;
}

Eigen::MatrixXd covariates_for_model(const ModelFile& model, const std::string& data_path) {
  return load_covariate_matrix(data_path, model.schema.covariates, model.schema.categorical,
                               model.covariate_names);
}

int cmd_predict(const std::string& model_path, const std::string& data_path,
                const std::string& out_path) {
  ModelFile model = load_model(model_path);
  Eigen::MatrixXd x = covariates_for_model(model, data_path);
  Eigen::VectorXd delta = predict_delta(model.predictor, x);
  Eigen::VectorXd risk1 = predict_arm_risk(model.predictor, x, 1.0);
  Eigen::VectorXd risk0 = predict_arm_risk(model.predictor, x, 0.0);

  std::ofstream out(out_path);
  if (!out) fail(ErrorCode::IoError, "cannot write " + out_path);
  out << "row,delta,risk_treated,risk_control\n";
  for (Eigen::Index i = 0; i < delta.size(); ++i) {
    out << i << ',' << fmt(delta[i]) << ',' << fmt(risk1[i]) << ',' << fmt(risk0[i]) << "\n";
  }
  std::cout << "wrote " << delta.size() << " predictions -> " << out_path << "\n";
  return 0;
}

int cmd_validate(const std::string& data_path, const std::string& schema_path,
                 const std::string& strategies_csv, int bootstrap, std::uint64_t seed,
                 const std::string& out_dir, const std::string& eval_mode) {
  CsvSchema schema = load_schema(schema_path);
  Dataset data = load_csv(data_path, schema);
  std::vector<std::string> ids = strategies_csv == "all" ? all_strategy_ids()
                                                         : parse_string_list(strategies_csv);
  BootstrapEval eval =
      eval_mode == "original" ? BootstrapEval::OriginalSample : BootstrapEval::OutOfBag;

  std::filesystem::create_directories(out_dir);
  std::ofstream reps(std::filesystem::path(out_dir) / "replicates.csv");
  std::ofstream summary(std::filesystem::path(out_dir) / "summary.csv");
  if (!reps || !summary) fail(ErrorCode::IoError, "cannot write outputs in " + out_dir);
  reps << "replicate,strategy,brier,r2,n_eval\n";
  summary << "strategy,mean_brier,mean_r2,replicates,redraws,error\n";

  for (const auto& id : ids) {
    try {
      StrategySpec spec = parse_strategy(id, static_cast<int>(data.p()));
      BootstrapResult result =
          bootstrap_validate(data, spec, bootstrap, derive_seed({seed, 0x7e}), eval);
      for (const auto& r : result.records) {
        reps << r.replicate << ',' << id << ',' << fmt(r.brier) << ',' << fmt(r.nagelkerke)
             << ',' << r.n_eval << "\n";
      }
      summary << id << ',' << fmt(result.mean_brier) << ',' << fmt(result.mean_nagelkerke)
              << ',' << result.records.size() << ',' << result.redraws << ",\n";
      std::cout << id << ": brier " << fmt(result.mean_brier) << ", R2 "
                << fmt(result.mean_nagelkerke) << "\n";
    } catch (const Error& e) {
      summary << id << ",nan,nan,0,0," << e.what() << "\n";
      std::cout << id << ": failed (" << e.what() << ")\n";
    }
  }
  return 0;
}

int cmd_te_calib(const std::string& data_path, const std::string& model_path, int groups,
                 const std::string& out_path) {
  ModelFile model = load_model(model_path);
  CsvSchema schema = model.schema;
  Dataset data = load_csv(data_path, schema);
  if (data.column_names != model.covariate_names) {
    fail(ErrorCode::ColumnMismatch, "data columns do not match the model's training columns");
  }
  CalibrationBins bins = te_quintile_calibration(model.predictor, data, groups);

  std::ofstream out(out_path);
  if (!out) fail(ErrorCode::IoError, "cannot write " + out_path);
  out << "group,mean_delta_hat,observed_effect,se,count,valid\n";
  for (std::size_t g = 0; g < bins.bins.size(); ++g) {
    const auto& bin = bins.bins[g];
    out << g + 1 << ',' << fmt(bin.mean_predicted) << ','
        << (bin.valid ? fmt(bin.mean_reference) : "nan") << ','
        << (bin.valid ? fmt(bin.se) : "nan") << ',' << bin.count << ',' << (bin.valid ? 1 : 0)
        << "\n";
  }
  std::cout << "wrote " << bins.bins.size() << " groups -> " << out_path << "\n";
  return 0;
}

int cmd_dgm_check(const std::string& plan_path, const std::string& out_path,
                  std::int64_t draws, int r2_n) {
  StudyPlan plan = load_plan(plan_path);
  std::ofstream out(out_path);
  if (!out) fail(ErrorCode::IoError, "cannot write " + out_path);
  out << "setting,n,beta_t,heterogeneous,solved_intercept,mc_prevalence,oracle_r2,mean_delta\n";

  for (const auto& setting : plan.settings()) {
    DgmConfig config;
    config.n = setting.n;
    config.beta_t = setting.beta_t;
    config.heterogeneous = setting.heterogeneous;
    config.perturbation_seed = plan.perturbation_seed;
    config.run_seed = derive_seed({plan.base_seed, 0xd6, static_cast<std::uint64_t>(setting.n),
                                   setting.heterogeneous ? 1ull : 0ull});
    TrueModel model = make_true_model(config);

    // Monte Carlo control prevalence and mean delta in covariate chunks.
    auto engine = make_engine({plan.base_seed, 0xd7, static_cast<std::uint64_t>(setting.n),
                               setting.heterogeneous ? 1ull : 0ull,
                               std::bit_cast<std::uint64_t>(setting.beta_t)});
    double sum_prev = 0.0;
    double sum_delta = 0.0;
    std::int64_t left = draws;
    while (left > 0) {
      const int chunk = static_cast<int>(std::min<std::int64_t>(left, 100000));
      Eigen::MatrixXd x = gen_covariates(chunk, model.p, model.rho, engine);
      for (int i = 0; i < chunk; ++i) {
        const double rc = model.control_risk(x.row(i).transpose());
        sum_prev += rc;
        sum_delta += model.treated_risk(x.row(i).transpose()) - rc;
      }
      left -= chunk;
    }
    DgmConfig r2_config = config;
    r2_config.run_seed = derive_seed({config.run_seed, 0x52});
    const double r2 = oracle_r2(r2_config, r2_n);

    out << setting.id << ',' << setting.n << ',' << fmt(setting.beta_t) << ','
        << (setting.heterogeneous ? 1 : 0) << ',' << fmt(model.beta0) << ','
        << fmt(sum_prev / static_cast<double>(draws)) << ',' << fmt(r2) << ','
        << fmt(sum_delta / static_cast<double>(draws)) << "\n";
    std::cout << setting.id << ": beta0 " << fmt(model.beta0) << ", prevalence "
              << fmt(sum_prev / static_cast<double>(draws)) << ", R2 " << fmt(r2) << "\n";
  }
  std::cout << "wrote " << out_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Individualized treatment effect prediction from randomized trial data"};
  app.require_subcommand(1);

  // simulate
  auto* simulate = app.add_subcommand("simulate", "Run the factorial simulation study");
  std::string plan_path, out_dir;
  int runs = 0, threads = 0;
  std::int64_t seed = -1;
  bool resume = false;
  simulate->add_option("--plan", plan_path, "plan.json")->required();
  simulate->add_option("--out", out_dir, "output directory")->required();
  simulate->add_option("--runs", runs, "override plan runs");
  simulate->add_option("--seed", seed, "override plan base seed");
  simulate->add_option("--threads", threads, "worker threads (0 = hardware)");
  simulate->add_flag("--resume", resume, "continue from existing output");

  // fit
  auto* fit = app.add_subcommand("fit", "Fit one strategy on a CSV dataset");
  std::string data_path, schema_path, strategy_id, model_out, ck_mains, ck_interactions;
  std::uint64_t fit_seed = 1;
  fit->add_option("--data", data_path, "data CSV")->required();
  fit->add_option("--schema", schema_path, "schema JSON")->required();
  fit->add_option("--strategy", strategy_id, "strategy id")->required();
  fit->add_option("--seed", fit_seed, "seed");
  fit->add_option("--out", model_out, "model JSON output")->required();
  fit->add_option("--ck-mains", ck_mains, "hte-ck main-effect column indices (csv)");
  fit->add_option("--ck-interactions", ck_interactions, "hte-ck interaction column indices (csv)");

  // predict
  auto* predict = app.add_subcommand("predict", "Score new covariate rows with a fitted model");
  std::string model_path, new_data, delta_out;
  predict->add_option("--model", model_path, "model JSON")->required();
  predict->add_option("--data", new_data, "new data CSV")->required();
  predict->add_option("--out", delta_out, "output CSV")->required();

  // validate
  auto* validate = app.add_subcommand("validate", "Bootstrap internal validation");
  std::string v_data, v_schema, v_strategies = "all", v_out, v_eval = "oob";
  int v_bootstrap = 100;
  std::uint64_t v_seed = 1;
  validate->add_option("--data", v_data, "data CSV")->required();
  validate->add_option("--schema", v_schema, "schema JSON")->required();
  validate->add_option("--strategies", v_strategies, "comma list or 'all'");
  validate->add_option("--bootstrap", v_bootstrap, "replicates");
  validate->add_option("--seed", v_seed, "seed");
  validate->add_option("--out", v_out, "output directory")->required();
  validate->add_option("--eval", v_eval, "oob | original");

  // te-calib
  auto* te_calib = app.add_subcommand("te-calib", "Treatment-effect quantile calibration");
  std::string t_data, t_model, t_out;
  int t_groups = 5;
  te_calib->add_option("--data", t_data, "data CSV")->required();
  te_calib->add_option("--model", t_model, "model JSON")->required();
  te_calib->add_option("--groups", t_groups, "quantile groups");
  te_calib->add_option("--out", t_out, "output CSV")->required();

  // dgm-check
  auto* dgm_check = app.add_subcommand("dgm-check", "Audit the data-generating mechanism");
  std::string d_plan, d_out;
  std::int64_t d_draws = 1000000;
  int d_r2_n = 100000;
  dgm_check->add_option("--plan", d_plan, "plan.json")->required();
  dgm_check->add_option("--out", d_out, "audit CSV")->required();
  dgm_check->add_option("--draws", d_draws, "Monte Carlo draws for prevalence");
  dgm_check->add_option("--r2-n", d_r2_n, "sample size for the oracle R2");

  CLI11_PARSE(app, argc, argv);

  try {
    if (simulate->parsed()) return cmd_simulate(plan_path, out_dir, runs, seed, resume, threads);
    if (fit->parsed())
      return cmd_fit(data_path, schema_path, strategy_id, fit_seed, model_out, ck_mains,
                     ck_interactions);
    if (predict->parsed()) return cmd_predict(model_path, new_data, delta_out);
    if (validate->parsed())
      return cmd_validate(v_data, v_schema, v_strategies, v_bootstrap, v_seed, v_out, v_eval);
    if (te_calib->parsed()) return cmd_te_calib(t_data, t_model, t_groups, t_out);
    if (dgm_check->parsed()) return cmd_dgm_check(d_plan, d_out, d_draws, d_r2_n);
  } catch (const itepred::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
