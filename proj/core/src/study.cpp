#include "itepred/study.hpp"

#include <atomic>
#include <bit>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "csv_util.hpp"
#include "itepred/rng.hpp"

namespace itepred {

namespace {

constexpr const char* kRunsHeader =
    "setting,n,beta_t,heterogeneous,run,strategy,ok,error,rmspe,q90_delta,q90_risk,"
    "converged,chosen_lambda,nonzero";
constexpr const char* kCalibHeader = "setting,run,strategy,bin,mean_predicted,mean_true,count";
constexpr const char* kTimingsHeader = "setting,run,strategy,wall_ms";

std::string setting_label(int n, double beta_t, bool heterogeneous) {
  char bt[32];
  std::snprintf(bt, sizeof(bt), "%.3f", beta_t);
  return "n" + std::to_string(n) + "_bt" + bt + "_het" + (heterogeneous ? "1" : "0");
}

std::uint64_t bits(double v) { return std::bit_cast<std::uint64_t>(v); }

/// Per-(setting, run) work unit; strategies are evaluated in plan order.
std::vector<RunRecord> run_unit(const StudyPlan& plan, const StudySetting& setting,
                                const TrueModel& model, int run) {
  auto dev_engine = make_engine({plan.base_seed, static_cast<std::uint64_t>(setting.n),
                                 bits(setting.beta_t), setting.heterogeneous ? 1ull : 0ull,
                                 static_cast<std::uint64_t>(run), 0});
  auto val_engine = make_engine({plan.base_seed, static_cast<std::uint64_t>(setting.n),
                                 bits(setting.beta_t), setting.heterogeneous ? 1ull : 0ull,
                                 static_cast<std::uint64_t>(run), 1});
  SimulatedTrial dev = gen_trial(model, setting.n, dev_engine);
  SimulatedTrial val = gen_trial(model, plan.validation_n, val_engine);

  std::vector<RunRecord> records;
  records.reserve(plan.strategies.size());
  for (std::size_t s = 0; s < plan.strategies.size(); ++s) {
    RunRecord record;
    record.setting_id = setting.id;
    record.n = setting.n;
    record.beta_t = setting.beta_t;
    record.heterogeneous = setting.heterogeneous;
    record.run = run;
    record.strategy = plan.strategies[s];

    const auto t0 = std::chrono::steady_clock::now();
    try {
      StrategySpec spec = parse_strategy(plan.strategies[s], model.p);
      const std::uint64_t seed =
          derive_seed({plan.base_seed, static_cast<std::uint64_t>(setting.n),
                       bits(setting.beta_t), setting.heterogeneous ? 1ull : 0ull,
                       static_cast<std::uint64_t>(run), 2 + static_cast<std::uint64_t>(s)});
      DeltaPredictor predictor = fit_strategy(spec, dev.dataset, seed);

      Eigen::VectorXd delta_hat = predict_delta(predictor, val.dataset.covariates);
      record.rmspe = rmspe(delta_hat, val.true_delta);
      record.q90_delta = quantile_abs_error(delta_hat, val.true_delta, 0.9);

      // Risk errors pooled over both potential arms.
      Eigen::VectorXd risk1 = predict_arm_risk(predictor, val.dataset.covariates, 1.0);
      Eigen::VectorXd risk0 = predict_arm_risk(predictor, val.dataset.covariates, 0.0);
      std::vector<double> risk_errors;
      risk_errors.reserve(2 * static_cast<std::size_t>(val.dataset.n()));
      for (Eigen::Index i = 0; i < val.dataset.n(); ++i) {
        risk_errors.push_back(std::abs(risk1[i] - val.true_risk_treated[i]));
        risk_errors.push_back(std::abs(risk0[i] - val.true_risk_control[i]));
      }
      record.q90_risk = quantile_type7(std::move(risk_errors), 0.9);

      record.calibration = calibration_bins(delta_hat, val.true_delta, 20);
      record.converged = predictor.diagnostics.converged;
      record.chosen_lambda = predictor.diagnostics.chosen_lambda;
      record.nonzero = predictor.diagnostics.nonzero;
      record.ok = true;
    } catch (const Error& e) {
      record.ok = false;
      record.error = e.what();
    }
    record.wall_ms = std::chrono::duration<double, std::milli>(
                         std::chrono::steady_clock::now() - t0)
                         .count();
    records.push_back(std::move(record));
  }
  return records;
}

std::string runs_line(const RunRecord& r) {
  std::ostringstream out;
  out << csv::quote(r.setting_id) << ',' << r.n << ',' << csv::format_double(r.beta_t) << ','
      << (r.heterogeneous ? 1 : 0) << ',' << r.run << ',' << csv::quote(r.strategy) << ','
      << (r.ok ? 1 : 0) << ',' << csv::quote(r.error) << ',' << csv::format_double(r.rmspe)
      << ',' << csv::format_double(r.q90_delta) << ',' << csv::format_double(r.q90_risk) << ','
      << (r.converged ? 1 : 0) << ',' << csv::format_double(r.chosen_lambda) << ','
      << r.nonzero;
  return out.str();
}

/// 0-based count of complete leading units already present in runs.csv;
/// returns the verbatim lines making up that prefix (runs + calib + timings).
struct ResumeState {
  std::size_t units = 0;
  std::vector<std::string> runs_lines;
  std::vector<std::string> calib_lines;
  std::vector<std::string> timings_lines;
};

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::vector<std::string> lines;
  std::ifstream in(path);
  if (!in) return lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

ResumeState resume_state(const StudyPlan& plan, const std::vector<StudySetting>& settings,
                         const std::filesystem::path& out_dir) {
  ResumeState state;
  auto runs = read_lines(out_dir / "runs.csv");
  auto calib = read_lines(out_dir / "calib.csv");
  auto timings = read_lines(out_dir / "timings.csv");
  if (runs.empty() || runs[0] != kRunsHeader) return state;

  const std::size_t per_unit = plan.strategies.size();
  const std::size_t total_units = settings.size() * static_cast<std::size_t>(plan.runs);
  std::size_t line = 1;  // past header
  std::size_t calib_line = 1;
  std::size_t ok_units = 0;
  std::vector<std::string> kept_runs, kept_calib, kept_timings;

  for (std::size_t unit = 0; unit < total_units; ++unit) {
    if (line + per_unit > runs.size()) break;
    const StudySetting& setting = settings[unit / plan.runs];
    const int run = static_cast<int>(unit % plan.runs);

    bool unit_ok = true;
    std::size_t unit_calib_rows = 0;
    for (std::size_t s = 0; s < per_unit && unit_ok; ++s) {
      auto fields = csv::split_line(runs[line + s]);
      if (fields.size() < 14 || fields[0] != setting.id ||
          fields[4] != std::to_string(run) || fields[5] != plan.strategies[s]) {
        unit_ok = false;
        break;
      }
      if (fields[6] == "1") unit_calib_rows += 20;
    }
    if (!unit_ok) break;
    if (calib_line + unit_calib_rows > calib.size()) break;

    for (std::size_t s = 0; s < per_unit; ++s) kept_runs.push_back(runs[line + s]);
    for (std::size_t c = 0; c < unit_calib_rows; ++c) kept_calib.push_back(calib[calib_line + c]);
    if (1 + (unit + 1) * per_unit <= timings.size()) {
      for (std::size_t s = 0; s < per_unit; ++s) {
        kept_timings.push_back(timings[1 + unit * per_unit + s]);
      }
    }
    line += per_unit;
    calib_line += unit_calib_rows;
    ++ok_units;
  }

  state.units = ok_units;
  state.runs_lines = std::move(kept_runs);
  state.calib_lines = std::move(kept_calib);
  state.timings_lines = std::move(kept_timings);
  return state;
}

void write_meta(const StudyPlan& plan, const std::vector<StudySetting>& settings,
                const std::vector<TrueModel>& models, const std::filesystem::path& out_dir) {
  nlohmann::json meta;
  meta["tool"] = "itepred 0.1.0";
  meta["plan"]["ns"] = plan.ns;
  meta["plan"]["beta_t_values"] = plan.beta_t_values;
  meta["plan"]["heterogeneous"] = plan.heterogeneous;
  meta["plan"]["runs"] = plan.runs;
  meta["plan"]["validation_n"] = plan.validation_n;
  meta["plan"]["strategies"] = plan.strategies;
  meta["plan"]["base_seed"] = plan.base_seed;
  meta["plan"]["perturbation_seed"] = plan.perturbation_seed;
  Eigen::VectorXd u = make_perturbations(plan.perturbation_seed);
  meta["perturbations"] = std::vector<double>(u.data(), u.data() + u.size());
  meta["penalty_defaults"] = {{"path_length", 30}, {"lambda_min_ratio", 1e-3},
                              {"cv_folds", 10}, {"hgl_group_weight", "sqrt(3)"}};
  meta["main_effect_orientation"] = "all_positive";
  for (std::size_t i = 0; i < settings.size(); ++i) {
    nlohmann::json s;
    s["id"] = settings[i].id;
    s["n"] = settings[i].n;
    s["beta_t"] = settings[i].beta_t;
    s["heterogeneous"] = settings[i].heterogeneous;
    s["solved_intercept"] = models[i].beta0;
    s["sigma_control"] = models[i].sigma_control;
    s["sigma_treated"] = models[i].sigma_treated;
    meta["settings"].push_back(s);
  }
  std::ofstream out(out_dir / "meta.json");
  if (!out) fail(ErrorCode::StudyAborted, "cannot write meta.json");
  out << meta.dump(2) << "\n";
}

}  // namespace

std::vector<StudySetting> StudyPlan::settings() const {
  std::vector<StudySetting> out;
  for (int n : ns) {
    for (double bt : beta_t_values) {
      for (bool het : heterogeneous) {
        out.push_back({n, bt, het, setting_label(n, bt, het)});
      }
    }
  }
  return out;
}

StudyPlan StudyPlan::paper_defaults() {
  StudyPlan plan;
  plan.ns = {400, 1200, 3600};
  plan.beta_t_values = {std::log(0.6), 0.0};
  plan.heterogeneous = {false, true};
  plan.runs = 250;
  plan.validation_n = 10000;
  plan.strategies = all_strategy_ids();
  plan.base_seed = 20240101;
  plan.perturbation_seed = kDefaultPerturbationSeed;
  return plan;
}

std::vector<RunRecord> run_study_records(const StudyPlan& plan) {
  if (plan.validation_n < 1000) fail(ErrorCode::InvalidSpec, "validation_n must be >= 1000");
  if (plan.runs < 1) fail(ErrorCode::InvalidSpec, "runs must be >= 1");
  const auto settings = plan.settings();
  std::vector<TrueModel> models;
  for (const auto& setting : settings) {
    DgmConfig config;
    config.n = setting.n;
    config.beta_t = setting.beta_t;
    config.heterogeneous = setting.heterogeneous;
    config.perturbation_seed = plan.perturbation_seed;
    models.push_back(make_true_model(config));
  }

  const std::size_t total = settings.size() * static_cast<std::size_t>(plan.runs);
  std::vector<std::vector<RunRecord>> results(total);
  std::atomic<std::size_t> next{0};
  const unsigned n_threads =
      plan.threads > 0 ? static_cast<unsigned>(plan.threads)
                       : std::max(1u, std::thread::hardware_concurrency());
  auto worker = [&]() {
    while (true) {
      const std::size_t unit = next.fetch_add(1);
      if (unit >= total) return;
      const std::size_t si = unit / plan.runs;
      results[unit] = run_unit(plan, settings[si], models[si], static_cast<int>(unit % plan.runs));
    }
  };
  std::vector<std::thread> pool;
  for (unsigned t = 0; t + 1 < n_threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  std::vector<RunRecord> flat;
  for (auto& unit : results) {
    for (auto& record : unit) flat.push_back(std::move(record));
  }
  return flat;
}

void run_study(const StudyPlan& plan, const std::filesystem::path& out_dir, bool resume) {
  if (plan.validation_n < 1000) fail(ErrorCode::InvalidSpec, "validation_n must be >= 1000");
  if (plan.runs < 1) fail(ErrorCode::InvalidSpec, "runs must be >= 1");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) fail(ErrorCode::StudyAborted, "cannot create " + out_dir.string());

  const auto settings = plan.settings();
  std::vector<TrueModel> models;
  for (const auto& setting : settings) {
    DgmConfig config;
    config.n = setting.n;
    config.beta_t = setting.beta_t;
    config.heterogeneous = setting.heterogeneous;
    config.perturbation_seed = plan.perturbation_seed;
    models.push_back(make_true_model(config));
  }
  write_meta(plan, settings, models, out_dir);

  ResumeState kept;
  if (resume) kept = resume_state(plan, settings, out_dir);

  std::ofstream runs_out(out_dir / "runs.csv", std::ios::trunc);
  std::ofstream calib_out(out_dir / "calib.csv", std::ios::trunc);
  std::ofstream timings_out(out_dir / "timings.csv", std::ios::trunc);
  if (!runs_out || !calib_out || !timings_out) {
    fail(ErrorCode::StudyAborted, "cannot open output files in " + out_dir.string());
  }
  runs_out << kRunsHeader << "\n";
  calib_out << kCalibHeader << "\n";
  timings_out << kTimingsHeader << "\n";
  for (const auto& line : kept.runs_lines) runs_out << line << "\n";
  for (const auto& line : kept.calib_lines) calib_out << line << "\n";
  for (const auto& line : kept.timings_lines) timings_out << line << "\n";
  runs_out.flush();
  calib_out.flush();
  timings_out.flush();

  const std::size_t total = settings.size() * static_cast<std::size_t>(plan.runs);
  const std::size_t start = kept.units;

  std::atomic<std::size_t> next{start};
  std::map<std::size_t, std::vector<RunRecord>> done;
  std::mutex mutex;
  std::condition_variable cv;

  const unsigned n_threads =
      plan.threads > 0 ? static_cast<unsigned>(plan.threads)
                       : std::max(1u, std::thread::hardware_concurrency());
  auto worker = [&]() {
    while (true) {
      const std::size_t unit = next.fetch_add(1);
      if (unit >= total) return;
      const std::size_t si = unit / plan.runs;
      auto records =
          run_unit(plan, settings[si], models[si], static_cast<int>(unit % plan.runs));
      {
        std::lock_guard lock(mutex);
        done[unit] = std::move(records);
      }
      cv.notify_all();
    }
  };
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < n_threads; ++t) pool.emplace_back(worker);

  // Single writer appends complete units in order, so a crash leaves a clean
  // prefix behind.
  for (std::size_t unit = start; unit < total; ++unit) {
    std::vector<RunRecord> records;
    {
      std::unique_lock lock(mutex);
      cv.wait(lock, [&] { return done.count(unit) > 0; });
      records = std::move(done[unit]);
      done.erase(unit);
    }
    for (const auto& r : records) {
      runs_out << runs_line(r) << "\n";
      if (r.ok) {
        for (std::size_t b = 0; b < r.calibration.bins.size(); ++b) {
          const auto& bin = r.calibration.bins[b];
          calib_out << csv::quote(r.setting_id) << ',' << r.run << ',' << csv::quote(r.strategy)
                    << ',' << b << ',' << csv::format_double(bin.mean_predicted) << ','
                    << csv::format_double(bin.mean_reference) << ',' << bin.count << "\n";
        }
      }
      timings_out << csv::quote(r.setting_id) << ',' << r.run << ',' << csv::quote(r.strategy)
                  << ',' << csv::format_double(r.wall_ms) << "\n";
    }
    runs_out.flush();
    calib_out.flush();
    timings_out.flush();
    if (!runs_out || !calib_out || !timings_out) {
      for (auto& t : pool) t.detach();
      fail(ErrorCode::StudyAborted, "write failure in " + out_dir.string());
    }
  }
  for (auto& t : pool) t.join();

  // Tidy per-cell aggregate alongside the raw records.
  write_aggregate_csv(out_dir / "aggregate.csv", aggregate(read_run_records(out_dir / "runs.csv")));
}

std::vector<RunRecord> read_run_records(const std::filesystem::path& runs_csv) {
  auto lines = read_lines(runs_csv);
  if (lines.empty() || lines[0] != kRunsHeader) {
    fail(ErrorCode::IoError, "not a runs.csv file: " + runs_csv.string());
  }
  std::vector<RunRecord> records;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    auto f = csv::split_line(lines[i]);
    if (f.size() < 14) fail(ErrorCode::IoError, "malformed runs.csv line " + std::to_string(i));
    RunRecord r;
    r.setting_id = f[0];
    r.n = std::stoi(f[1]);
    r.beta_t = std::stod(f[2]);
    r.heterogeneous = f[3] == "1";
    r.run = std::stoi(f[4]);
    r.strategy = f[5];
    r.ok = f[6] == "1";
    r.error = f[7];
    r.rmspe = std::stod(f[8]);
    r.q90_delta = std::stod(f[9]);
    r.q90_risk = std::stod(f[10]);
    r.converged = f[11] == "1";
    r.chosen_lambda = std::stod(f[12]);
    r.nonzero = std::stoi(f[13]);
    records.push_back(std::move(r));
  }
  return records;
}

std::vector<AggregateCell> aggregate(const std::vector<RunRecord>& records) {
  std::vector<AggregateCell> cells;
  std::map<std::pair<std::string, std::string>, std::size_t> index;
  for (const auto& r : records) {
    auto key = std::make_pair(r.setting_id, r.strategy);
    auto it = index.find(key);
    if (it == index.end()) {
      index.emplace(key, cells.size());
      AggregateCell cell;
      cell.setting_id = r.setting_id;
      cell.n = r.n;
      cell.beta_t = r.beta_t;
      cell.heterogeneous = r.heterogeneous;
      cell.strategy = r.strategy;
      cells.push_back(cell);
      it = index.find(key);
    }
    AggregateCell& cell = cells[it->second];
    if (r.ok) {
      ++cell.runs_ok;
      cell.mean_rmspe += r.rmspe;
      cell.mean_q90_delta += r.q90_delta;
      cell.mean_q90_risk += r.q90_risk;
    } else {
      ++cell.runs_err;
    }
  }
  for (auto& cell : cells) {
    if (cell.runs_ok == 0) {
      cell.mean_rmspe = cell.mean_q90_delta = cell.mean_q90_risk =
          std::numeric_limits<double>::quiet_NaN();
      cell.se_rmspe = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    cell.mean_rmspe /= cell.runs_ok;
    cell.mean_q90_delta /= cell.runs_ok;
    cell.mean_q90_risk /= cell.runs_ok;
  }
  // Second pass for the standard errors.
  std::map<std::pair<std::string, std::string>, double> ss;
  for (const auto& r : records) {
    if (!r.ok) continue;
    auto key = std::make_pair(r.setting_id, r.strategy);
    const AggregateCell& cell = cells[index[key]];
    const double d = r.rmspe - cell.mean_rmspe;
    ss[key] += d * d;
  }
  for (auto& cell : cells) {
    if (cell.runs_ok >= 2) {
      const double var = ss[{cell.setting_id, cell.strategy}] / (cell.runs_ok - 1);
      cell.se_rmspe = std::sqrt(var / cell.runs_ok);
    } else if (cell.runs_ok == 1) {
      cell.se_rmspe = std::numeric_limits<double>::quiet_NaN();
    }
  }
  return cells;
}

void write_aggregate_csv(const std::filesystem::path& path,
                         const std::vector<AggregateCell>& cells) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::IoError, "cannot write " + path.string());
  out << "setting,n,beta_t,heterogeneous,strategy,runs_ok,runs_err,mean_rmspe,se_rmspe,"
         "mean_q90_delta,mean_q90_risk\n";
  for (const auto& c : cells) {
    out << csv::quote(c.setting_id) << ',' << c.n << ',' << csv::format_double(c.beta_t) << ','
        << (c.heterogeneous ? 1 : 0) << ',' << csv::quote(c.strategy) << ',' << c.runs_ok << ','
        << c.runs_err << ',' << csv::format_double(c.mean_rmspe) << ','
        << csv::format_double(c.se_rmspe) << ',' << csv::format_double(c.mean_q90_delta) << ','
        << csv::format_double(c.mean_q90_risk) << "\n";
  }
}

}  // namespace itepred
