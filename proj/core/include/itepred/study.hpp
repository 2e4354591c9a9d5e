#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "itepred/dgm.hpp"
#include "itepred/metrics.hpp"
#include "itepred/strategies.hpp"

namespace itepred {

struct StudySetting {
  int n = 0;
  double beta_t = 0.0;
  bool heterogeneous = false;
  std::string id;
};

/// Factorial simulation plan: settings = ns x beta_t_values x heterogeneous.
struct StudyPlan {
  std::vector<int> ns;
  std::vector<double> beta_t_values;
  std::vector<bool> heterogeneous;
  int runs = 250;
  int validation_n = 10000;
  std::vector<std::string> strategies;
  std::uint64_t base_seed = 1;
  std::uint64_t perturbation_seed = kDefaultPerturbationSeed;
  int threads = 0;  // 0 = hardware concurrency

  std::vector<StudySetting> settings() const;
  static StudyPlan paper_defaults();
};

struct RunRecord {
  std::string setting_id;
  int n = 0;
  double beta_t = 0.0;
  bool heterogeneous = false;
  int run = 0;
  std::string strategy;
  bool ok = false;
  std::string error;
  double rmspe = 0.0;
  double q90_delta = 0.0;
  double q90_risk = 0.0;
  bool converged = false;
  double chosen_lambda = 0.0;
  int nonzero = 0;
  double wall_ms = 0.0;  // written to timings.csv, not to the result CSV
  CalibrationBins calibration;
};

/// Runs the study: per (setting, run), a development trial of the setting's
/// size and a validation trial of validation_n rows are generated from the
/// same true model; every strategy is fitted on the development set and its
/// delta_hat on the validation covariates scored against the validation
/// true delta. Records append to <out>/runs.csv (and 20-bin calibration data
/// to <out>/calib.csv) in deterministic order, with a meta.json sidecar;
/// wall-clock times go to timings.csv so the result files are byte-stable.
/// With resume, complete (setting, run) units already on disk are kept and
/// the study continues after them. Strategy failures become error records;
/// only I/O failures abort.
void run_study(const StudyPlan& plan, const std::filesystem::path& out_dir, bool resume = false);

struct AggregateCell {
  std::string setting_id;
  int n = 0;
  double beta_t = 0.0;
  bool heterogeneous = false;
  std::string strategy;
  int runs_ok = 0;
  int runs_err = 0;
  double mean_rmspe = 0.0;
  double se_rmspe = 0.0;
  double mean_q90_delta = 0.0;
  double mean_q90_risk = 0.0;
};

/// Per-(setting, strategy) mean rMSPE with standard errors (sd/sqrt(runs)).
/// Cells where every run errored are flagged (runs_ok = 0), not dropped.
std::vector<AggregateCell> aggregate(const std::vector<RunRecord>& records);

/// Reads RunRecords back from a runs.csv produced by run_study.
std::vector<RunRecord> read_run_records(const std::filesystem::path& runs_csv);

void write_aggregate_csv(const std::filesystem::path& path,
                         const std::vector<AggregateCell>& cells);

/// In-memory variant used by tests and the acceptance suite: computes all
/// records without touching the filesystem.
std::vector<RunRecord> run_study_records(const StudyPlan& plan);

}  // namespace itepred
