#pragma once

#include <Eigen/Dense>
#include <vector>

namespace itepred {

/// Root mean squared prediction error sqrt(n^-1 sum (pred_i - truth_i)^2).
double rmspe(const Eigen::VectorXd& predicted, const Eigen::VectorXd& truth);

/// Type-7 (linear interpolation) empirical quantile of |pred_i - truth_i|.
double quantile_abs_error(const Eigen::VectorXd& predicted, const Eigen::VectorXd& truth, double q);

/// Type-7 quantile of a raw sample.
double quantile_type7(std::vector<double> values, double q);

struct CalibrationBin {
  double mean_predicted = 0.0;
  double mean_reference = 0.0;
  int count = 0;
  bool valid = true;   // false when a group cannot be scored (e.g. empty arm)
  double se = 0.0;     // only for treatment-effect calibration groups
};

struct CalibrationBins {
  std::vector<CalibrationBin> bins;
};

/// Ranks subjects by predicted value (stable in original order on ties) and
/// splits them into n_bins equal-size groups, the remainder spread over the
/// lowest bins; reports per-bin means of predicted and reference values.
CalibrationBins calibration_bins(const Eigen::VectorXd& predicted,
                                 const Eigen::VectorXd& reference, int n_bins);

/// Mean squared distance between predicted risk and binary outcome.
double brier(const Eigen::VectorXd& risk, const Eigen::VectorXd& outcome);

/// Nagelkerke R^2 = [1 - exp((2/n)(ll0 - ll1))] / [1 - exp((2/n) ll0)].
double nagelkerke_r2(double model_ll, double null_ll, int n);

/// Concordance: share of event/non-event pairs ranked correctly, ties 1/2.
/// Computed exactly via the rank-sum identity in O(n log n).
double c_statistic(const Eigen::VectorXd& risk, const Eigen::VectorXd& outcome);

/// Equal-size quantile groups of `values` (remainder spread over the lowest
/// groups), ties kept stable in original row order. Shared by calibration
/// binning and treatment-effect grouping.
std::vector<std::vector<int>> quantile_groups(const Eigen::VectorXd& values, int n_groups);

}  // namespace itepred
