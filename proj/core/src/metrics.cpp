#include "itepred/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "itepred/error.hpp"

namespace itepred {

namespace {

void check_lengths(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() != b.size()) fail(ErrorCode::LengthMismatch, "vector length mismatch");
  if (a.size() == 0) fail(ErrorCode::LengthMismatch, "empty input");
}

}  // namespace

double rmspe(const Eigen::VectorXd& predicted, const Eigen::VectorXd& truth) {
  check_lengths(predicted, truth);
  return std::sqrt((predicted - truth).squaredNorm() / static_cast<double>(predicted.size()));
}

double quantile_type7(std::vector<double> values, double q) {
  if (values.empty()) fail(ErrorCode::LengthMismatch, "empty sample");
  if (!(q >= 0.0 && q <= 1.0)) fail(ErrorCode::InvalidSpec, "q outside [0,1]");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * q;
  const std::size_t lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

double quantile_abs_error(const Eigen::VectorXd& predicted, const Eigen::VectorXd& truth,
                          double q) {
  check_lengths(predicted, truth);
  std::vector<double> errors(predicted.size());
  for (Eigen::Index i = 0; i < predicted.size(); ++i) {
    errors[static_cast<std::size_t>(i)] = std::abs(predicted[i] - truth[i]);
  }
  return quantile_type7(std::move(errors), q);
}

std::vector<std::vector<int>> quantile_groups(const Eigen::VectorXd& values, int n_groups) {
  const int n = static_cast<int>(values.size());
  if (n_groups < 1) fail(ErrorCode::InvalidSpec, "need at least one group");
  if (n < n_groups) fail(ErrorCode::TooFewSubjects, "fewer subjects than groups");

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return values[a] < values[b]; });

  std::vector<std::vector<int>> groups(n_groups);
  const int base = n / n_groups;
  const int rem = n % n_groups;
  int pos = 0;
  for (int g = 0; g < n_groups; ++g) {
    const int size = base + (g < rem ? 1 : 0);
    groups[g].assign(order.begin() + pos, order.begin() + pos + size);
    pos += size;
  }
  return groups;
}

CalibrationBins calibration_bins(const Eigen::VectorXd& predicted,
                                 const Eigen::VectorXd& reference, int n_bins) {
  check_lengths(predicted, reference);
  CalibrationBins out;
  for (const auto& group : quantile_groups(predicted, n_bins)) {
    CalibrationBin bin;
    bin.count = static_cast<int>(group.size());
    for (int i : group) {
      bin.mean_predicted += predicted[i];
      bin.mean_reference += reference[i];
    }
    bin.mean_predicted /= bin.count;
    bin.mean_reference /= bin.count;
    out.bins.push_back(bin);
  }
  return out;
}

double brier(const Eigen::VectorXd& risk, const Eigen::VectorXd& outcome) {
  check_lengths(risk, outcome);
  return (risk - outcome).squaredNorm() / static_cast<double>(risk.size());
}

double nagelkerke_r2(double model_ll, double null_ll, int n) {
  if (null_ll > 1e-12) fail(ErrorCode::InvalidSpec, "null log-likelihood must be <= 0");
  if (null_ll > -1e-12) {
    fail(ErrorCode::DegenerateNull, "all outcomes identical; R^2 undefined");
  }
  const double scale = 2.0 / static_cast<double>(n);
  return (1.0 - std::exp(scale * (null_ll - model_ll))) / (1.0 - std::exp(scale * null_ll));
}

double c_statistic(const Eigen::VectorXd& risk, const Eigen::VectorXd& outcome) {
  check_lengths(risk, outcome);
  const Eigen::Index n = risk.size();
  const double n1 = outcome.sum();
  const double n0 = static_cast<double>(n) - n1;
  if (n1 == 0.0 || n0 == 0.0) fail(ErrorCode::SingleClass, "both outcome classes required");

  // Rank-sum with midranks for ties: c = (R1 - n1(n1+1)/2) / (n1 n0).
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) { return risk[a] < risk[b]; });

  double rank_sum_events = 0.0;
  Eigen::Index i = 0;
  while (i < n) {
    Eigen::Index j = i;
    while (j < n && risk[order[j]] == risk[order[i]]) ++j;
    const double midrank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
    for (Eigen::Index k = i; k < j; ++k) {
      if (outcome[order[k]] == 1.0) rank_sum_events += midrank;
    }
    i = j;
  }
  return (rank_sum_events - n1 * (n1 + 1.0) / 2.0) / (n1 * n0);
}

}  // namespace itepred
