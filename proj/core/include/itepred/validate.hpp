#pragma once

#include <cstdint>
#include <vector>

#include "itepred/dataset.hpp"
#include "itepred/metrics.hpp"
#include "itepred/strategies.hpp"

namespace itepred {

enum class BootstrapEval {
  OutOfBag,        // evaluate on the rows not drawn into the resample
  OriginalSample,  // evaluate the resample fit on the full original sample
};

struct BootstrapRecord {
  int replicate = 0;
  double brier = 0.0;
  double nagelkerke = 0.0;
  int n_eval = 0;
};

struct BootstrapResult {
  std::vector<BootstrapRecord> records;
  double mean_brier = 0.0;
  double mean_nagelkerke = 0.0;
  int redraws = 0;  // replicates redrawn because the out-of-bag set was empty
};

/// Bootstrap internal validation: per replicate, resample n rows with
/// replacement, refit the strategy, and score Brier and Nagelkerke R^2 on
/// the evaluation rows (out-of-bag by default). The Nagelkerke null model is
/// an intercept-only fit on the same evaluation rows. Deterministic given
/// the seed.
BootstrapResult bootstrap_validate(const Dataset& data, const StrategySpec& spec, int b,
                                   std::uint64_t seed,
                                   BootstrapEval eval = BootstrapEval::OutOfBag);

/// Groups subjects into quantiles of delta_hat and compares the mean
/// prediction against the observed effect mean(Y|A=1) - mean(Y|A=0) within
/// each group, with the standard error of the difference in proportions.
/// Groups missing an arm are flagged invalid, not fabricated.
CalibrationBins te_quintile_calibration(const DeltaPredictor& predictor, const Dataset& data,
                                        int n_groups);

}  // namespace itepred
