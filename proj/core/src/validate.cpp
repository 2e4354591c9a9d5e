#include "itepred/validate.hpp"

#include <cmath>

#include "itepred/glm.hpp"
#include "itepred/rng.hpp"

namespace itepred {

BootstrapResult bootstrap_validate(const Dataset& data, const StrategySpec& spec, int b,
                                   std::uint64_t seed, BootstrapEval eval) {
  if (b < 1) fail(ErrorCode::InvalidSpec, "need at least one bootstrap replicate");
  validate_dataset(data);
  const int n = static_cast<int>(data.n());

  BootstrapResult result;
  for (int rep = 0; rep < b; ++rep) {
    std::vector<int> draws(n);
    std::vector<int> eval_rows;
    int attempts = 0;
    while (true) {
      auto engine = make_engine({seed, static_cast<std::uint64_t>(rep),
                                 static_cast<std::uint64_t>(attempts)});
      std::vector<bool> in_bag(n, false);
      for (int i = 0; i < n; ++i) {
        const int idx = static_cast<int>(canonical_u01(engine) * n);
        draws[i] = idx;
        in_bag[idx] = true;
      }
      eval_rows.clear();
      if (eval == BootstrapEval::OriginalSample) {
        for (int i = 0; i < n; ++i) eval_rows.push_back(i);
        break;
      }
      for (int i = 0; i < n; ++i) {
        if (!in_bag[i]) eval_rows.push_back(i);
      }
      if (!eval_rows.empty()) break;
      ++result.redraws;
      if (++attempts >= 10) {
        fail(ErrorCode::AllInBag, "replicate kept drawing every row into the bag");
      }
    }

    Dataset resample = subset_rows(data, draws);
    DeltaPredictor fit =
        fit_strategy(spec, resample, derive_seed({seed, 0xb0, static_cast<std::uint64_t>(rep)}));

    Dataset held = subset_rows(data, eval_rows);
    Eigen::VectorXd risk = predict_assigned_risk(fit, held.covariates, held.treatment);

    BootstrapRecord record;
    record.replicate = rep;
    record.n_eval = static_cast<int>(eval_rows.size());
    record.brier = brier(risk, held.outcome);

    const double model_ll = log_likelihood(risk, held.outcome);
    const double ybar = held.outcome.mean();
    if (ybar <= 0.0 || ybar >= 1.0) {
      fail(ErrorCode::DegenerateNull, "evaluation rows have a single outcome class");
    }
    const double null_ll = static_cast<double>(held.n()) *
                           (ybar * std::log(ybar) + (1.0 - ybar) * std::log(1.0 - ybar));
    record.nagelkerke = nagelkerke_r2(model_ll, null_ll, static_cast<int>(held.n()));
    result.records.push_back(record);
  }

  for (const auto& record : result.records) {
    result.mean_brier += record.brier;
    result.mean_nagelkerke += record.nagelkerke;
  }
  result.mean_brier /= static_cast<double>(result.records.size());
  result.mean_nagelkerke /= static_cast<double>(result.records.size());
  return result;
}

CalibrationBins te_quintile_calibration(const DeltaPredictor& predictor, const Dataset& data,
                                        int n_groups) {
  validate_dataset(data);
  Eigen::VectorXd delta = predict_delta(predictor, data.covariates);

  CalibrationBins out;
  for (const auto& group : quantile_groups(delta, n_groups)) {
    CalibrationBin bin;
    bin.count = static_cast<int>(group.size());
    double sum_delta = 0.0;
    double n1 = 0.0, n0 = 0.0, y1 = 0.0, y0 = 0.0;
    for (int i : group) {
      sum_delta += delta[i];
      if (data.treatment[i] == 1.0) {
        n1 += 1.0;
        y1 += data.outcome[i];
      } else {
        n0 += 1.0;
        y0 += data.outcome[i];
      }
    }
    bin.mean_predicted = sum_delta / bin.count;
    if (n1 == 0.0 || n0 == 0.0) {
      bin.valid = false;  // a group without both arms is flagged, not scored
      out.bins.push_back(bin);
      continue;
    }
    const double p1 = y1 / n1;
    const double p0 = y0 / n0;
    bin.mean_reference = p1 - p0;
    bin.se = std::sqrt(p1 * (1.0 - p1) / n1 + p0 * (1.0 - p0) / n0);
    out.bins.push_back(bin);
  }
  return out;
}

}  // namespace itepred
