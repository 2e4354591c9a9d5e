#include <doctest.h>

#include <cmath>
#include <random>

#include "itepred/dgm.hpp"
#include "itepred/glm.hpp"
#include "itepred/metrics.hpp"
#include "itepred/rng.hpp"
#include "itepred/validate.hpp"

using namespace itepred;

TEST_CASE("rmspe: identity, shift, and hand value") {
  Eigen::VectorXd a(4), b(4);
  a << 0.1, -0.2, 0.3, 0.0;
  CHECK(rmspe(a, a) == 0.0);
  b = a.array() + 0.25;
  CHECK(rmspe(b, a) == doctest::Approx(0.25).epsilon(1e-12));

  Eigen::VectorXd p(2), t(2);
  p << 0.1, 0.3;
  t << 0.2, 0.2;
  CHECK(rmspe(p, t) == doctest::Approx(0.1).epsilon(1e-12));

  Eigen::VectorXd short_vec(1);
  short_vec << 0.0;
  CHECK_THROWS_AS(rmspe(short_vec, a), Error);
}

TEST_CASE("rmspe: symmetry and triangle bound on random data") {
  auto engine = make_engine({314});
  NormalSampler normal(engine);
  Eigen::VectorXd a(50), b(50), c(50);
  for (int i = 0; i < 50; ++i) {
    a[i] = 0.2 * normal();
    b[i] = 0.2 * normal();
    c[i] = 0.2 * normal();
  }
  CHECK(rmspe(a, b) == doctest::Approx(rmspe(b, a)));
  CHECK(rmspe(a, c) <= rmspe(a, b) + rmspe(b, c) + 1e-12);
}

TEST_CASE("quantile_abs_error: type-7 hand computations") {
  Eigen::VectorXd t = Eigen::VectorXd::Zero(5);
  Eigen::VectorXd p(5);
  p << 0.0, 0.1, 0.2, 0.3, 0.4;
  CHECK(quantile_abs_error(p, t, 0.9) == doctest::Approx(0.36).epsilon(1e-12));
  CHECK(quantile_abs_error(t, t, 0.9) == 0.0);
  Eigen::VectorXd constant = Eigen::VectorXd::Constant(7, 0.1);
  CHECK(quantile_abs_error(constant, Eigen::VectorXd::Zero(7), 0.9) ==
        doctest::Approx(0.1).epsilon(1e-12));
}

TEST_CASE("calibration_bins: diagonal, ties, and counting") {
  Eigen::VectorXd p(100), r(100);
  for (int i = 0; i < 100; ++i) {
    p[i] = i / 100.0;
    r[i] = p[i];
  }
  CalibrationBins bins = calibration_bins(p, r, 20);
  REQUIRE(bins.bins.size() == 20);
  for (const auto& bin : bins.bins) {
    CHECK(bin.count == 5);
    CHECK(bin.mean_predicted == doctest::Approx(bin.mean_reference).epsilon(1e-12));
  }

  // Constant predictions: stable tie handling by original order.
  Eigen::VectorXd constant = Eigen::VectorXd::Zero(10);
  Eigen::VectorXd ref(10);
  for (int i = 0; i < 10; ++i) ref[i] = i;
  CalibrationBins tied = calibration_bins(constant, ref, 2);
  CHECK(tied.bins[0].mean_reference == doctest::Approx(2.0));  // rows 0..4
  CHECK(tied.bins[1].mean_reference == doctest::Approx(7.0));  // rows 5..9

  CHECK_THROWS_AS(calibration_bins(constant, ref, 11), Error);
}

TEST_CASE("brier: trivial and hand values, plus the decomposition sanity") {
  Eigen::VectorXd y(2);
  y << 1.0, 0.0;
  CHECK(brier(y, y) == 0.0);
  CHECK(brier(Eigen::VectorXd::Constant(2, 0.5), y) == doctest::Approx(0.25));
  Eigen::VectorXd mu(2);
  mu << 0.8, 0.3;
  CHECK(brier(mu, y) == doctest::Approx(0.065).epsilon(1e-12));

  // For a constant prediction pbar: Brier = pbar(1-pbar) + (pbar - ybar)^2
  // when outcomes are Bernoulli draws with mean ybar; exact algebraic
  // identity on any 0/1 vector.
  auto engine = make_engine({271});
  Eigen::VectorXd outcomes(500);
  for (int i = 0; i < 500; ++i) outcomes[i] = canonical_u01(engine) < 0.3 ? 1.0 : 0.0;
  const double pbar = 0.4;
  const double ybar = outcomes.mean();
  const double expected = ybar * (1 - ybar) + (pbar - ybar) * (pbar - ybar);
  CHECK(brier(Eigen::VectorXd::Constant(500, pbar), outcomes) ==
        doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("nagelkerke_r2: normalization and the hand-computed example") {
  CHECK(nagelkerke_r2(-40.0, -40.0, 100) == doctest::Approx(0.0));
  CHECK(nagelkerke_r2(0.0, -60.0, 100) == doctest::Approx(1.0));

  // n=4, y=(1,1,0,0), mu=(0.9,0.8,0.2,0.1).
  Eigen::VectorXd y(4), mu(4);
  y << 1, 1, 0, 0;
  mu << 0.9, 0.8, 0.2, 0.1;
  const double ll1 = log_likelihood(mu, y);
  const double ll0 = 4 * std::log(0.5);  // ybar = 1/2
  const double expected =
      (1 - std::exp(2.0 / 4.0 * (ll0 - ll1))) / (1 - std::exp(2.0 / 4.0 * ll0));
  CHECK(nagelkerke_r2(ll1, ll0, 4) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(nagelkerke_r2(ll1, ll0, 4) <= 1.0);

  CHECK_THROWS_AS(nagelkerke_r2(-1.0, 0.0, 10), Error);
}

TEST_CASE("c_statistic: trivial orderings and the brute-force example") {
  Eigen::VectorXd risk(4), y(4);
  risk << 0.1, 0.4, 0.35, 0.8;
  y << 0, 0, 1, 1;
  CHECK(c_statistic(risk, y) == doctest::Approx(0.75).epsilon(1e-12));

  Eigen::VectorXd sorted(4);
  sorted << 0.1, 0.2, 0.8, 0.9;
  CHECK(c_statistic(sorted, y) == doctest::Approx(1.0));
  CHECK(c_statistic(Eigen::VectorXd::Constant(4, 0.3), y) == doctest::Approx(0.5));

  Eigen::VectorXd ones = Eigen::VectorXd::Ones(4);
  CHECK_THROWS_AS(c_statistic(risk, ones), Error);
}

TEST_CASE("c_statistic: rank-sum equals brute force with ties") {
  auto engine = make_engine({999});
  for (int round = 0; round < 25; ++round) {
    const int n = 20 + static_cast<int>(canonical_u01(engine) * 180);
    Eigen::VectorXd risk(n), y(n);
    bool any1 = false, any0 = false;
    for (int i = 0; i < n; ++i) {
      // Coarse grid induces plenty of ties.
      risk[i] = std::floor(canonical_u01(engine) * 10) / 10.0;
      y[i] = canonical_u01(engine) < 0.35 ? 1.0 : 0.0;
      (y[i] == 1.0 ? any1 : any0) = true;
    }
    if (!any1 || !any0) continue;

    double concordant = 0.0, total = 0.0;
    for (int i = 0; i < n; ++i) {
      if (y[i] != 1.0) continue;
      for (int j = 0; j < n; ++j) {
        if (y[j] != 0.0) continue;
        total += 1.0;
        if (risk[i] > risk[j]) concordant += 1.0;
        else if (risk[i] == risk[j]) concordant += 0.5;
      }
    }
    CHECK(c_statistic(risk, y) == doctest::Approx(concordant / total).epsilon(1e-12));
  }
}

namespace {

Dataset null_dataset(int n, double prevalence, std::uint64_t seed, int p = 2) {
  auto engine = make_engine({seed});
  NormalSampler normal(engine);
  Dataset data;
  data.covariates.resize(n, p);
  data.treatment.resize(n);
  data.outcome.resize(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < p; ++j) data.covariates(i, j) = normal();
    data.treatment[i] = canonical_u01(engine) < 0.5 ? 1.0 : 0.0;
    data.outcome[i] = canonical_u01(engine) < prevalence ? 1.0 : 0.0;
  }
  for (int j = 0; j < p; ++j) data.column_names.push_back("x" + std::to_string(j + 1));
  return data;
}

}  // namespace

TEST_CASE("bootstrap_validate: deterministic given a seed") {
  Dataset data = null_dataset(150, 0.3, 11);
  StrategySpec spec = parse_strategy("overall", 2);
  BootstrapResult a = bootstrap_validate(data, spec, 1, 77);
  BootstrapResult b = bootstrap_validate(data, spec, 1, 77);
  REQUIRE(a.records.size() == 1);
  CHECK(a.records[0].brier == b.records[0].brier);
  CHECK(a.records[0].nagelkerke == b.records[0].nagelkerke);
  CHECK(a.records[0].n_eval == b.records[0].n_eval);
}

TEST_CASE("bootstrap_validate: overall on null data lands near pbar(1-pbar)") {
  Dataset data = null_dataset(600, 0.3, 13);
  StrategySpec spec = parse_strategy("overall", 2);
  BootstrapResult result = bootstrap_validate(data, spec, 60, 5);
  const double ybar = data.outcome.mean();
  CHECK(result.mean_brier == doctest::Approx(ybar * (1 - ybar)).epsilon(0.05));
  CHECK(std::abs(result.mean_brier - ybar * (1 - ybar)) <= 0.01);
}

TEST_CASE("bootstrap_validate: out-of-bag fraction averages about 1 - 1/e") {
  Dataset data = null_dataset(300, 0.3, 17);
  StrategySpec spec = parse_strategy("overall", 2);
  BootstrapResult result = bootstrap_validate(data, spec, 200, 19);
  double mean_frac = 0.0;
  for (const auto& r : result.records) mean_frac += r.n_eval / 300.0;
  mean_frac /= result.records.size();
  CHECK(mean_frac == doctest::Approx(std::exp(-1.0)).epsilon(0.06));
  CHECK(std::abs(mean_frac - std::exp(-1.0)) <= 0.02);
}

TEST_CASE("bootstrap_validate: flexible interaction models on small null data overfit") {
  Dataset data = null_dataset(150, 0.35, 23, 6);
  StrategySpec spec = parse_strategy("hte-ridge", 6);
  spec.cv_folds = 5;
  spec.path_length = 12;
  BootstrapResult result = bootstrap_validate(data, spec, 100, 29);
  CHECK(result.mean_nagelkerke <= 0.01);
}

TEST_CASE("bootstrap_validate: original-sample mode scores every row") {
  Dataset data = null_dataset(120, 0.3, 31);
  StrategySpec spec = parse_strategy("overall", 2);
  BootstrapResult result =
      bootstrap_validate(data, spec, 3, 37, BootstrapEval::OriginalSample);
  for (const auto& r : result.records) CHECK(r.n_eval == 120);
}

TEST_CASE("te_quintile_calibration: counting and diagonal behavior at scale") {
  DgmConfig config;
  config.n = 100000;
  config.beta_t = std::log(0.6);
  config.heterogeneous = true;
  config.run_seed = 41;
  SimulatedTrial trial = gen_trial(config);
  TrueModel model = make_true_model(config);

  // Use the true model as the predictor: groups should sit on the diagonal
  // within ~2 standard errors.
  DeltaPredictor oracle;
  oracle.id = "oracle";
  oracle.kind = StrategyKind::Hte;
  oracle.n_covariates = 12;
  ModelPredictor mp;
  mp.spec = DesignSpec::all_interactions(12, false);
  mp.coef.beta0 = model.beta0;
  mp.coef.beta_t = model.beta_t;
  mp.coef.beta_m = model.beta_m;
  mp.coef.beta_z = model.beta_z;
  oracle.model = mp;

  CalibrationBins bins = te_quintile_calibration(oracle, trial.dataset, 5);
  REQUIRE(bins.bins.size() == 5);
  for (const auto& bin : bins.bins) {
    CHECK(bin.count == 20000);
    REQUIRE(bin.valid);
    CHECK(std::abs(bin.mean_predicted - bin.mean_reference) <= 2.5 * bin.se);
  }
}

TEST_CASE("te_quintile_calibration: groups of 20 for n=100, k=5") {
  Dataset data = null_dataset(100, 0.3, 43);
  DeltaPredictor predictor = fit_strategy(parse_strategy("hom-ml", 2), data, 3);
  CalibrationBins bins = te_quintile_calibration(predictor, data, 5);
  REQUIRE(bins.bins.size() == 5);
  for (const auto& bin : bins.bins) CHECK(bin.count == 20);
}

TEST_CASE("te_quintile_calibration: single-arm groups are flagged, not fabricated") {
  Dataset data = null_dataset(60, 0.4, 47);
  // Force the lowest-delta group to be all-control by rigging treatment:
  // constant predictor makes groups follow original order.
  for (int i = 0; i < 12; ++i) data.treatment[i] = 0.0;
  DeltaPredictor predictor;
  predictor.id = "const";
  predictor.kind = StrategyKind::Overall;
  predictor.n_covariates = 2;
  ModelPredictor mp;
  mp.spec.include_treatment = true;
  mp.coef.beta_t = 0.0;
  mp.coef.beta_m = Eigen::VectorXd::Zero(0);
  mp.coef.beta_z = Eigen::VectorXd::Zero(0);
  mp.spec.main_columns = {};
  predictor.model = mp;

  CalibrationBins bins = te_quintile_calibration(predictor, data, 5);
  CHECK_FALSE(bins.bins[0].valid);
}
