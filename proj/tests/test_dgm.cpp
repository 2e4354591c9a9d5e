#include <doctest.h>

#include <cmath>

#include "itepred/dgm.hpp"
#include "itepred/glm.hpp"
#include "itepred/quadrature.hpp"
#include "itepred/rng.hpp"

using namespace itepred;

TEST_CASE("gauss_hermite: moments of the weight function") {
  GaussHermite rule = gauss_hermite(64);
  const double sqrt_pi = std::sqrt(M_PI);
  CHECK(rule.weights.sum() == doctest::Approx(sqrt_pi).epsilon(1e-12));
  double second = 0.0;
  for (int i = 0; i < 64; ++i) second += rule.weights[i] * rule.nodes[i] * rule.nodes[i];
  CHECK(second == doctest::Approx(sqrt_pi / 2.0).epsilon(1e-12));
  // E[Z^2] under N(0,1) via the expectation helper.
  CHECK(gauss_hermite_expectation(rule, 0.0, 1.0, [](double z) { return z * z; }) ==
        doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("solve_intercept: sigma 0 reduces to the logit") {
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(3);
  Eigen::MatrixXd cov = Eigen::MatrixXd::Identity(3, 3);
  CHECK(solve_intercept(beta, cov, 0.25) ==
        doctest::Approx(std::log(0.25 / 0.75)).epsilon(1e-10));
}

TEST_CASE("solve_intercept: target one half is zero by symmetry") {
  Eigen::VectorXd beta(2);
  beta << 1.0, -0.5;
  Eigen::MatrixXd cov = compound_symmetric(2, 0.1);
  CHECK(std::abs(solve_intercept(beta, cov, 0.5)) <= 1e-10);
}

TEST_CASE("solve_intercept: quadrature residual at the root") {
  DgmConfig config;
  config.n = 10;
  config.beta_t = std::log(0.6);
  TrueModel model = make_true_model(config);
  CHECK(std::abs(marginal_prevalence(model.beta0, model.sigma_control) - 0.25) <= 1e-8);
}

TEST_CASE("solve_intercept: Monte Carlo prevalence for the paper schedule") {
  DgmConfig config;
  config.n = 10;
  TrueModel model = make_true_model(config);

  auto engine = make_engine({20250810});
  const int draws = 2000000;
  double sum = 0.0;
  int left = draws;
  while (left > 0) {
    const int chunk = std::min(left, 100000);
    Eigen::MatrixXd x = gen_covariates(chunk, model.p, model.rho, engine);
    Eigen::VectorXd eta = (x * model.beta_m).array() + model.beta0;
    sum += eta.unaryExpr([](double e) { return expit(e); }).sum();
    left -= chunk;
  }
  CHECK(sum / draws == doctest::Approx(0.25).epsilon(0.002));
}

TEST_CASE("gen_covariates: empirical correlation matches rho") {
  auto engine = make_engine({5150});
  const int n = 400000;
  Eigen::MatrixXd x = gen_covariates(n, 3, 0.1, engine);
  for (int a = 0; a < 3; ++a) {
    for (int b = a + 1; b < 3; ++b) {
      const double corr = (x.col(a).array() * x.col(b).array()).mean() -
                          x.col(a).mean() * x.col(b).mean();
      CHECK(corr == doctest::Approx(0.1).epsilon(0.05));
    }
  }
  auto engine0 = make_engine({5151});
  Eigen::MatrixXd z = gen_covariates(n, 2, 0.0, engine0);
  const double corr0 =
      (z.col(0).array() * z.col(1).array()).mean() - z.col(0).mean() * z.col(1).mean();
  CHECK(std::abs(corr0) <= 0.005);
}

TEST_CASE("gen_covariates: deterministic for a fixed seed") {
  auto e1 = make_engine({42});
  auto e2 = make_engine({42});
  Eigen::MatrixXd a = gen_covariates(50, 4, 0.1, e1);
  Eigen::MatrixXd b = gen_covariates(50, 4, 0.1, e2);
  CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("make_perturbations: deterministic, in range, seed-sensitive") {
  Eigen::VectorXd u1 = make_perturbations(2059);
  Eigen::VectorXd u2 = make_perturbations(2059);
  Eigen::VectorXd u3 = make_perturbations(2060);
  REQUIRE(u1.size() == 9);
  CHECK((u1 - u2).cwiseAbs().maxCoeff() == 0.0);
  CHECK((u1 - u3).cwiseAbs().maxCoeff() > 0.0);
  CHECK(u1.cwiseAbs().maxCoeff() <= 0.05);
}

TEST_CASE("true model: schedules and arm standard deviations") {
  DgmConfig config;
  config.n = 10;
  config.beta_t = std::log(0.6);
  config.heterogeneous = true;
  TrueModel model = make_true_model(config);
  CHECK(model.beta_m[0] == 1.0);
  CHECK(model.beta_m[11] == doctest::Approx(std::pow(2.0, -5.5)));
  CHECK(model.beta_z[9] == -0.5);
  CHECK(model.beta_z[10] == -0.25);
  CHECK(model.beta_z[11] == -0.125);
  for (int k = 0; k < 9; ++k) CHECK(std::abs(model.beta_z[k]) <= 0.05);

  Eigen::MatrixXd sigma = compound_symmetric(12, 0.1);
  const double expected_sc = std::sqrt(model.beta_m.transpose() * sigma * model.beta_m);
  CHECK(model.sigma_control == doctest::Approx(expected_sc).epsilon(1e-12));

  DgmConfig hom = config;
  hom.heterogeneous = false;
  TrueModel hom_model = make_true_model(hom);
  CHECK(hom_model.beta_z.cwiseAbs().maxCoeff() == 0.0);
  CHECK(hom_model.sigma_treated == doctest::Approx(hom_model.sigma_control));
}

TEST_CASE("gen_trial: absolute null has exactly zero delta everywhere") {
  DgmConfig config;
  config.n = 5000;
  config.beta_t = 0.0;
  config.heterogeneous = false;
  config.run_seed = 7;
  SimulatedTrial trial = gen_trial(config);
  CHECK(trial.true_delta.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("gen_trial: control prevalence near the target in a large sample") {
  DgmConfig config;
  config.n = 400000;
  config.beta_t = std::log(0.6);
  config.heterogeneous = false;
  config.run_seed = 11;
  SimulatedTrial trial = gen_trial(config);
  CHECK(trial.true_risk_control.mean() == doctest::Approx(0.25).epsilon(0.01));

  // Realized control-arm outcome prevalence.
  double events = 0.0, controls = 0.0;
  for (Eigen::Index i = 0; i < trial.dataset.n(); ++i) {
    if (trial.dataset.treatment[i] == 0.0) {
      controls += 1.0;
      events += trial.dataset.outcome[i];
    }
  }
  CHECK(events / controls == doctest::Approx(0.25).epsilon(0.02));
}

TEST_CASE("gen_trial: homogeneous delta formula at x = 0") {
  DgmConfig config;
  config.n = 10;
  config.beta_t = std::log(0.6);
  TrueModel model = make_true_model(config);
  Eigen::VectorXd x0 = Eigen::VectorXd::Zero(12);
  const double delta = model.treated_risk(x0) - model.control_risk(x0);
  const double expected = expit(model.beta0 + std::log(0.6)) - expit(model.beta0);
  CHECK(delta == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("gen_trial: negative effect settings have delta < 0 for every subject") {
  DgmConfig config;
  config.n = 20000;
  config.beta_t = std::log(0.6);
  config.heterogeneous = false;
  config.run_seed = 13;
  SimulatedTrial trial = gen_trial(config);
  CHECK(trial.true_delta.maxCoeff() < 0.0);
  CHECK(trial.true_delta.minCoeff() > -1.0);
}

TEST_CASE("gen_trial: reproducible bit-exactly for one seed") {
  DgmConfig config;
  config.n = 200;
  config.beta_t = std::log(0.6);
  config.heterogeneous = true;
  config.run_seed = 17;
  SimulatedTrial a = gen_trial(config);
  SimulatedTrial b = gen_trial(config);
  CHECK((a.dataset.covariates - b.dataset.covariates).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.dataset.treatment - b.dataset.treatment).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.dataset.outcome - b.dataset.outcome).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("oracle_r2: paper-level signal in every setting family") {
  for (bool het : {false, true}) {
    for (double bt : {std::log(0.6), 0.0}) {
      DgmConfig config;
      config.n = 10;
      config.beta_t = bt;
      config.heterogeneous = het;
      config.run_seed = 19;
      const double r2 = oracle_r2(config, 100000);
      CHECK(r2 >= 0.38);
      CHECK(r2 <= 0.42);
    }
  }
}

TEST_CASE("oracle_r2: no signal when all coefficients vanish") {
  // A custom model with zero main effects: the oracle risk is flat, R2 ~ 0.
  TrueModel model;
  model.p = 4;
  model.rho = 0.0;
  model.beta_m = Eigen::VectorXd::Zero(4);
  model.beta_z = Eigen::VectorXd::Zero(4);
  model.beta_t = 0.0;
  model.beta0 = std::log(0.25 / 0.75);
  auto engine = make_engine({23});
  SimulatedTrial trial = gen_trial(model, 200000, engine);
  Eigen::VectorXd mu(200000);
  for (int i = 0; i < 200000; ++i) {
    mu[i] = trial.dataset.treatment[i] == 1.0 ? trial.true_risk_treated[i]
                                              : trial.true_risk_control[i];
  }
  const double model_ll = log_likelihood(mu, trial.dataset.outcome);
  const double ybar = trial.dataset.outcome.mean();
  const double null_ll = 200000 * (ybar * std::log(ybar) + (1 - ybar) * std::log(1 - ybar));
  const double r2 = (1 - std::exp(2.0 / 200000 * (null_ll - model_ll))) /
                    (1 - std::exp(2.0 / 200000 * null_ll));
  CHECK(std::abs(r2) <= 0.005);
}

TEST_CASE("oracle_r2: doubling the main effects increases the signal") {
  DgmConfig config;
  config.n = 10;
  config.beta_t = 0.0;
  config.run_seed = 29;
  const double base = oracle_r2(config, 100000);

  TrueModel model = make_true_model(config);
  model.beta_m *= 2.0;
  Eigen::MatrixXd sigma = compound_symmetric(12, 0.1);
  model.beta0 = solve_intercept(model.beta_m, sigma, 0.25);
  auto engine = make_engine({31});
  SimulatedTrial trial = gen_trial(model, 100000, engine);
  Eigen::VectorXd mu(100000);
  for (int i = 0; i < 100000; ++i) {
    mu[i] = trial.dataset.treatment[i] == 1.0 ? trial.true_risk_treated[i]
                                              : trial.true_risk_control[i];
  }
  const double model_ll = log_likelihood(mu, trial.dataset.outcome);
  const double ybar = trial.dataset.outcome.mean();
  const double null_ll = 100000 * (ybar * std::log(ybar) + (1 - ybar) * std::log(1 - ybar));
  const double doubled = (1 - std::exp(2.0 / 100000 * (null_ll - model_ll))) /
                         (1 - std::exp(2.0 / 100000 * null_ll));
  CHECK(doubled > base);
}

TEST_CASE("mean true delta matches the difference of arm prevalences") {
  DgmConfig config;
  config.n = 300000;
  config.beta_t = std::log(0.6);
  config.heterogeneous = true;
  config.run_seed = 37;
  SimulatedTrial trial = gen_trial(config);
  const double mean_delta = trial.true_delta.mean();
  const double diff = trial.true_risk_treated.mean() - trial.true_risk_control.mean();
  CHECK(mean_delta == doctest::Approx(diff).epsilon(1e-12));
  CHECK(mean_delta < 0.0);
}
