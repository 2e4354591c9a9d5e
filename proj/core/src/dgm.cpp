#include "itepred/dgm.hpp"

#include <cmath>

#include "itepred/glm.hpp"
#include "itepred/metrics.hpp"
#include "itepred/quadrature.hpp"
#include "itepred/rng.hpp"

namespace itepred {

namespace {

constexpr int kQuadratureNodes = 64;

const GaussHermite& quadrature_rule() {
  static const GaussHermite rule = gauss_hermite(kQuadratureNodes);
  return rule;
}

void check_rho(int p, double rho) {
  if (p < 1) fail(ErrorCode::InvalidSpec, "p must be >= 1");
  if (!(rho < 1.0) || (p > 1 && !(rho > -1.0 / (p - 1)))) {
    fail(ErrorCode::InvalidSpec, "rho outside the positive-definite range");
  }
}

}  // namespace

Eigen::MatrixXd compound_symmetric(int p, double rho) {
  check_rho(p, rho);
  Eigen::MatrixXd sigma = Eigen::MatrixXd::Constant(p, p, rho);
  sigma.diagonal().setOnes();
  return sigma;
}

double marginal_prevalence(double beta0, double sigma) {
  return gauss_hermite_expectation(quadrature_rule(), beta0, sigma,
                                   [](double eta) { return expit(eta); });
}

double solve_intercept(const Eigen::VectorXd& beta, const Eigen::MatrixXd& covariance,
                       double target) {
  if (!(target > 0.0 && target < 1.0)) {
    fail(ErrorCode::InvalidSpec, "target prevalence must be in (0,1)");
  }
  if (covariance.rows() != covariance.cols() || covariance.rows() != beta.size()) {
    fail(ErrorCode::LengthMismatch, "covariance/beta dimension mismatch");
  }
  Eigen::LLT<Eigen::MatrixXd> llt(covariance);
  if (llt.info() != Eigen::Success) {
    fail(ErrorCode::InvalidSpec, "covariance must be positive definite");
  }
  const double sigma = std::sqrt(std::max(0.0, double(beta.transpose() * covariance * beta)));

  double lo = -30.0;
  double hi = 30.0;
  auto f = [&](double b0) { return marginal_prevalence(b0, sigma) - target; };
  double flo = f(lo);
  double fhi = f(hi);
  if (flo > 0.0 || fhi < 0.0) fail(ErrorCode::NoRoot, "prevalence target not bracketed");

  // Bisection with secant acceleration; the integrand is smooth and strictly
  // increasing in beta0.
  double x = 0.5 * (lo + hi);
  for (int iter = 0; iter < 200; ++iter) {
    double fx = f(x);
    if (std::abs(fx) <= 1e-12 || hi - lo < 1e-14) return x;
    if (fx > 0.0) {
      hi = x;
      fhi = fx;
    } else {
      lo = x;
      flo = fx;
    }
    const double secant = (lo * fhi - hi * flo) / (fhi - flo);
    x = (secant > lo && secant < hi) ? secant : 0.5 * (lo + hi);
  }
  return x;
}

Eigen::MatrixXd gen_covariates(int n, int p, double rho, std::mt19937_64& engine) {
  check_rho(p, rho);
  Eigen::LLT<Eigen::MatrixXd> llt(compound_symmetric(p, rho));
  Eigen::MatrixXd chol_t = llt.matrixL().transpose();  // row_i = z_i' L'

  NormalSampler normal(engine);
  Eigen::MatrixXd z(n, p);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < p; ++j) z(i, j) = normal();
  }
  return z * chol_t;
}

Eigen::VectorXd make_perturbations(std::uint64_t perturbation_seed) {
  std::mt19937_64 engine(perturbation_seed);
  Eigen::VectorXd u(9);
  for (int k = 0; k < 9; ++k) {
    u[k] = -0.05 + 0.1 * canonical_u01(engine);
  }
  return u;
}

double TrueModel::control_risk(const Eigen::VectorXd& x) const {
  return expit(beta0 + beta_m.dot(x));
}

double TrueModel::treated_risk(const Eigen::VectorXd& x) const {
  return expit(beta0 + beta_t + (beta_m + beta_z).dot(x));
}

TrueModel make_true_model(const DgmConfig& config) {
  check_rho(config.p, config.rho);
  if (config.heterogeneous && config.p != 12) {
    fail(ErrorCode::InvalidSpec, "the heterogeneous schedule is defined for p = 12");
  }
  TrueModel model;
  model.p = config.p;
  model.rho = config.rho;
  model.beta_t = config.beta_t;
  model.treatment_probability = config.treatment_probability;

  model.beta_m.resize(config.p);
  for (int k = 0; k < config.p; ++k) {
    model.beta_m[k] = std::pow(2.0, -0.5 * k);
  }
  model.beta_z = Eigen::VectorXd::Zero(config.p);
  if (config.heterogeneous) {
    Eigen::VectorXd u = make_perturbations(config.perturbation_seed);
    for (int k = 0; k < 9; ++k) model.beta_z[k] = u[k];
    model.beta_z[9] = -0.5;
    model.beta_z[10] = -0.25;
    model.beta_z[11] = -0.125;
  }

  Eigen::MatrixXd sigma = compound_symmetric(config.p, config.rho);
  // beta_z does not enter the control arm, so the intercept is solved with
  // the control-arm coefficients alone.
  model.beta0 = solve_intercept(model.beta_m, sigma, config.target_control_prevalence);
  model.sigma_control = std::sqrt(double(model.beta_m.transpose() * sigma * model.beta_m));
  Eigen::VectorXd treated = model.beta_m + model.beta_z;
  model.sigma_treated = std::sqrt(double(treated.transpose() * sigma * treated));
  return model;
}

SimulatedTrial gen_trial(const TrueModel& model, int n, std::mt19937_64& engine) {
  if (n < 1) fail(ErrorCode::InvalidSpec, "n must be >= 1");
  SimulatedTrial trial;
  trial.dataset.covariates = gen_covariates(n, model.p, model.rho, engine);

  trial.dataset.treatment.resize(n);
  for (int i = 0; i < n; ++i) {
    trial.dataset.treatment[i] = canonical_u01(engine) < model.treatment_probability ? 1.0 : 0.0;
  }

  Eigen::VectorXd eta_control =
      (trial.dataset.covariates * model.beta_m).array() + model.beta0;
  Eigen::VectorXd eta_treated =
      (trial.dataset.covariates * (model.beta_m + model.beta_z)).array() + model.beta0 +
      model.beta_t;
  trial.true_risk_control = eta_control.unaryExpr([](double e) { return expit(e); });
  trial.true_risk_treated = eta_treated.unaryExpr([](double e) { return expit(e); });
  trial.true_delta = trial.true_risk_treated - trial.true_risk_control;

  trial.dataset.outcome.resize(n);
  for (int i = 0; i < n; ++i) {
    const double risk = trial.dataset.treatment[i] == 1.0 ? trial.true_risk_treated[i]
                                                          : trial.true_risk_control[i];
    trial.dataset.outcome[i] = canonical_u01(engine) < risk ? 1.0 : 0.0;
  }

  trial.dataset.column_names.resize(model.p);
  for (int j = 0; j < model.p; ++j) trial.dataset.column_names[j] = "x" + std::to_string(j + 1);
  return trial;
}

SimulatedTrial gen_trial(const DgmConfig& config) {
  TrueModel model = make_true_model(config);
  std::mt19937_64 engine(config.run_seed);
  return gen_trial(model, config.n, engine);
}

double oracle_r2(const DgmConfig& config, int n_large) {
  if (n_large < 100) fail(ErrorCode::InvalidSpec, "oracle_r2 needs a large sample");
  DgmConfig big = config;
  big.n = n_large;
  SimulatedTrial trial = gen_trial(big);

  Eigen::VectorXd mu(n_large);
  for (int i = 0; i < n_large; ++i) {
    mu[i] = trial.dataset.treatment[i] == 1.0 ? trial.true_risk_treated[i]
                                              : trial.true_risk_control[i];
  }
  const double model_ll = log_likelihood(mu, trial.dataset.outcome);
  const double ybar = trial.dataset.outcome.mean();
  if (ybar <= 0.0 || ybar >= 1.0) fail(ErrorCode::DegenerateNull, "single-class outcome");
  const double null_ll =
      n_large * (ybar * std::log(ybar) + (1.0 - ybar) * std::log(1.0 - ybar));
  return nagelkerke_r2(model_ll, null_ll, n_large);
}

}  // namespace itepred
