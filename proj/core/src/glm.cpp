#include "itepred/glm.hpp"

#include <boost/math/special_functions/gamma.hpp>
#include <cmath>

namespace itepred {

namespace {

constexpr double kSeparationLimit = 1e3;
constexpr double kGradTol = 1e-8;
constexpr double kRelLlTol = 1e-10;

Eigen::VectorXd clamp_risk(const Eigen::VectorXd& risk) {
  return risk.array().max(kRiskClamp).min(1.0 - kRiskClamp);
}

double loglik_eta(const Eigen::VectorXd& eta, const Eigen::VectorXd& y) {
  // y*eta - log(1 + exp(eta)), computed stably for large |eta|.
  double ll = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    const double e = eta[i];
    const double log1pexp = e > 0 ? e + std::log1p(std::exp(-e)) : std::log1p(std::exp(e));
    ll += y[i] * e - log1pexp;
  }
  return ll;
}

}  // namespace

RawFit fit_logistic_matrix(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                           const Eigen::VectorXd& offset, const Eigen::VectorXd& sd_scale,
                           int max_iter) {
  const Eigen::Index n = x.rows();
  const Eigen::Index d = x.cols();
  if (y.size() != n) fail(ErrorCode::LengthMismatch, "outcome length != design rows");
  if (n <= d) {
    fail(ErrorCode::InvalidSpec, "need n > number of columns (" + std::to_string(n) + " <= " +
                                     std::to_string(d) + ")");
  }

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(d);
  Eigen::VectorXd eta = offset;
  double ll = loglik_eta(eta, y);

  // Divergence bookkeeping: under separation the IRLS iterates keep growing
  // while the likelihood creeps towards a perfect fit.
  double prev_max_beta = 0.0;
  bool tail_growing = true;

  RawFit result;
  for (int iter = 1; iter <= max_iter; ++iter) {
    Eigen::VectorXd mu = eta.unaryExpr([](double e) { return expit(e); });
    Eigen::VectorXd grad = x.transpose() * (y - mu);

    Eigen::VectorXd w = (mu.array() * (1.0 - mu.array())).max(1e-10).matrix();
    Eigen::MatrixXd info = x.transpose() * w.asDiagonal() * x;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
    if (ldlt.info() != Eigen::Success ||
        (ldlt.vectorD().array().abs() < 1e-12 * static_cast<double>(n)).any()) {
      fail(ErrorCode::Singular, "weighted normal equations not solvable");
    }
    Eigen::VectorXd step = ldlt.solve(grad);

    // Step-halving on likelihood decrease. The acceptance slack scales with
    // |ll| so float noise in the sum cannot block full Newton steps near the
    // optimum.
    const double slack = 1e-10 * (std::abs(ll) + 1.0);
    double t = 1.0;
    Eigen::VectorXd beta_new;
    Eigen::VectorXd eta_new;
    double ll_new = ll;
    for (int half = 0; half < 40; ++half) {
      beta_new = beta + t * step;
      eta_new = x * beta_new + offset;
      ll_new = loglik_eta(eta_new, y);
      if (ll_new >= ll - slack) break;
      t *= 0.5;
    }
    beta = beta_new;
    eta = eta_new;

    double max_beta = 0.0;
    for (Eigen::Index j = 0; j < d; ++j) {
      max_beta = std::max(max_beta, std::abs(beta[j]) * sd_scale[j]);
    }
    if (max_beta > kSeparationLimit) {
      fail(ErrorCode::Separation, "no finite maximum likelihood estimate");
    }
    if (iter > max_iter / 2) tail_growing = tail_growing && max_beta >= prev_max_beta - 1e-12;
    prev_max_beta = max_beta;

    const double rel_change = std::abs(ll_new - ll) / (std::abs(ll_new) + 1.0);
    ll = ll_new;
    Eigen::VectorXd mu_cur = eta.unaryExpr([](double e) { return expit(e); });
    const double grad_norm = (x.transpose() * (y - mu_cur)).cwiseAbs().maxCoeff();
    if (rel_change <= kRelLlTol && grad_norm <= kGradTol) {
      result.beta = beta;
      result.log_likelihood = ll;
      result.iterations = iter;
      result.converged = true;
      return result;
    }
  }
  // Iterates still marching outward at the cap is the separation signature
  // even before the hard threshold is reached.
  if (tail_growing && prev_max_beta > 30.0) {
    fail(ErrorCode::Separation, "no finite maximum likelihood estimate");
  }
  fail(ErrorCode::NoConvergence, "IRLS did not converge in " + std::to_string(max_iter) +
                                     " iterations");
}

FitResult fit_ml(const DesignMatrix& design, const Eigen::VectorXd& outcome) {
  const Eigen::Index n = design.n();
  Eigen::VectorXd offset =
      design.offset ? *design.offset : Eigen::VectorXd::Zero(n);

  // Separation is detected on the standardized scale regardless of how the
  // design was stored.
  Eigen::VectorXd sd_scale = Eigen::VectorXd::Ones(design.cols());
  if (!design.scaling.standardized) {
    for (Eigen::Index j = 1; j < design.cols(); ++j) sd_scale[j] = design.scaling.sd[j];
  }

  RawFit raw = fit_logistic_matrix(design.stored, outcome, offset, sd_scale);

  FitResult result;
  result.beta_fit = raw.beta;
  result.coefficients = unstandardize_coefficients(raw.beta, design);
  result.log_likelihood = raw.log_likelihood;
  result.deviance = -2.0 * raw.log_likelihood;
  result.iterations = raw.iterations;
  result.converged = raw.converged;
  result.n = static_cast<int>(n);
  result.p_effective = static_cast<int>(design.cols());

  // Wald standard errors from the observed information on the raw scale.
  Eigen::VectorXd eta = design.raw * flatten_coefficients(design, result.coefficients) + offset;
  Eigen::VectorXd mu = eta.unaryExpr([](double e) { return expit(e); });
  Eigen::VectorXd w = (mu.array() * (1.0 - mu.array())).max(1e-10).matrix();
  Eigen::MatrixXd info = design.raw.transpose() * w.asDiagonal() * design.raw;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
  if (ldlt.info() == Eigen::Success &&
      (ldlt.vectorD().array() > 1e-12 * static_cast<double>(n)).all()) {
    Eigen::MatrixXd cov =
        ldlt.solve(Eigen::MatrixXd::Identity(design.cols(), design.cols()));
    result.std_errors = cov.diagonal().array().sqrt().matrix();
  }
  return result;
}

double log_likelihood(const Eigen::VectorXd& risk, const Eigen::VectorXd& outcome) {
  if (risk.size() != outcome.size()) {
    fail(ErrorCode::LengthMismatch, "risk/outcome length mismatch");
  }
  Eigen::VectorXd mu = clamp_risk(risk);
  double ll = 0.0;
  for (Eigen::Index i = 0; i < mu.size(); ++i) {
    ll += outcome[i] * std::log(mu[i]) + (1.0 - outcome[i]) * std::log(1.0 - mu[i]);
  }
  return ll;
}

double lr_test(const FitResult& full, const FitResult& reduced, int df) {
  if (df < 1) fail(ErrorCode::InvalidSpec, "df must be >= 1");
  double stat = 2.0 * (full.log_likelihood - reduced.log_likelihood);
  if (stat < -1e-8) {
    fail(ErrorCode::NegativeStatistic,
         "full model log-likelihood below reduced; models not nested or not converged");
  }
  stat = std::max(stat, 0.0);
  // Chi-square upper tail = Q(df/2, stat/2).
  return boost::math::gamma_q(df / 2.0, stat / 2.0);
}

Eigen::VectorXd linear_predictor(const Coefficients& coef, const DesignSpec& spec,
                                 const Eigen::MatrixXd& covariates,
                                 const Eigen::VectorXd& treatment) {
  const Eigen::Index n = covariates.rows();
  if (treatment.size() != n) fail(ErrorCode::LengthMismatch, "treatment length != rows");
  if (static_cast<Eigen::Index>(coef.beta_m.size()) !=
      static_cast<Eigen::Index>(spec.main_columns.size())) {
    fail(ErrorCode::LengthMismatch, "beta_m does not match spec.main_columns");
  }
  if (static_cast<Eigen::Index>(coef.beta_z.size()) !=
      static_cast<Eigen::Index>(spec.interaction_columns.size())) {
    fail(ErrorCode::LengthMismatch, "beta_z does not match spec.interaction_columns");
  }
  Eigen::VectorXd eta = Eigen::VectorXd::Constant(n, coef.beta0);
  if (spec.include_treatment) {
    eta += coef.beta_t.value_or(0.0) * treatment;
  }
  for (std::size_t k = 0; k < spec.main_columns.size(); ++k) {
    eta += coef.beta_m[static_cast<Eigen::Index>(k)] * covariates.col(spec.main_columns[k]);
  }
  for (std::size_t k = 0; k < spec.interaction_columns.size(); ++k) {
    eta += coef.beta_z[static_cast<Eigen::Index>(k)] *
           (covariates.col(spec.interaction_columns[k]).array() * treatment.array()).matrix();
  }
  if (spec.offset) {
    if (spec.offset->size() != n) fail(ErrorCode::LengthMismatch, "offset length != rows");
    eta += *spec.offset;
  }
  return eta;
}

Eigen::VectorXd linear_predictor(const Coefficients& coef, const DesignSpec& spec,
                                 const Eigen::MatrixXd& covariates, double treatment) {
  return linear_predictor(coef, spec, covariates,
                          Eigen::VectorXd::Constant(covariates.rows(), treatment));
}

Eigen::VectorXd predict_risk(const Coefficients& coef, const DesignMatrix& design,
                             std::optional<double> treatment_override) {
  // Rebuild eta from the raw columns so the override flows into the
  // treatment column and every interaction column.
  const Eigen::Index n = design.n();
  Eigen::VectorXd eta = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd beta = flatten_coefficients(design, coef);
  for (Eigen::Index j = 0; j < design.cols(); ++j) {
    const ColumnInfo& info = design.columns[j];
    switch (info.role) {
      case ColumnRole::Intercept:
      case ColumnRole::Main:
        eta += beta[j] * design.raw.col(j);
        break;
      case ColumnRole::Treatment:
        if (treatment_override) {
          eta.array() += beta[j] * *treatment_override;
        } else {
          eta += beta[j] * design.raw.col(j);
        }
        break;
      case ColumnRole::Interaction:
        if (treatment_override) {
          eta += beta[j] * *treatment_override * design.raw.col(info.parent_column);
        } else {
          eta += beta[j] * design.raw.col(j);
        }
        break;
    }
  }
  if (design.offset) eta += *design.offset;
  return eta.unaryExpr([](double e) { return expit(e); });
}

}  // namespace itepred
