#pragma once

#include <Eigen/Dense>
#include <optional>

#include "itepred/coefficients.hpp"
#include "itepred/design.hpp"

namespace itepred {

inline double expit(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double logit(double p) { return std::log(p / (1.0 - p)); }

/// Risks are clamped into [kRiskClamp, 1 - kRiskClamp] before entering any
/// log-loss so perfect predictions stay finite.
inline constexpr double kRiskClamp = 1e-12;

struct FitResult {
  Coefficients coefficients;    // raw scale
  Eigen::VectorXd beta_fit;     // on the stored-design scale, incl. intercept
  double log_likelihood = 0.0;
  double deviance = 0.0;        // -2 * log_likelihood (saturated ll = 0)
  int iterations = 0;
  bool converged = false;
  int n = 0;
  int p_effective = 0;          // ML: columns; penalized: nonzero coefficients
  std::optional<Eigen::VectorXd> std_errors;  // Wald, raw scale (ML only)
};

/// Low-level logistic ML fit on an explicit matrix (no intercept handling,
/// no scaling): IRLS with step-halving. Building block for fit_ml and the
/// risk-model second stage.
struct RawFit {
  Eigen::VectorXd beta;
  double log_likelihood;
  int iterations;
  bool converged;
};
RawFit fit_logistic_matrix(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                           const Eigen::VectorXd& offset,
                           const Eigen::VectorXd& sd_scale,
                           int max_iter = 100);

/// Maximum likelihood logistic regression on a design matrix.
/// Converges when the relative log-likelihood change is <= 1e-10 and the
/// score max-norm is <= 1e-8. Throws Separation when a coefficient passes
/// 1e3 on the standardized scale, Singular when the weighted normal
/// equations collapse, NoConvergence past max_iter iterations.
FitResult fit_ml(const DesignMatrix& design, const Eigen::VectorXd& outcome);

/// Bernoulli log-likelihood sum_i y_i log(mu_i) + (1 - y_i) log(1 - mu_i),
/// with risks clamped at kRiskClamp.
double log_likelihood(const Eigen::VectorXd& risk, const Eigen::VectorXd& outcome);

/// Likelihood ratio test of a nested pair; p-value from the chi-square upper
/// tail on df degrees of freedom.
double lr_test(const FitResult& full, const FitResult& reduced, int df);

/// Linear predictor eta_i = beta0 + beta_t a_i + beta_m' x_i + beta_z' z_i a_i
/// on the raw scale, with treatment taken from `treatment` per subject.
Eigen::VectorXd linear_predictor(const Coefficients& coef, const DesignSpec& spec,
                                 const Eigen::MatrixXd& covariates,
                                 const Eigen::VectorXd& treatment);
Eigen::VectorXd linear_predictor(const Coefficients& coef, const DesignSpec& spec,
                                 const Eigen::MatrixXd& covariates, double treatment);

/// Predicted risk under the design's observed treatment, or with both the
/// treatment column and every interaction column overridden to a fixed arm.
Eigen::VectorXd predict_risk(const Coefficients& coef, const DesignMatrix& design,
                             std::optional<double> treatment_override = std::nullopt);

}  // namespace itepred
