#pragma once

#include <Eigen/Dense>
#include <optional>

namespace itepred {

/// Fitted logistic-model coefficients on the raw covariate scale, split by
/// role. beta_m aligns with DesignSpec::main_columns and beta_z with
/// DesignSpec::interaction_columns.
struct Coefficients {
  double beta0 = 0.0;
  std::optional<double> beta_t;
  Eigen::VectorXd beta_m;
  Eigen::VectorXd beta_z;
};

}  // namespace itepred
