#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "itepred/coefficients.hpp"
#include "itepred/dataset.hpp"

namespace itepred {

/// Which covariates enter as main effects and which additionally interact
/// with treatment. interaction_columns must be a subset of main_columns.
struct DesignSpec {
  std::vector<int> main_columns;
  std::vector<int> interaction_columns;
  bool include_treatment = true;
  bool standardize = false;
  std::optional<Eigen::VectorXd> offset;

  static DesignSpec all_mains(int p, bool include_treatment = true, bool standardize = true);
  static DesignSpec all_interactions(int p, bool standardize = true);
};

enum class ColumnRole { Intercept, Treatment, Main, Interaction };

struct ColumnInfo {
  ColumnRole role = ColumnRole::Main;
  int covariate = -1;    // dataset column index (Main/Interaction)
  int parent_column = -1;  // design column of the parent main effect (Interaction)
  std::string name;
};

/// Per-column location/scale used for standardization. Population-n
/// denominator; intercept kept at (0, 1). Constant columns get sd 1 so the
/// mapping back to the raw scale stays exact.
struct ColumnScaling {
  Eigen::VectorXd mean;
  Eigen::VectorXd sd;
  bool standardized = false;
};

/// Assembled regression design. `stored` is what solvers see (standardized
/// when requested); `raw` keeps the pre-standardization columns so that
/// predictions and coefficient back-mapping stay exact.
struct DesignMatrix {
  Eigen::MatrixXd stored;
  Eigen::MatrixXd raw;
  std::vector<ColumnInfo> columns;
  ColumnScaling scaling;
  Eigen::VectorXd treatment;
  std::optional<Eigen::VectorXd> offset;
  DesignSpec spec;

  Eigen::Index n() const { return stored.rows(); }
  Eigen::Index cols() const { return stored.cols(); }
  int treatment_column() const;  // -1 when absent
};

/// Builds [intercept | treatment? | mains... | interactions...] from a
/// Dataset. Interaction columns are formed as treatment * parent column
/// before any standardization.
DesignMatrix build_design(const Dataset& data, const DesignSpec& spec);

/// Rebuilds the design on a row subset, re-deriving the scaling from the
/// subset (needed for leakage-free cross-validation).
DesignMatrix subset_design(const DesignMatrix& design, const std::vector<int>& rows);

/// Maps coefficients estimated on the stored (possibly standardized) scale
/// back to the raw scale: beta_raw_j = beta_j / sd_j, with the intercept
/// absorbing sum_j beta_j * mean_j / sd_j.
Eigen::VectorXd unscale_coefficients(const Eigen::VectorXd& beta_fit, const ColumnScaling& scaling);

/// Splits a flat raw-scale coefficient vector into the structured form.
Coefficients to_coefficients(const DesignMatrix& design, const Eigen::VectorXd& beta_raw);

/// unscale + structure in one step.
Coefficients unstandardize_coefficients(const Eigen::VectorXd& beta_fit, const DesignMatrix& design);

/// Inverse of to_coefficients: flat vector aligned with design columns.
Eigen::VectorXd flatten_coefficients(const DesignMatrix& design, const Coefficients& coef);

}  // namespace itepred
