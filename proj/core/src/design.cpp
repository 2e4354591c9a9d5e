#include "itepred/design.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace itepred {

namespace {

void check_indices(const std::vector<int>& indices, Eigen::Index p, const char* what) {
  for (int idx : indices) {
    if (idx < 0 || idx >= p) {
      fail(ErrorCode::IndexOutOfRange,
           std::string(what) + " index " + std::to_string(idx) + " out of range for p = " +
               std::to_string(p));
    }
  }
}

}  // namespace

DesignSpec DesignSpec::all_mains(int p, bool include_treatment, bool standardize) {
  DesignSpec spec;
  spec.main_columns.resize(p);
  std::iota(spec.main_columns.begin(), spec.main_columns.end(), 0);
  spec.include_treatment = include_treatment;
  spec.standardize = standardize;
  return spec;
}

DesignSpec DesignSpec::all_interactions(int p, bool standardize) {
  DesignSpec spec = all_mains(p, true, standardize);
  spec.interaction_columns = spec.main_columns;
  return spec;
}

int DesignMatrix::treatment_column() const {
  for (std::size_t j = 0; j < columns.size(); ++j) {
    if (columns[j].role == ColumnRole::Treatment) return static_cast<int>(j);
  }
  return -1;
}

DesignMatrix build_design(const Dataset& data, const DesignSpec& spec) {
  const Eigen::Index n = data.n();
  const Eigen::Index p = data.p();
  check_indices(spec.main_columns, p, "main");
  check_indices(spec.interaction_columns, p, "interaction");
  for (int z : spec.interaction_columns) {
    if (std::find(spec.main_columns.begin(), spec.main_columns.end(), z) ==
        spec.main_columns.end()) {
      fail(ErrorCode::HierarchyViolation,
           "interaction column " + std::to_string(z) + " is not in the main-effect set");
    }
  }
  if (spec.offset) {
    if (spec.offset->size() != n) fail(ErrorCode::LengthMismatch, "offset length != n");
    if (!spec.offset->allFinite()) fail(ErrorCode::MissingValue, "non-finite offset entry");
  }

  const Eigen::Index d = 1 + (spec.include_treatment ? 1 : 0) +
                         static_cast<Eigen::Index>(spec.main_columns.size()) +
                         static_cast<Eigen::Index>(spec.interaction_columns.size());

  DesignMatrix design;
  design.spec = spec;
  design.treatment = data.treatment;
  design.offset = spec.offset;
  design.raw.resize(n, d);
  design.columns.resize(d);

  Eigen::Index col = 0;
  design.raw.col(col).setOnes();
  design.columns[col] = {ColumnRole::Intercept, -1, -1, "(intercept)"};
  ++col;

  if (spec.include_treatment) {
    design.raw.col(col) = data.treatment;
    design.columns[col] = {ColumnRole::Treatment, -1, -1, "treatment"};
    ++col;
  }

  std::vector<int> main_design_col(p, -1);
  for (int m : spec.main_columns) {
    design.raw.col(col) = data.covariates.col(m);
    main_design_col[m] = static_cast<int>(col);
    std::string name = m < static_cast<int>(data.column_names.size()) ? data.column_names[m]
                                                                      : "x" + std::to_string(m);
    design.columns[col] = {ColumnRole::Main, m, -1, name};
    ++col;
  }

  for (int z : spec.interaction_columns) {
    design.raw.col(col) =
        data.treatment.array() * data.covariates.col(z).array();
    design.columns[col] = {ColumnRole::Interaction, z, main_design_col[z],
                           design.columns[main_design_col[z]].name + ":treatment"};
    ++col;
  }

  // Scaling is always recorded; the intercept keeps (0, 1), constant columns
  // keep sd 1 so unscaling stays exact.
  design.scaling.mean = Eigen::VectorXd::Zero(d);
  design.scaling.sd = Eigen::VectorXd::Ones(d);
  design.scaling.standardized = spec.standardize;
  for (Eigen::Index j = 1; j < d; ++j) {
    const double mean = design.raw.col(j).mean();
    const double var = (design.raw.col(j).array() - mean).square().mean();
    const double sd = std::sqrt(var);
    design.scaling.mean[j] = mean;
    design.scaling.sd[j] = sd > 1e-12 ? sd : 1.0;
  }

  if (spec.standardize) {
    design.stored = design.raw;
    for (Eigen::Index j = 1; j < d; ++j) {
      design.stored.col(j) =
          (design.raw.col(j).array() - design.scaling.mean[j]) / design.scaling.sd[j];
    }
  } else {
    design.stored = design.raw;
  }
  return design;
}

DesignMatrix subset_design(const DesignMatrix& design, const std::vector<int>& rows) {
  const Eigen::Index n = design.n();
  DesignMatrix out;
  out.spec = design.spec;
  out.columns = design.columns;
  const Eigen::Index m = static_cast<Eigen::Index>(rows.size());
  out.raw.resize(m, design.raw.cols());
  out.treatment.resize(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    if (rows[i] < 0 || rows[i] >= n) fail(ErrorCode::IndexOutOfRange, "row subset");
    out.raw.row(i) = design.raw.row(rows[i]);
    out.treatment[i] = design.treatment[rows[i]];
  }
  if (design.offset) {
    Eigen::VectorXd off(m);
    for (Eigen::Index i = 0; i < m; ++i) off[i] = (*design.offset)[rows[i]];
    out.offset = off;
    out.spec.offset = off;
  }
  const Eigen::Index d = out.raw.cols();
  out.scaling.mean = Eigen::VectorXd::Zero(d);
  out.scaling.sd = Eigen::VectorXd::Ones(d);
  out.scaling.standardized = design.scaling.standardized;
  for (Eigen::Index j = 1; j < d; ++j) {
    const double mean = out.raw.col(j).mean();
    const double var = (out.raw.col(j).array() - mean).square().mean();
    const double sd = std::sqrt(var);
    out.scaling.mean[j] = mean;
    out.scaling.sd[j] = sd > 1e-12 ? sd : 1.0;
  }
  out.stored = out.raw;
  if (out.scaling.standardized) {
    for (Eigen::Index j = 1; j < d; ++j) {
      out.stored.col(j) = (out.raw.col(j).array() - out.scaling.mean[j]) / out.scaling.sd[j];
    }
  }
  return out;
}

Eigen::VectorXd unscale_coefficients(const Eigen::VectorXd& beta_fit,
                                     const ColumnScaling& scaling) {
  if (beta_fit.size() != scaling.mean.size()) {
    fail(ErrorCode::LengthMismatch, "coefficient/scaling length mismatch");
  }
  if (!scaling.standardized) return beta_fit;
  Eigen::VectorXd raw = beta_fit;
  double intercept_shift = 0.0;
  for (Eigen::Index j = 1; j < beta_fit.size(); ++j) {
    raw[j] = beta_fit[j] / scaling.sd[j];
    intercept_shift += beta_fit[j] * scaling.mean[j] / scaling.sd[j];
  }
  raw[0] = beta_fit[0] - intercept_shift;
  return raw;
}

Coefficients to_coefficients(const DesignMatrix& design, const Eigen::VectorXd& beta_raw) {
  if (beta_raw.size() != design.cols()) {
    fail(ErrorCode::LengthMismatch, "coefficient vector does not match design");
  }
  Coefficients coef;
  coef.beta_m.resize(static_cast<Eigen::Index>(design.spec.main_columns.size()));
  coef.beta_z.resize(static_cast<Eigen::Index>(design.spec.interaction_columns.size()));
  Eigen::Index main_i = 0;
  Eigen::Index inter_i = 0;
  for (Eigen::Index j = 0; j < beta_raw.size(); ++j) {
    switch (design.columns[j].role) {
      case ColumnRole::Intercept: coef.beta0 = beta_raw[j]; break;
      case ColumnRole::Treatment: coef.beta_t = beta_raw[j]; break;
      case ColumnRole::Main: coef.beta_m[main_i++] = beta_raw[j]; break;
      case ColumnRole::Interaction: coef.beta_z[inter_i++] = beta_raw[j]; break;
    }
  }
  return coef;
}

Coefficients unstandardize_coefficients(const Eigen::VectorXd& beta_fit,
                                        const DesignMatrix& design) {
  return to_coefficients(design, unscale_coefficients(beta_fit, design.scaling));
}

Eigen::VectorXd flatten_coefficients(const DesignMatrix& design, const Coefficients& coef) {
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(design.cols());
  Eigen::Index main_i = 0;
  Eigen::Index inter_i = 0;
  for (Eigen::Index j = 0; j < beta.size(); ++j) {
    switch (design.columns[j].role) {
      case ColumnRole::Intercept: beta[j] = coef.beta0; break;
      case ColumnRole::Treatment: beta[j] = coef.beta_t.value_or(0.0); break;
      case ColumnRole::Main: beta[j] = coef.beta_m[main_i++]; break;
      case ColumnRole::Interaction: beta[j] = coef.beta_z[inter_i++]; break;
    }
  }
  return beta;
}

}  // namespace itepred
