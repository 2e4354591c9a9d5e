#include "itepred/strategies.hpp"

#include <algorithm>
#include <numeric>

#include "itepred/rng.hpp"

namespace itepred {

namespace {

PenaltyConfig penalty_config_for(const StrategySpec& spec, PenaltyFamily family) {
  PenaltyConfig config;
  config.family = family;
  config.path_length = spec.path_length;
  config.lambda_min_ratio = spec.lambda_min_ratio;
  config.penalize_treatment_main = true;
  return config;
}

PenaltyFamily family_of(Estimator estimator) {
  switch (estimator) {
    case Estimator::Ridge: return PenaltyFamily::Ridge;
    case Estimator::Lasso: return PenaltyFamily::Lasso;
    case Estimator::Hgl: return PenaltyFamily::HierarchicalGroupLasso;
    case Estimator::Ml: break;
  }
  fail(ErrorCode::InvalidSpec, "ML has no penalty family");
}

/// Fits a model design by ML or by CV-selected penalty; returns the fit and
/// records the chosen lambda.
FitResult fit_by_estimator(const StrategySpec& spec, const DesignMatrix& design,
                           const Eigen::VectorXd& outcome, std::uint64_t seed,
                           FitDiagnostics* diag) {
  if (spec.estimator == Estimator::Ml) {
    return fit_ml(design, outcome);
  }
  PenaltyConfig config = penalty_config_for(spec, family_of(spec.estimator));
  CvResult cv = cv_select(design, outcome, config, spec.cv_folds, seed);
  if (diag) {
    diag->penalized = true;
    diag->chosen_lambda = cv.chosen_lambda;
  }
  return cv.chosen_fit;
}

void require_both_classes(const Eigen::VectorXd& outcome, const char* where) {
  const double mean = outcome.mean();
  if (mean <= 0.0 || mean >= 1.0) {
    fail(ErrorCode::StrategyInfeasible, std::string(where) + ": single-class outcome");
  }
}

std::vector<int> arm_rows(const Dataset& data, double arm) {
  std::vector<int> rows;
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    if (data.treatment[i] == arm) rows.push_back(static_cast<int>(i));
  }
  return rows;
}

DeltaPredictor make_predictor(const StrategySpec& spec, int p) {
  DeltaPredictor predictor;
  predictor.id = spec.id();
  predictor.kind = spec.kind;
  predictor.estimator = spec.estimator;
  predictor.n_covariates = p;
  return predictor;
}

int count_nonzero(const Coefficients& coef) {
  int count = coef.beta0 != 0.0 ? 1 : 0;
  if (coef.beta_t && *coef.beta_t != 0.0) ++count;
  count += static_cast<int>((coef.beta_m.array() != 0.0).count());
  count += static_cast<int>((coef.beta_z.array() != 0.0).count());
  return count;
}

DeltaPredictor fit_model_strategy(const StrategySpec& spec, const Dataset& data,
                                  const DesignSpec& design_spec, std::uint64_t seed) {
  DesignMatrix design = build_design(data, design_spec);
  DeltaPredictor predictor = make_predictor(spec, static_cast<int>(data.p()));
  FitResult fit = fit_by_estimator(spec, design, data.outcome, seed, &predictor.diagnostics);
  predictor.diagnostics.converged = fit.converged;
  predictor.diagnostics.nonzero = count_nonzero(fit.coefficients);
  predictor.model = ModelPredictor{design_spec, fit.coefficients};
  return predictor;
}

DeltaPredictor fit_per_arm(const StrategySpec& spec, const Dataset& data, std::uint64_t seed) {
  PerArmPredictor per_arm;
  per_arm.spec = DesignSpec::all_mains(static_cast<int>(data.p()), /*include_treatment=*/false,
                                       /*standardize=*/true);
  DeltaPredictor predictor = make_predictor(spec, static_cast<int>(data.p()));

  for (double arm : {0.0, 1.0}) {
    std::vector<int> rows = arm_rows(data, arm);
    if (rows.size() < 2) fail(ErrorCode::StrategyInfeasible, "per-arm model: arm too small");
    Dataset arm_data = subset_rows(data, rows);
    require_both_classes(arm_data.outcome, "per-arm model");
    DesignMatrix design = build_design(arm_data, per_arm.spec);
    FitDiagnostics diag;
    // Each arm selects its own lambda.
    FitResult fit = fit_by_estimator(spec, design, arm_data.outcome,
                                     derive_seed({seed, 0x9a, static_cast<std::uint64_t>(arm)}),
                                     &diag);
    if (arm == 0.0) {
      per_arm.control = fit.coefficients;
      predictor.diagnostics.penalized = diag.penalized;
      predictor.diagnostics.chosen_lambda = diag.chosen_lambda;
    } else {
      per_arm.treated = fit.coefficients;
      predictor.diagnostics.chosen_lambda_treated = diag.chosen_lambda;
    }
    predictor.diagnostics.nonzero += count_nonzero(fit.coefficients);
    predictor.diagnostics.converged = predictor.diagnostics.converged && fit.converged;
  }
  predictor.model = per_arm;
  return predictor;
}

}  // namespace

const char* strategy_kind_name(StrategyKind kind) noexcept {
  switch (kind) {
    case StrategyKind::Overall: return "overall";
    case StrategyKind::Hom: return "hom";
    case StrategyKind::Hte: return "hte";
    case StrategyKind::HteCk: return "hte_ck";
    case StrategyKind::RiskModel: return "risk_model";
    case StrategyKind::SignificanceBased: return "significance_based";
    case StrategyKind::PerArm: return "per_arm";
  }
  return "unknown";
}

const char* estimator_name(Estimator estimator) noexcept {
  switch (estimator) {
    case Estimator::Ml: return "ml";
    case Estimator::Ridge: return "ridge";
    case Estimator::Lasso: return "lasso";
    case Estimator::Hgl: return "hgl";
  }
  return "unknown";
}

std::string StrategySpec::id() const {
  switch (kind) {
    case StrategyKind::Overall: return "overall";
    case StrategyKind::Hom: return std::string("hom-") + estimator_name(estimator);
    case StrategyKind::Hte: return std::string("hte-") + estimator_name(estimator);
    case StrategyKind::HteCk: return "hte-ck";
    case StrategyKind::RiskModel: return std::string("rm-") + estimator_name(estimator);
    case StrategyKind::SignificanceBased: return "sb";
    case StrategyKind::PerArm: return std::string("perarm-") + estimator_name(estimator);
  }
  return "unknown";
}

std::vector<std::string> all_strategy_ids() {
  return {"overall",  "hom-ml",    "hom-ridge",    "hte-ml",       "hte-ridge",
          "hte-lasso", "hte-hgl",  "hte-ck",       "rm-ml",        "rm-ridge",
          "sb",        "perarm-ml", "perarm-ridge", "perarm-lasso"};
}

StrategySpec parse_strategy(const std::string& id, int p) {
  StrategySpec spec;
  auto set = [&](StrategyKind kind, Estimator estimator) {
    spec.kind = kind;
    spec.estimator = estimator;
  };
  if (id == "overall") set(StrategyKind::Overall, Estimator::Ml);
  else if (id == "hom-ml") set(StrategyKind::Hom, Estimator::Ml);
  else if (id == "hom-ridge") set(StrategyKind::Hom, Estimator::Ridge);
  else if (id == "hte-ml") set(StrategyKind::Hte, Estimator::Ml);
  else if (id == "hte-ridge") set(StrategyKind::Hte, Estimator::Ridge);
  else if (id == "hte-lasso") set(StrategyKind::Hte, Estimator::Lasso);
  else if (id == "hte-hgl") set(StrategyKind::Hte, Estimator::Hgl);
  else if (id == "hte-ck") set(StrategyKind::HteCk, Estimator::Ridge);
  else if (id == "rm-ml") set(StrategyKind::RiskModel, Estimator::Ml);
  else if (id == "rm-ridge") set(StrategyKind::RiskModel, Estimator::Ridge);
  else if (id == "sb") set(StrategyKind::SignificanceBased, Estimator::Ml);
  else if (id == "perarm-ml") set(StrategyKind::PerArm, Estimator::Ml);
  else if (id == "perarm-ridge") set(StrategyKind::PerArm, Estimator::Ridge);
  else if (id == "perarm-lasso") set(StrategyKind::PerArm, Estimator::Lasso);
  else fail(ErrorCode::InvalidSpec, "unknown strategy id \"" + id + "\"");

  if (spec.kind == StrategyKind::HteCk) {
    if (p == 12) {
      // Content knowledge: important main effects for covariates 1-8,
      // treatment-interaction candidates 9-12.
      spec.ck_main_columns = {0, 1, 2, 3, 4, 5, 6, 7};
      spec.ck_interaction_columns = {8, 9, 10, 11};
    } else {
      fail(ErrorCode::InvalidSpec,
           "hte-ck needs explicit content-knowledge sets when p != 12");
    }
  }
  return spec;
}

void validate_strategy(const StrategySpec& spec, int p) {
  auto allowed = [&](std::initializer_list<Estimator> estimators) {
    if (std::find(estimators.begin(), estimators.end(), spec.estimator) == estimators.end()) {
      fail(ErrorCode::InvalidSpec, std::string("estimator ") + estimator_name(spec.estimator) +
                                       " is not valid for strategy kind " +
                                       strategy_kind_name(spec.kind));
    }
  };
  switch (spec.kind) {
    case StrategyKind::Overall: allowed({Estimator::Ml}); break;
    case StrategyKind::Hom: allowed({Estimator::Ml, Estimator::Ridge}); break;
    case StrategyKind::Hte:
      allowed({Estimator::Ml, Estimator::Ridge, Estimator::Lasso, Estimator::Hgl});
      break;
    case StrategyKind::HteCk: allowed({Estimator::Ridge}); break;
    case StrategyKind::RiskModel: allowed({Estimator::Ml, Estimator::Ridge}); break;
    case StrategyKind::SignificanceBased: allowed({Estimator::Ml}); break;
    case StrategyKind::PerArm:
      allowed({Estimator::Ml, Estimator::Ridge, Estimator::Lasso});
      break;
  }
  if (spec.kind == StrategyKind::HteCk) {
    if (spec.ck_interaction_columns.empty()) {
      fail(ErrorCode::InvalidSpec, "hte-ck requires content-knowledge index sets");
    }
    for (int c : spec.ck_main_columns) {
      if (c < 0 || c >= p) fail(ErrorCode::IndexOutOfRange, "ck main column");
    }
    for (int c : spec.ck_interaction_columns) {
      if (c < 0 || c >= p) fail(ErrorCode::IndexOutOfRange, "ck interaction column");
    }
  }
  if (!(spec.alpha_level > 0.0 && spec.alpha_level < 1.0)) {
    fail(ErrorCode::InvalidSpec, "alpha_level must be in (0,1)");
  }
}

DeltaPredictor fit_strategy(const StrategySpec& spec, const Dataset& data, std::uint64_t seed) {
  validate_dataset(data);
  validate_strategy(spec, static_cast<int>(data.p()));
  const int p = static_cast<int>(data.p());

  switch (spec.kind) {
    case StrategyKind::Overall: {
      DesignSpec design_spec;  // intercept + treatment only
      design_spec.include_treatment = true;
      design_spec.standardize = true;
      return fit_model_strategy(spec, data, design_spec, seed);
    }
    case StrategyKind::Hom:
      return fit_model_strategy(spec, data, DesignSpec::all_mains(p), seed);
    case StrategyKind::Hte:
      return fit_model_strategy(spec, data, DesignSpec::all_interactions(p), seed);
    case StrategyKind::HteCk: {
      // The design keeps the strong hierarchy: interaction candidates enter
      // the main-effect set as well.
      DesignSpec design_spec;
      design_spec.main_columns = spec.ck_main_columns;
      for (int c : spec.ck_interaction_columns) {
        if (std::find(design_spec.main_columns.begin(), design_spec.main_columns.end(), c) ==
            design_spec.main_columns.end()) {
          design_spec.main_columns.push_back(c);
        }
      }
      design_spec.interaction_columns = spec.ck_interaction_columns;
      design_spec.include_treatment = true;
      design_spec.standardize = true;
      return fit_model_strategy(spec, data, design_spec, seed);
    }
    case StrategyKind::RiskModel:
      return fit_risk_model(data, spec.estimator, seed);
    case StrategyKind::SignificanceBased:
      return fit_significance_based(data, spec.alpha_level, seed);
    case StrategyKind::PerArm:
      return fit_per_arm(spec, data, seed);
  }
  fail(ErrorCode::InvalidSpec, "unknown strategy kind");
}

DeltaPredictor fit_significance_based(const Dataset& data, double alpha_level,
                                      std::uint64_t seed) {
  (void)seed;  // the procedure is ML throughout; kept for interface symmetry
  const int p = static_cast<int>(data.p());
  StrategySpec spec;
  spec.kind = StrategyKind::SignificanceBased;
  spec.estimator = Estimator::Ml;
  spec.alpha_level = alpha_level;
  validate_strategy(spec, p);

  DesignSpec hom_spec = DesignSpec::all_mains(p);
  DesignSpec mains_only = DesignSpec::all_mains(p, /*include_treatment=*/false);
  DesignMatrix hom_design = build_design(data, hom_spec);
  DesignMatrix mains_design = build_design(data, mains_only);

  FitResult hom_fit = fit_ml(hom_design, data.outcome);
  FitResult mains_fit = fit_ml(mains_design, data.outcome);

  DeltaPredictor predictor = make_predictor(spec, p);
  const double p_treatment = lr_test(hom_fit, mains_fit, 1);
  if (!(p_treatment < alpha_level)) {
    // No treatment effect: main-effects-only model, delta_hat == 0.
    predictor.model = ModelPredictor{mains_only, mains_fit.coefficients};
    predictor.diagnostics.sb_branch = 0;
    predictor.diagnostics.nonzero = count_nonzero(mains_fit.coefficients);
    return predictor;
  }

  DesignSpec hte_spec = DesignSpec::all_interactions(p);
  DesignMatrix hte_design = build_design(data, hte_spec);
  FitResult hte_fit = fit_ml(hte_design, data.outcome);
  const double p_interactions = lr_test(hte_fit, hom_fit, p);
  if (!(p_interactions < alpha_level)) {
    predictor.model = ModelPredictor{hom_spec, hom_fit.coefficients};
    predictor.diagnostics.sb_branch = 1;
    predictor.diagnostics.nonzero = count_nonzero(hom_fit.coefficients);
    return predictor;
  }
  predictor.model = ModelPredictor{hte_spec, hte_fit.coefficients};
  predictor.diagnostics.sb_branch = 2;
  predictor.diagnostics.nonzero = count_nonzero(hte_fit.coefficients);
  return predictor;
}

DeltaPredictor fit_risk_model(const Dataset& data, Estimator estimator, std::uint64_t seed) {
  const int p = static_cast<int>(data.p());
  StrategySpec spec;
  spec.kind = StrategyKind::RiskModel;
  spec.estimator = estimator;
  validate_strategy(spec, p);

  // Stage 1: control-arm risk model on all main effects.
  std::vector<int> control_rows = arm_rows(data, 0.0);
  if (control_rows.size() < 2) fail(ErrorCode::StrategyInfeasible, "risk model: no control arm");
  Dataset control = subset_rows(data, control_rows);
  require_both_classes(control.outcome, "risk model (control arm)");

  RiskModelPredictor rm;
  rm.stage1_spec = DesignSpec::all_mains(p, /*include_treatment=*/false, /*standardize=*/true);
  DesignMatrix stage1_design = build_design(control, rm.stage1_spec);

  DeltaPredictor predictor = make_predictor(spec, p);
  FitResult stage1 = fit_by_estimator(spec, stage1_design, control.outcome,
                                      derive_seed({seed, 0x51}), &predictor.diagnostics);
  rm.stage1 = stage1.coefficients;

  // Stage 2: logit(P) = eta_hat + beta_t a + gamma eta_hat a, with eta_hat
  // fixed as offset; exactly two free parameters.
  Eigen::VectorXd eta_hat = linear_predictor(rm.stage1, rm.stage1_spec, data.covariates, 0.0);
  Eigen::MatrixXd stage2(data.n(), 2);
  stage2.col(0) = data.treatment;
  stage2.col(1) = data.treatment.array() * eta_hat.array();
  RawFit stage2_fit =
      fit_logistic_matrix(stage2, data.outcome, eta_hat, Eigen::VectorXd::Ones(2));
  rm.beta_t = stage2_fit.beta[0];
  rm.gamma = stage2_fit.beta[1];

  predictor.diagnostics.nonzero = count_nonzero(rm.stage1) + 2;
  predictor.diagnostics.converged = stage1.converged && stage2_fit.converged;
  predictor.model = rm;
  return predictor;
}

namespace {

Eigen::VectorXd model_arm_risk(const ModelPredictor& m, const Eigen::MatrixXd& covariates,
                               const Eigen::VectorXd& treatment) {
  return linear_predictor(m.coef, m.spec, covariates, treatment)
      .unaryExpr([](double e) { return expit(e); });
}

Eigen::VectorXd rm_risk(const RiskModelPredictor& rm, const Eigen::MatrixXd& covariates,
                        const Eigen::VectorXd& treatment) {
  Eigen::VectorXd eta_hat = linear_predictor(rm.stage1, rm.stage1_spec, covariates, 0.0);
  Eigen::VectorXd eta =
      eta_hat.array() + treatment.array() * (rm.beta_t + rm.gamma * eta_hat.array());
  return eta.unaryExpr([](double e) { return expit(e); });
}

Eigen::VectorXd per_arm_risk(const PerArmPredictor& pa, const Eigen::MatrixXd& covariates,
                             const Eigen::VectorXd& treatment) {
  Eigen::VectorXd eta0 = linear_predictor(pa.control, pa.spec, covariates, 0.0);
  Eigen::VectorXd eta1 = linear_predictor(pa.treated, pa.spec, covariates, 0.0);
  Eigen::VectorXd risk(covariates.rows());
  for (Eigen::Index i = 0; i < risk.size(); ++i) {
    risk[i] = expit(treatment[i] == 1.0 ? eta1[i] : eta0[i]);
  }
  return risk;
}

void check_columns(const DeltaPredictor& predictor, const Eigen::MatrixXd& covariates) {
  if (covariates.cols() != predictor.n_covariates) {
    fail(ErrorCode::ColumnMismatch,
         "expected " + std::to_string(predictor.n_covariates) + " covariate columns, got " +
             std::to_string(covariates.cols()));
  }
}

}  // namespace

Eigen::VectorXd predict_assigned_risk(const DeltaPredictor& predictor,
                                      const Eigen::MatrixXd& covariates,
                                      const Eigen::VectorXd& treatment) {
  check_columns(predictor, covariates);
  if (treatment.size() != covariates.rows()) {
    fail(ErrorCode::LengthMismatch, "treatment length != covariate rows");
  }
  if (const auto* m = std::get_if<ModelPredictor>(&predictor.model)) {
    return model_arm_risk(*m, covariates, treatment);
  }
  if (const auto* rm = std::get_if<RiskModelPredictor>(&predictor.model)) {
    return rm_risk(*rm, covariates, treatment);
  }
  return per_arm_risk(std::get<PerArmPredictor>(predictor.model), covariates, treatment);
}

Eigen::VectorXd predict_arm_risk(const DeltaPredictor& predictor,
                                 const Eigen::MatrixXd& covariates, double arm) {
  return predict_assigned_risk(predictor, covariates,
                               Eigen::VectorXd::Constant(covariates.rows(), arm));
}

Eigen::VectorXd predict_delta(const DeltaPredictor& predictor,
                              const Eigen::MatrixXd& covariates) {
  return predict_arm_risk(predictor, covariates, 1.0) -
         predict_arm_risk(predictor, covariates, 0.0);
}

}  // namespace itepred
