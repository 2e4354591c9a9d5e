#include "itepred/serialize.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

namespace itepred {

namespace {

using nlohmann::json;

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoError, "cannot open " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    fail(ErrorCode::SchemaMismatch, path.string() + ": " + e.what());
  }
  return j;
}

void write_json(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::IoError, "cannot write " + path.string());
  out << j.dump(2) << "\n";
}

json coefficients_to_json(const Coefficients& coef) {
  json j;
  j["beta0"] = coef.beta0;
  if (coef.beta_t) j["beta_t"] = *coef.beta_t;
  else j["beta_t"] = nullptr;
  j["beta_m"] = std::vector<double>(coef.beta_m.data(), coef.beta_m.data() + coef.beta_m.size());
  j["beta_z"] = std::vector<double>(coef.beta_z.data(), coef.beta_z.data() + coef.beta_z.size());
  return j;
}

Coefficients coefficients_from_json(const json& j) {
  Coefficients coef;
  coef.beta0 = j.at("beta0").get<double>();
  if (!j.at("beta_t").is_null()) coef.beta_t = j.at("beta_t").get<double>();
  auto bm = j.at("beta_m").get<std::vector<double>>();
  auto bz = j.at("beta_z").get<std::vector<double>>();
  coef.beta_m = Eigen::Map<Eigen::VectorXd>(bm.data(), static_cast<Eigen::Index>(bm.size()));
  coef.beta_z = Eigen::Map<Eigen::VectorXd>(bz.data(), static_cast<Eigen::Index>(bz.size()));
  return coef;
}

json design_spec_to_json(const DesignSpec& spec) {
  json j;
  j["main_columns"] = spec.main_columns;
  j["interaction_columns"] = spec.interaction_columns;
  j["include_treatment"] = spec.include_treatment;
  return j;
}

DesignSpec design_spec_from_json(const json& j) {
  DesignSpec spec;
  spec.main_columns = j.at("main_columns").get<std::vector<int>>();
  spec.interaction_columns = j.at("interaction_columns").get<std::vector<int>>();
  spec.include_treatment = j.at("include_treatment").get<bool>();
  return spec;
}

StrategyKind kind_from_string(const std::string& s) {
  for (StrategyKind kind :
       {StrategyKind::Overall, StrategyKind::Hom, StrategyKind::Hte, StrategyKind::HteCk,
        StrategyKind::RiskModel, StrategyKind::SignificanceBased, StrategyKind::PerArm}) {
    if (s == strategy_kind_name(kind)) return kind;
  }
  fail(ErrorCode::SchemaMismatch, "unknown strategy kind \"" + s + "\"");
}

Estimator estimator_from_string(const std::string& s) {
  for (Estimator estimator :
       {Estimator::Ml, Estimator::Ridge, Estimator::Lasso, Estimator::Hgl}) {
    if (s == estimator_name(estimator)) return estimator;
  }
  fail(ErrorCode::SchemaMismatch, "unknown estimator \"" + s + "\"");
}

}  // namespace

StudyPlan load_plan(const std::filesystem::path& path) {
  json j = read_json(path);
  StudyPlan plan = StudyPlan::paper_defaults();
  try {
    plan.ns = j.at("ns").get<std::vector<int>>();
    plan.beta_t_values = j.at("beta_t_values").get<std::vector<double>>();
    plan.heterogeneous = j.at("heterogeneous").get<std::vector<bool>>();
    if (j.contains("runs")) plan.runs = j.at("runs").get<int>();
    if (j.contains("validation_n")) plan.validation_n = j.at("validation_n").get<int>();
    if (j.contains("strategies")) {
      plan.strategies = j.at("strategies").get<std::vector<std::string>>();
    }
    if (j.contains("base_seed")) plan.base_seed = j.at("base_seed").get<std::uint64_t>();
    if (j.contains("perturbation_seed")) {
      plan.perturbation_seed = j.at("perturbation_seed").get<std::uint64_t>();
    }
    if (j.contains("threads")) plan.threads = j.at("threads").get<int>();
  } catch (const json::exception& e) {
    fail(ErrorCode::SchemaMismatch, path.string() + ": " + e.what());
  }
  if (plan.ns.empty() || plan.beta_t_values.empty() || plan.heterogeneous.empty()) {
    fail(ErrorCode::SchemaMismatch, "plan needs ns, beta_t_values, heterogeneous");
  }
  for (const auto& id : plan.strategies) parse_strategy(id, 12);
  return plan;
}

void save_plan(const std::filesystem::path& path, const StudyPlan& plan) {
  json j;
  j["ns"] = plan.ns;
  j["beta_t_values"] = plan.beta_t_values;
  j["heterogeneous"] = plan.heterogeneous;
  j["runs"] = plan.runs;
  j["validation_n"] = plan.validation_n;
  j["strategies"] = plan.strategies;
  j["base_seed"] = plan.base_seed;
  j["perturbation_seed"] = plan.perturbation_seed;
  write_json(path, j);
}

CsvSchema load_schema(const std::filesystem::path& path) {
  json j = read_json(path);
  CsvSchema schema;
  try {
    schema.treatment = j.at("treatment").get<std::string>();
    schema.outcome = j.at("outcome").get<std::string>();
    if (j.contains("covariates")) {
      schema.covariates = j.at("covariates").get<std::vector<std::string>>();
    }
    if (j.contains("categorical")) {
      schema.categorical = j.at("categorical").get<std::vector<std::string>>();
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::SchemaMismatch, path.string() + ": " + e.what());
  }
  return schema;
}

void save_model(const std::filesystem::path& path, const ModelFile& model) {
  const DeltaPredictor& p = model.predictor;
  json j;
  j["format"] = "itepred-model/1";
  j["strategy"]["id"] = p.id;
  j["strategy"]["kind"] = strategy_kind_name(p.kind);
  j["strategy"]["estimator"] = estimator_name(p.estimator);
  j["n_covariates"] = p.n_covariates;
  j["schema"]["treatment"] = model.schema.treatment;
  j["schema"]["outcome"] = model.schema.outcome;
  j["schema"]["covariates"] = model.schema.covariates;
  j["schema"]["categorical"] = model.schema.categorical;
  j["covariate_names"] = model.covariate_names;
  j["diagnostics"]["penalized"] = p.diagnostics.penalized;
  j["diagnostics"]["chosen_lambda"] = p.diagnostics.chosen_lambda;
  j["diagnostics"]["chosen_lambda_treated"] = p.diagnostics.chosen_lambda_treated;
  j["diagnostics"]["nonzero"] = p.diagnostics.nonzero;
  j["diagnostics"]["converged"] = p.diagnostics.converged;
  j["diagnostics"]["sb_branch"] = p.diagnostics.sb_branch;

  if (const auto* m = std::get_if<ModelPredictor>(&p.model)) {
    j["model"]["type"] = "model";
    j["model"]["design_spec"] = design_spec_to_json(m->spec);
    j["model"]["coefficients"] = coefficients_to_json(m->coef);
  } else if (const auto* rm = std::get_if<RiskModelPredictor>(&p.model)) {
    j["model"]["type"] = "risk_model";
    j["model"]["stage1_spec"] = design_spec_to_json(rm->stage1_spec);
    j["model"]["stage1"] = coefficients_to_json(rm->stage1);
    j["model"]["beta_t"] = rm->beta_t;
    j["model"]["gamma"] = rm->gamma;
  } else {
    const auto& pa = std::get<PerArmPredictor>(p.model);
    j["model"]["type"] = "per_arm";
    j["model"]["design_spec"] = design_spec_to_json(pa.spec);
    j["model"]["control"] = coefficients_to_json(pa.control);
    j["model"]["treated"] = coefficients_to_json(pa.treated);
  }
  write_json(path, j);
}

ModelFile load_model(const std::filesystem::path& path) {
  json j = read_json(path);
  ModelFile model;
  try {
    if (j.at("format").get<std::string>() != "itepred-model/1") {
      fail(ErrorCode::SchemaMismatch, "unsupported model format");
    }
    DeltaPredictor& p = model.predictor;
    p.id = j.at("strategy").at("id").get<std::string>();
    p.kind = kind_from_string(j.at("strategy").at("kind").get<std::string>());
    p.estimator = estimator_from_string(j.at("strategy").at("estimator").get<std::string>());
    p.n_covariates = j.at("n_covariates").get<int>();
    model.schema.treatment = j.at("schema").at("treatment").get<std::string>();
    model.schema.outcome = j.at("schema").at("outcome").get<std::string>();
    model.schema.covariates = j.at("schema").at("covariates").get<std::vector<std::string>>();
    model.schema.categorical = j.at("schema").at("categorical").get<std::vector<std::string>>();
    model.covariate_names = j.at("covariate_names").get<std::vector<std::string>>();
    const json& d = j.at("diagnostics");
    p.diagnostics.penalized = d.at("penalized").get<bool>();
    p.diagnostics.chosen_lambda = d.at("chosen_lambda").get<double>();
    p.diagnostics.chosen_lambda_treated = d.at("chosen_lambda_treated").get<double>();
    p.diagnostics.nonzero = d.at("nonzero").get<int>();
    p.diagnostics.converged = d.at("converged").get<bool>();
    p.diagnostics.sb_branch = d.at("sb_branch").get<int>();

    const json& m = j.at("model");
    const std::string type = m.at("type").get<std::string>();
    if (type == "model") {
      ModelPredictor mp;
      mp.spec = design_spec_from_json(m.at("design_spec"));
      mp.coef = coefficients_from_json(m.at("coefficients"));
      p.model = mp;
    } else if (type == "risk_model") {
      RiskModelPredictor rm;
      rm.stage1_spec = design_spec_from_json(m.at("stage1_spec"));
      rm.stage1 = coefficients_from_json(m.at("stage1"));
      rm.beta_t = m.at("beta_t").get<double>();
      rm.gamma = m.at("gamma").get<double>();
      p.model = rm;
    } else if (type == "per_arm") {
      PerArmPredictor pa;
      pa.spec = design_spec_from_json(m.at("design_spec"));
      pa.control = coefficients_from_json(m.at("control"));
      pa.treated = coefficients_from_json(m.at("treated"));
      p.model = pa;
    } else {
      fail(ErrorCode::SchemaMismatch, "unknown model type \"" + type + "\"");
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::SchemaMismatch, path.string() + ": " + e.what());
  }
  return model;
}

}  // namespace itepred
