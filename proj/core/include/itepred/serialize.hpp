#pragma once

#include <filesystem>
#include <string>

#include "itepred/dataset.hpp"
#include "itepred/strategies.hpp"
#include "itepred/study.hpp"

namespace itepred {

/// plan.json <-> StudyPlan. Keys: ns, beta_t_values, heterogeneous, runs,
/// validation_n, strategies, base_seed, perturbation_seed (threads optional).
StudyPlan load_plan(const std::filesystem::path& path);
void save_plan(const std::filesystem::path& path, const StudyPlan& plan);

/// schema.json <-> CsvSchema. Keys: treatment, outcome, covariates
/// (optional), categorical (optional).
CsvSchema load_schema(const std::filesystem::path& path);

/// model.json: raw-scale coefficients, design spec, penalty metadata, and
/// the data schema the model was fitted with.
struct ModelFile {
  DeltaPredictor predictor;
  CsvSchema schema;
  std::vector<std::string> covariate_names;  // post dummy-coding
};

void save_model(const std::filesystem::path& path, const ModelFile& model);
ModelFile load_model(const std::filesystem::path& path);

}  // namespace itepred
