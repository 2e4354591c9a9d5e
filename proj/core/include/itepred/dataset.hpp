#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <string>
#include <vector>

#include "itepred/error.hpp"

namespace itepred {

/// Trial-style tabular data: covariates plus binary treatment and outcome.
/// Immutable after construction; safe to share across threads.
struct Dataset {
  Eigen::MatrixXd covariates;             // n x p, finite entries only
  Eigen::VectorXd treatment;              // length n, values in {0, 1}
  Eigen::VectorXd outcome;                // length n, values in {0, 1}
  std::vector<std::string> column_names;  // p labels

  Eigen::Index n() const { return covariates.rows(); }
  Eigen::Index p() const { return covariates.cols(); }
};

/// Checks the Dataset invariants (shape consistency, binary arms/outcomes,
/// finite covariates). Throws on violation.
void validate_dataset(const Dataset& data);

/// Column-role mapping for CSV ingestion.
struct CsvSchema {
  std::string treatment;
  std::string outcome;
  /// Covariate columns, in the order they should appear. Empty means: every
  /// column other than treatment/outcome, in file order.
  std::vector<std::string> covariates;
  /// Columns to dummy-code even if their values happen to parse as numbers.
  /// Non-numeric columns are always treated as categorical.
  std::vector<std::string> categorical;
};

/// Loads a CSV file (header row required, '.' decimal point, UTF-8).
/// Treatment and outcome must be 0/1 integers. Categorical covariates are
/// dummy-coded with the first observed level as reference; dummy columns are
/// named "<column>=<level>". Missing cells (empty, NA, NaN) are an error.
Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema);

/// Writes a Dataset back to CSV with round-trip precision ("%.17g").
void save_csv(const std::filesystem::path& path, const Dataset& data,
              const std::string& treatment_name = "treatment",
              const std::string& outcome_name = "outcome");

/// Loads only covariate columns (by name) from a CSV file; used when scoring
/// new data that has no treatment/outcome columns. Categorical columns are
/// re-coded against the expected dummy-column names and must not introduce
/// unseen levels.
Eigen::MatrixXd load_covariate_matrix(const std::filesystem::path& path,
                                      const std::vector<std::string>& covariates,
                                      const std::vector<std::string>& categorical,
                                      const std::vector<std::string>& expected_names);

/// Subset of rows, in the given order.
Dataset subset_rows(const Dataset& data, const std::vector<int>& rows);

/// Header row of a CSV file, in file order.
std::vector<std::string> csv_header(const std::filesystem::path& path);

}  // namespace itepred
