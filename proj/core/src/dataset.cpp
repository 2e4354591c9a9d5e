#include "itepred/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

namespace itepred {

namespace {

std::string trim(const std::string& s) {
  auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

bool is_missing_token(const std::string& s) {
  if (s.empty()) return true;
  static const char* tokens[] = {"NA", "na", "N/A", "NaN", "nan", "NULL", "null"};
  return std::any_of(std::begin(tokens), std::end(tokens),
                     [&](const char* t) { return s == t; });
}

std::optional<double> parse_double(const std::string& s) {
  const char* first = s.data();
  const char* last = s.data() + s.size();
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) return std::nullopt;
  return value;
}

/// One CSV record; handles quoted fields with "" escapes.
std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(trim(field));
      field.clear();
    } else {
      field += c;
    }
  }
  fields.push_back(trim(field));
  return fields;
}

struct RawTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

RawTable read_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoError, "cannot open " + path.string());
  RawTable table;
  std::string line;
  if (!std::getline(in, line)) fail(ErrorCode::SchemaMismatch, "empty file " + path.string());
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  table.header = split_csv_line(line);
  std::size_t width = table.header.size();
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() && in.eof()) break;
    auto fields = split_csv_line(line);
    if (fields.size() != width) {
      fail(ErrorCode::SchemaMismatch, path.string() + ":" + std::to_string(line_no) +
                                          ": expected " + std::to_string(width) + " fields, got " +
                                          std::to_string(fields.size()));
    }
    table.rows.push_back(std::move(fields));
  }
  if (table.rows.empty()) fail(ErrorCode::SchemaMismatch, "no data rows in " + path.string());
  return table;
}

int find_column(const RawTable& table, const std::string& name) {
  for (std::size_t j = 0; j < table.header.size(); ++j) {
    if (table.header[j] == name) return static_cast<int>(j);
  }
  return -1;
}

double parse_binary(const std::string& cell, const std::string& column, std::size_t row) {
  if (is_missing_token(cell)) {
    fail(ErrorCode::MissingValue, "column " + column + ", row " + std::to_string(row + 1));
  }
  if (cell == "0") return 0.0;
  if (cell == "1") return 1.0;
  fail(ErrorCode::NonBinary,
       "column " + column + ", row " + std::to_string(row + 1) + ": value \"" + cell + "\"");
}

/// Expanded covariate block for one source column: either the numeric values
/// or the dummy columns of a categorical, first observed level as reference.
struct ExpandedColumn {
  std::vector<std::string> names;
  std::vector<Eigen::VectorXd> values;
};

ExpandedColumn expand_column(const RawTable& table, int col, bool force_categorical) {
  const std::string& name = table.header[col];
  const std::size_t n = table.rows.size();

  bool numeric = !force_categorical;
  if (numeric) {
    for (std::size_t i = 0; i < n && numeric; ++i) {
      const std::string& cell = table.rows[i][col];
      if (is_missing_token(cell)) {
        fail(ErrorCode::MissingValue, "column " + name + ", row " + std::to_string(i + 1));
      }
      if (!parse_double(cell)) numeric = false;
    }
  }

  ExpandedColumn out;
  if (numeric) {
    Eigen::VectorXd v(n);
    for (std::size_t i = 0; i < n; ++i) {
      const std::string& cell = table.rows[i][col];
      auto parsed = parse_double(cell);
      double value = *parsed;
      if (!std::isfinite(value)) {
        fail(ErrorCode::MissingValue, "non-finite value in column " + name + ", row " +
                                          std::to_string(i + 1));
      }
      v[i] = value;
    }
    out.names.push_back(name);
    out.values.push_back(std::move(v));
    return out;
  }

  // Categorical: levels in order of first observation; first level is the
  // reference and gets no column.
  std::vector<std::string> levels;
  std::vector<int> level_of_row(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::string& cell = table.rows[i][col];
    if (is_missing_token(cell)) {
      fail(ErrorCode::MissingValue, "column " + name + ", row " + std::to_string(i + 1));
    }
    auto it = std::find(levels.begin(), levels.end(), cell);
    if (it == levels.end()) {
      levels.push_back(cell);
      level_of_row[i] = static_cast<int>(levels.size()) - 1;
    } else {
      level_of_row[i] = static_cast<int>(it - levels.begin());
    }
  }
  for (std::size_t l = 1; l < levels.size(); ++l) {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(n);
    for (std::size_t i = 0; i < n; ++i) {
      if (level_of_row[i] == static_cast<int>(l)) v[i] = 1.0;
    }
    out.names.push_back(name + "=" + levels[l]);
    out.values.push_back(std::move(v));
  }
  return out;
}

std::string format_value(double v) {
  char buf[40];
  if (v == std::floor(v) && std::abs(v) < 1e15) {
    std::snprintf(buf, sizeof(buf), "%.0f", v);
  } else {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
  }
  return buf;
}

}  // namespace

void validate_dataset(const Dataset& data) {
  const Eigen::Index n = data.covariates.rows();
  if (n < 1) fail(ErrorCode::SchemaMismatch, "dataset has no rows");
  if (data.treatment.size() != n || data.outcome.size() != n) {
    fail(ErrorCode::LengthMismatch, "treatment/outcome length does not match covariate rows");
  }
  if (static_cast<Eigen::Index>(data.column_names.size()) != data.covariates.cols()) {
    fail(ErrorCode::SchemaMismatch, "column_names length does not match covariate columns");
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    if (data.treatment[i] != 0.0 && data.treatment[i] != 1.0) {
      fail(ErrorCode::NonBinary, "treatment row " + std::to_string(i + 1));
    }
    if (data.outcome[i] != 0.0 && data.outcome[i] != 1.0) {
      fail(ErrorCode::NonBinary, "outcome row " + std::to_string(i + 1));
    }
  }
  if (!data.covariates.allFinite()) {
    fail(ErrorCode::MissingValue, "non-finite covariate value");
  }
}

Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema) {
  if (schema.treatment.empty() || schema.outcome.empty()) {
    fail(ErrorCode::SchemaMismatch, "schema must name treatment and outcome columns");
  }
  if (schema.treatment == schema.outcome) {
    fail(ErrorCode::SchemaMismatch, "treatment and outcome map to the same column");
  }
  RawTable table = read_table(path);

  int treat_col = find_column(table, schema.treatment);
  if (treat_col < 0) fail(ErrorCode::SchemaMismatch, "treatment column \"" + schema.treatment + "\" not found");
  int outcome_col = find_column(table, schema.outcome);
  if (outcome_col < 0) fail(ErrorCode::SchemaMismatch, "outcome column \"" + schema.outcome + "\" not found");

  std::vector<std::string> covariate_names = schema.covariates;
  if (covariate_names.empty()) {
    for (const auto& h : table.header) {
      if (h != schema.treatment && h != schema.outcome) covariate_names.push_back(h);
    }
  }

  const std::size_t n = table.rows.size();
  Dataset data;
  data.treatment.resize(n);
  data.outcome.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    data.treatment[i] = parse_binary(table.rows[i][treat_col], schema.treatment, i);
    data.outcome[i] = parse_binary(table.rows[i][outcome_col], schema.outcome, i);
  }

  std::vector<Eigen::VectorXd> columns;
  std::vector<std::string> names;
  for (const auto& cov : covariate_names) {
    int col = find_column(table, cov);
    if (col < 0) fail(ErrorCode::SchemaMismatch, "covariate column \"" + cov + "\" not found");
    bool force = std::find(schema.categorical.begin(), schema.categorical.end(), cov) !=
                 schema.categorical.end();
    ExpandedColumn expanded = expand_column(table, col, force);
    for (std::size_t j = 0; j < expanded.names.size(); ++j) {
      names.push_back(expanded.names[j]);
      columns.push_back(std::move(expanded.values[j]));
    }
  }

  data.covariates.resize(n, static_cast<Eigen::Index>(columns.size()));
  for (std::size_t j = 0; j < columns.size(); ++j) {
    data.covariates.col(static_cast<Eigen::Index>(j)) = columns[j];
  }
  data.column_names = std::move(names);
  validate_dataset(data);
  return data;
}

void save_csv(const std::filesystem::path& path, const Dataset& data,
              const std::string& treatment_name, const std::string& outcome_name) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::IoError, "cannot write " + path.string());
  out << treatment_name << "," << outcome_name;
  for (const auto& name : data.column_names) out << "," << name;
  out << "\n";
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    out << format_value(data.treatment[i]) << "," << format_value(data.outcome[i]);
    for (Eigen::Index j = 0; j < data.p(); ++j) out << "," << format_value(data.covariates(i, j));
    out << "\n";
  }
  if (!out) fail(ErrorCode::IoError, "write failed for " + path.string());
}

Eigen::MatrixXd load_covariate_matrix(const std::filesystem::path& path,
                                      const std::vector<std::string>& covariates,
                                      const std::vector<std::string>& categorical,
                                      const std::vector<std::string>& expected_names) {
  RawTable table = read_table(path);
  std::vector<Eigen::VectorXd> columns;
  std::vector<std::string> names;
  for (const auto& cov : covariates) {
    int col = find_column(table, cov);
    if (col < 0) fail(ErrorCode::SchemaMismatch, "covariate column \"" + cov + "\" not found");
    bool force =
        std::find(categorical.begin(), categorical.end(), cov) != categorical.end();
    ExpandedColumn expanded = expand_column(table, col, force);
    for (std::size_t j = 0; j < expanded.names.size(); ++j) {
      names.push_back(expanded.names[j]);
      columns.push_back(std::move(expanded.values[j]));
    }
  }
  if (names != expected_names) {
    fail(ErrorCode::ColumnMismatch,
         "expanded covariate columns do not match the model's training columns");
  }
  Eigen::MatrixXd x(table.rows.size(), static_cast<Eigen::Index>(columns.size()));
  for (std::size_t j = 0; j < columns.size(); ++j) x.col(static_cast<Eigen::Index>(j)) = columns[j];
  return x;
}

std::vector<std::string> csv_header(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoError, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) fail(ErrorCode::SchemaMismatch, "empty file " + path.string());
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  return split_csv_line(line);
}

Dataset subset_rows(const Dataset& data, const std::vector<int>& rows) {
  Dataset out;
  out.covariates.resize(static_cast<Eigen::Index>(rows.size()), data.p());
  out.treatment.resize(static_cast<Eigen::Index>(rows.size()));
  out.outcome.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    int r = rows[i];
    if (r < 0 || r >= data.n()) fail(ErrorCode::IndexOutOfRange, "row " + std::to_string(r));
    out.covariates.row(static_cast<Eigen::Index>(i)) = data.covariates.row(r);
    out.treatment[static_cast<Eigen::Index>(i)] = data.treatment[r];
    out.outcome[static_cast<Eigen::Index>(i)] = data.outcome[r];
  }
  out.column_names = data.column_names;
  return out;
}

const char* error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::MissingValue: return "MissingValue";
    case ErrorCode::NonBinary: return "NonBinary";
    case ErrorCode::SchemaMismatch: return "SchemaMismatch";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::HierarchyViolation: return "HierarchyViolation";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::Separation: return "Separation";
    case ErrorCode::Singular: return "Singular";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::NegativeStatistic: return "NegativeStatistic";
    case ErrorCode::DegenerateFold: return "DegenerateFold";
    case ErrorCode::StrategyInfeasible: return "StrategyInfeasible";
    case ErrorCode::ColumnMismatch: return "ColumnMismatch";
    case ErrorCode::TooFewSubjects: return "TooFewSubjects";
    case ErrorCode::DegenerateNull: return "DegenerateNull";
    case ErrorCode::SingleClass: return "SingleClass";
    case ErrorCode::AllInBag: return "AllInBag";
    case ErrorCode::EmptyArmInGroup: return "EmptyArmInGroup";
    case ErrorCode::EmptyCell: return "EmptyCell";
    case ErrorCode::StudyAborted: return "StudyAborted";
    case ErrorCode::NoRoot: return "NoRoot";
    case ErrorCode::InvalidSpec: return "InvalidSpec";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace itepred
