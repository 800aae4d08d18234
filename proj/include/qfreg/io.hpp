/*
 Copyright 2026 The qfreg Authors

 Licensed under the Apache License, Version 2.0 (the "License");
 you may not use this file except in compliance with the License.
 You may obtain a copy of the License at

 http://www.apache.org/licenses/LICENSE-2.0

 Unless required by applicable law or agreed to in writing, software
 distributed under the License is distributed on an "AS IS" BASIS,
 WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 See the License for the specific language governing permissions and
 limitations under the License.
*/

#ifndef QFREG_IO_HPP
#define QFREG_IO_HPP

#include <Eigen/Dense>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "qfreg/bootstrap.hpp"
#include "qfreg/dataset.hpp"
#include "qfreg/fui.hpp"
#include "qfreg/quantile.hpp"
#include "qfreg/simulation.hpp"

namespace qfreg {

inline constexpr int kFormatVersion = 1;

/// Glucose readings of one subject within one period.
struct CgmCell {
  std::size_t subject = 0;  // index into CgmData::subjects
  std::string period;
  std::vector<double> glucose;
};

struct CgmData {
  std::vector<std::string> subjects;  // in order of first appearance
  std::vector<CgmCell> cells;         // grouped by subject, periods sorted
  bool numeric_periods = true;
  std::vector<std::string> warnings;
};

/// Reads subject_id, period and glucose columns. With `period_days` the
/// period column is optional and periods are derived from a numeric
/// `timestamp` (in days) as floor((t - first t of the subject) / period_days) + 1.
/// Empty and NA glucose entries are skipped.
CgmData load_cgm_csv(const std::filesystem::path& path, std::optional<double> period_days = {});

/// "response ~ a + b", "~ a + b" or "~ 1". The response side is ignored.
struct Formula {
  std::string response;
  std::vector<std::string> terms;
};
Formula parse_formula(std::string_view text);

/// Fixed-effect rows keyed by subject (and period when the file has one).
struct CovariateDesign {
  std::vector<std::string> names;  // "(Intercept)" first, "col=level" for indicators
  bool time_varying = false;
  std::map<std::string, Eigen::RowVectorXd> by_subject;
  std::map<std::pair<std::string, std::string>, Eigen::RowVectorXd> by_period;
  std::optional<Eigen::RowVectorXd> shared;  // used for every subject when set
  std::vector<std::string> warnings;

  const Eigen::RowVectorXd* find(const std::string& subject, const std::string& period) const;
};

/// Builds the design from subject_id[,period] and the formula columns.
/// Numeric columns enter as is; other columns are reference coded with the
/// alphabetically first level as reference.
CovariateDesign load_covariates_csv(const std::filesystem::path& path, const Formula& formula);
/// Intercept-only design.
CovariateDesign intercept_design();

enum class ResponseKind { Quantile, Mean };

struct AssembledData {
  LongitudinalDataset data;
  std::vector<std::string> subject_ids;  // per subject label
  std::vector<std::string> periods;      // per record
  std::vector<Eigen::Index> counts;      // readings per record
  std::vector<std::string> warnings;
};

/// One record per (subject, period) cell. The visit index is the numeric
/// period when all periods are numeric and the rank within the subject
/// otherwise. Subjects without covariates are dropped with a warning.
AssembledData assemble_dataset(const CgmData& cgm, const CovariateDesign& design, const ProbabilityGrid& grid,
                               ResponseKind response = ResponseKind::Quantile);

void write_quantiles_csv(const std::filesystem::path& path, const AssembledData& data);
/// One row per (coefficient, p). Band columns are NA without bootstrap bands.
void write_coefficients_csv(const std::filesystem::path& path, const FUIFit& fit, const BootstrapBands* bands);
void write_varcomps_csv(const std::filesystem::path& path, const FUIFit& fit);
void write_predictions_csv(const std::filesystem::path& path, const AssembledData& data,
                           const std::vector<QuantileFunction>& predictions);
void write_scalar_fit_csv(const std::filesystem::path& path, const AssembledData& data, const ScalarFit& fit);
nlohmann::ordered_json simulation_report_json(const SimulationReport& report);
/// Scenario 2 pointwise summary: p, mu, sigma.
void write_curves_csv(const std::filesystem::path& path, const SimulationReport& report);
void write_json(const std::filesystem::path& path, const nlohmann::ordered_json& value);

}  // namespace qfreg

#endif  // QFREG_IO_HPP
