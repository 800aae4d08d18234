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

#include "qfreg/io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <unordered_map>

#include "qfreg/csv.hpp"
#include "qfreg/error.hpp"

namespace qfreg {

namespace {

const std::string kIntercept = "(Intercept)";

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return std::string(s.substr(b, e - b + 1));
}

bool is_missing(std::string_view field) {
  const std::string t = trim(field);
  return t.empty() || t == "NA" || t == "NaN" || t == "nan";
}

// Numeric periods compare by value, so "1" and "1.0" name the same period.
std::string period_key(const std::string& period) {
  if (auto v = parse_real(period)) return format_real(*v);
  return trim(period);
}

std::string na_or(double value, bool present) { return present ? format_real(value) : "NA"; }

}  // namespace

CgmData load_cgm_csv(const std::filesystem::path& path, std::optional<double> period_days) {
  const CsvTable table = read_csv(path);
  const std::size_t c_subject = table.column("subject_id");
  const std::size_t c_glucose = table.column("glucose");
  std::optional<std::size_t> c_period = table.find_column("period");
  std::optional<std::size_t> c_time;
  if (period_days) {
    if (!(*period_days > 0.0)) throw Error(ErrorKind::Config, "period length must be positive");
    c_time = table.column("timestamp");
    c_period.reset();
  } else if (!c_period) {
    table.column("period");
  }

  CgmData out;
  std::unordered_map<std::string, std::size_t> subject_index;
  std::vector<std::map<std::string, std::vector<double>>> cells;
  std::vector<std::map<std::string, std::string>> shown;  // first spelling of each period
  std::vector<std::set<std::string>> seen;
  std::vector<double> first_time;

  // Timestamps set the per-subject origin, so collect them first.
  if (c_time) {
    std::unordered_map<std::string, double> origin;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
      const std::string id = trim(table.rows[r][c_subject]);
      const auto t = parse_real(table.rows[r][*c_time]);
      if (!t) throw Error(ErrorKind::InvalidData, table.where(r, "timestamp") + ": not a number of days");
      auto [it, fresh] = origin.emplace(id, *t);
      if (!fresh) it->second = std::min(it->second, *t);
    }
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
      const std::string id = trim(table.rows[r][c_subject]);
      if (!subject_index.count(id)) {
        subject_index.emplace(id, out.subjects.size());
        out.subjects.push_back(id);
        first_time.push_back(origin.at(id));
      }
    }
  }

  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const std::string id = trim(row[c_subject]);
    if (id.empty()) throw Error(ErrorKind::InvalidData, table.where(r, "subject_id") + ": empty subject id");
    auto it = subject_index.find(id);
    if (it == subject_index.end()) {
      it = subject_index.emplace(id, out.subjects.size()).first;
      out.subjects.push_back(id);
    }
    const std::size_t s = it->second;
    if (cells.size() <= s) {
      cells.resize(out.subjects.size());
      shown.resize(out.subjects.size());
      seen.resize(out.subjects.size());
    }

    std::string period;
    if (c_time) {
      const double t = *parse_real(row[*c_time]);
      period = std::to_string(static_cast<long long>(std::floor((t - first_time[s]) / *period_days)) + 1);
    } else {
      period = trim(row[*c_period]);
      if (period.empty()) throw Error(ErrorKind::InvalidData, table.where(r, "period") + ": empty period");
    }
    const std::string key = period_key(period);
    shown[s].emplace(key, period);
    seen[s].insert(key);

    if (is_missing(row[c_glucose])) continue;
    const auto g = parse_real(row[c_glucose]);
    if (!g || !std::isfinite(*g)) {
      throw Error(ErrorKind::InvalidData, table.where(r, "glucose") + ": non-numeric glucose '" + row[c_glucose] + "'");
    }
    cells[s][key].push_back(*g);
  }
  cells.resize(out.subjects.size());

  for (std::size_t s = 0; s < cells.size(); ++s) {
    for (const auto& key : seen[s]) {
      if (!parse_real(key)) out.numeric_periods = false;
    }
  }
  for (std::size_t s = 0; s < cells.size(); ++s) {
    std::vector<std::string> keys(seen[s].begin(), seen[s].end());
    if (out.numeric_periods) {
      std::sort(keys.begin(), keys.end(),
                [](const std::string& a, const std::string& b) { return *parse_real(a) < *parse_real(b); });
    }
    for (const auto& key : keys) {
      auto found = cells[s].find(key);
      if (found == cells[s].end() || found->second.empty()) {
        out.warnings.push_back("subject " + out.subjects[s] + ", period " + shown[s][key] +
                               ": no glucose readings, period dropped");
        continue;
      }
      out.cells.push_back(CgmCell{s, shown[s][key], std::move(found->second)});
    }
  }
  if (out.cells.empty()) throw Error(ErrorKind::EmptyInput, path.string() + ": no glucose readings");
  return out;
}

Formula parse_formula(std::string_view text) {
  Formula f;
  std::string_view rhs = text;
  if (const auto tilde = text.find('~'); tilde != std::string_view::npos) {
    f.response = trim(text.substr(0, tilde));
    rhs = text.substr(tilde + 1);
  } else if (!trim(text).empty()) {
    throw Error(ErrorKind::Schema, "formula '" + std::string(text) + "' has no '~'");
  }
  std::size_t start = 0;
  while (start <= rhs.size()) {
    const auto plus = std::min(rhs.find('+', start), rhs.size());
    const std::string term = trim(rhs.substr(start, plus - start));
    if (term.empty()) {
      if (!trim(rhs).empty()) throw Error(ErrorKind::Schema, "formula '" + std::string(text) + "' has an empty term");
    } else if (term != "1") {
      if (std::find(f.terms.begin(), f.terms.end(), term) == f.terms.end()) f.terms.push_back(term);
    }
    start = plus + 1;
  }
  return f;
}

const Eigen::RowVectorXd* CovariateDesign::find(const std::string& subject, const std::string& period) const {
  if (shared) return &*shared;
  if (time_varying) {
    auto it = by_period.find({subject, period_key(period)});
    return it == by_period.end() ? nullptr : &it->second;
  }
  auto it = by_subject.find(subject);
  return it == by_subject.end() ? nullptr : &it->second;
}

CovariateDesign intercept_design() {
  CovariateDesign d;
  d.names = {kIntercept};
  d.shared = Eigen::RowVectorXd::Ones(1);
  return d;
}

CovariateDesign load_covariates_csv(const std::filesystem::path& path, const Formula& formula) {
  const CsvTable table = read_csv(path);
  const std::size_t c_subject = table.column("subject_id");
  const std::optional<std::size_t> c_period = table.find_column("period");

  struct Term {
    std::string name;
    std::size_t column;
    bool numeric = true;
    std::vector<std::string> levels;  // non-reference levels
  };
  std::vector<Term> terms;
  for (const auto& name : formula.terms) {
    const auto c = table.find_column(name);
    if (!c || name == "subject_id" || name == "period") {
      throw Error(ErrorKind::Schema, path.string() + ": formula term '" + name + "' is not a covariate column");
    }
    Term t{name, *c, true, {}};
    std::set<std::string> levels;
    for (const auto& row : table.rows) {
      if (is_missing(row[*c])) continue;
      levels.insert(trim(row[*c]));
      if (!parse_real(row[*c])) t.numeric = false;
    }
    if (!t.numeric) t.levels.assign(std::next(levels.begin()), levels.end());
    terms.push_back(std::move(t));
  }

  CovariateDesign d;
  d.names = {kIntercept};
  d.time_varying = c_period.has_value();
  for (const auto& t : terms) {
    if (t.numeric) {
      d.names.push_back(t.name);
    } else {
      for (const auto& level : t.levels) d.names.push_back(t.name + "=" + level);
    }
  }

  const auto width = static_cast<Eigen::Index>(d.names.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const std::string id = trim(row[c_subject]);
    Eigen::RowVectorXd x = Eigen::RowVectorXd::Zero(width);
    x[0] = 1.0;
    Eigen::Index pos = 1;
    bool complete = true;
    for (const auto& t : terms) {
      const std::string& cell = row[t.column];
      if (is_missing(cell)) complete = false;
      if (t.numeric) {
        if (complete) x[pos] = *parse_real(cell);
        ++pos;
      } else {
        const std::string v = trim(cell);
        for (const auto& level : t.levels) x[pos++] = v == level ? 1.0 : 0.0;
      }
    }
    const std::string place = c_period ? id + ", period " + trim(row[*c_period]) : id;
    if (!complete) {
      d.warnings.push_back(table.where(r, "subject_id") + ": missing covariate values, row ignored");
      continue;
    }
    const bool fresh = c_period ? d.by_period.emplace(std::make_pair(id, period_key(row[*c_period])), x).second
                                : d.by_subject.emplace(id, x).second;
    if (!fresh) throw Error(ErrorKind::InvalidData, table.where(r, "subject_id") + ": duplicate covariates for " + place);
  }
  return d;
}

AssembledData assemble_dataset(const CgmData& cgm, const CovariateDesign& design, const ProbabilityGrid& grid,
                               ResponseKind response) {
  AssembledData out;
  out.warnings = cgm.warnings;
  out.warnings.insert(out.warnings.end(), design.warnings.begin(), design.warnings.end());

  // Subjects with any cell lacking covariates are dropped whole.
  std::vector<bool> keep(cgm.subjects.size(), true);
  std::vector<const Eigen::RowVectorXd*> rows(cgm.cells.size());
  for (std::size_t c = 0; c < cgm.cells.size(); ++c) {
    const CgmCell& cell = cgm.cells[c];
    rows[c] = design.find(cgm.subjects[cell.subject], cell.period);
    if (!rows[c] && keep[cell.subject]) {
      keep[cell.subject] = false;
      out.warnings.push_back("subject " + cgm.subjects[cell.subject] + ": no covariates" +
                             (design.time_varying ? " for period " + cell.period : std::string()) +
                             ", subject dropped");
    }
  }

  const ProbabilityGrid used = response == ResponseKind::Mean ? scalar_grid() : grid;
  const auto L = static_cast<Eigen::Index>(design.names.size());
  std::vector<std::size_t> chosen;
  for (std::size_t c = 0; c < cgm.cells.size(); ++c) {
    if (keep[cgm.cells[c].subject]) chosen.push_back(c);
  }
  if (chosen.empty()) throw Error(ErrorKind::EmptyInput, "no subject has both glucose readings and covariates");

  LongitudinalDataset& data = out.data;
  data.grid = used;
  data.covariate_names = design.names;
  const auto records = static_cast<Eigen::Index>(chosen.size());
  data.X.resize(records, L);
  data.Y.resize(records, used.size());

  std::vector<long> label(cgm.subjects.size(), -1);
  std::size_t rank = 0;
  std::size_t previous = cgm.subjects.size();
  for (Eigen::Index r = 0; r < records; ++r) {
    const CgmCell& cell = cgm.cells[chosen[static_cast<std::size_t>(r)]];
    if (label[cell.subject] < 0) {
      label[cell.subject] = static_cast<long>(out.subject_ids.size());
      out.subject_ids.push_back(cgm.subjects[cell.subject]);
    }
    rank = cell.subject == previous ? rank + 1 : 1;
    previous = cell.subject;
    data.subject.push_back(label[cell.subject]);
    data.visit.push_back(cgm.numeric_periods ? *parse_real(cell.period) : static_cast<double>(rank));
    data.X.row(r) = *rows[chosen[static_cast<std::size_t>(r)]];
    if (response == ResponseKind::Mean) {
      double sum = 0.0;
      for (const double g : cell.glucose) sum += g;
      data.Y(r, 0) = sum / static_cast<double>(cell.glucose.size());
    } else {
      data.Y.row(r) = empirical_quantile(cell.glucose, used).values().transpose();
    }
    out.periods.push_back(cell.period);
    out.counts.push_back(static_cast<Eigen::Index>(cell.glucose.size()));
  }
  data.validate();
  return out;
}

void write_quantiles_csv(const std::filesystem::path& path, const AssembledData& assembled) {
  const LongitudinalDataset& data = assembled.data;
  CsvWriter out(path, {"subject_id", "period", "n", "p", "quantile"});
  for (Eigen::Index r = 0; r < data.n_records(); ++r) {
    const auto i = static_cast<std::size_t>(r);
    for (Eigen::Index k = 0; k < data.grid.size(); ++k) {
      out.row({assembled.subject_ids[static_cast<std::size_t>(data.subject[i])], assembled.periods[i],
               std::to_string(assembled.counts[i]), format_real(data.grid[k]), format_real(data.Y(r, k))});
    }
  }
  out.close();
}

void write_coefficients_csv(const std::filesystem::path& path, const FUIFit& fit, const BootstrapBands* bands) {
  CsvWriter out(path, {"coefficient", "p", "beta_raw", "beta_smooth", "v", "pointwise_lo", "pointwise_hi",
                       "joint_lo", "joint_hi", "q_joint"});
  for (Eigen::Index l = 0; l < fit.beta_raw.rows(); ++l) {
    const CoefficientBands* c = bands ? &bands->coefficients[static_cast<std::size_t>(l)] : nullptr;
    for (Eigen::Index k = 0; k < fit.grid.size(); ++k) {
      const bool b = c != nullptr;
      out.row({fit.covariate_names[static_cast<std::size_t>(l)], format_real(fit.grid[k]),
               format_real(fit.beta_raw(l, k)), format_real(fit.beta_smooth(l, k)), na_or(b ? c->variance[k] : 0, b),
               na_or(b ? c->pointwise_lower[k] : 0, b), na_or(b ? c->pointwise_upper[k] : 0, b),
               na_or(b ? c->joint_lower[k] : 0, b), na_or(b ? c->joint_upper[k] : 0, b), na_or(b ? c->q_joint : 0, b)});
    }
  }
  out.close();
}

void write_varcomps_csv(const std::filesystem::path& path, const FUIFit& fit) {
  std::vector<std::string> header = {"p", "G11"};
  if (fit.random == RandomEffects::InterceptSlope) {
    header.push_back("G21");
    header.push_back("G22");
  }
  header.push_back("sigma2");
  header.push_back("converged");
  CsvWriter out(path, header);
  for (Eigen::Index k = 0; k < fit.grid.size(); ++k) {
    const VarianceComponents& vc = fit.points[static_cast<std::size_t>(k)].components;
    std::vector<std::string> row = {format_real(fit.grid[k]), format_real(vc.G(0, 0))};
    if (fit.random == RandomEffects::InterceptSlope) {
      row.push_back(format_real(vc.G(1, 0)));
      row.push_back(format_real(vc.G(1, 1)));
    }
    row.push_back(format_real(vc.sigma2));
    row.push_back(fit.points[static_cast<std::size_t>(k)].converged ? "true" : "false");
    out.row(row);
  }
  out.close();
}

void write_predictions_csv(const std::filesystem::path& path, const AssembledData& assembled,
                           const std::vector<QuantileFunction>& predictions) {
  CsvWriter out(path, {"subject_id", "period", "p", "predicted"});
  for (std::size_t r = 0; r < predictions.size(); ++r) {
    const QuantileFunction& q = predictions[r];
    for (Eigen::Index k = 0; k < q.grid().size(); ++k) {
      out.row({assembled.subject_ids[static_cast<std::size_t>(assembled.data.subject[r])], assembled.periods[r],
               format_real(q.grid()[k]), format_real(q[k])});
    }
  }
  out.close();
}

void write_scalar_fit_csv(const std::filesystem::path& path, const AssembledData& assembled, const ScalarFit& fit) {
  CsvWriter out(path, {"term", "estimate", "std_error"});
  const auto& names = assembled.data.covariate_names;
  for (std::size_t l = 0; l < names.size(); ++l) {
    const auto i = static_cast<Eigen::Index>(l);
    out.row({names[l], format_real(fit.fit.beta[i]), format_real(std::sqrt(fit.fit.vcov_beta(i, i)))});
  }
  const Eigen::MatrixXd& G = fit.fit.components.G;
  out.row({"G11", format_real(G(0, 0)), "NA"});
  if (G.rows() > 1) {
    out.row({"G21", format_real(G(1, 0)), "NA"});
    out.row({"G22", format_real(G(1, 1)), "NA"});
  }
  out.row({"sigma2", format_real(fit.fit.components.sigma2), "NA"});
  out.row({"r2_marginal", format_real(fit.r_squared.marginal), "NA"});
  out.row({"r2_conditional", format_real(fit.r_squared.conditional), "NA"});
  out.close();
}

namespace {

std::vector<double> to_vector(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

nlohmann::ordered_json simulation_report_json(const SimulationReport& report) {
  const ScenarioConfig& c = report.config;
  nlohmann::ordered_json j;
  j["format_version"] = kFormatVersion;
  j["config"] = {{"scenario", c.scenario},
                 {"n", c.n},
                 {"J", c.J},
                 {"rho", c.rho},
                 {"L", c.L},
                 {"grid_size", c.grid_size},
                 {"replicates", c.replicates},
                 {"seed", c.seed},
                 {"random", c.random == RandomEffects::Intercept ? "intercept" : "intercept-slope"},
                 {"smoother", describe(c.smoother)}};
  if (report.has_coverage) {
    j["config"]["bootstrap"] = {{"replicates", c.bootstrap.replicates},
                                {"alpha", c.bootstrap.alpha},
                                {"pve", c.bootstrap.selection.pve},
                                {"n_sim", c.bootstrap.n_sim}};
  }
  j["target"] = report.target;
  j["mu"] = report.summary.median;
  j["sigma"] = report.summary.sd;
  j["bias2"] = report.bias2;
  j["mse"] = to_vector(report.mse);
  if (report.mse_curves.size() > 0) {
    j["p"] = to_vector(report.grid.points());
    j["mu_p"] = to_vector(report.curve_summary.median);
    j["sigma_p"] = to_vector(report.curve_summary.sd);
  }
  if (report.has_coverage) {
    j["coverage_joint"] = to_vector(report.coverage_joint);
    j["coverage_pointwise"] = to_vector(report.coverage_pointwise);
    j["target_coverage_joint"] = report.coverage_joint[report.target];
    j["target_coverage_pointwise"] = report.coverage_pointwise[report.target];
    nlohmann::ordered_json hits = nlohmann::ordered_json::array();
    for (Eigen::Index r = 0; r < report.joint_hits.rows(); ++r) {
      hits.push_back({{"joint", to_vector(report.joint_hits.row(r).transpose())},
                      {"pointwise", to_vector(report.pointwise_hits.row(r).transpose())}});
    }
    j["replicate_coverage"] = std::move(hits);
  }
  j["nonconverged_points"] = report.nonconverged_points;
  return j;
}

void write_curves_csv(const std::filesystem::path& path, const SimulationReport& report) {
  CsvWriter out(path, {"p", "mu", "sigma"});
  for (Eigen::Index k = 0; k < report.grid.size(); ++k) {
    out.row({format_real(report.grid[k]), format_real(report.curve_summary.median[k]),
             format_real(report.curve_summary.sd[k])});
  }
  out.close();
}

void write_json(const std::filesystem::path& path, const nlohmann::ordered_json& value) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << value.dump(2) << '\n';
  out.close();
  if (!out) throw Error(ErrorKind::Io, "failed writing " + path.string());
}

}  // namespace qfreg
