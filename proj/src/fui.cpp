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

#include "qfreg/fui.hpp"

#include <algorithm>
#include <sstream>

#include "qfreg/parallel.hpp"

namespace qfreg {

namespace {

// Grid points are fitted in fixed-size chunks; warm starts chain within a
// chunk, so results do not depend on the number of workers.
constexpr Eigen::Index kWarmChunk = 10;

MixedModelSpec build_spec(const LongitudinalDataset& data, RandomEffects random) {
  try {
    return MixedModelSpec::with_visits(data.X, data.visit, data.subject, random);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::RankDeficient) throw;
    std::ostringstream os;
    os << "at p = " << data.grid[0] << ": " << e.what();
    throw Error(ErrorKind::RankDeficient, os.str());
  }
}

}  // namespace

Eigen::MatrixXd FUIFit::apply_smoother(const Eigen::MatrixXd& raw) const {
  if (smoother_matrices.empty()) return raw;
  if (static_cast<Eigen::Index>(smoother_matrices.size()) != raw.rows()) {
    throw Error(ErrorKind::Shape, "one smoother per coefficient is required");
  }
  Eigen::MatrixXd out(raw.rows(), raw.cols());
  for (Eigen::Index l = 0; l < raw.rows(); ++l) {
    out.row(l) = (smoother_matrices[static_cast<std::size_t>(l)] * raw.row(l).transpose()).transpose();
  }
  return out;
}

FUIFit fit_pointwise(const LongitudinalDataset& data, const PointwiseOptions& options) {
  data.validate();
  if (data.n_subjects() < 2) throw Error(ErrorKind::InvalidData, "at least 2 subjects are required");
  const MixedModelSpec spec = build_spec(data, options.random);
  const Eigen::Index m = data.grid.size();
  const Eigen::Index L = data.n_covariates();

  FUIFit fit;
  fit.grid = data.grid;
  fit.random = options.random;
  fit.covariate_names = data.covariate_names;
  fit.beta_raw.resize(L, m);
  fit.points.resize(static_cast<std::size_t>(m));
  fit.subject_labels = spec.labels();

  const Eigen::Index chunks = (m + kWarmChunk - 1) / kWarmChunk;
  parallel_for(static_cast<std::size_t>(chunks), options.workers, [&](std::size_t c) {
    const Eigen::Index first = static_cast<Eigen::Index>(c) * kWarmChunk;
    const Eigen::Index last = std::min(m, first + kWarmChunk);
    RemlOptions reml = options.reml;
    for (Eigen::Index p = first; p < last; ++p) {
      const Eigen::VectorXd y = data.Y.col(p);
      LMMFit f;
      try {
        f = fit_reml(spec, y, reml);
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::RankDeficient) throw;
        std::ostringstream os;
        os << "at p = " << data.grid[p] << ": " << e.what();
        throw Error(ErrorKind::RankDeficient, os.str());
      }
      fit.beta_raw.col(p) = f.beta;
      PointFit& point = fit.points[static_cast<std::size_t>(p)];
      point.components = f.components;
      point.blups = std::move(f.blups);
      point.reml_deviance = f.reml_deviance;
      point.converged = f.converged;
      if (options.warm_start) reml.init = f.components.theta;
    }
  });
  fit.beta_smooth = fit.beta_raw;
  return fit;
}

FUIFit smooth_coefficients(FUIFit fit, const SmootherOptions& smoother) {
  if (fit.beta_raw.cols() != fit.grid.size() || fit.beta_raw.rows() == 0) {
    throw Error(ErrorKind::Shape, "fit has no pointwise estimates to smooth");
  }
  fit.smoother = smoother;
  fit.smoother_matrices.clear();
  for (Eigen::Index l = 0; l < fit.beta_raw.rows(); ++l) {
    fit.smoother_matrices.push_back(smoother_matrix(smoother, fit.grid, fit.beta_raw.row(l).transpose()));
  }
  fit.beta_smooth = fit.apply_smoother(fit.beta_raw);
  return fit;
}

std::vector<QuantileFunction> predict_subject_quantiles(const LongitudinalDataset& data, const FUIFit& fit,
                                                        bool include_random) {
  data.validate();
  const Eigen::Index m = fit.grid.size();
  if (!(data.grid == fit.grid) || data.n_covariates() != fit.beta_smooth.rows()) {
    throw Error(ErrorKind::Shape, "dataset does not match the fitted model");
  }
  Eigen::MatrixXd pred = data.X * fit.beta_smooth;  // records x m
  if (include_random) {
    if (static_cast<Eigen::Index>(fit.points.size()) != m) {
      throw Error(ErrorKind::MissingBlups, "fit carries no pointwise BLUPs");
    }
    const Eigen::Index K = random_effect_count(fit.random);
    for (Eigen::Index r = 0; r < data.n_records(); ++r) {
      const long label = data.subject[static_cast<std::size_t>(r)];
      const auto it = std::lower_bound(fit.subject_labels.begin(), fit.subject_labels.end(), label);
      if (it == fit.subject_labels.end() || *it != label) {
        throw Error(ErrorKind::MissingBlups, "no BLUPs for subject " + std::to_string(label));
      }
      const auto g = it - fit.subject_labels.begin();
      Eigen::VectorXd z(K);
      z[0] = 1.0;
      if (K == 2) z[1] = data.visit[static_cast<std::size_t>(r)];
      for (Eigen::Index p = 0; p < m; ++p) {
        const Eigen::MatrixXd& u = fit.points[static_cast<std::size_t>(p)].blups;
        if (u.rows() != static_cast<Eigen::Index>(fit.subject_labels.size()) || u.cols() != K) {
          throw Error(ErrorKind::MissingBlups, "BLUPs missing at grid index " + std::to_string(p));
        }
        pred(r, p) += z.dot(u.row(g));
      }
    }
  }
  std::vector<QuantileFunction> out;
  out.reserve(static_cast<std::size_t>(data.n_records()));
  for (Eigen::Index r = 0; r < data.n_records(); ++r) {
    out.push_back(QuantileFunction::project(fit.grid, pred.row(r).transpose()));
  }
  return out;
}

ScalarFit fit_scalar_multilevel(const LongitudinalDataset& data, RandomEffects random, const RemlOptions& reml) {
  data.validate();
  if (data.Y.cols() != 1) throw Error(ErrorKind::Shape, "scalar model needs exactly one response column");
  const MixedModelSpec spec = build_spec(data, random);
  ScalarFit out;
  out.fit = fit_reml(spec, data.Y.col(0), reml);
  out.r_squared = r_squared_components(out.fit, spec);
  return out;
}

}  // namespace qfreg
