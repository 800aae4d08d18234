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

#include "qfreg/dataset.hpp"

#include <algorithm>
#include <map>
#include <string>

namespace qfreg {

Eigen::Index LongitudinalDataset::n_subjects() const {
  std::vector<long> s(subject);
  std::sort(s.begin(), s.end());
  return static_cast<Eigen::Index>(std::unique(s.begin(), s.end()) - s.begin());
}

void LongitudinalDataset::validate() const {
  const Eigen::Index n = X.rows();
  if (n == 0) throw Error(ErrorKind::EmptyInput, "dataset has no records");
  if (static_cast<Eigen::Index>(subject.size()) != n || static_cast<Eigen::Index>(visit.size()) != n ||
      Y.rows() != n) {
    throw Error(ErrorKind::Shape, "subject, visit, X and Y must have one entry per record");
  }
  if (Y.cols() != grid.size()) {
    throw Error(ErrorKind::Shape, "responses have " + std::to_string(Y.cols()) + " columns on a grid of " +
                                      std::to_string(grid.size()));
  }
  if (static_cast<Eigen::Index>(covariate_names.size()) != X.cols()) {
    throw Error(ErrorKind::Shape, "one covariate name is needed per column of X");
  }
  if (!X.allFinite() || !Y.allFinite()) throw Error(ErrorKind::InvalidData, "dataset contains non-finite values");
}

ProbabilityGrid scalar_grid() { return ProbabilityGrid(Eigen::VectorXd::Ones(1)); }

LongitudinalDataset resample_subjects(const LongitudinalDataset& data, const std::vector<long>& draws) {
  std::map<long, std::vector<Eigen::Index>> records;
  for (Eigen::Index r = 0; r < data.n_records(); ++r) records[data.subject[static_cast<std::size_t>(r)]].push_back(r);

  std::vector<Eigen::Index> rows;
  std::vector<long> labels;
  for (std::size_t k = 0; k < draws.size(); ++k) {
    const auto it = records.find(draws[k]);
    if (it == records.end()) throw Error(ErrorKind::InvalidData, "unknown subject " + std::to_string(draws[k]));
    for (const Eigen::Index r : it->second) {
      rows.push_back(r);
      labels.push_back(static_cast<long>(k));
    }
  }
  LongitudinalDataset out;
  out.grid = data.grid;
  out.covariate_names = data.covariate_names;
  out.subject = std::move(labels);
  out.X.resize(static_cast<Eigen::Index>(rows.size()), data.X.cols());
  out.Y.resize(static_cast<Eigen::Index>(rows.size()), data.Y.cols());
  out.visit.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.X.row(static_cast<Eigen::Index>(i)) = data.X.row(rows[i]);
    out.Y.row(static_cast<Eigen::Index>(i)) = data.Y.row(rows[i]);
    out.visit.push_back(data.visit[static_cast<std::size_t>(rows[i])]);
  }
  return out;
}

}  // namespace qfreg
