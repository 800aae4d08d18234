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

#ifndef QFREG_CLI_HPP
#define QFREG_CLI_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "qfreg/lmm.hpp"
#include "qfreg/smoothing.hpp"

namespace qfreg {

inline constexpr const char* kVersion = "1.0.0";

/// Everything one invocation needs, filled from command-line flags.
struct RunConfig {
  std::string command;  // quantiles | fit | simulate | coverage
  std::string cgm_path;
  std::string covariates_path;
  std::string formula = "~ 1";
  std::optional<double> period_days;
  std::string response = "quantile";  // quantile | mean
  Eigen::Index grid_size = 100;
  RandomEffects random = RandomEffects::Intercept;
  Eigen::Index boot = 500;
  double alpha = 0.05;
  double pve = 0.95;
  Eigen::Index n_sim = 10000;
  SmootherOptions smoother;
  std::uint64_t seed = 1;
  unsigned workers = 1;
  int scenario = 1;
  Eigen::Index n = 300;
  Eigen::Index J = 5;
  double rho = 0.0;
  Eigen::Index L = 1;
  Eigen::Index reps = 200;
  bool per_point_noise = false;
  std::string out_dir = ".";

  /// Throws Config errors for out-of-range options.
  void validate() const;
};

/// Runs one command; returns the list of files written.
std::vector<std::string> run_command(const RunConfig& config, std::ostream& log);

/// Parses flags, runs the command and reports errors. Returns 0 only when
/// every output file was written.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_cli(int argc, const char* const* argv);

}  // namespace qfreg

#endif  // QFREG_CLI_HPP
