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

#include "qfreg/bootstrap.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "qfreg/parallel.hpp"
#include "qfreg/random.hpp"

namespace qfreg {

namespace {

constexpr int kMaxAttempts = 10;
constexpr std::uint64_t kBandStream = 0xb4d5ULL;

}  // namespace

BootstrapBands summarize_bootstrap(const FUIFit& fit, std::vector<Eigen::MatrixXd> replicates,
                                   const BootstrapOptions& options) {
  const Eigen::Index L = fit.beta_smooth.rows();
  const Eigen::Index m = fit.beta_smooth.cols();
  if (static_cast<Eigen::Index>(replicates.size()) != L) {
    throw Error(ErrorKind::Shape, "one replicate matrix per coefficient is required");
  }
  BootstrapBands out;
  out.alpha = options.alpha;
  out.n_sim = options.n_sim;
  for (Eigen::Index l = 0; l < L; ++l) {
    Eigen::MatrixXd& boot = replicates[static_cast<std::size_t>(l)];
    const Eigen::Index B = boot.rows();
    if (B < 2) throw Error(ErrorKind::InsufficientReplicates, "at least 2 bootstrap replicates are required");
    if (boot.cols() != m) throw Error(ErrorKind::Shape, "bootstrap matrix has the wrong number of columns");
    out.replicates = B;

    CoefficientBands bands;
    bands.mean = boot.colwise().mean().transpose();
    bands.variance =
        (boot.rowwise() - bands.mean.transpose()).colwise().squaredNorm().transpose() / static_cast<double>(B - 1);
    // Variances at the rounding level of the estimates count as zero.
    const double scale = std::max(1.0, bands.mean.cwiseAbs().maxCoeff());
    const double floor = (1e-12 * scale) * (1e-12 * scale);
    for (Eigen::Index p = 0; p < m; ++p)
      if (bands.variance[p] <= floor) bands.variance[p] = 0.0;

    bands.fpca = fpca_decompose(boot, options.selection);
    bands.q_joint = joint_band_quantile(bands.mean, bands.variance, bands.fpca.eigenvalues,
                                        bands.fpca.eigenvectors, options.n_sim, options.alpha,
                                        derive_seed(options.seed, {kBandStream, static_cast<std::uint64_t>(l)}));
    const Eigen::VectorXd sd = bands.variance.cwiseSqrt();
    const Eigen::VectorXd estimate = fit.beta_smooth.row(l).transpose();
    bands.pointwise_lower = bands.mean - 2.0 * sd;
    bands.pointwise_upper = bands.mean + 2.0 * sd;
    bands.joint_lower = estimate - bands.q_joint * sd;
    bands.joint_upper = estimate + bands.q_joint * sd;
    bands.replicates = std::move(boot);
    out.coefficients.push_back(std::move(bands));
  }
  return out;
}

BootstrapBands bootstrap_bands(const LongitudinalDataset& data, const FUIFit& fit, const BootstrapOptions& options) {
  data.validate();
  const Eigen::Index B = options.replicates;
  if (B < 2) throw Error(ErrorKind::InsufficientReplicates, "at least 2 bootstrap replicates are required");
  if (!(options.alpha > 0.0 && options.alpha < 1.0)) throw Error(ErrorKind::Config, "alpha must lie in (0, 1)");
  const Eigen::Index L = fit.beta_smooth.rows();
  const Eigen::Index m = fit.grid.size();
  if (data.n_covariates() != L || !(data.grid == fit.grid)) {
    throw Error(ErrorKind::Shape, "dataset does not match the fitted model");
  }

  std::vector<long> subjects(data.subject);
  std::sort(subjects.begin(), subjects.end());
  subjects.erase(std::unique(subjects.begin(), subjects.end()), subjects.end());
  const auto n = subjects.size();

  std::vector<Eigen::MatrixXd> boot(static_cast<std::size_t>(L), Eigen::MatrixXd(B, m));
  std::vector<int> attempts(static_cast<std::size_t>(B), 0);

  PointwiseOptions pointwise;
  pointwise.random = fit.random;
  pointwise.warm_start = options.warm_start;
  pointwise.workers = 1;

  parallel_for(static_cast<std::size_t>(B), options.workers, [&](std::size_t b) {
    for (int attempt = 0;; ++attempt) {
      if (attempt == kMaxAttempts) {
        throw Error(ErrorKind::RankDeficient, "bootstrap replicate " + std::to_string(b) + " stayed rank deficient after " +
                                                  std::to_string(kMaxAttempts) + " draws");
      }
      Rng rng(derive_seed(options.seed, {static_cast<std::uint64_t>(b), static_cast<std::uint64_t>(attempt)}));
      std::uniform_int_distribution<std::size_t> pick(0, n - 1);
      std::vector<long> draws(n);
      for (auto& d : draws) d = subjects[pick(rng)];
      try {
        const LongitudinalDataset sample = resample_subjects(data, draws);
        const FUIFit refit = fit_pointwise(sample, pointwise);
        const Eigen::MatrixXd smooth = fit.apply_smoother(refit.beta_raw);
        for (Eigen::Index l = 0; l < L; ++l) boot[static_cast<std::size_t>(l)].row(static_cast<Eigen::Index>(b)) = smooth.row(l);
        attempts[b] = attempt;
        return;
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::RankDeficient) throw;
      }
    }
  });

  BootstrapBands out = summarize_bootstrap(fit, std::move(boot), options);
  for (const int a : attempts) out.redraws += a;
  if (B < 50) {
    out.warnings.push_back("only " + std::to_string(B) + " bootstrap replicates; at least 50 are recommended");
  }
  return out;
}

}  // namespace qfreg
