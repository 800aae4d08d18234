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

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "qfreg/bootstrap.hpp"
#include "qfreg/error.hpp"
#include "qfreg/simulation.hpp"

using namespace qfreg;

namespace {

LongitudinalDataset scenario_data(Eigen::Index n, Eigen::Index m, std::uint64_t seed) {
  ScenarioConfig c;
  c.n = n;
  c.J = 4;
  c.rho = 0.3;
  c.grid_size = m;
  return simulate_scenario1(c, seed);
}

bool same_bands(const BootstrapBands& a, const BootstrapBands& b) {
  if (a.coefficients.size() != b.coefficients.size()) return false;
  for (std::size_t l = 0; l < a.coefficients.size(); ++l) {
    const CoefficientBands& x = a.coefficients[l];
    const CoefficientBands& y = b.coefficients[l];
    if (x.replicates != y.replicates || x.variance != y.variance || x.q_joint != y.q_joint ||
        x.joint_lower != y.joint_lower || x.joint_upper != y.joint_upper || x.pointwise_lower != y.pointwise_lower ||
        x.pointwise_upper != y.pointwise_upper) {
      return false;
    }
  }
  return true;
}

}  // namespace

TEST(ResampleSubjects, RelabelsDraws) {
  const LongitudinalDataset d = scenario_data(5, 4, 1);
  const LongitudinalDataset r = resample_subjects(d, {3, 3, 0});
  EXPECT_EQ(r.n_records(), 12);
  EXPECT_EQ(r.n_subjects(), 3);
  EXPECT_EQ(r.subject[0], 0);
  EXPECT_EQ(r.subject[4], 1);
  EXPECT_EQ(r.subject[8], 2);
  EXPECT_EQ(r.Y.row(0), d.Y.row(12));
  EXPECT_EQ(r.Y.row(4), d.Y.row(12));
  EXPECT_EQ(r.Y.row(8), d.Y.row(0));
}

TEST(BootstrapBands, BandDefinitions) {
  const LongitudinalDataset d = scenario_data(60, 20, 2);
  const FUIFit fit = fit_pointwise(d);
  BootstrapOptions o;
  o.replicates = 60;
  o.n_sim = 2000;
  const BootstrapBands bands = bootstrap_bands(d, fit, o);
  ASSERT_EQ(bands.coefficients.size(), 1u);
  const CoefficientBands& c = bands.coefficients[0];
  ASSERT_EQ(c.replicates.rows(), 60);
  const Eigen::VectorXd mean = c.replicates.colwise().mean().transpose();
  const Eigen::MatrixXd centered = c.replicates.rowwise() - mean.transpose();
  const Eigen::VectorXd var = centered.array().square().colwise().sum().transpose() / 59.0;
  EXPECT_LE((c.mean - mean).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LE((c.variance - var).cwiseAbs().maxCoeff(), 1e-10 * var.maxCoeff());
  const Eigen::ArrayXd sd = c.variance.array().sqrt();
  EXPECT_LE(((c.pointwise_upper - c.mean).array() - 2.0 * sd).abs().maxCoeff(), 1e-10);
  EXPECT_LE(((c.mean - c.pointwise_lower).array() - 2.0 * sd).abs().maxCoeff(), 1e-10);
  const Eigen::ArrayXd est = fit.beta_smooth.row(0).transpose().array();
  EXPECT_LE(((c.joint_upper.array() - est) - c.q_joint * sd).abs().maxCoeff(), 1e-10);
  EXPECT_LE(((est - c.joint_lower.array()) - c.q_joint * sd).abs().maxCoeff(), 1e-10);
  EXPECT_GT(c.q_joint, 1.5);
  EXPECT_LT(c.q_joint, 4.0);
  EXPECT_TRUE(bands.warnings.empty());
  const Eigen::MatrixXd gram = c.fpca.eigenvectors.transpose() * c.fpca.eigenvectors;
  EXPECT_LE((gram - Eigen::MatrixXd::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(BootstrapBands, NoiselessDataCollapses) {
  LongitudinalDataset d;
  d.grid = build_grid(10);
  d.covariate_names = {"(Intercept)", "x"};
  d.X.resize(30, 2);
  d.Y.resize(30, 10);
  for (int r = 0; r < 30; ++r) {
    const double x = (r / 3) * 0.5;
    d.subject.push_back(r / 3);
    d.visit.push_back(r % 3 + 1);
    d.X.row(r) << 1.0, x;
    for (Eigen::Index k = 0; k < 10; ++k) d.Y(r, k) = 2.0 + x * d.grid[k];
  }
  const FUIFit fit = fit_pointwise(d);
  BootstrapOptions o;
  o.replicates = 20;
  o.n_sim = 500;
  const BootstrapBands bands = bootstrap_bands(d, fit, o);
  for (const CoefficientBands& c : bands.coefficients) {
    EXPECT_EQ(c.variance.maxCoeff(), 0.0);
    EXPECT_EQ(c.joint_lower, c.joint_upper);
  }
  EXPECT_LE((bands.coefficients[1].joint_lower - d.grid.points()).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_FALSE(bands.warnings.empty());  // fewer than 50 replicates
}

TEST(BootstrapBands, DeterministicAcrossWorkers) {
  const LongitudinalDataset d = scenario_data(50, 15, 3);
  const FUIFit fit = fit_pointwise(d);
  BootstrapOptions o;
  o.replicates = 24;
  o.n_sim = 1000;
  o.seed = 99;
  const BootstrapBands one = bootstrap_bands(d, fit, o);
  for (const unsigned w : {4u, 8u}) {
    o.workers = w;
    EXPECT_TRUE(same_bands(one, bootstrap_bands(d, fit, o))) << w << " workers";
  }
  o.workers = 1;
  o.seed = 100;
  EXPECT_FALSE(same_bands(one, bootstrap_bands(d, fit, o)));
}

TEST(BootstrapBands, ScaleEquivariance) {
  LongitudinalDataset d = scenario_data(50, 15, 4);
  const FUIFit fit = fit_pointwise(d);
  BootstrapOptions o;
  o.replicates = 50;
  o.n_sim = 2000;
  const BootstrapBands a = bootstrap_bands(d, fit, o);
  d.Y *= 3.0;
  const FUIFit fit3 = fit_pointwise(d);
  const BootstrapBands b = bootstrap_bands(d, fit3, o);
  const CoefficientBands& x = a.coefficients[0];
  const CoefficientBands& y = b.coefficients[0];
  EXPECT_LE((3.0 * x.replicates - y.replicates).cwiseAbs().maxCoeff(), 1e-5 * y.replicates.cwiseAbs().maxCoeff());
  EXPECT_NEAR(x.q_joint, y.q_joint, 1e-4 * x.q_joint);
  EXPECT_LE((3.0 * x.joint_upper - y.joint_upper).cwiseAbs().maxCoeff(), 1e-4);
}

TEST(SummarizeBootstrap, KnownMatrices) {
  FUIFit fit;
  fit.grid = build_grid(3);
  fit.covariate_names = {"(Intercept)"};
  fit.beta_raw = Eigen::RowVector3d(1, 2, 3);
  fit.beta_smooth = fit.beta_raw;
  Eigen::MatrixXd reps(4, 3);
  reps << 1, 2, 3, 2, 3, 4, 0, 1, 2, 1, 2, 3;
  BootstrapOptions o;
  o.n_sim = 1000;
  const BootstrapBands bands = summarize_bootstrap(fit, {reps}, o);
  const CoefficientBands& c = bands.coefficients[0];
  EXPECT_EQ(c.mean, Eigen::Vector3d(1, 2, 3));
  EXPECT_NEAR(c.variance[0], 2.0 / 3.0, 1e-15);
  // Rows differ by a constant shift: one component carries all variance.
  EXPECT_EQ(c.fpca.n_components, 1);
  EXPECT_NEAR(c.q_joint, 1.96, 0.1);
  EXPECT_THROW(summarize_bootstrap(fit, {reps.topRows(1)}, o), Error);
}

TEST(BootstrapBands, RejectsBadOptions) {
  const LongitudinalDataset d = scenario_data(10, 5, 5);
  const FUIFit fit = fit_pointwise(d);
  BootstrapOptions o;
  o.replicates = 1;
  EXPECT_THROW(bootstrap_bands(d, fit, o), Error);
  o.replicates = 10;
  o.alpha = 1.5;
  EXPECT_THROW(bootstrap_bands(d, fit, o), Error);
}
