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

#include "qfreg/lmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <string>

#include "nelder_mead.hpp"

namespace qfreg {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kRankTolerance = 1e-10;
constexpr double kBoundaryEigen = 1e-10;

void check_rank(const Eigen::MatrixXd& X) {
  const Eigen::MatrixXd xtx = X.transpose() * X;
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(xtx);
  const Eigen::VectorXd d = ldlt.vectorD().cwiseAbs();
  if (ldlt.info() != Eigen::Success || d.size() == 0 || !(d.minCoeff() > kRankTolerance * d.maxCoeff())) {
    throw Error(ErrorKind::RankDeficient, "fixed-effects design X'X is singular (" +
                                              std::to_string(X.cols()) + " columns)");
  }
}

// Per-fit sufficient statistics of the profiled REML criterion.
//
// With W = [X y] and R_i = W_i' Z_i, every quantity the criterion needs is a
// function of W'W, the per-group Z_i' Z_i and the cross products R_i A R_i'
// for K x K matrices A that depend only on theta and Z_i' Z_i. Groups sharing
// Z_i' Z_i are pooled into one bucket, so an evaluation costs
// O(buckets * K^2 * (L+1)^2) regardless of the number of observations.
//
// Observations are accumulated in a canonical order (groups by label, rows
// within a group sorted by (Z, X, y)) so results do not depend on input order.
class RemlSystem {
 public:
  struct Evaluation {
    double deviance = kInf;
    Eigen::VectorXd beta;
    double rss = 0.0;
    Eigen::MatrixXd xvx;  // X' V^{-1} X with V scaled by 1 / sigma2
    bool ok = false;
  };

  RemlSystem(const MixedModelSpec& spec, const Eigen::VectorXd& y)
      : n_(spec.n_obs()), L_(spec.n_fixed()), K_(spec.n_random()) {
    const Eigen::Index w = L_ + 1;
    const auto& X = spec.X();
    const auto& Z = spec.Z();

    std::vector<std::vector<Eigen::Index>> rows(static_cast<std::size_t>(spec.n_groups()));
    for (Eigen::Index i = 0; i < n_; ++i) rows[static_cast<std::size_t>(spec.group()[i])].push_back(i);

    auto less = [&](Eigen::Index a, Eigen::Index b) {
      for (Eigen::Index k = 0; k < K_; ++k)
        if (Z(a, k) != Z(b, k)) return Z(a, k) < Z(b, k);
      for (Eigen::Index l = 0; l < L_; ++l)
        if (X(a, l) != X(b, l)) return X(a, l) < X(b, l);
      return y[a] < y[b];
    };

    wtw_ = Eigen::MatrixXd::Zero(w, w);
    group_wz_.reserve(rows.size());
    group_bucket_.reserve(rows.size());
    std::map<std::vector<double>, std::size_t> bucket_of;
    Eigen::VectorXd wrow(w);
    for (auto& r : rows) {
      std::sort(r.begin(), r.end(), less);
      Eigen::MatrixXd wtw_g = Eigen::MatrixXd::Zero(w, w);
      Eigen::MatrixXd wz = Eigen::MatrixXd::Zero(w, K_);
      Eigen::MatrixXd ztz = Eigen::MatrixXd::Zero(K_, K_);
      for (const Eigen::Index i : r) {
        wrow.head(L_) = X.row(i).transpose();
        wrow[L_] = y[i];
        wtw_g.selfadjointView<Eigen::Lower>().rankUpdate(wrow);
        wz += wrow * Z.row(i);
        ztz += Z.row(i).transpose() * Z.row(i);
      }
      wtw_ += wtw_g;

      std::vector<double> key(ztz.data(), ztz.data() + ztz.size());
      auto [it, inserted] = bucket_of.try_emplace(std::move(key), buckets_.size());
      if (inserted) {
        Bucket b;
        b.ztz = ztz;
        b.cross.assign(static_cast<std::size_t>(K_ * K_), Eigen::MatrixXd::Zero(w, w));
        buckets_.push_back(std::move(b));
      }
      Bucket& b = buckets_[it->second];
      b.count += 1.0;
      for (Eigen::Index k = 0; k < K_; ++k)
        for (Eigen::Index l = 0; l < K_; ++l)
          b.cross[static_cast<std::size_t>(k * K_ + l)].noalias() += wz.col(k) * wz.col(l).transpose();
      group_wz_.push_back(std::move(wz));
      group_bucket_.push_back(it->second);
    }
    wtw_ = wtw_.selfadjointView<Eigen::Lower>();

    const Eigen::LLT<Eigen::MatrixXd> xtx(wtw_.topLeftCorner(L_, L_));
    if (xtx.info() != Eigen::Success) {
      throw Error(ErrorKind::RankDeficient, "fixed-effects design X'X is not positive definite");
    }
    logdet_xtx_ = 2.0 * xtx.matrixLLT().diagonal().array().log().sum();
  }

  Evaluation evaluate(const Eigen::MatrixXd& lambda) const {
    const Eigen::Index w = L_ + 1;
    Evaluation out;
    Eigen::MatrixXd omega = wtw_;
    double logdet_m = 0.0;
    for (const Bucket& b : buckets_) {
      const Eigen::MatrixXd m =
          Eigen::MatrixXd::Identity(K_, K_) + lambda.transpose() * b.ztz * lambda;
      const Eigen::LLT<Eigen::MatrixXd> llt(m);
      if (llt.info() != Eigen::Success) return out;
      logdet_m += b.count * 2.0 * llt.matrixLLT().diagonal().array().log().sum();
      const Eigen::MatrixXd a = lambda * llt.solve(lambda.transpose());
      for (Eigen::Index k = 0; k < K_; ++k)
        for (Eigen::Index l = 0; l < K_; ++l)
          if (a(k, l) != 0.0) omega.noalias() -= a(k, l) * b.cross[static_cast<std::size_t>(k * K_ + l)];
    }
    out.xvx = omega.topLeftCorner(L_, L_);
    const Eigen::LLT<Eigen::MatrixXd> llt(out.xvx);
    if (llt.info() != Eigen::Success) return out;
    out.beta = llt.solve(omega.col(L_).head(L_));
    out.rss = omega(L_, L_) - omega.col(L_).head(L_).dot(out.beta);
    const double dof = static_cast<double>(n_ - L_);
    const double rss = std::max(out.rss, std::numeric_limits<double>::min());
    const double logdet_xvx = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    out.deviance = logdet_m + logdet_xvx - logdet_xtx_ +
                   dof * (1.0 + std::log(2.0 * std::numbers::pi * rss / dof));
    out.ok = std::isfinite(out.deviance);
    (void)w;
    return out;
  }

  double deviance(const Eigen::MatrixXd& lambda) const {
    const Evaluation e = evaluate(lambda);
    return e.ok ? e.deviance : kInf;
  }

  // Conditional modes u_i = Lambda M_i^{-1} Lambda' Z_i'(y_i - X_i beta).
  Eigen::MatrixXd blups(const Eigen::MatrixXd& lambda, const Eigen::VectorXd& beta) const {
    std::vector<Eigen::MatrixXd> a_of(buckets_.size());
    for (std::size_t b = 0; b < buckets_.size(); ++b) {
      const Eigen::MatrixXd m =
          Eigen::MatrixXd::Identity(K_, K_) + lambda.transpose() * buckets_[b].ztz * lambda;
      a_of[b] = lambda * m.llt().solve(lambda.transpose());
    }
    Eigen::VectorXd c(L_ + 1);
    c.head(L_) = -beta;
    c[L_] = 1.0;
    Eigen::MatrixXd u(static_cast<Eigen::Index>(group_wz_.size()), K_);
    for (std::size_t g = 0; g < group_wz_.size(); ++g) {
      const Eigen::VectorXd ztr = group_wz_[g].transpose() * c;
      u.row(static_cast<Eigen::Index>(g)) = (a_of[group_bucket_[g]] * ztr).transpose();
    }
    return u;
  }

  // Per-group sums and counts of OLS residuals, and their sum of squares.
  double ols_group_residuals(Eigen::VectorXd& sum, Eigen::VectorXd& count) const {
    Eigen::VectorXd c(L_ + 1);
    c.head(L_) = -wtw_.topLeftCorner(L_, L_).ldlt().solve(wtw_.col(L_).head(L_));
    c[L_] = 1.0;
    const auto G = static_cast<Eigen::Index>(group_wz_.size());
    sum.resize(G);
    count.resize(G);
    for (std::size_t g = 0; g < group_wz_.size(); ++g) {
      sum[static_cast<Eigen::Index>(g)] = group_wz_[g].col(0).dot(c);
      count[static_cast<Eigen::Index>(g)] = buckets_[group_bucket_[g]].ztz(0, 0);
    }
    return std::max(c.dot(wtw_ * c), 0.0);
  }

  Eigen::Index n() const noexcept { return n_; }
  Eigen::Index L() const noexcept { return L_; }
  Eigen::Index K() const noexcept { return K_; }

 private:
  struct Bucket {
    Eigen::MatrixXd ztz;
    double count = 0.0;
    std::vector<Eigen::MatrixXd> cross;  // sum_i R_i e_k e_l' R_i', index k * K + l
  };

  Eigen::Index n_;
  Eigen::Index L_;
  Eigen::Index K_;
  Eigen::MatrixXd wtw_;
  double logdet_xtx_ = 0.0;
  std::vector<Bucket> buckets_;
  std::vector<Eigen::MatrixXd> group_wz_;
  std::vector<std::size_t> group_bucket_;
};

Eigen::Index theta_size(Eigen::Index K) { return K * (K + 1) / 2; }

std::vector<Eigen::Index> diagonal_indices(Eigen::Index K) {
  return K == 1 ? std::vector<Eigen::Index>{0} : std::vector<Eigen::Index>{0, 2};
}

void check_problem(const MixedModelSpec& spec, const Eigen::VectorXd& y) {
  if (y.size() != spec.n_obs()) {
    throw Error(ErrorKind::Shape, "response has " + std::to_string(y.size()) + " entries, design has " +
                                      std::to_string(spec.n_obs()) + " rows");
  }
  if (!y.allFinite()) throw Error(ErrorKind::InvalidData, "response contains non-finite values");
  if (spec.n_obs() <= spec.n_fixed() + spec.n_random()) {
    throw Error(ErrorKind::Shape, "need more observations than fixed plus random effects");
  }
}

// Method-of-moments start: between-group variance of OLS residual means
// against the within-group residual variance.
Eigen::VectorXd moment_start(const RemlSystem& sys) {
  const Eigen::Index K = sys.K();
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(theta_size(K));
  Eigen::VectorXd sum;
  Eigen::VectorXd count;
  const double rss = sys.ols_group_residuals(sum, count);
  const Eigen::Index G = sum.size();
  const Eigen::VectorXd mean = sum.cwiseQuotient(count);
  const double within = std::max(rss - sum.cwiseProduct(mean).sum(), 0.0);
  const double n = static_cast<double>(sys.n());
  const double g = static_cast<double>(G);
  const double sigma2 = n > g ? within / (n - g) : rss / n;
  const double between = G > 1 ? (mean.array() - mean.mean()).square().sum() / (g - 1.0) : 0.0;
  const double nbar = n / g;
  const double ratio = (between - sigma2 / nbar) / sigma2;
  const double t0 = 0.5 * std::log(std::max(ratio, 1e-4));
  if (!std::isfinite(t0)) return theta;
  theta[0] = t0;
  if (K == 2) theta[2] = t0 - std::log(std::max(nbar, 1.0));
  return theta;
}

Eigen::MatrixXd clip_boundary(Eigen::MatrixXd G, double sigma2) {
  G = 0.5 * (G + G.transpose()).eval();
  const double threshold = kBoundaryEigen * (sigma2 > 0.0 ? sigma2 : 1.0);
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(G);
  Eigen::VectorXd ev = eig.eigenvalues();
  if (ev.minCoeff() >= threshold || G.isZero(0.0)) return G;
  for (Eigen::Index i = 0; i < ev.size(); ++i)
    if (ev[i] < threshold) ev[i] = 0.0;
  return eig.eigenvectors() * ev.asDiagonal() * eig.eigenvectors().transpose();
}

LMMFit finalize(const RemlSystem& sys, const Eigen::VectorXd& theta) {
  const Eigen::MatrixXd lambda = relative_factor(theta);
  const RemlSystem::Evaluation e = sys.evaluate(lambda);
  if (!e.ok) throw Error(ErrorKind::RankDeficient, "X' V^{-1} X is singular at the given theta");
  LMMFit fit;
  fit.beta = e.beta;
  const double sigma2 = std::max(e.rss, 0.0) / static_cast<double>(sys.n() - sys.L());
  fit.components.sigma2 = sigma2;
  fit.components.theta = theta;
  fit.components.G = clip_boundary(sigma2 * lambda * lambda.transpose(), sigma2);
  const Eigen::MatrixXd xvx_inv = e.xvx.llt().solve(Eigen::MatrixXd::Identity(sys.L(), sys.L()));
  fit.vcov_beta = sigma2 * 0.5 * (xvx_inv + xvx_inv.transpose());
  fit.blups = sys.blups(lambda, e.beta);
  fit.reml_deviance = e.deviance;
  return fit;
}

// Newton iterations on the finite coordinates of theta using central
// differences. The gradient error is O(eps / h), which keeps the located
// optimum accurate well below the resolution of comparing deviance values.
template <typename F>
Eigen::VectorXd polish(F&& f, Eigen::VectorXd theta, double& value) {
  std::vector<Eigen::Index> free;
  for (Eigen::Index i = 0; i < theta.size(); ++i)
    if (std::isfinite(theta[i])) free.push_back(i);
  const auto d = static_cast<Eigen::Index>(free.size());
  if (d == 0) return theta;

  constexpr double hg = 1e-4;
  constexpr double hh = 1e-3;
  auto shifted = [&](Eigen::Index a, double da, Eigen::Index b, double db) {
    Eigen::VectorXd t = theta;
    t[free[static_cast<std::size_t>(a)]] += da;
    if (b >= 0) t[free[static_cast<std::size_t>(b)]] += db;
    return f(t);
  };
  for (int iter = 0; iter < 12; ++iter) {
    Eigen::VectorXd grad(d);
    Eigen::MatrixXd hess(d, d);
    for (Eigen::Index a = 0; a < d; ++a) {
      grad[a] = (shifted(a, hg, -1, 0) - shifted(a, -hg, -1, 0)) / (2.0 * hg);
      hess(a, a) = (shifted(a, hh, -1, 0) - 2.0 * value + shifted(a, -hh, -1, 0)) / (hh * hh);
      for (Eigen::Index b = 0; b < a; ++b) {
        hess(a, b) = (shifted(a, hh, b, hh) - shifted(a, hh, b, -hh) - shifted(a, -hh, b, hh) +
                      shifted(a, -hh, b, -hh)) /
                     (4.0 * hh * hh);
        hess(b, a) = hess(a, b);
      }
    }
    if (!grad.allFinite() || !hess.allFinite()) break;
    const Eigen::LLT<Eigen::MatrixXd> llt(hess);
    if (llt.info() != Eigen::Success) break;
    Eigen::VectorXd step = -llt.solve(grad);
    const double size = step.lpNorm<Eigen::Infinity>();
    if (size > 1.0) step /= size;

    bool accepted = false;
    for (double t = 1.0; t > 1e-3; t *= 0.5) {
      Eigen::VectorXd trial = theta;
      for (Eigen::Index a = 0; a < d; ++a) trial[free[static_cast<std::size_t>(a)]] += t * step[a];
      const double fv = f(trial);
      // Tiny steps are accepted within rounding noise of the deviance.
      const double slack = t * size < 1e-3 ? 1e-11 * (1.0 + std::abs(value)) : 0.0;
      if (fv <= value + slack) {
        theta = trial;
        value = fv;
        accepted = true;
        break;
      }
    }
    if (!accepted || size < 1e-10) break;
  }
  return theta;
}

}  // namespace

MixedModelSpec::MixedModelSpec(Eigen::MatrixXd X, Eigen::MatrixXd Z, std::span<const long> group_labels)
    : X_(std::move(X)), Z_(std::move(Z)) {
  const Eigen::Index n = X_.rows();
  if (n == 0 || X_.cols() == 0) throw Error(ErrorKind::Shape, "empty fixed-effects design");
  if (Z_.rows() != n || static_cast<Eigen::Index>(group_labels.size()) != n) {
    throw Error(ErrorKind::Shape, "X, Z and group labels must have the same number of rows");
  }
  if (Z_.cols() < 1 || Z_.cols() > 2) {
    throw Error(ErrorKind::Shape, "only 1 or 2 random effects per group are supported");
  }
  if (!X_.allFinite() || !Z_.allFinite()) throw Error(ErrorKind::InvalidData, "design contains non-finite values");
  if ((Z_.col(0).array() != 1.0).any()) {
    throw Error(ErrorKind::InvalidData, "first random-effect column must be all ones");
  }
  labels_.assign(group_labels.begin(), group_labels.end());
  std::sort(labels_.begin(), labels_.end());
  labels_.erase(std::unique(labels_.begin(), labels_.end()), labels_.end());
  group_.resize(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto it = std::lower_bound(labels_.begin(), labels_.end(), group_labels[static_cast<std::size_t>(i)]);
    group_[static_cast<std::size_t>(i)] = it - labels_.begin();
  }
  check_rank(X_);
}

MixedModelSpec MixedModelSpec::with_visits(Eigen::MatrixXd X, std::span<const double> visit,
                                           std::span<const long> group_labels, RandomEffects random) {
  const Eigen::Index n = X.rows();
  if (static_cast<Eigen::Index>(visit.size()) != n) {
    throw Error(ErrorKind::Shape, "visit index must have one entry per row of X");
  }
  Eigen::MatrixXd Z(n, random_effect_count(random));
  Z.col(0).setOnes();
  if (random == RandomEffects::InterceptSlope) {
    for (Eigen::Index i = 0; i < n; ++i) Z(i, 1) = visit[static_cast<std::size_t>(i)];
  }
  return MixedModelSpec(std::move(X), std::move(Z), group_labels);
}

Eigen::MatrixXd relative_factor(const Eigen::VectorXd& theta) {
  if (theta.size() == 1) return Eigen::MatrixXd::Constant(1, 1, std::exp(theta[0]));
  if (theta.size() == 3) {
    Eigen::MatrixXd lambda = Eigen::MatrixXd::Zero(2, 2);
    lambda(0, 0) = std::exp(theta[0]);
    lambda(1, 0) = theta[1];
    lambda(1, 1) = std::exp(theta[2]);
    return lambda;
  }
  throw Error(ErrorKind::Shape, "theta must have 1 or 3 entries, got " + std::to_string(theta.size()));
}

VarianceComponents components_from_theta(const Eigen::VectorXd& theta, double sigma2) {
  if (!(sigma2 > 0.0)) throw Error(ErrorKind::InvalidData, "residual variance must be positive");
  const Eigen::MatrixXd lambda = relative_factor(theta);
  return {sigma2 * lambda * lambda.transpose(), sigma2, theta};
}

Eigen::VectorXd theta_from_components(const Eigen::MatrixXd& G, double sigma2) {
  if (!(sigma2 > 0.0)) throw Error(ErrorKind::InvalidData, "residual variance must be positive");
  if (G.rows() != G.cols() || G.rows() < 1 || G.rows() > 2) {
    throw Error(ErrorKind::Shape, "G must be 1x1 or 2x2");
  }
  const Eigen::MatrixXd rel = 0.5 * (G + G.transpose()) / sigma2;
  if (rel.rows() == 1) {
    if (rel(0, 0) < 0.0) throw Error(ErrorKind::InvalidData, "G is not positive semidefinite");
    return Eigen::VectorXd::Constant(1, 0.5 * std::log(rel(0, 0)));
  }
  const double l00 = std::sqrt(std::max(rel(0, 0), 0.0));
  const double l10 = l00 > 0.0 ? rel(1, 0) / l00 : 0.0;
  const double rest = rel(1, 1) - l10 * l10;
  if (rel(0, 0) < 0.0 || rest < -1e-12 * std::max(1.0, rel(1, 1))) {
    throw Error(ErrorKind::InvalidData, "G is not positive semidefinite");
  }
  Eigen::VectorXd theta(3);
  theta << std::log(l00), l10, 0.5 * std::log(std::max(rest, 0.0));
  return theta;
}

double profiled_reml_deviance(const MixedModelSpec& spec, const Eigen::VectorXd& y,
                              const Eigen::VectorXd& theta) {
  check_problem(spec, y);
  if (theta.size() != theta_size(spec.n_random())) {
    throw Error(ErrorKind::Shape, "theta has " + std::to_string(theta.size()) + " entries, expected " +
                                      std::to_string(theta_size(spec.n_random())));
  }
  const RemlSystem sys(spec, y);
  const RemlSystem::Evaluation e = sys.evaluate(relative_factor(theta));
  if (!e.ok) throw Error(ErrorKind::RankDeficient, "X' V^{-1} X is singular at the given theta");
  return e.deviance;
}

LMMFit fit_at_theta(const MixedModelSpec& spec, const Eigen::VectorXd& y, const Eigen::VectorXd& theta) {
  check_problem(spec, y);
  if (theta.size() != theta_size(spec.n_random())) {
    throw Error(ErrorKind::Shape, "theta size does not match the random-effect design");
  }
  const RemlSystem sys(spec, y);
  LMMFit fit = finalize(sys, theta);
  fit.converged = true;
  return fit;
}

LMMFit fit_reml(const MixedModelSpec& spec, const Eigen::VectorXd& y, const RemlOptions& options) {
  check_problem(spec, y);
  const RemlSystem sys(spec, y);
  const Eigen::Index K = spec.n_random();
  const auto objective = [&sys](const Eigen::VectorXd& t) { return sys.deviance(relative_factor(t)); };
  const auto diag = diagonal_indices(K);

  Eigen::VectorXd start = options.init ? *options.init : moment_start(sys);
  if (start.size() != theta_size(K)) {
    throw Error(ErrorKind::Shape, "initial theta has the wrong length");
  }
  for (Eigen::Index i = 0; i < start.size(); ++i) {
    const bool is_diag = std::find(diag.begin(), diag.end(), i) != diag.end();
    if (!std::isfinite(start[i])) start[i] = is_diag ? -8.0 : 0.0;
    if (is_diag) start[i] = std::clamp(start[i], -20.0, 20.0);
  }
  double start_value = objective(start);
  if (!std::isfinite(start_value)) {
    start.setZero();
    start_value = objective(start);
  }

  detail::SimplexResult best =
      detail::nelder_mead(objective, start, 0.5, options.tol, options.max_iterations);
  int iterations = best.iterations;
  for (int r = 1; r <= options.restarts; ++r) {
    Eigen::VectorXd perturbed = best.x;
    for (Eigen::Index i = 0; i < perturbed.size(); ++i) perturbed[i] += ((i + r) % 2 == 0 ? 0.3 : -0.3);
    const detail::SimplexResult again =
        detail::nelder_mead(objective, perturbed, 0.25, options.tol, options.max_iterations);
    iterations += again.iterations;
    if (again.value < best.value) best = again;
  }

  // Variance boundary: zero diagonal factors that the simplex drove down.
  Eigen::VectorXd theta = best.x;
  double value = best.value;
  std::vector<Eigen::Index> small;
  for (const Eigen::Index i : diag)
    if (theta[i] < -4.0) small.push_back(i);
  const Eigen::VectorXd interior = theta;
  for (unsigned mask = 1; mask < (1u << small.size()); ++mask) {
    Eigen::VectorXd candidate = interior;
    for (std::size_t s = 0; s < small.size(); ++s)
      if (mask & (1u << s)) candidate[small[s]] = -kInf;
    const double fv = objective(candidate);
    if (fv <= value) {
      theta = candidate;
      value = fv;
    }
  }

  theta = polish(objective, theta, value);
  if (!(value <= start_value)) {
    theta = start;
    value = start_value;
  }

  LMMFit fit = finalize(sys, theta);
  fit.converged = best.converged;
  fit.n_iterations = iterations;
  return fit;
}

Eigen::VectorXd predict_blup(const LMMFit& fit, const MixedModelSpec& spec) {
  if (fit.beta.size() != spec.n_fixed() || fit.blups.rows() != spec.n_groups() ||
      fit.blups.cols() != spec.n_random()) {
    throw Error(ErrorKind::Shape, "fit dimensions do not match the model design");
  }
  Eigen::VectorXd out = spec.X() * fit.beta;
  for (Eigen::Index i = 0; i < spec.n_obs(); ++i) {
    out[i] += spec.Z().row(i).dot(fit.blups.row(spec.group()[static_cast<std::size_t>(i)]));
  }
  return out;
}

RSquared r_squared_components(const LMMFit& fit, const MixedModelSpec& spec) {
  if (fit.beta.size() != spec.n_fixed() || fit.components.G.rows() != spec.n_random()) {
    throw Error(ErrorKind::Shape, "fit dimensions do not match the model design");
  }
  const Eigen::VectorXd fixed = spec.X() * fit.beta;
  const double n = static_cast<double>(fixed.size());
  const double var_fixed = n > 1 ? (fixed.array() - fixed.mean()).square().sum() / (n - 1.0) : 0.0;
  double var_random = 0.0;
  for (Eigen::Index i = 0; i < spec.n_obs(); ++i) {
    const Eigen::VectorXd z = spec.Z().row(i).transpose();
    var_random += z.dot(fit.components.G * z);
  }
  var_random /= n;
  const double total = var_fixed + var_random + fit.components.sigma2;
  if (!(total > 0.0) || !std::isfinite(total)) {
    throw Error(ErrorKind::UndefinedRSquared, "total variance is zero");
  }
  return {var_fixed / total, (var_fixed + var_random) / total};
}

}  // namespace qfreg
