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

#ifndef QFREG_NELDER_MEAD_HPP
#define QFREG_NELDER_MEAD_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

namespace qfreg::detail {

struct SimplexResult {
  Eigen::VectorXd x;
  double value = std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool converged = false;
};

// Standard Nelder-Mead (reflection 1, expansion 2, contraction 1/2,
// shrink 1/2). Stops when the spread of function values across the simplex
// falls below rel_tol * |f_best|.
template <typename F>
SimplexResult nelder_mead(F&& f, const Eigen::VectorXd& start, double step, double rel_tol,
                          int max_iterations) {
  const Eigen::Index d = start.size();
  std::vector<Eigen::VectorXd> pts(d + 1, start);
  std::vector<double> val(d + 1);
  for (Eigen::Index i = 0; i < d; ++i) pts[i + 1][i] += step;
  for (Eigen::Index i = 0; i <= d; ++i) val[i] = f(pts[i]);

  std::vector<Eigen::Index> order(d + 1);
  SimplexResult out;
  for (int it = 0; it < max_iterations; ++it) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](Eigen::Index a, Eigen::Index b) { return val[a] < val[b]; });
    const Eigen::Index best = order.front();
    const Eigen::Index worst = order.back();
    const Eigen::Index second = order[d - 1];
    out.iterations = it;
    const double spread = val[worst] - val[best];
    if (std::isfinite(val[best]) && spread <= rel_tol * (std::abs(val[best]) + rel_tol)) {
      out.converged = true;
      break;
    }

    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(d);
    for (Eigen::Index i = 0; i <= d; ++i)
      if (i != worst) centroid += pts[i];
    centroid /= static_cast<double>(d);

    const Eigen::VectorXd reflected = centroid + (centroid - pts[worst]);
    const double f_reflected = f(reflected);
    if (f_reflected < val[best]) {
      const Eigen::VectorXd expanded = centroid + 2.0 * (centroid - pts[worst]);
      const double f_expanded = f(expanded);
      if (f_expanded < f_reflected) {
        pts[worst] = expanded;
        val[worst] = f_expanded;
      } else {
        pts[worst] = reflected;
        val[worst] = f_reflected;
      }
      continue;
    }
    if (f_reflected < val[second]) {
      pts[worst] = reflected;
      val[worst] = f_reflected;
      continue;
    }
    const bool outside = f_reflected < val[worst];
    const Eigen::VectorXd contracted =
        outside ? Eigen::VectorXd(centroid + 0.5 * (reflected - centroid))
                : Eigen::VectorXd(centroid + 0.5 * (pts[worst] - centroid));
    const double f_contracted = f(contracted);
    if (f_contracted < (outside ? f_reflected : val[worst])) {
      pts[worst] = contracted;
      val[worst] = f_contracted;
      continue;
    }
    for (Eigen::Index i = 0; i <= d; ++i) {
      if (i == best) continue;
      pts[i] = pts[best] + 0.5 * (pts[i] - pts[best]);
      val[i] = f(pts[i]);
    }
  }
  const auto it = std::min_element(val.begin(), val.end());
  out.x = pts[static_cast<std::size_t>(it - val.begin())];
  out.value = *it;
  return out;
}

}  // namespace qfreg::detail

#endif  // QFREG_NELDER_MEAD_HPP
