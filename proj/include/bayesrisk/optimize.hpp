#pragma once

#include <limits>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <vector>

namespace bayesrisk::optimize {

struct NelderMeadOptions {
  std::size_t max_evals = 4000;
  double f_tol = 1e-9;      // spread of simplex values
  double x_tol = 1e-7;      // simplex diameter
  double initial_step = 0.25;
  int restarts = 1;         // fresh simplexes built around the best point after convergence
};

struct NelderMeadResult {
  std::vector<double> x;
  double fx = std::numeric_limits<double>::infinity();
  std::size_t evals = 0;
  bool converged = false;
};

/// Derivative-free minimization (standard reflection/expansion/contraction/
/// shrink coefficients 1, 2, 0.5, 0.5). Non-finite objective values are
/// treated as +inf, so infeasible regions can be encoded by the caller.
inline NelderMeadResult nelder_mead(const std::function<double(const std::vector<double>&)>& f,
                                    std::vector<double> x0, const NelderMeadOptions& opt = {}) {
  const std::size_t n = x0.size();
  NelderMeadResult res;
  auto eval = [&](const std::vector<double>& x) {
    ++res.evals;
    const double v = f(x);
    return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
  };

  std::vector<double> best = x0;
  double best_f = eval(best);

  for (int round = 0; round <= opt.restarts; ++round) {
    std::vector<std::vector<double>> simplex(n + 1, best);
    std::vector<double> fv(n + 1, best_f);
    for (std::size_t i = 0; i < n; ++i) {
      simplex[i + 1][i] += opt.initial_step;
      fv[i + 1] = eval(simplex[i + 1]);
    }
    std::vector<std::size_t> order(n + 1);
    std::vector<double> centroid(n), xr(n), xe(n), xc(n);
    bool converged = false;
    while (res.evals < opt.max_evals) {
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return fv[a] < fv[b]; });
      const std::size_t lo = order.front(), hi = order.back(), second = order[n - 1];

      double diam = 0.0;
      for (std::size_t i = 0; i <= n; ++i) {
        for (std::size_t j = 0; j < n; ++j) diam = std::max(diam, std::fabs(simplex[i][j] - simplex[lo][j]));
      }
      if (std::isfinite(fv[hi]) && std::fabs(fv[hi] - fv[lo]) <= opt.f_tol * (1.0 + std::fabs(fv[lo])) &&
          diam <= opt.x_tol * 1e3) {
        converged = true;
        break;
      }
      if (diam <= opt.x_tol) {
        converged = std::isfinite(fv[lo]);
        break;
      }

      std::fill(centroid.begin(), centroid.end(), 0.0);
      for (std::size_t i = 0; i <= n; ++i) {
        if (i == hi) continue;
        for (std::size_t j = 0; j < n; ++j) centroid[j] += simplex[i][j];
      }
      for (double& c : centroid) c /= static_cast<double>(n);

      for (std::size_t j = 0; j < n; ++j) xr[j] = centroid[j] + (centroid[j] - simplex[hi][j]);
      const double fr = eval(xr);
      if (fr < fv[lo]) {
        for (std::size_t j = 0; j < n; ++j) xe[j] = centroid[j] + 2.0 * (centroid[j] - simplex[hi][j]);
        const double fe = eval(xe);
        if (fe < fr) {
          simplex[hi] = xe;
          fv[hi] = fe;
        } else {
          simplex[hi] = xr;
          fv[hi] = fr;
        }
        continue;
      }
      if (fr < fv[second]) {
        simplex[hi] = xr;
        fv[hi] = fr;
        continue;
      }
      const bool outside = fr < fv[hi];
      for (std::size_t j = 0; j < n; ++j) {
        xc[j] = outside ? centroid[j] + 0.5 * (xr[j] - centroid[j])
                        : centroid[j] + 0.5 * (simplex[hi][j] - centroid[j]);
      }
      const double fc = eval(xc);
      if (fc < (outside ? fr : fv[hi])) {
        simplex[hi] = xc;
        fv[hi] = fc;
        continue;
      }
      for (std::size_t i = 0; i <= n; ++i) {
        if (i == lo) continue;
        for (std::size_t j = 0; j < n; ++j) simplex[i][j] = simplex[lo][j] + 0.5 * (simplex[i][j] - simplex[lo][j]);
        fv[i] = eval(simplex[i]);
      }
    }
    const auto it = std::min_element(fv.begin(), fv.end());
    if (*it < best_f) {
      best_f = *it;
      best = simplex[static_cast<std::size_t>(it - fv.begin())];
    }
    res.converged = converged;
    if (res.evals >= opt.max_evals) break;
  }
  res.x = std::move(best);
  res.fx = best_f;
  return res;
}

}  // namespace bayesrisk::optimize
