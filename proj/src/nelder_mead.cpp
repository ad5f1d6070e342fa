#include "gazepred/nelder_mead.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "gazepred/error.hpp"

namespace gazepred {

NelderMeadResult nelder_mead(const std::function<double(const std::vector<double>&)>& objective,
                             const std::vector<double>& x0, const NelderMeadOptions& opts) {
  const std::size_t n = x0.size();
  if (n == 0) throw ConfigError("nelder_mead needs at least one parameter");
  const int budget = opts.max_evaluations > 0 ? opts.max_evaluations : static_cast<int>(500 * n);

  int evals = 0;
  auto eval = [&](const std::vector<double>& x) {
    ++evals;
    const double f = objective(x);
    return std::isfinite(f) ? f : std::numeric_limits<double>::infinity();
  };

  std::vector<std::vector<double>> simplex(n + 1, x0);
  for (std::size_t i = 0; i < n; ++i) {
    const double step = std::max(std::fabs(x0[i]) * opts.relative_step, opts.absolute_step);
    simplex[i + 1][i] += step;
  }
  std::vector<double> fv(n + 1);
  for (std::size_t i = 0; i <= n; ++i) fv[i] = eval(simplex[i]);
  if (std::none_of(fv.begin(), fv.end(), [](double f) { return std::isfinite(f); }))
    throw NumericalError("nelder_mead: objective is not finite at any initial vertex");

  std::vector<std::size_t> order(n + 1);
  std::vector<double> centroid(n), xr(n), xe(n), xc(n);
  auto blend = [&](double t, const std::vector<double>& towards, std::vector<double>& out) {
    for (std::size_t j = 0; j < n; ++j) out[j] = centroid[j] + t * (towards[j] - centroid[j]);
  };

  bool converged = false;
  while (true) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return fv[a] < fv[b]; });
    const std::size_t best = order.front();
    const std::size_t worst = order.back();
    const std::size_t second = order[n - 1];

    double spread = 0.0;
    double scale = 0.0;
    for (std::size_t i = 0; i <= n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        spread = std::max(spread, std::fabs(simplex[i][j] - simplex[best][j]));
        scale = std::max(scale, std::fabs(simplex[best][j]));
      }
    }
    if (spread <= opts.tolerance * std::max(1.0, scale) && std::isfinite(fv[best])) {
      converged = true;
      break;
    }
    if (evals >= budget) break;

    std::fill(centroid.begin(), centroid.end(), 0.0);
    for (std::size_t i = 0; i <= n; ++i) {
      if (i == worst) continue;
      for (std::size_t j = 0; j < n; ++j) centroid[j] += simplex[i][j] / static_cast<double>(n);
    }

    blend(-1.0, simplex[worst], xr);
    const double fr = eval(xr);
    if (fr < fv[best]) {
      blend(-2.0, simplex[worst], xe);
      const double fe = eval(xe);
      if (fe < fr) {
        simplex[worst] = xe;
        fv[worst] = fe;
      } else {
        simplex[worst] = xr;
        fv[worst] = fr;
      }
      continue;
    }
    if (fr < fv[second]) {
      simplex[worst] = xr;
      fv[worst] = fr;
      continue;
    }
    const bool outside = fr < fv[worst];
    blend(outside ? -0.5 : 0.5, simplex[worst], xc);
    const double fc = eval(xc);
    if (outside ? fc <= fr : fc < fv[worst]) {
      simplex[worst] = xc;
      fv[worst] = fc;
      continue;
    }
    for (std::size_t i = 0; i <= n; ++i) {
      if (i == best) continue;
      for (std::size_t j = 0; j < n; ++j) simplex[i][j] = simplex[best][j] + 0.5 * (simplex[i][j] - simplex[best][j]);
      fv[i] = eval(simplex[i]);
    }
  }

  const auto it = std::min_element(fv.begin(), fv.end());
  const std::size_t b = static_cast<std::size_t>(it - fv.begin());
  return {simplex[b], fv[b], evals, converged};
}

}  // namespace gazepred
