#pragma once

#include <functional>
#include <vector>

namespace gazepred {

struct NelderMeadOptions {
  /// Stop when the simplex spread falls below this (relative to the vertex scale).
  double tolerance = 1e-6;
  /// 0 means 500 * n.
  int max_evaluations = 0;
  /// Initial step per coordinate: max(|x0_i| * relative_step, absolute_step).
  double relative_step = 0.05;
  double absolute_step = 0.00025;
};

struct NelderMeadResult {
  std::vector<double> x;
  double f = 0.0;
  int evaluations = 0;
  bool converged = false;
};

/// Downhill simplex minimization (reflection 1, expansion 2, contraction 0.5,
/// shrink 0.5). Non-finite objective values are treated as +infinity.
/// Throws NumericalError when no initial vertex is finite.
NelderMeadResult nelder_mead(const std::function<double(const std::vector<double>&)>& objective,
                             const std::vector<double>& x0, const NelderMeadOptions& opts = {});

}  // namespace gazepred
