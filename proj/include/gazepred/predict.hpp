#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "gazepred/signal.hpp"

namespace gazepred {

/// Causal differentiator used by every predictor: a local linear fit over the
/// last 7 samples, evaluated at the newest sample.
inline DiffConfig predictor_diff_config() { return {7, 1, true}; }

/// Predictions issued at every sample i for time i + pi_ms.
struct PredictionRun {
  std::string predictor_id;
  std::string subject_id;
  int pi_ms = 40;
  std::vector<double> x;  ///< predicted x at i + pi_ms (NaN where masked)
  std::vector<double> y;
  std::vector<bool> valid;

  std::size_t size() const { return x.size(); }
};

/// Masks issue times whose input sample or target sample is invalid or out of range.
void apply_truth_mask(PredictionRun& run, const GazeRecording& rec);
PredictionRun make_run(const std::string& predictor_id, const GazeRecording& rec, int pi_ms);

enum class BaselineKind { ConstantPosition, ConstantVelocity };

/// Constant-position: x(t). Constant-velocity: x(t) + v(t) * pi, with v from
/// the causal trace `vel`.
PredictionRun baseline_predict(BaselineKind kind, const GazeRecording& rec, const VelocityTrace& vel, int pi_ms);

/// Binary-free CSV persistence (issue index, x, y, valid).
void write_run_csv(const PredictionRun& run, const std::filesystem::path& path);
PredictionRun read_run_csv(const std::filesystem::path& path);

}  // namespace gazepred
