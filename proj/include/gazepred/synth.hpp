#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <nlohmann/json.hpp>

#include "gazepred/classify.hpp"
#include "gazepred/plant.hpp"
#include "gazepred/rng.hpp"
#include "gazepred/signal.hpp"

namespace gazepred {

/// Distribution over per-subject plant parameters.
struct ParamSampler {
  PlantParams base{};
  /// Speed factor s ~ U[1 - spread, 1 + spread]; pulse height is scaled by s
  /// and pulse width by 1/s, which keeps the landing position and changes
  /// saccade velocity and duration.
  double speed_spread = 0.2;
  /// Log-normal jitter (sd of the log) on the mechanical parameters.
  double jitter = 0.05;

  PlantParams sample(Rng& rng, double* speed_factor = nullptr) const;
};

/// Random-saccade (step target) cohort generator settings.
struct SynthConfig {
  int n_subjects = 30;
  double duration_s = 20.0;
  double target_range_x = 15.0;  ///< targets uniform in [-x, x]
  double target_range_y = 9.0;
  double min_target_step_dva = 2.0;
  double hold_ms = 1000.0;
  double latency_ms = 200.0;
  double latency_jitter_ms = 30.0;  ///< sd of the response latency
  /// Per-subject white measurement noise sd, drawn log-uniformly from this range.
  double noise_sigma_min = 0.01;
  double noise_sigma_max = 0.04;
  /// Stationary sd of a slow fixational drift (Ornstein-Uhlenbeck, 0.5 s time constant).
  double drift_sigma_dva = 0.05;
  double blink_rate_hz = 0.0;
  ParamSampler params{};
  std::uint64_t seed = 1;
  /// Truth-label velocity threshold on the noiseless plant velocity (dva/s).
  double truth_velocity_threshold = 20.0;

  void validate() const;
};

nlohmann::json to_json(const SynthConfig& cfg);
SynthConfig synth_config_from_json(const nlohmann::json& j);

struct SyntheticSubject {
  GazeRecording recording;
  std::vector<EventSegment> truth;  ///< ground-truth labels with saccade props
  PlantParams params;
  double noise_sigma = 0.0;
  double speed_factor = 1.0;
};

/// Generates one subject. Deterministic in (cfg, index).
SyntheticSubject generate_subject(const SynthConfig& cfg, int index);
std::vector<SyntheticSubject> generate_cohort(const SynthConfig& cfg, int jobs = 1);

/// Labels JSON written next to a cohort CSV: segments plus generator metadata.
nlohmann::json labels_to_json(const SyntheticSubject& s);
void write_cohort(const std::vector<SyntheticSubject>& cohort, const std::filesystem::path& dir);

}  // namespace gazepred
