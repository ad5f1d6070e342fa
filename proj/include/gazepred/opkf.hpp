#pragma once

#include <array>
#include <deque>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gazepred/classify.hpp"
#include "gazepred/kalman.hpp"
#include "gazepred/nelder_mead.hpp"
#include "gazepred/plant.hpp"
#include "gazepred/predict.hpp"
#include "gazepred/signal.hpp"

namespace gazepred {

struct OpkfConfig {
  int pi_ms = 40;
  PlantParams params{};

  /// Per-step process noise in the fixation regime (dva^2, (dva/s)^2).
  double q_fix_pos = 1e-4;
  double q_fix_vel = 1.0;
  /// Per-step process noise in the saccade regime; forces in g^2.
  double q_sac_pos = 1e-4;
  double q_sac_vel = 1.0;
  double q_sac_force = 0.1;

  /// Fixation velocity relaxes toward zero with this time constant; infinity
  /// keeps a free (constant) velocity.
  double fixation_velocity_tau_ms = 10.0;

  /// Measurement variances. Unset values are derived from the recording's
  /// fixation precision.
  std::optional<double> r_pos;
  std::optional<double> r_vel;
  /// Velocity measurement variance multiplier while in the saccade regime.
  double saccade_velocity_r_scale = 100.0;

  /// Online regime thresholds; each is raised to a multiple of the velocity
  /// measurement noise sd when that is larger.
  ClassifierConfig online{};
  double online_peak_noise_multiple = 6.0;
  double online_offset_noise_multiple = 3.0;

  /// Pulse onset search relative to the backtracked onset sample.
  int onset_search_min = -6;
  int onset_search_max = 1;

  void validate() const;
};

nlohmann::json to_json(const OpkfConfig& cfg);
OpkfConfig opkf_config_from_json(const nlohmann::json& j);

/// Noise variances of one axis.
struct MeasurementNoise {
  double pos = 1e-4;  ///< dva^2
  double vel = 1.0;   ///< (dva/s)^2
};

/// Measurement variances implied by an RMS sample-to-sample precision for the
/// causal differentiator of the predictors.
MeasurementNoise noise_from_precision(double precision_dva);
/// Precision estimate over fixation samples, used when R is not given.
MeasurementNoise estimate_noise(const GazeRecording& rec, const std::vector<EventSegment>& segs);

/// Saccade displacement templates of a plant: theta(k) - theta(0) for a
/// pulse-step of amplitude A starting at sample 0, on a grid of amplitudes.
class PulseTable {
 public:
  static constexpr double kStep = 0.25;
  static constexpr double kMaxAmplitude = 40.0;
  static constexpr int kHorizon = 260;

  explicit PulseTable(const PlantModel& model);

  /// Displacement at sample k >= 0 for signed amplitude `amp` (linear in the amplitude grid).
  double displacement(double amp, int k) const;

 private:
  // [direction][amplitude index][k]
  std::array<std::vector<double>, 2> table_;
  int n_amp_ = 0;
};

/// Gaze measurement at one sample; NaN marks missing values.
struct GazeMeasurement {
  double x = std::numeric_limits<double>::quiet_NaN();
  double y = std::numeric_limits<double>::quiet_NaN();
  double vx = std::numeric_limits<double>::quiet_NaN();
  double vy = std::numeric_limits<double>::quiet_NaN();

  bool position_valid() const;
  bool velocity_valid() const;
};

/// Per-axis filter state.
struct KalmanState {
  Eigen::Vector4d mean = Eigen::Vector4d::Zero();
  Eigen::Matrix4d covariance = Eigen::Matrix4d::Identity();
};

struct OpkfOutput {
  double x = 0.0;  ///< predicted position at t + pi
  double y = 0.0;
  EventKind regime = EventKind::Fixation;
};

/// Oculomotor-plant Kalman filter predictor for one recording stream.
///
/// Fixation regime: kinematic model per axis with decaying velocity and muscle
/// forces held at the holding drive of the current position. Saccade regime:
/// exact plant transitions under a pulse-step whose onset and per-axis
/// amplitude are refit from the samples seen since the detected onset; the
/// filter is replayed from the onset under the refit input at every sample.
class Opkf {
 public:
  struct Plant {
    explicit Plant(const PlantParams& params) : model(params), table(model) {}
    PlantModel model;
    PulseTable table;
  };

  Opkf(const OpkfConfig& cfg, const MeasurementNoise& noise);
  /// Shares a prebuilt plant (its parameters replace cfg.params).
  Opkf(const OpkfConfig& cfg, const MeasurementNoise& noise, std::shared_ptr<const Plant> plant);

  /// Consumes the sample at the next time step and returns the prediction for
  /// pi_ms later. The regime comes from the internal online classifier.
  OpkfOutput step(const GazeMeasurement& z);
  /// Same with an externally supplied regime.
  OpkfOutput step(const GazeMeasurement& z, EventKind regime);

  std::array<KalmanState, 2> state() const;
  const OpkfConfig& config() const { return cfg_; }
  double peak_threshold() const { return online_cfg_.peak_threshold; }
  double offset_threshold() const { return online_cfg_.onset_offset_threshold; }

 private:
  struct History {
    GazeMeasurement z;
    std::array<KalmanFilter<4>, 2> posterior;
  };

  void fixation_predict(KalmanFilter<4>& kf) const;
  void plant_predict(KalmanFilter<4>& kf, const PulseStep& ps, double t_rel) const;
  void measure(KalmanFilter<4>& kf, double pos, double vel, bool saccade) const;
  void begin_saccade();
  void refit_and_replay();
  double fixation_forecast(const KalmanFilter<4>& kf) const;
  double plant_forecast(const KalmanFilter<4>& kf, const PulseStep& ps, double t_rel) const;

  OpkfConfig cfg_;
  MeasurementNoise noise_;
  ClassifierConfig online_cfg_;
  OnlineClassifier online_;
  std::shared_ptr<const Plant> plant_;

  std::array<KalmanFilter<4>, 2> kf_;
  bool initialized_ = false;
  EventKind regime_ = EventKind::Fixation;

  std::deque<History> history_;  // newest at back
  long t_ = -1;                  // index of the newest sample
  long onset_ = 0;               // backtracked onset sample of the current saccade
  long replay_onset_ = 0;        // fitted pulse onset
  std::array<KalmanFilter<4>, 2> pre_onset_;
  std::array<PulseStep, 2> schedule_{};
};

/// Causal prediction over a whole recording.
PredictionRun opkf_predict_recording(const GazeRecording& rec, const std::vector<EventSegment>& segs,
                                     const OpkfConfig& cfg);

struct FitOptions {
  double calibration_fraction = 0.4;
  std::size_t min_saccades = 10;
  /// 0 means 500 * (number of fitted parameters).
  int max_evaluations = 0;
  double tolerance = 1e-3;
  /// Samples before each calibration saccade at which filtering starts.
  int lead_ms = 150;
  /// Samples after each calibration saccade included in the objective.
  int tail_ms = 60;
};

struct FitResult {
  PlantParams params;
  bool converged = false;
  int evaluations = 0;
  double calibration_error = 0.0;
  double base_error = 0.0;
  std::size_t calibration_saccades = 0;
};

nlohmann::json to_json(const FitResult& r);

/// Names of the parameters adjusted by fit_subject_params.
const std::array<const char*, 7>& fitted_parameter_names();

/// Mean prediction error at target times inside windows around the saccades
/// with index in [first, last) among saccade segments.
double saccade_window_error(const GazeRecording& rec, const std::vector<EventSegment>& segs, const OpkfConfig& cfg,
                            const MeasurementNoise& noise, std::size_t first, std::size_t last,
                            const FitOptions& opts = {});

/// Nelder-Mead over log-scaled {Kse, Klt, Bag, Bant, tau_ag_act,
/// pulse_height_coeff, pulse_width_coeff} minimizing the calibration error on
/// the first `calibration_fraction` of the saccades.
FitResult fit_subject_params(const GazeRecording& rec, const std::vector<EventSegment>& segs, const PlantParams& base,
                             const OpkfConfig& cfg, const FitOptions& opts = {});

}  // namespace gazepred
