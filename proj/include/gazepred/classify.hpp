#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gazepred/signal.hpp"

namespace gazepred {

enum class EventKind { Fixation, Saccade, Blink, Other };

std::string to_string(EventKind kind);
EventKind event_kind_from_string(const std::string& s);

struct SaccadeProps {
  double amplitude_dva = 0.0;  ///< start-to-end Euclidean distance
  int duration_ms = 0;
  double peak_vel = 0.0;  ///< dva/s
  double mean_vel = 0.0;  ///< dva/s
  int sample_count = 0;
};

struct EventSegment {
  EventKind kind = EventKind::Other;
  std::size_t start_idx = 0;  ///< inclusive
  std::size_t end_idx = 0;    ///< inclusive
  std::optional<SaccadeProps> props;

  std::size_t length() const { return end_idx - start_idx + 1; }
};

struct ClassifierConfig {
  double peak_threshold = 100.0;          ///< dva/s
  double onset_offset_threshold = 20.0;   ///< dva/s
  int min_saccade_ms = 6;
  int min_fixation_ms = 40;
  int max_saccade_ms = 150;

  void validate() const;
};

/// Amplitude at or above which a saccade counts as "large".
inline constexpr double kLargeSaccadeDva = 10.0;

enum class SaccadeClass { None, Small, Large };
std::string to_string(SaccadeClass c);
SaccadeClass saccade_class(const EventSegment& seg);

/// Seed-and-expand velocity classifier. Invalid samples become Blink; every
/// sample ends up in exactly one segment and segments tile [0, N-1].
std::vector<EventSegment> classify_events(const GazeRecording& rec, const VelocityTrace& vel,
                                          const ClassifierConfig& cfg = {});

/// Derives saccade properties for samples [start, end] of a recording.
SaccadeProps saccade_props(const GazeRecording& rec, const VelocityTrace& vel, std::size_t start,
                           std::size_t end);

/// Fills in `props` for every Saccade segment (and clears it elsewhere).
void attach_saccade_props(std::vector<EventSegment>& segs, const GazeRecording& rec, const VelocityTrace& vel);

/// Per-sample event label expanded from segments.
std::vector<EventKind> label_samples(const std::vector<EventSegment>& segs, std::size_t n);

/// Throws AlignmentError unless `segs` tile [0, n-1].
void check_tiling(const std::vector<EventSegment>& segs, std::size_t n);

/// 90th percentile of radial velocity over valid fixation samples.
double fixation_noise_threshold(const GazeRecording& rec, const VelocityTrace& vel,
                                const std::vector<EventSegment>& segs);
inline constexpr std::size_t kMinFixationSamplesForNoise = 100;

/// Zero-lookahead regime detector: enters Saccade when radial velocity exceeds
/// the peak threshold, leaves when it drops below the onset/offset threshold.
class OnlineClassifier {
 public:
  explicit OnlineClassifier(const ClassifierConfig& cfg = {}) : cfg_(cfg) {}

  /// Consumes the newest radial velocity (NaN marks an invalid sample).
  EventKind push(double v_radial);
  EventKind current() const { return state_; }
  /// Samples since the regime last changed.
  int regime_age() const { return age_; }
  void reset();

 private:
  ClassifierConfig cfg_;
  EventKind state_ = EventKind::Fixation;
  int age_ = 0;
};

nlohmann::json segments_to_json(const std::vector<EventSegment>& segs);
std::vector<EventSegment> segments_from_json(const nlohmann::json& j);

}  // namespace gazepred
