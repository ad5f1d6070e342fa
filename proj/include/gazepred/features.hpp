#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "gazepred/classify.hpp"
#include "gazepred/signal.hpp"

namespace gazepred {

/// compute_features leaves saccade features empty below this count.
inline constexpr std::size_t kMinSaccadesForFeatures = 10;

/// Median over saccades of peak velocity / sample count.
double pk_vel_dur_ratio_r_md(const std::vector<EventSegment>& segs);
/// Median over saccades of the per-saccade mean radial velocity.
double mn_vel_r_md(const std::vector<EventSegment>& segs);
/// Alternative reading: mean over saccades of the per-saccade median radial velocity.
double mn_vel_mean_of_medians(const std::vector<EventSegment>& segs, const VelocityTrace& vel);

/// RMS of successive-sample radial displacement over valid sample pairs inside
/// fixation segments.
double rms_s2s_precision(const GazeRecording& rec, const std::vector<EventSegment>& segs);

struct DataQuality {
  std::optional<double> accuracy_dva;
  std::optional<double> precision_dva;
};

/// A fixation counts as target-locked when it starts at least this long after
/// the target last moved (fixations on the initial target always count).
inline constexpr std::size_t kTargetLockDelayMs = 100;

/// Accuracy is absent without targets or without a target-locked fixation;
/// precision is absent without a valid fixation sample pair.
DataQuality data_quality(const GazeRecording& rec, const std::vector<EventSegment>& segs);

struct FeatureConfig {
  bool mean_of_medians = false;
};

struct SubjectFeatures {
  std::string subject_id;
  std::optional<double> fix_noise_thr;
  std::optional<double> pk_vel_dur_ratio_r_md;
  std::optional<double> mn_vel_r_md;
  std::optional<double> accuracy_dva;
  std::optional<double> precision_dva;
  std::size_t n_saccades = 0;
  std::size_t n_fixation_samples = 0;
};

/// Computes every feature whose data requirements are met; the rest stay empty.
SubjectFeatures compute_features(const GazeRecording& rec, const VelocityTrace& vel,
                                 const std::vector<EventSegment>& segs, const FeatureConfig& cfg = {});

const std::vector<std::string>& feature_names();
/// Value of a named feature column (FixNoiseThr, PkVelDurRatioRMd, MnVelRMd, Accuracy, Precision).
std::optional<double> feature_value(const SubjectFeatures& f, const std::string& name);

void write_features_csv(const std::vector<SubjectFeatures>& rows, const std::filesystem::path& path);
std::vector<SubjectFeatures> read_features_csv(const std::filesystem::path& path);

}  // namespace gazepred
