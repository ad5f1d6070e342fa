#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gazepred/classify.hpp"
#include "gazepred/features.hpp"
#include "gazepred/predict.hpp"

namespace gazepred {

enum class ErrorMetric { Planar, Angular };
std::string to_string(ErrorMetric m);
ErrorMetric error_metric_from_string(const std::string& s);

/// Planar: Euclidean distance in the (x, y) dva plane. Angular: great-circle
/// angle between the two gaze directions, reading (x, y) as azimuth/elevation.
double gaze_error(double x_pred, double y_pred, double x_true, double y_true, ErrorMetric metric = ErrorMetric::Planar);

struct ErrorRecord {
  std::size_t sample_idx = 0;  ///< issue time t
  std::size_t target_idx = 0;  ///< t + pi
  EventKind event_kind = EventKind::Other;
  SaccadeClass saccade_class = SaccadeClass::None;
  /// Index into the segment list of the saccade containing target_idx, or -1.
  long saccade_segment = -1;
  /// 1..100 ms after the end of the preceding saccade when inside a CEP, else 0.
  int cep_offset_ms = 0;
  double error_dva = 0.0;

  bool in_cep() const { return cep_offset_ms > 0; }
};

inline constexpr int kCepMs = 100;

/// For each saccade, [end + 1, end + 100], cut at the recording end and ended
/// early by the next saccade onset or blink.
std::vector<std::pair<std::size_t, std::size_t>> cep_intervals(const std::vector<EventSegment>& segs);

/// One record per unmasked prediction, labelled by the event at the target time.
std::vector<ErrorRecord> score_run(const PredictionRun& run, const GazeRecording& rec,
                                   const std::vector<EventSegment>& segs, ErrorMetric metric = ErrorMetric::Planar);

/// Error classes used for subject statistics and CDFs. Fixation records are
/// those whose target sample lies in a fixation segment (CEP samples included).
enum class ErrorClass { Fixation, Cep, SmallSaccade, LargeSaccade, All };
const std::vector<ErrorClass>& all_error_classes();
std::string to_string(ErrorClass c);
ErrorClass error_class_from_string(const std::string& s);
bool in_class(const ErrorRecord& r, ErrorClass c);
std::vector<double> class_errors(const std::vector<ErrorRecord>& records, ErrorClass c);

/// Proportion of errors <= each grid level.
std::vector<double> cdf_curve(const std::vector<double>& errors, const std::vector<double>& grid);

struct ProgressBin {
  double t_lo = 0.0;
  double t_hi = 0.0;
  std::size_t count = 0;
  double median = 0.0;  ///< NaN for an empty bin
};

struct ProgressCurve {
  std::vector<ProgressBin> bins;
  std::size_t n_saccades = 0;
};

inline constexpr std::size_t kMinProgressSaccades = 5;

/// Position of sample `idx` inside `seg` on [0, 1]: (idx - start) / (length - 1).
double normalized_saccade_time(std::size_t idx, const EventSegment& seg);

struct ProgressSamples {
  std::vector<double> t;  ///< normalized saccade time of each record
  std::vector<double> error;
  std::size_t n_saccades = 0;

  void append(const ProgressSamples& other);
};

/// Saccade records whose saccade amplitude lies in [amp_lo, amp_hi].
ProgressSamples saccade_progress_samples(const std::vector<ErrorRecord>& records,
                                         const std::vector<EventSegment>& segs, double amp_lo = 10.0,
                                         double amp_hi = 20.0);
/// Per-bin median error over normalized saccade time.
ProgressCurve saccade_progress_curve(const ProgressSamples& samples, int bins = 10);
ProgressCurve saccade_progress_curve(const std::vector<ErrorRecord>& records, const std::vector<EventSegment>& segs,
                                     int bins = 10, double amp_lo = 10.0, double amp_hi = 20.0);

struct CepPoint {
  int offset_ms = 0;
  std::size_t count = 0;
  double median = 0.0;  ///< NaN when no record has this offset
};

/// Median error by time since saccade end over CEP records.
std::vector<CepPoint> cep_curve(const std::vector<ErrorRecord>& records);

inline constexpr std::size_t kMinSubjectRecords = 30;

struct SubjectProfile {
  std::string subject_id;
  std::size_t count = 0;
  double median = 0.0;
  double iqr = 0.0;
  double min = 0.0;
  double max = 0.0;
};

struct SubjectStats {
  ErrorClass error_class = ErrorClass::All;
  std::vector<SubjectProfile> subjects;  ///< only subjects with enough records
  double cohort_min = 0.0;    ///< of per-subject medians
  double cohort_max = 0.0;
  double cohort_ratio = 0.0;  ///< max / min
  double cohort_iqr = 0.0;
  double cohort_median = 0.0;
};

/// Per-subject error summaries of one class plus cohort statistics over the
/// per-subject medians. Subjects with fewer than `min_records` records in the
/// class are left out; throws InsufficientDataError when none remain.
SubjectStats subject_stats(const std::vector<std::pair<std::string, std::vector<ErrorRecord>>>& per_subject,
                           ErrorClass c, std::size_t min_records = kMinSubjectRecords);

/// Per-subject medians of one predictor, keyed by subject id.
struct ModelMedians {
  std::string model;
  std::map<std::string, double> medians;
};

ModelMedians model_medians(const std::string& model, const SubjectStats& stats);

struct CorrelationResult {
  std::string feature;
  std::string model;
  std::size_t n = 0;
  double r_s = 0.0;
  double p_value = 1.0;
  bool significant = false;
  std::size_t family_size = 0;
};

inline constexpr std::size_t kMinCorrelationSubjects = 10;

/// Spearman correlation of each feature with each model's per-subject medians.
/// Bonferroni over the family of all (feature, model) pairs. Each pair uses the
/// subjects that have both values; fewer than 10 throws InsufficientDataError.
std::vector<CorrelationResult> correlate_features(const std::vector<SubjectFeatures>& features,
                                                  const std::vector<ModelMedians>& models,
                                                  const std::vector<std::string>& feature_list, double alpha = 0.05);

struct Concordance {
  std::size_t n_subjects = 0;
  std::size_t n_models = 0;
  double w = 0.0;
};

/// Kendall's W across models over the subjects every model covers.
Concordance model_concordance(const std::vector<ModelMedians>& models);

}  // namespace gazepred
