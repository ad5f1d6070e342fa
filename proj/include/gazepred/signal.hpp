#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace gazepred {

inline constexpr int kSampleRateHz = 1000;
/// Minimum number of valid samples for a recording to enter evaluation.
inline constexpr std::size_t kMinValidSamplesForEvaluation = 1000;

struct GazeSample {
  std::int64_t t_ms = 0;
  double x_dva = 0.0;
  double y_dva = 0.0;
  bool valid = true;
};

struct TargetSample {
  std::int64_t t_ms = 0;
  double x_dva = 0.0;
  double y_dva = 0.0;
};

struct GazeRecording {
  std::string subject_id;
  std::string session_id;
  int rate_hz = kSampleRateHz;
  std::vector<GazeSample> samples;
  /// Either empty or aligned 1:1 with `samples`.
  std::vector<TargetSample> targets;

  std::size_t size() const { return samples.size(); }
  bool has_targets() const { return !targets.empty(); }
  std::size_t valid_count() const;
};

/// Checks rate, timestamp spacing, target alignment. Throws DataError subclasses.
void validate_recording(const GazeRecording& rec);
/// validate_recording plus the minimum valid-sample requirement for evaluation.
void require_evaluable(const GazeRecording& rec);

/// Column names of a gaze CSV file. Optional columns may be left empty.
struct ColumnMapping {
  std::string time = "t_ms";
  std::string x = "x_dva";
  std::string y = "y_dva";
  std::optional<std::string> validity = "valid";
  /// When true a validity value of 0 means "valid" (GazeBase `val` column).
  bool validity_zero_is_valid = false;
  std::optional<std::string> target_x = "target_x";
  std::optional<std::string> target_y = "target_y";
};

/// Parses a gaze CSV. Optional columns named in `mapping` but absent from the
/// header are skipped; required columns must exist.
GazeRecording parse_csv(std::istream& in, const ColumnMapping& mapping,
                        const std::string& subject_id = "", const std::string& session_id = "");
/// parse_csv on a file; subject id defaults to the file stem.
GazeRecording ingest_csv(const std::filesystem::path& path, const ColumnMapping& mapping = {});

/// Writes the canonical CSV layout (t_ms,x_dva,y_dva,valid[,target_x,target_y]).
/// Values are written with shortest round-trip formatting.
void export_csv(const GazeRecording& rec, std::ostream& out);
void export_csv_file(const GazeRecording& rec, const std::filesystem::path& path);

struct DiffConfig {
  /// Savitzky-Golay window length in samples (odd).
  int window = 7;
  int order = 2;
  /// Evaluate the local fit at the newest sample of a trailing window instead
  /// of the window centre. Uses only past samples.
  bool causal = false;
};

struct VelocityTrace {
  std::vector<double> vx;  ///< dva/s
  std::vector<double> vy;
  std::vector<double> v_radial;

  std::size_t size() const { return vx.size(); }
  bool valid(std::size_t i) const;
};

/// Least-squares polynomial derivative weights for a window of samples ordered
/// oldest to newest; the derivative is evaluated at sample `eval_index` of the
/// window. Units: per sample.
std::vector<double> savgol_derivative_weights(int window, int order, int eval_index);

/// Per-sample first derivative of gaze position in dva/s. Samples whose window
/// does not fit or touches an invalid sample are NaN.
VelocityTrace compute_velocity(const GazeRecording& rec, const DiffConfig& cfg = {});

}  // namespace gazepred
