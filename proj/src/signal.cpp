#include "gazepred/signal.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <fstream>
#include <limits>
#include <ostream>
#include <sstream>

#include "gazepred/error.hpp"
#include "gazepred/io.hpp"

namespace gazepred {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
}

std::size_t GazeRecording::valid_count() const {
  std::size_t n = 0;
  for (const auto& s : samples) n += s.valid ? 1 : 0;
  return n;
}

void validate_recording(const GazeRecording& rec) {
  if (rec.rate_hz != kSampleRateHz)
    throw RateError("sample rate " + std::to_string(rec.rate_hz) + " Hz is not supported (1000 Hz only)");
  if (rec.samples.empty()) throw EmptyInputError("recording '" + rec.subject_id + "' has no samples");
  for (std::size_t i = 1; i < rec.samples.size(); ++i) {
    if (rec.samples[i].t_ms - rec.samples[i - 1].t_ms != 1)
      throw RateError("timestamp step at sample " + std::to_string(i) + " is " +
                      std::to_string(rec.samples[i].t_ms - rec.samples[i - 1].t_ms) + " ms, expected 1 ms");
  }
  if (!rec.targets.empty() && rec.targets.size() != rec.samples.size())
    throw AlignmentError("target track length differs from sample count");
}

void require_evaluable(const GazeRecording& rec) {
  validate_recording(rec);
  if (rec.valid_count() < kMinValidSamplesForEvaluation)
    throw InsufficientDataError("recording '" + rec.subject_id + "' has " +
                                std::to_string(rec.valid_count()) + " valid samples, need " +
                                std::to_string(kMinValidSamplesForEvaluation));
}

GazeRecording parse_csv(std::istream& in, const ColumnMapping& mapping, const std::string& subject_id,
                        const std::string& session_id) {
  const io::CsvTable table = io::read_csv(in);
  const int c_t = table.column(mapping.time);
  const int c_x = table.column(mapping.x);
  const int c_y = table.column(mapping.y);
  if (c_t < 0 || c_x < 0 || c_y < 0)
    throw ParseError("missing required column (" + mapping.time + ", " + mapping.x + ", " + mapping.y + ")", 1);
  const int c_v = mapping.validity ? table.column(*mapping.validity) : -1;
  const int c_tx = mapping.target_x ? table.column(*mapping.target_x) : -1;
  const int c_ty = mapping.target_y ? table.column(*mapping.target_y) : -1;
  const bool with_targets = c_tx >= 0 && c_ty >= 0;

  if (table.rows.empty()) throw EmptyInputError("CSV has a header but no rows");

  GazeRecording rec;
  rec.subject_id = subject_id;
  rec.session_id = session_id;
  rec.samples.reserve(table.rows.size());
  if (with_targets) rec.targets.reserve(table.rows.size());

  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const long line = table.line_numbers[r];
    GazeSample s;
    try {
      const double t = io::parse_double(row[c_t]);
      if (!std::isfinite(t) || t != std::floor(t)) throw std::invalid_argument("timestamp must be an integer");
      s.t_ms = static_cast<std::int64_t>(t);
      s.x_dva = io::parse_double(row[c_x]);
      s.y_dva = io::parse_double(row[c_y]);
      s.valid = std::isfinite(s.x_dva) && std::isfinite(s.y_dva);
      if (c_v >= 0) {
        const double flag = io::parse_double(row[c_v]);
        const bool flagged_valid = mapping.validity_zero_is_valid ? flag == 0.0 : flag != 0.0 && !std::isnan(flag);
        s.valid = s.valid && flagged_valid;
      }
      if (with_targets) {
        rec.targets.push_back({s.t_ms, io::parse_double(row[c_tx]), io::parse_double(row[c_ty])});
      }
    } catch (const std::invalid_argument& e) {
      throw ParseError(e.what(), line);
    }
    rec.samples.push_back(s);
  }
  validate_recording(rec);
  return rec;
}

GazeRecording ingest_csv(const std::filesystem::path& path, const ColumnMapping& mapping) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return parse_csv(in, mapping, path.stem().string(), "");
}

void export_csv(const GazeRecording& rec, std::ostream& out) {
  const bool with_targets = rec.has_targets();
  out << "t_ms,x_dva,y_dva,valid";
  if (with_targets) out << ",target_x,target_y";
  out << '\n';
  for (std::size_t i = 0; i < rec.samples.size(); ++i) {
    const auto& s = rec.samples[i];
    out << s.t_ms << ',' << io::format_double(s.x_dva) << ',' << io::format_double(s.y_dva) << ','
        << (s.valid ? 1 : 0);
    if (with_targets)
      out << ',' << io::format_double(rec.targets[i].x_dva) << ',' << io::format_double(rec.targets[i].y_dva);
    out << '\n';
  }
}

void export_csv_file(const GazeRecording& rec, const std::filesystem::path& path) {
  std::ostringstream ss;
  export_csv(rec, ss);
  io::write_text_file(path, ss.str());
}

bool VelocityTrace::valid(std::size_t i) const { return !std::isnan(v_radial[i]); }

std::vector<double> savgol_derivative_weights(int window, int order, int eval_index) {
  if (window < 2 || order < 1 || order >= window)
    throw ConfigError("Savitzky-Golay needs window > order >= 1");
  if (eval_index < 0 || eval_index >= window) throw ConfigError("evaluation index outside window");
  Eigen::MatrixXd vander(window, order + 1);
  for (int j = 0; j < window; ++j) {
    const double s = static_cast<double>(j - eval_index);
    double p = 1.0;
    for (int k = 0; k <= order; ++k) {
      vander(j, k) = p;
      p *= s;
    }
  }
  // Row 1 of the pseudo-inverse maps samples to the slope at the evaluation point.
  const Eigen::MatrixXd pinv = vander.completeOrthogonalDecomposition().pseudoInverse();
  std::vector<double> w(window);
  for (int j = 0; j < window; ++j) w[j] = pinv(1, j);
  return w;
}

VelocityTrace compute_velocity(const GazeRecording& rec, const DiffConfig& cfg) {
  if (cfg.window % 2 == 0 && !cfg.causal) throw ConfigError("Savitzky-Golay window must be odd");
  if (cfg.window < 3) throw ConfigError("Savitzky-Golay window must be at least 3");
  const std::size_t n = rec.samples.size();
  if (static_cast<std::size_t>(cfg.window) > n)
    throw ConfigError("differentiation window (" + std::to_string(cfg.window) + ") exceeds recording length (" +
                      std::to_string(n) + ")");
  const int eval_index = cfg.causal ? cfg.window - 1 : cfg.window / 2;
  const auto w = savgol_derivative_weights(cfg.window, cfg.order, eval_index);
  const double scale = static_cast<double>(kSampleRateHz);

  VelocityTrace vel;
  vel.vx.assign(n, kNaN);
  vel.vy.assign(n, kNaN);
  vel.v_radial.assign(n, kNaN);

  // prefix count of invalid samples
  std::vector<int> invalid_prefix(n + 1, 0);
  for (std::size_t i = 0; i < n; ++i) invalid_prefix[i + 1] = invalid_prefix[i] + (rec.samples[i].valid ? 0 : 1);

  const std::size_t win = static_cast<std::size_t>(cfg.window);
  for (std::size_t start = 0; start + win <= n; ++start) {
    if (invalid_prefix[start + win] - invalid_prefix[start] != 0) continue;
    double dx = 0.0, dy = 0.0;
    for (std::size_t j = 0; j < win; ++j) {
      dx += w[j] * rec.samples[start + j].x_dva;
      dy += w[j] * rec.samples[start + j].y_dva;
    }
    const std::size_t i = start + static_cast<std::size_t>(eval_index);
    vel.vx[i] = dx * scale;
    vel.vy[i] = dy * scale;
    vel.v_radial[i] = std::sqrt(vel.vx[i] * vel.vx[i] + vel.vy[i] * vel.vy[i]);
  }
  return vel;
}

}  // namespace gazepred
