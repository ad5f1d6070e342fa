#include "gazepred/predict.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "gazepred/error.hpp"
#include "gazepred/io.hpp"

namespace gazepred {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
}

PredictionRun make_run(const std::string& predictor_id, const GazeRecording& rec, int pi_ms) {
  if (pi_ms <= 0) throw ConfigError("prediction interval must be positive");
  PredictionRun run;
  run.predictor_id = predictor_id;
  run.subject_id = rec.subject_id;
  run.pi_ms = pi_ms;
  run.x.assign(rec.size(), kNaN);
  run.y.assign(rec.size(), kNaN);
  run.valid.assign(rec.size(), false);
  return run;
}

void apply_truth_mask(PredictionRun& run, const GazeRecording& rec) {
  if (run.size() != rec.size()) throw AlignmentError("prediction run and recording differ in length");
  const std::size_t n = rec.size();
  const std::size_t pi = static_cast<std::size_t>(run.pi_ms);
  for (std::size_t i = 0; i < n; ++i) {
    const bool ok = run.valid[i] && rec.samples[i].valid && i + pi < n && rec.samples[i + pi].valid &&
                    std::isfinite(run.x[i]) && std::isfinite(run.y[i]);
    run.valid[i] = ok;
    if (!ok) run.x[i] = run.y[i] = kNaN;
  }
}

PredictionRun baseline_predict(BaselineKind kind, const GazeRecording& rec, const VelocityTrace& vel, int pi_ms) {
  const bool cv = kind == BaselineKind::ConstantVelocity;
  if (cv && vel.size() != rec.size()) throw AlignmentError("velocity trace and recording differ in length");
  PredictionRun run = make_run(cv ? "constant_velocity" : "constant_position", rec, pi_ms);
  const double horizon_s = pi_ms * 1e-3;
  for (std::size_t i = 0; i < rec.size(); ++i) {
    const auto& s = rec.samples[i];
    if (!s.valid) continue;
    if (cv) {
      if (!vel.valid(i)) continue;
      run.x[i] = s.x_dva + vel.vx[i] * horizon_s;
      run.y[i] = s.y_dva + vel.vy[i] * horizon_s;
    } else {
      run.x[i] = s.x_dva;
      run.y[i] = s.y_dva;
    }
    run.valid[i] = true;
  }
  apply_truth_mask(run, rec);
  return run;
}

void write_run_csv(const PredictionRun& run, const std::filesystem::path& path) {
  std::ostringstream out;
  out << "# predictor=" << run.predictor_id << " subject=" << run.subject_id << " pi_ms=" << run.pi_ms << "\n";
  out << "idx,x_pred,y_pred,valid\n";
  for (std::size_t i = 0; i < run.size(); ++i) {
    out << i << ',' << io::format_double(run.x[i]) << ',' << io::format_double(run.y[i]) << ','
        << (run.valid[i] ? 1 : 0) << '\n';
  }
  io::write_text_file(path, out.str());
}

PredictionRun read_run_csv(const std::filesystem::path& path) {
  std::string text = io::read_text_file(path);
  PredictionRun run;
  const auto nl = text.find('\n');
  if (text.rfind("# ", 0) != 0 || nl == std::string::npos) throw DataError("prediction file lacks its header: " + path.string());
  std::istringstream meta(text.substr(2, nl - 2));
  std::string token;
  while (meta >> token) {
    const auto eq = token.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = token.substr(0, eq);
    const std::string value = token.substr(eq + 1);
    if (key == "predictor") run.predictor_id = value;
    else if (key == "subject") run.subject_id = value;
    else if (key == "pi_ms") run.pi_ms = std::stoi(value);
  }
  std::istringstream body(text.substr(nl + 1));
  const io::CsvTable table = io::read_csv(body);
  const auto cx = table.column("x_pred");
  const auto cy = table.column("y_pred");
  const auto cv = table.column("valid");
  if (cx < 0 || cy < 0 || cv < 0) throw DataError("prediction file lacks required columns: " + path.string());
  for (const auto& row : table.rows) {
    run.x.push_back(io::parse_double(row[static_cast<std::size_t>(cx)]));
    run.y.push_back(io::parse_double(row[static_cast<std::size_t>(cy)]));
    run.valid.push_back(row[static_cast<std::size_t>(cv)] == "1");
  }
  return run;
}

}  // namespace gazepred
