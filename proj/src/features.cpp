#include "gazepred/features.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "gazepred/error.hpp"
#include "gazepred/io.hpp"
#include "gazepred/stats.hpp"

namespace gazepred {

namespace {

std::vector<const SaccadeProps*> saccade_props_of(const std::vector<EventSegment>& segs) {
  std::vector<const SaccadeProps*> out;
  for (const auto& s : segs)
    if (s.kind == EventKind::Saccade && s.props) out.push_back(&*s.props);
  if (out.empty()) throw InsufficientDataError("saccade features need at least one saccade with properties");
  return out;
}

std::size_t fixation_sample_count(const GazeRecording& rec, const std::vector<EventSegment>& segs) {
  std::size_t n = 0;
  for (const auto& s : segs) {
    if (s.kind != EventKind::Fixation) continue;
    for (std::size_t i = s.start_idx; i <= s.end_idx; ++i) n += rec.samples[i].valid ? 1 : 0;
  }
  return n;
}

}  // namespace

double pk_vel_dur_ratio_r_md(const std::vector<EventSegment>& segs) {
  std::vector<double> ratios;
  for (const auto* p : saccade_props_of(segs)) ratios.push_back(p->peak_vel / p->sample_count);
  return stats::median(ratios);
}

double mn_vel_r_md(const std::vector<EventSegment>& segs) {
  std::vector<double> means;
  for (const auto* p : saccade_props_of(segs)) means.push_back(p->mean_vel);
  return stats::median(means);
}

double mn_vel_mean_of_medians(const std::vector<EventSegment>& segs, const VelocityTrace& vel) {
  saccade_props_of(segs);
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& s : segs) {
    if (s.kind != EventKind::Saccade || !s.props) continue;
    std::vector<double> v;
    for (std::size_t i = s.start_idx; i <= s.end_idx; ++i)
      if (!std::isnan(vel.v_radial[i])) v.push_back(vel.v_radial[i]);
    if (v.empty()) continue;
    sum += stats::median(v);
    ++count;
  }
  if (count == 0) throw InsufficientDataError("no saccade has valid velocity samples");
  return sum / static_cast<double>(count);
}

double rms_s2s_precision(const GazeRecording& rec, const std::vector<EventSegment>& segs) {
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& s : segs) {
    if (s.kind != EventKind::Fixation) continue;
    for (std::size_t i = s.start_idx + 1; i <= s.end_idx; ++i) {
      const auto& a = rec.samples[i - 1];
      const auto& b = rec.samples[i];
      if (!a.valid || !b.valid) continue;
      const double dx = b.x_dva - a.x_dva;
      const double dy = b.y_dva - a.y_dva;
      sum += dx * dx + dy * dy;
      ++count;
    }
  }
  if (count == 0) throw InsufficientDataError("precision needs at least one valid fixation sample pair");
  return std::sqrt(sum / static_cast<double>(count));
}

DataQuality data_quality(const GazeRecording& rec, const std::vector<EventSegment>& segs) {
  DataQuality q;
  try {
    q.precision_dva = rms_s2s_precision(rec, segs);
  } catch (const InsufficientDataError&) {
  }
  if (!rec.has_targets()) return q;

  // last index at which the target moved, per sample (kNever before the first move)
  constexpr std::size_t kNever = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> target_onset(rec.size(), kNever);
  for (std::size_t i = 1; i < rec.size(); ++i) {
    const bool moved = rec.targets[i].x_dva != rec.targets[i - 1].x_dva || rec.targets[i].y_dva != rec.targets[i - 1].y_dva;
    target_onset[i] = moved ? i : target_onset[i - 1];
  }

  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& s : segs) {
    if (s.kind != EventKind::Fixation) continue;
    const std::size_t onset = target_onset[s.start_idx];
    if (onset != kNever && s.start_idx - onset < kTargetLockDelayMs) continue;
    double cx = 0.0, cy = 0.0;
    std::size_t n = 0;
    for (std::size_t i = s.start_idx; i <= s.end_idx; ++i) {
      if (!rec.samples[i].valid) continue;
      cx += rec.samples[i].x_dva;
      cy += rec.samples[i].y_dva;
      ++n;
    }
    if (n == 0) continue;
    cx /= static_cast<double>(n);
    cy /= static_cast<double>(n);
    const auto& tgt = rec.targets[s.start_idx];
    sum += std::hypot(cx - tgt.x_dva, cy - tgt.y_dva);
    ++count;
  }
  if (count > 0) q.accuracy_dva = sum / static_cast<double>(count);
  return q;
}

SubjectFeatures compute_features(const GazeRecording& rec, const VelocityTrace& vel,
                                 const std::vector<EventSegment>& segs, const FeatureConfig& cfg) {
  SubjectFeatures f;
  f.subject_id = rec.subject_id;
  for (const auto& s : segs) f.n_saccades += (s.kind == EventKind::Saccade && s.props) ? 1 : 0;
  f.n_fixation_samples = fixation_sample_count(rec, segs);
  try {
    f.fix_noise_thr = fixation_noise_threshold(rec, vel, segs);
  } catch (const InsufficientDataError&) {
  }
  if (f.n_saccades >= kMinSaccadesForFeatures) {
    f.pk_vel_dur_ratio_r_md = pk_vel_dur_ratio_r_md(segs);
    f.mn_vel_r_md = cfg.mean_of_medians ? mn_vel_mean_of_medians(segs, vel) : mn_vel_r_md(segs);
  }
  if (f.n_fixation_samples >= kMinFixationSamplesForNoise) {
    const DataQuality q = data_quality(rec, segs);
    f.accuracy_dva = q.accuracy_dva;
    f.precision_dva = q.precision_dva;
  }
  return f;
}

const std::vector<std::string>& feature_names() {
  static const std::vector<std::string> kNames = {"FixNoiseThr", "PkVelDurRatioRMd", "MnVelRMd", "Accuracy",
                                                  "Precision"};
  return kNames;
}

std::optional<double> feature_value(const SubjectFeatures& f, const std::string& name) {
  if (name == "FixNoiseThr") return f.fix_noise_thr;
  if (name == "PkVelDurRatioRMd") return f.pk_vel_dur_ratio_r_md;
  if (name == "MnVelRMd") return f.mn_vel_r_md;
  if (name == "Accuracy") return f.accuracy_dva;
  if (name == "Precision") return f.precision_dva;
  throw ConfigError("unknown feature '" + name + "'");
}

void write_features_csv(const std::vector<SubjectFeatures>& rows, const std::filesystem::path& path) {
  std::ostringstream out;
  out << "subject_id,fix_noise_thr,pk_vel_dur_ratio_r_md,mn_vel_r_md,accuracy_dva,precision_dva,n_saccades,"
         "n_fixation_samples\n";
  auto opt = [](const std::optional<double>& v) { return v ? io::format_double(*v) : std::string(); };
  for (const auto& f : rows) {
    out << f.subject_id << ',' << opt(f.fix_noise_thr) << ',' << opt(f.pk_vel_dur_ratio_r_md) << ','
        << opt(f.mn_vel_r_md) << ',' << opt(f.accuracy_dva) << ',' << opt(f.precision_dva) << ',' << f.n_saccades
        << ',' << f.n_fixation_samples << '\n';
  }
  io::write_text_file(path, out.str());
}

std::vector<SubjectFeatures> read_features_csv(const std::filesystem::path& path) {
  const io::CsvTable t = io::read_csv_file(path);
  auto col = [&](const char* name) {
    const int c = t.column(name);
    if (c < 0) throw DataError(std::string("features table lacks column ") + name);
    return static_cast<std::size_t>(c);
  };
  auto opt = [](const std::string& s) -> std::optional<double> {
    const double v = io::parse_double(s);
    return std::isnan(v) ? std::nullopt : std::optional<double>(v);
  };
  const std::size_t cid = col("subject_id"), cf = col("fix_noise_thr"), cp = col("pk_vel_dur_ratio_r_md"),
                    cm = col("mn_vel_r_md"), ca = col("accuracy_dva"), cq = col("precision_dva"),
                    cs = col("n_saccades"), cn = col("n_fixation_samples");
  std::vector<SubjectFeatures> rows;
  for (const auto& r : t.rows) {
    SubjectFeatures f;
    f.subject_id = r[cid];
    f.fix_noise_thr = opt(r[cf]);
    f.pk_vel_dur_ratio_r_md = opt(r[cp]);
    f.mn_vel_r_md = opt(r[cm]);
    f.accuracy_dva = opt(r[ca]);
    f.precision_dva = opt(r[cq]);
    f.n_saccades = static_cast<std::size_t>(std::stoull(r[cs]));
    f.n_fixation_samples = static_cast<std::size_t>(std::stoull(r[cn]));
    rows.push_back(std::move(f));
  }
  return rows;
}

}  // namespace gazepred
