#include "gazepred/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <set>

#include <Eigen/Dense>

#include "gazepred/error.hpp"
#include "gazepred/stats.hpp"

namespace gazepred {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

Eigen::Vector3d direction(double az_deg, double el_deg) {
  const double az = az_deg * std::numbers::pi / 180.0;
  const double el = el_deg * std::numbers::pi / 180.0;
  return {std::cos(el) * std::sin(az), std::sin(el), std::cos(el) * std::cos(az)};
}

}  // namespace

std::string to_string(ErrorMetric m) { return m == ErrorMetric::Angular ? "angular" : "planar"; }

ErrorMetric error_metric_from_string(const std::string& s) {
  if (s == "planar") return ErrorMetric::Planar;
  if (s == "angular") return ErrorMetric::Angular;
  throw ConfigError("unknown error metric '" + s + "'");
}

double gaze_error(double x_pred, double y_pred, double x_true, double y_true, ErrorMetric metric) {
  if (metric == ErrorMetric::Planar) return std::hypot(x_pred - x_true, y_pred - y_true);
  const Eigen::Vector3d a = direction(x_pred, y_pred);
  const Eigen::Vector3d b = direction(x_true, y_true);
  return std::atan2(a.cross(b).norm(), a.dot(b)) * 180.0 / std::numbers::pi;
}

std::vector<std::pair<std::size_t, std::size_t>> cep_intervals(const std::vector<EventSegment>& segs) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  if (segs.empty()) return out;
  const std::size_t n = segs.back().end_idx + 1;
  for (std::size_t k = 0; k < segs.size(); ++k) {
    if (segs[k].kind != EventKind::Saccade) continue;
    const std::size_t start = segs[k].end_idx + 1;
    if (start >= n) continue;
    std::size_t end = std::min(n - 1, segs[k].end_idx + kCepMs);
    for (std::size_t j = k + 1; j < segs.size() && segs[j].start_idx <= end; ++j) {
      if (segs[j].kind == EventKind::Saccade || segs[j].kind == EventKind::Blink) {
        end = segs[j].start_idx - 1;
        break;
      }
    }
    if (end >= start) out.emplace_back(start, end);
  }
  return out;
}

std::vector<ErrorRecord> score_run(const PredictionRun& run, const GazeRecording& rec,
                                   const std::vector<EventSegment>& segs, ErrorMetric metric) {
  const std::size_t n = rec.size();
  if (run.size() != n) throw AlignmentError("prediction run and recording differ in length");
  if (run.valid.size() != n || run.y.size() != n) throw AlignmentError("prediction run columns differ in length");
  check_tiling(segs, n);

  std::vector<EventKind> kind(n);
  std::vector<long> seg_of(n, -1);
  for (std::size_t k = 0; k < segs.size(); ++k) {
    for (std::size_t i = segs[k].start_idx; i <= segs[k].end_idx; ++i) {
      kind[i] = segs[k].kind;
      if (segs[k].kind == EventKind::Saccade) seg_of[i] = static_cast<long>(k);
    }
  }
  std::vector<int> cep(n, 0);
  for (const auto& [a, b] : cep_intervals(segs))
    for (std::size_t i = a; i <= b; ++i) cep[i] = static_cast<int>(i - a) + 1;

  const std::size_t pi = static_cast<std::size_t>(run.pi_ms);
  std::vector<ErrorRecord> out;
  for (std::size_t i = 0; i < n; ++i) {
    if (!run.valid[i]) continue;
    const std::size_t t = i + pi;
    if (t >= n || !rec.samples[t].valid) continue;
    ErrorRecord r;
    r.sample_idx = i;
    r.target_idx = t;
    r.event_kind = kind[t];
    r.saccade_segment = seg_of[t];
    if (seg_of[t] >= 0) r.saccade_class = saccade_class(segs[static_cast<std::size_t>(seg_of[t])]);
    r.cep_offset_ms = cep[t];
    r.error_dva = gaze_error(run.x[i], run.y[i], rec.samples[t].x_dva, rec.samples[t].y_dva, metric);
    if (!std::isfinite(r.error_dva)) continue;
    out.push_back(r);
  }
  return out;
}

const std::vector<ErrorClass>& all_error_classes() {
  static const std::vector<ErrorClass> kAll = {ErrorClass::Fixation, ErrorClass::Cep, ErrorClass::SmallSaccade,
                                               ErrorClass::LargeSaccade, ErrorClass::All};
  return kAll;
}

std::string to_string(ErrorClass c) {
  switch (c) {
    case ErrorClass::Fixation: return "fixation";
    case ErrorClass::Cep: return "cep";
    case ErrorClass::SmallSaccade: return "small_saccade";
    case ErrorClass::LargeSaccade: return "large_saccade";
    case ErrorClass::All: return "all";
  }
  return "all";
}

ErrorClass error_class_from_string(const std::string& s) {
  for (ErrorClass c : all_error_classes())
    if (to_string(c) == s) return c;
  throw ConfigError("unknown error class '" + s + "'");
}

bool in_class(const ErrorRecord& r, ErrorClass c) {
  switch (c) {
    case ErrorClass::Fixation: return r.event_kind == EventKind::Fixation;
    case ErrorClass::Cep: return r.in_cep();
    case ErrorClass::SmallSaccade: return r.saccade_class == SaccadeClass::Small;
    case ErrorClass::LargeSaccade: return r.saccade_class == SaccadeClass::Large;
    case ErrorClass::All: return true;
  }
  return false;
}

std::vector<double> class_errors(const std::vector<ErrorRecord>& records, ErrorClass c) {
  std::vector<double> out;
  for (const auto& r : records)
    if (in_class(r, c)) out.push_back(r.error_dva);
  return out;
}

std::vector<double> cdf_curve(const std::vector<double>& errors, const std::vector<double>& grid) {
  if (errors.empty()) throw InsufficientDataError("CDF of an empty error set");
  std::vector<double> sorted = errors;
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(sorted.size());
  std::vector<double> out;
  out.reserve(grid.size());
  for (double g : grid) {
    const auto it = std::upper_bound(sorted.begin(), sorted.end(), g);
    out.push_back(static_cast<double>(it - sorted.begin()) / n);
  }
  return out;
}

double normalized_saccade_time(std::size_t idx, const EventSegment& seg) {
  if (idx < seg.start_idx || idx > seg.end_idx) throw AlignmentError("sample lies outside the saccade");
  if (seg.length() < 2) return 0.0;
  return static_cast<double>(idx - seg.start_idx) / static_cast<double>(seg.length() - 1);
}

void ProgressSamples::append(const ProgressSamples& other) {
  t.insert(t.end(), other.t.begin(), other.t.end());
  error.insert(error.end(), other.error.begin(), other.error.end());
  n_saccades += other.n_saccades;
}

ProgressSamples saccade_progress_samples(const std::vector<ErrorRecord>& records,
                                         const std::vector<EventSegment>& segs, double amp_lo, double amp_hi) {
  ProgressSamples out;
  std::set<long> saccades;
  for (const auto& r : records) {
    if (r.saccade_segment < 0) continue;
    const auto& seg = segs.at(static_cast<std::size_t>(r.saccade_segment));
    if (!seg.props || seg.props->amplitude_dva < amp_lo || seg.props->amplitude_dva > amp_hi) continue;
    out.t.push_back(normalized_saccade_time(r.target_idx, seg));
    out.error.push_back(r.error_dva);
    saccades.insert(r.saccade_segment);
  }
  out.n_saccades = saccades.size();
  return out;
}

ProgressCurve saccade_progress_curve(const ProgressSamples& samples, int bins) {
  if (bins < 1) throw ConfigError("progress curve needs at least one bin");
  if (samples.n_saccades < kMinProgressSaccades)
    throw InsufficientDataError("progress curve needs " + std::to_string(kMinProgressSaccades) +
                                " saccades in the amplitude range, have " + std::to_string(samples.n_saccades));
  std::vector<std::vector<double>> values(static_cast<std::size_t>(bins));
  for (std::size_t k = 0; k < samples.t.size(); ++k) {
    const int b = std::min(bins - 1, static_cast<int>(std::floor(samples.t[k] * bins)));
    values[static_cast<std::size_t>(b)].push_back(samples.error[k]);
  }
  ProgressCurve curve;
  curve.n_saccades = samples.n_saccades;
  for (int b = 0; b < bins; ++b) {
    ProgressBin bin;
    bin.t_lo = static_cast<double>(b) / bins;
    bin.t_hi = static_cast<double>(b + 1) / bins;
    const auto& v = values[static_cast<std::size_t>(b)];
    bin.count = v.size();
    bin.median = v.empty() ? kNaN : stats::median(v);
    curve.bins.push_back(bin);
  }
  return curve;
}

ProgressCurve saccade_progress_curve(const std::vector<ErrorRecord>& records, const std::vector<EventSegment>& segs,
                                     int bins, double amp_lo, double amp_hi) {
  return saccade_progress_curve(saccade_progress_samples(records, segs, amp_lo, amp_hi), bins);
}

std::vector<CepPoint> cep_curve(const std::vector<ErrorRecord>& records) {
  std::vector<std::vector<double>> values(kCepMs);
  for (const auto& r : records)
    if (r.in_cep()) values[static_cast<std::size_t>(r.cep_offset_ms - 1)].push_back(r.error_dva);
  std::vector<CepPoint> out;
  for (int k = 0; k < kCepMs; ++k) {
    const auto& v = values[static_cast<std::size_t>(k)];
    out.push_back({k + 1, v.size(), v.empty() ? kNaN : stats::median(v)});
  }
  return out;
}

SubjectStats subject_stats(const std::vector<std::pair<std::string, std::vector<ErrorRecord>>>& per_subject,
                           ErrorClass c, std::size_t min_records) {
  SubjectStats s;
  s.error_class = c;
  std::vector<double> medians;
  for (const auto& [id, records] : per_subject) {
    std::vector<double> e = class_errors(records, c);
    if (e.size() < std::max<std::size_t>(min_records, 1)) continue;
    std::sort(e.begin(), e.end());
    SubjectProfile p;
    p.subject_id = id;
    p.count = e.size();
    p.median = stats::quantile_sorted(e, 0.5);
    p.iqr = stats::quantile_sorted(e, 0.75) - stats::quantile_sorted(e, 0.25);
    p.min = e.front();
    p.max = e.back();
    medians.push_back(p.median);
    s.subjects.push_back(std::move(p));
  }
  if (medians.empty())
    throw InsufficientDataError("no subject has " + std::to_string(min_records) + " records of class " + to_string(c));
  const auto [lo, hi] = std::minmax_element(medians.begin(), medians.end());
  s.cohort_min = *lo;
  s.cohort_max = *hi;
  s.cohort_ratio = *lo > 0.0 ? *hi / *lo : std::numeric_limits<double>::infinity();
  s.cohort_iqr = stats::iqr(medians);
  s.cohort_median = stats::median(medians);
  return s;
}

ModelMedians model_medians(const std::string& model, const SubjectStats& stats) {
  ModelMedians m;
  m.model = model;
  for (const auto& p : stats.subjects) m.medians[p.subject_id] = p.median;
  return m;
}

std::vector<CorrelationResult> correlate_features(const std::vector<SubjectFeatures>& features,
                                                  const std::vector<ModelMedians>& models,
                                                  const std::vector<std::string>& feature_list, double alpha) {
  std::vector<CorrelationResult> out;
  std::vector<double> p_values;
  for (const auto& name : feature_list) {
    for (const auto& m : models) {
      std::vector<double> x, y;
      for (const auto& f : features) {
        const auto v = feature_value(f, name);
        const auto it = m.medians.find(f.subject_id);
        if (!v || it == m.medians.end()) continue;
        x.push_back(*v);
        y.push_back(it->second);
      }
      if (x.size() < kMinCorrelationSubjects)
        throw InsufficientDataError(name + " vs " + m.model + ": " + std::to_string(x.size()) +
                                    " complete subjects, need " + std::to_string(kMinCorrelationSubjects));
      const auto sr = stats::spearman(x, y);
      CorrelationResult r;
      r.feature = name;
      r.model = m.model;
      r.n = x.size();
      r.r_s = sr.r_s;
      r.p_value = sr.p_value;
      out.push_back(r);
      p_values.push_back(sr.p_value);
    }
  }
  if (out.empty()) return out;
  const std::vector<bool> sig = stats::bonferroni(p_values, alpha);
  for (std::size_t k = 0; k < out.size(); ++k) {
    out[k].significant = sig[k];
    out[k].family_size = out.size();
  }
  return out;
}

Concordance model_concordance(const std::vector<ModelMedians>& models) {
  if (models.size() < 2) throw InsufficientDataError("concordance needs at least two models");
  std::vector<std::string> common;
  for (const auto& [id, v] : models.front().medians) {
    bool everywhere = true;
    for (const auto& m : models) everywhere = everywhere && m.medians.count(id) > 0;
    if (everywhere) common.push_back(id);
  }
  if (common.size() < 3) throw InsufficientDataError("concordance needs at least three common subjects");
  std::vector<std::vector<double>> scores;
  for (const auto& m : models) {
    std::vector<double> row;
    for (const auto& id : common) row.push_back(m.medians.at(id));
    scores.push_back(std::move(row));
  }
  return {common.size(), models.size(), stats::kendall_w(scores)};
}

}  // namespace gazepred
