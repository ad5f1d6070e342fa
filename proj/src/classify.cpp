#include "gazepred/classify.hpp"

#include <algorithm>
#include <cmath>

#include "gazepred/error.hpp"
#include "gazepred/stats.hpp"

namespace gazepred {

std::string to_string(EventKind kind) {
  switch (kind) {
    case EventKind::Fixation: return "fixation";
    case EventKind::Saccade: return "saccade";
    case EventKind::Blink: return "blink";
    case EventKind::Other: return "other";
  }
  return "other";
}

EventKind event_kind_from_string(const std::string& s) {
  if (s == "fixation") return EventKind::Fixation;
  if (s == "saccade") return EventKind::Saccade;
  if (s == "blink") return EventKind::Blink;
  if (s == "other") return EventKind::Other;
  throw DataError("unknown event kind '" + s + "'");
}

std::string to_string(SaccadeClass c) {
  switch (c) {
    case SaccadeClass::None: return "none";
    case SaccadeClass::Small: return "small";
    case SaccadeClass::Large: return "large";
  }
  return "none";
}

SaccadeClass saccade_class(const EventSegment& seg) {
  if (seg.kind != EventKind::Saccade || !seg.props) return SaccadeClass::None;
  return seg.props->amplitude_dva >= kLargeSaccadeDva ? SaccadeClass::Large : SaccadeClass::Small;
}

void ClassifierConfig::validate() const {
  if (!(onset_offset_threshold > 0.0) || !(peak_threshold > onset_offset_threshold))
    throw ConfigError("classifier thresholds must satisfy peak > onset/offset > 0");
  if (min_saccade_ms < 1 || max_saccade_ms < min_saccade_ms || min_fixation_ms < 1)
    throw ConfigError("classifier duration limits are inconsistent");
}

SaccadeProps saccade_props(const GazeRecording& rec, const VelocityTrace& vel, std::size_t start,
                           std::size_t end) {
  SaccadeProps p;
  const auto& a = rec.samples[start];
  const auto& b = rec.samples[end];
  p.amplitude_dva = std::hypot(b.x_dva - a.x_dva, b.y_dva - a.y_dva);
  p.sample_count = static_cast<int>(end - start + 1);
  p.duration_ms = p.sample_count * 1000 / kSampleRateHz;
  double sum = 0.0;
  int n = 0;
  for (std::size_t i = start; i <= end; ++i) {
    const double v = vel.v_radial[i];
    if (std::isnan(v)) continue;
    p.peak_vel = std::max(p.peak_vel, v);
    sum += v;
    ++n;
  }
  p.mean_vel = n > 0 ? sum / n : 0.0;
  return p;
}

void attach_saccade_props(std::vector<EventSegment>& segs, const GazeRecording& rec, const VelocityTrace& vel) {
  for (auto& s : segs) {
    if (s.kind == EventKind::Saccade)
      s.props = saccade_props(rec, vel, s.start_idx, s.end_idx);
    else
      s.props.reset();
  }
}

std::vector<EventKind> label_samples(const std::vector<EventSegment>& segs, std::size_t n) {
  std::vector<EventKind> labels(n, EventKind::Other);
  for (const auto& s : segs)
    for (std::size_t i = s.start_idx; i <= s.end_idx && i < n; ++i) labels[i] = s.kind;
  return labels;
}

void check_tiling(const std::vector<EventSegment>& segs, std::size_t n) {
  std::size_t next = 0;
  for (const auto& s : segs) {
    if (s.start_idx != next || s.end_idx < s.start_idx) throw AlignmentError("segments do not tile the recording");
    next = s.end_idx + 1;
  }
  if (next != n) throw AlignmentError("segments do not cover the recording");
}

namespace {

std::vector<EventSegment> runs_to_segments(const std::vector<EventKind>& labels) {
  std::vector<EventSegment> segs;
  std::size_t i = 0;
  while (i < labels.size()) {
    std::size_t j = i;
    while (j + 1 < labels.size() && labels[j + 1] == labels[i]) ++j;
    segs.push_back({labels[i], i, j, std::nullopt});
    i = j + 1;
  }
  return segs;
}

}  // namespace

std::vector<EventSegment> classify_events(const GazeRecording& rec, const VelocityTrace& vel,
                                          const ClassifierConfig& cfg) {
  cfg.validate();
  const std::size_t n = rec.samples.size();
  if (vel.size() != n || vel.vy.size() != n || vel.v_radial.size() != n)
    throw AlignmentError("velocity trace length " + std::to_string(vel.size()) + " != recording length " +
                         std::to_string(n));
  if (n == 0) return {};

  // Unassigned samples are resolved to Fixation/Other in the last pass.
  enum Label : unsigned char { kUnassigned, kBlink, kSaccade, kOther };
  std::vector<unsigned char> lab(n, kUnassigned);
  for (std::size_t i = 0; i < n; ++i)
    if (!rec.samples[i].valid) lab[i] = kBlink;

  auto above_onset = [&](std::size_t i) {
    return lab[i] != kBlink && !std::isnan(vel.v_radial[i]) && vel.v_radial[i] >= cfg.onset_offset_threshold;
  };

  // A saccade is a maximal run of samples above the onset/offset threshold that
  // contains at least one sample above the peak threshold.
  std::size_t i = 0;
  while (i < n) {
    if (!above_onset(i)) {
      ++i;
      continue;
    }
    std::size_t j = i;
    bool seeded = false;
    while (j < n && above_onset(j)) {
      seeded = seeded || vel.v_radial[j] > cfg.peak_threshold;
      ++j;
    }
    if (seeded) {
      const std::size_t len = j - i;
      const bool ok = len >= static_cast<std::size_t>(cfg.min_saccade_ms) &&
                      len <= static_cast<std::size_t>(cfg.max_saccade_ms);
      for (std::size_t k = i; k < j; ++k) lab[k] = ok ? kSaccade : kOther;
    }
    i = j;
  }

  std::vector<EventKind> kinds(n);
  i = 0;
  while (i < n) {
    if (lab[i] != kUnassigned) {
      kinds[i] = lab[i] == kBlink ? EventKind::Blink : lab[i] == kSaccade ? EventKind::Saccade : EventKind::Other;
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < n && lab[j] == kUnassigned) ++j;
    const EventKind k = (j - i) >= static_cast<std::size_t>(cfg.min_fixation_ms) ? EventKind::Fixation
                                                                                  : EventKind::Other;
    for (std::size_t m = i; m < j; ++m) kinds[m] = k;
    i = j;
  }

  // Adjacent saccade runs cannot occur (runs are maximal), so plain run-length
  // grouping gives the final tiling.
  auto segs = runs_to_segments(kinds);
  attach_saccade_props(segs, rec, vel);
  return segs;
}

double fixation_noise_threshold(const GazeRecording& rec, const VelocityTrace& vel,
                                const std::vector<EventSegment>& segs) {
  if (vel.size() != rec.size()) throw AlignmentError("velocity trace not aligned with recording");
  std::vector<double> v;
  for (const auto& s : segs) {
    if (s.kind != EventKind::Fixation) continue;
    for (std::size_t i = s.start_idx; i <= s.end_idx && i < rec.size(); ++i)
      if (rec.samples[i].valid && !std::isnan(vel.v_radial[i])) v.push_back(vel.v_radial[i]);
  }
  if (v.size() < kMinFixationSamplesForNoise)
    throw InsufficientDataError("fixation noise threshold needs " + std::to_string(kMinFixationSamplesForNoise) +
                                " valid fixation samples, have " + std::to_string(v.size()));
  return stats::quantile(v, 0.9);
}

EventKind OnlineClassifier::push(double v) {
  EventKind next = state_;
  if (std::isnan(v)) {
    next = EventKind::Blink;
  } else if (state_ == EventKind::Saccade) {
    if (v < cfg_.onset_offset_threshold)
      next = EventKind::Fixation;
    else if (age_ + 1 > cfg_.max_saccade_ms)
      next = EventKind::Other;  // too long to be a saccade; wait for velocity to drop
  } else if (state_ == EventKind::Other) {
    if (v < cfg_.onset_offset_threshold) next = EventKind::Fixation;
  } else if (v > cfg_.peak_threshold) {
    next = EventKind::Saccade;
  } else {
    next = EventKind::Fixation;
  }
  if (next != state_) {
    state_ = next;
    age_ = 0;
  }
  ++age_;
  return state_;
}

void OnlineClassifier::reset() {
  state_ = EventKind::Fixation;
  age_ = 0;
}

nlohmann::json segments_to_json(const std::vector<EventSegment>& segs) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& s : segs) {
    nlohmann::json o;
    o["kind"] = to_string(s.kind);
    o["start_idx"] = s.start_idx;
    o["end_idx"] = s.end_idx;
    if (s.props) {
      o["props"] = {{"amplitude_dva", s.props->amplitude_dva},
                    {"duration_ms", s.props->duration_ms},
                    {"peak_vel", s.props->peak_vel},
                    {"mean_vel", s.props->mean_vel},
                    {"sample_count", s.props->sample_count}};
    } else {
      o["props"] = nullptr;
    }
    arr.push_back(std::move(o));
  }
  return arr;
}

std::vector<EventSegment> segments_from_json(const nlohmann::json& j) {
  std::vector<EventSegment> segs;
  try {
    for (const auto& o : j) {
      EventSegment s;
      s.kind = event_kind_from_string(o.at("kind").get<std::string>());
      s.start_idx = o.at("start_idx").get<std::size_t>();
      s.end_idx = o.at("end_idx").get<std::size_t>();
      if (o.contains("props") && !o["props"].is_null()) {
        const auto& p = o["props"];
        SaccadeProps sp;
        sp.amplitude_dva = p.at("amplitude_dva").get<double>();
        sp.duration_ms = p.at("duration_ms").get<int>();
        sp.peak_vel = p.at("peak_vel").get<double>();
        sp.mean_vel = p.at("mean_vel").get<double>();
        sp.sample_count = p.at("sample_count").get<int>();
        s.props = sp;
      }
      segs.push_back(std::move(s));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed segment JSON: ") + e.what());
  }
  return segs;
}

}  // namespace gazepred
