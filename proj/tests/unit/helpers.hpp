#pragma once

#include <cmath>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "gazepred/classify.hpp"
#include "gazepred/rng.hpp"
#include "gazepred/signal.hpp"

namespace testutil {

inline gazepred::GazeRecording make_recording(std::size_t n, const std::function<double(std::size_t)>& fx,
                                              const std::function<double(std::size_t)>& fy = [](std::size_t) { return 0.0; }) {
  gazepred::GazeRecording rec;
  rec.subject_id = "T";
  rec.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) rec.samples[i] = {static_cast<std::int64_t>(i), fx(i), fy(i), true};
  return rec;
}

inline gazepred::GazeRecording constant_recording(std::size_t n, double x = 0.0, double y = 0.0) {
  return make_recording(n, [x](std::size_t) { return x; }, [y](std::size_t) { return y; });
}

inline gazepred::EventSegment seg(gazepred::EventKind k, std::size_t a, std::size_t b) {
  gazepred::EventSegment s;
  s.kind = k;
  s.start_idx = a;
  s.end_idx = b;
  return s;
}

inline gazepred::EventSegment saccade(std::size_t a, std::size_t b, double amplitude, double peak = 300.0,
                                      double mean = 150.0) {
  auto s = seg(gazepred::EventKind::Saccade, a, b);
  gazepred::SaccadeProps p;
  p.amplitude_dva = amplitude;
  p.duration_ms = static_cast<int>(b - a + 1);
  p.sample_count = static_cast<int>(b - a + 1);
  p.peak_vel = peak;
  p.mean_vel = mean;
  s.props = p;
  return s;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("gazepred_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace testutil
