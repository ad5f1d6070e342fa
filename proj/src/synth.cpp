#include "gazepred/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "gazepred/error.hpp"
#include "gazepred/io.hpp"
#include "gazepred/parallel.hpp"

namespace gazepred {

PlantParams ParamSampler::sample(Rng& rng, double* speed_factor) const {
  PlantParams p = base;
  const double s = rng.uniform(1.0 - speed_spread, 1.0 + speed_spread);
  auto jit = [&](double& v) { v *= std::exp(jitter * rng.normal()); };
  jit(p.Kse);
  jit(p.Klt);
  jit(p.J);
  jit(p.Bag);
  jit(p.Bant);
  jit(p.Kp);
  jit(p.Bp);
  jit(p.tau_ag_act);
  jit(p.tau_ag_deact);
  jit(p.tau_ant_act);
  jit(p.tau_ant_deact);
  p.pulse_height_coeff *= s;
  p.pulse_width_coeff /= s;
  if (speed_factor) *speed_factor = s;
  return p;
}

void SynthConfig::validate() const {
  if (n_subjects < 1) throw ConfigError("synthetic cohort needs at least one subject");
  if (!(duration_s > 0.0)) throw ConfigError("duration_s must be positive");
  if (!(target_range_x > 0.0) || !(target_range_y > 0.0)) throw ConfigError("target ranges must be positive");
  if (min_target_step_dva < 0.0 || min_target_step_dva > std::min(target_range_x, target_range_y))
    throw ConfigError("min_target_step_dva out of range");
  if (!(hold_ms >= 300.0)) throw ConfigError("hold_ms must be at least 300 ms");
  if (latency_ms < 0.0 || latency_jitter_ms < 0.0) throw ConfigError("latency must be non-negative");
  if (noise_sigma_min < 0.0 || noise_sigma_max < noise_sigma_min) throw ConfigError("invalid noise sigma range");
  if (drift_sigma_dva < 0.0 || blink_rate_hz < 0.0) throw ConfigError("drift and blink rate must be non-negative");
  if (params.speed_spread < 0.0 || params.speed_spread >= 1.0 || params.jitter < 0.0)
    throw ConfigError("invalid parameter sampler spread");
  if (!(truth_velocity_threshold > 0.0)) throw ConfigError("truth velocity threshold must be positive");
  params.base.validate();
}

nlohmann::json to_json(const SynthConfig& c) {
  return {{"n_subjects", c.n_subjects},
          {"duration_s", c.duration_s},
          {"target_range_x", c.target_range_x},
          {"target_range_y", c.target_range_y},
          {"min_target_step_dva", c.min_target_step_dva},
          {"hold_ms", c.hold_ms},
          {"latency_ms", c.latency_ms},
          {"latency_jitter_ms", c.latency_jitter_ms},
          {"noise_sigma_min", c.noise_sigma_min},
          {"noise_sigma_max", c.noise_sigma_max},
          {"drift_sigma_dva", c.drift_sigma_dva},
          {"blink_rate_hz", c.blink_rate_hz},
          {"speed_spread", c.params.speed_spread},
          {"param_jitter", c.params.jitter},
          {"base_params", to_json(c.params.base)},
          {"seed", c.seed},
          {"truth_velocity_threshold", c.truth_velocity_threshold}};
}

SynthConfig synth_config_from_json(const nlohmann::json& j) {
  SynthConfig c;
  auto get = [&](const char* key, auto& dst) {
    if (j.contains(key)) dst = j.at(key).get<std::decay_t<decltype(dst)>>();
  };
  try {
    get("n_subjects", c.n_subjects);
    get("duration_s", c.duration_s);
    get("target_range_x", c.target_range_x);
    get("target_range_y", c.target_range_y);
    get("min_target_step_dva", c.min_target_step_dva);
    get("hold_ms", c.hold_ms);
    get("latency_ms", c.latency_ms);
    get("latency_jitter_ms", c.latency_jitter_ms);
    get("noise_sigma_min", c.noise_sigma_min);
    get("noise_sigma_max", c.noise_sigma_max);
    get("drift_sigma_dva", c.drift_sigma_dva);
    get("blink_rate_hz", c.blink_rate_hz);
    get("speed_spread", c.params.speed_spread);
    get("param_jitter", c.params.jitter);
    get("seed", c.seed);
    get("truth_velocity_threshold", c.truth_velocity_threshold);
    if (j.contains("base_params")) c.params.base = plant_params_from_json(j.at("base_params"));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid synth config: ") + e.what());
  }
  return c;
}

namespace {

struct Axis {
  PlantState state;
  PulseStep schedule;
  double onset_ms = -std::numeric_limits<double>::infinity();
};

std::vector<EventSegment> truth_segments(const std::vector<double>& speed, const std::vector<GazeSample>& samples,
                                         double threshold, int min_saccade_ms) {
  const std::size_t n = samples.size();
  std::vector<EventKind> kinds(n, EventKind::Fixation);
  std::size_t i = 0;
  while (i < n) {
    if (speed[i] < threshold) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < n && speed[j] >= threshold) ++j;
    if (j - i >= static_cast<std::size_t>(min_saccade_ms))
      for (std::size_t k = i; k < j; ++k) kinds[k] = EventKind::Saccade;
    i = j;
  }
  for (std::size_t k = 0; k < n; ++k)
    if (!samples[k].valid) kinds[k] = EventKind::Blink;

  std::vector<EventSegment> segs;
  i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && kinds[j + 1] == kinds[i]) ++j;
    segs.push_back({kinds[i], i, j, std::nullopt});
    i = j + 1;
  }
  return segs;
}

}  // namespace

SyntheticSubject generate_subject(const SynthConfig& cfg, int index) {
  cfg.validate();
  Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(index)));

  SyntheticSubject out;
  const double log_lo = std::log(std::max(cfg.noise_sigma_min, 1e-12));
  const double log_hi = std::log(std::max(cfg.noise_sigma_max, 1e-12));
  out.noise_sigma = cfg.noise_sigma_max <= 0.0 ? 0.0 : std::exp(rng.uniform(log_lo, log_hi));
  if (cfg.noise_sigma_min == cfg.noise_sigma_max) out.noise_sigma = cfg.noise_sigma_min;

  std::optional<PlantModel> model;
  for (int attempt = 0; attempt < 10 && !model; ++attempt) {
    out.params = cfg.params.sample(rng, &out.speed_factor);
    try {
      model.emplace(out.params);
    } catch (const ConfigError&) {
    } catch (const InstabilityError&) {
    }
  }
  if (!model) throw InstabilityError("no stable plant parameters after 10 draws for subject " + std::to_string(index));

  const std::size_t n = static_cast<std::size_t>(std::llround(cfg.duration_s * kSampleRateHz));
  char id[32];
  std::snprintf(id, sizeof(id), "S%03d", index);
  out.recording.subject_id = id;
  out.recording.session_id = "synthetic";
  out.recording.samples.resize(n);
  out.recording.targets.resize(n);

  auto draw_target = [&](double px, double py) {
    for (int k = 0; k < 1000; ++k) {
      const double x = rng.uniform(-cfg.target_range_x, cfg.target_range_x);
      const double y = rng.uniform(-cfg.target_range_y, cfg.target_range_y);
      if (std::hypot(x - px, y - py) >= cfg.min_target_step_dva) return std::pair{x, y};
    }
    return std::pair{-px, -py};
  };

  auto [tx, ty] = draw_target(std::numeric_limits<double>::infinity(), 0.0);
  Axis ax{model->equilibrium(tx), {tx, tx, 0.0, 0.0}};
  Axis ay{model->equilibrium(ty), {ty, ty, 0.0, 0.0}};

  const double drift_a = std::exp(-1.0 / 500.0);
  const double drift_step = cfg.drift_sigma_dva * std::sqrt(1.0 - drift_a * drift_a);
  double dx = cfg.drift_sigma_dva * rng.normal();
  double dy = cfg.drift_sigma_dva * rng.normal();

  std::size_t blink_left = 0;
  double next_change = cfg.hold_ms;
  std::vector<double> speed(n);

  for (std::size_t k = 0; k < n; ++k) {
    const double t = static_cast<double>(k);
    if (t >= next_change) {
      const double old_x = ax.schedule.target;
      const double old_y = ay.schedule.target;
      std::tie(tx, ty) = draw_target(old_x, old_y);
      const double latency = std::clamp(rng.normal(cfg.latency_ms, cfg.latency_jitter_ms), 100.0, cfg.hold_ms - 100.0);
      ax.schedule = model->pulse_step(old_x, tx);
      ay.schedule = model->pulse_step(old_y, ty);
      ax.onset_ms = ay.onset_ms = next_change + latency;
      next_change += cfg.hold_ms;
    }

    auto& s = out.recording.samples[k];
    s.t_ms = static_cast<std::int64_t>(k);
    s.x_dva = ax.state.theta + dx + out.noise_sigma * rng.normal();
    s.y_dva = ay.state.theta + dy + out.noise_sigma * rng.normal();
    s.valid = true;
    out.recording.targets[k] = {s.t_ms, tx, ty};
    speed[k] = std::hypot(ax.state.omega, ay.state.omega);

    if (blink_left == 0 && cfg.blink_rate_hz > 0.0 && rng.uniform() < cfg.blink_rate_hz / kSampleRateHz)
      blink_left = static_cast<std::size_t>(rng.uniform(80.0, 150.0));
    if (blink_left > 0) {
      s.valid = false;
      s.x_dva = s.y_dva = std::numeric_limits<double>::quiet_NaN();
      --blink_left;
    }

    ax.state = model->advance(ax.state, ax.schedule, t - ax.onset_ms, 1.0);
    ay.state = model->advance(ay.state, ay.schedule, t - ay.onset_ms, 1.0);
    dx = drift_a * dx + drift_step * rng.normal();
    dy = drift_a * dy + drift_step * rng.normal();
  }

  out.truth = truth_segments(speed, out.recording.samples, cfg.truth_velocity_threshold, ClassifierConfig{}.min_saccade_ms);
  const VelocityTrace vel = compute_velocity(out.recording);
  attach_saccade_props(out.truth, out.recording, vel);
  return out;
}

std::vector<SyntheticSubject> generate_cohort(const SynthConfig& cfg, int jobs) {
  cfg.validate();
  std::vector<SyntheticSubject> cohort(static_cast<std::size_t>(cfg.n_subjects));
  parallel_for(cohort.size(), jobs, [&](std::size_t i) { cohort[i] = generate_subject(cfg, static_cast<int>(i)); });
  return cohort;
}

nlohmann::json labels_to_json(const SyntheticSubject& s) {
  return {{"subject_id", s.recording.subject_id},
          {"noise_sigma", s.noise_sigma},
          {"speed_factor", s.speed_factor},
          {"params", to_json(s.params)},
          {"segments", segments_to_json(s.truth)}};
}

void write_cohort(const std::vector<SyntheticSubject>& cohort, const std::filesystem::path& dir) {
  for (const auto& s : cohort) {
    export_csv_file(s.recording, dir / (s.recording.subject_id + ".csv"));
    io::write_json_file(dir / (s.recording.subject_id + ".labels.json"), labels_to_json(s));
  }
}

}  // namespace gazepred
