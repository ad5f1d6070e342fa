#include "gazepred/opkf.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "gazepred/error.hpp"
#include "gazepred/features.hpp"
#include "gazepred/stats.hpp"

namespace gazepred {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr std::size_t kHistoryLength = 400;
constexpr int kMaxBacktrack = 40;

using Vec4 = Eigen::Vector4d;
using Mat4 = Eigen::Matrix4d;

double positive_or(const std::optional<double>& v, double fallback) { return v ? *v : fallback; }

// Composite affine map of one 1 ms plant step under a pulse-step drive:
// x_next = F x + b, with the muscle regimes chosen from the current mean.
void plant_affine_step(const PlantModel& model, const Vec4& mean, const PulseStep& ps, double t_rel, Mat4& F,
                       Vec4& b) {
  F.setIdentity();
  b.setZero();
  Vec4 x = mean;
  double a = t_rel;
  const double end = t_rel + 1.0;
  while (a < end) {
    double stop = end;
    if (a < 0.0 && 0.0 < stop) stop = 0.0;
    if (a < ps.width_ms && ps.width_ms < stop) stop = ps.width_ms;
    const NeuralInput u = model.drive(ps, a);
    const bool ag = u.ag >= x(2);
    const bool ant = u.ant >= x(3);
    const double dt = stop - a;
    const Eigen::Vector2d in(u.ag, u.ant);
    if (dt == 1.0) {
      const auto& d = model.step_matrices(ag, ant);
      x = d.A * x + d.B * in;
      F = d.A * F;
      b = d.A * b + d.B * in;
    } else {
      const auto d = model.discretize(ag, ant, dt);
      x = d.A * x + d.B * in;
      F = d.A * F;
      b = d.A * b + d.B * in;
    }
    a = stop;
  }
}

double golden_min(const std::function<double(double)>& f, double lo, double hi, int iterations) {
  constexpr double kInvPhi = 0.6180339887498949;
  double c = hi - kInvPhi * (hi - lo);
  double d = lo + kInvPhi * (hi - lo);
  double fc = f(c);
  double fd = f(d);
  for (int i = 0; i < iterations; ++i) {
    if (fc < fd) {
      hi = d;
      d = c;
      fd = fc;
      c = hi - kInvPhi * (hi - lo);
      fc = f(c);
    } else {
      lo = c;
      c = d;
      fc = fd;
      d = lo + kInvPhi * (hi - lo);
      fd = f(d);
    }
  }
  return fc < fd ? c : d;
}

}  // namespace

void OpkfConfig::validate() const {
  if (pi_ms <= 0) throw ConfigError("pi_ms must be positive");
  params.validate();
  online.validate();
  for (double q : {q_fix_pos, q_fix_vel, q_sac_pos, q_sac_vel, q_sac_force})
    if (!(q >= 0.0) || !std::isfinite(q)) throw ConfigError("process noise scales must be finite and non-negative");
  if (!(fixation_velocity_tau_ms > 0.0)) throw ConfigError("fixation_velocity_tau_ms must be positive");
  if (r_pos && !(*r_pos > 0.0)) throw ConfigError("r_pos must be positive");
  if (r_vel && !(*r_vel > 0.0)) throw ConfigError("r_vel must be positive");
  if (!(saccade_velocity_r_scale > 0.0)) throw ConfigError("saccade_velocity_r_scale must be positive");
  if (onset_search_min > onset_search_max || onset_search_max > 5 || onset_search_min < -20)
    throw ConfigError("onset search range must satisfy -20 <= min <= max <= 5");
}

nlohmann::json to_json(const OpkfConfig& c) {
  nlohmann::json j = {{"pi_ms", c.pi_ms},
                      {"params", to_json(c.params)},
                      {"q_fix_pos", c.q_fix_pos},
                      {"q_fix_vel", c.q_fix_vel},
                      {"q_sac_pos", c.q_sac_pos},
                      {"q_sac_vel", c.q_sac_vel},
                      {"q_sac_force", c.q_sac_force},
                      {"fixation_velocity_tau_ms",
                       std::isfinite(c.fixation_velocity_tau_ms) ? nlohmann::json(c.fixation_velocity_tau_ms)
                                                                 : nlohmann::json("inf")},
                      {"saccade_velocity_r_scale", c.saccade_velocity_r_scale},
                      {"online_peak_threshold", c.online.peak_threshold},
                      {"online_offset_threshold", c.online.onset_offset_threshold},
                      {"online_max_saccade_ms", c.online.max_saccade_ms},
                      {"online_peak_noise_multiple", c.online_peak_noise_multiple},
                      {"online_offset_noise_multiple", c.online_offset_noise_multiple},
                      {"onset_search_min", c.onset_search_min},
                      {"onset_search_max", c.onset_search_max}};
  j["r_pos"] = c.r_pos ? nlohmann::json(*c.r_pos) : nlohmann::json(nullptr);
  j["r_vel"] = c.r_vel ? nlohmann::json(*c.r_vel) : nlohmann::json(nullptr);
  return j;
}

OpkfConfig opkf_config_from_json(const nlohmann::json& j) {
  OpkfConfig c;
  auto get = [&](const char* key, auto& dst) {
    if (j.contains(key) && !j.at(key).is_null()) dst = j.at(key).get<std::decay_t<decltype(dst)>>();
  };
  try {
    get("pi_ms", c.pi_ms);
    if (j.contains("params")) c.params = plant_params_from_json(j.at("params"));
    get("q_fix_pos", c.q_fix_pos);
    get("q_fix_vel", c.q_fix_vel);
    get("q_sac_pos", c.q_sac_pos);
    get("q_sac_vel", c.q_sac_vel);
    get("q_sac_force", c.q_sac_force);
    if (j.contains("fixation_velocity_tau_ms")) {
      const auto& v = j.at("fixation_velocity_tau_ms");
      c.fixation_velocity_tau_ms = v.is_string() && v.get<std::string>() == "inf"
                                       ? std::numeric_limits<double>::infinity()
                                       : v.get<double>();
    }
    get("saccade_velocity_r_scale", c.saccade_velocity_r_scale);
    get("online_peak_threshold", c.online.peak_threshold);
    get("online_offset_threshold", c.online.onset_offset_threshold);
    get("online_max_saccade_ms", c.online.max_saccade_ms);
    get("online_peak_noise_multiple", c.online_peak_noise_multiple);
    get("online_offset_noise_multiple", c.online_offset_noise_multiple);
    get("onset_search_min", c.onset_search_min);
    get("onset_search_max", c.onset_search_max);
    if (j.contains("r_pos") && !j.at("r_pos").is_null()) c.r_pos = j.at("r_pos").get<double>();
    if (j.contains("r_vel") && !j.at("r_vel").is_null()) c.r_vel = j.at("r_vel").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid opkf config: ") + e.what());
  }
  return c;
}

MeasurementNoise noise_from_precision(double precision_dva) {
  // RMS-S2S over two axes of white noise with per-axis sd s is 2 s.
  const double var = std::max(precision_dva * precision_dva / 4.0, 1e-8);
  const DiffConfig d = predictor_diff_config();
  const auto w = savgol_derivative_weights(d.window, d.order, d.window - 1);
  double sw = 0.0;
  for (double v : w) sw += v * v;
  return {var, var * sw * 1e6};
}

MeasurementNoise estimate_noise(const GazeRecording& rec, const std::vector<EventSegment>& segs) {
  try {
    return noise_from_precision(rms_s2s_precision(rec, segs));
  } catch (const InsufficientDataError&) {
  }
  // no labelled fixation: robust spread of successive differences over the whole recording
  std::vector<double> d;
  for (std::size_t i = 1; i < rec.size(); ++i) {
    const auto& a = rec.samples[i - 1];
    const auto& b = rec.samples[i];
    if (!a.valid || !b.valid) continue;
    d.push_back(std::fabs(b.x_dva - a.x_dva));
    d.push_back(std::fabs(b.y_dva - a.y_dva));
  }
  if (d.empty()) throw InsufficientDataError("noise estimate needs at least one valid sample pair");
  const double sigma = 1.4826 * stats::median(d) / std::sqrt(2.0);
  return noise_from_precision(2.0 * sigma);
}

PulseTable::PulseTable(const PlantModel& model) {
  n_amp_ = static_cast<int>(std::lround(kMaxAmplitude / kStep)) + 1;
  for (int dir = 0; dir < 2; ++dir) {
    auto& tab = table_[static_cast<std::size_t>(dir)];
    tab.assign(static_cast<std::size_t>(n_amp_) * kHorizon, 0.0);
    for (int a = 1; a < n_amp_; ++a) {
      const double amp = a * kStep * (dir == 0 ? 1.0 : -1.0);
      const PulseStep ps = model.pulse_step(0.0, amp);
      PlantState s = model.equilibrium(0.0);
      double* row = tab.data() + static_cast<std::size_t>(a) * kHorizon;
      for (int k = 1; k < kHorizon; ++k) {
        s = model.advance(s, ps, k - 1.0, 1.0);
        row[k] = s.theta;
      }
    }
  }
}

double PulseTable::displacement(double amp, int k) const {
  if (k <= 0) return 0.0;
  k = std::min(k, kHorizon - 1);
  const auto& tab = table_[amp >= 0.0 ? 0 : 1];
  const double pos = std::min(std::fabs(amp) / kStep, static_cast<double>(n_amp_ - 1));
  const int i = std::min(static_cast<int>(pos), n_amp_ - 2);
  const double frac = pos - i;
  const double lo = tab[static_cast<std::size_t>(i) * kHorizon + static_cast<std::size_t>(k)];
  const double hi = tab[static_cast<std::size_t>(i + 1) * kHorizon + static_cast<std::size_t>(k)];
  return lo + frac * (hi - lo);
}

bool GazeMeasurement::position_valid() const { return std::isfinite(x) && std::isfinite(y); }
bool GazeMeasurement::velocity_valid() const { return std::isfinite(vx) && std::isfinite(vy); }

Opkf::Opkf(const OpkfConfig& cfg, const MeasurementNoise& noise)
    : Opkf(cfg, noise, std::make_shared<const Plant>(cfg.params)) {}

Opkf::Opkf(const OpkfConfig& cfg, const MeasurementNoise& noise, std::shared_ptr<const Plant> plant)
    : cfg_(cfg), noise_(noise), plant_(std::move(plant)) {
  cfg_.params = plant_->model.params();
  cfg_.validate();
  noise_.pos = positive_or(cfg.r_pos, noise.pos);
  noise_.vel = positive_or(cfg.r_vel, noise.vel);
  if (!(noise_.pos > 0.0) || !(noise_.vel > 0.0)) throw ConfigError("measurement noise must be positive");
  online_cfg_ = cfg.online;
  const double sd = std::sqrt(noise_.vel);
  online_cfg_.peak_threshold = std::max(online_cfg_.peak_threshold, cfg.online_peak_noise_multiple * sd);
  online_cfg_.onset_offset_threshold =
      std::max(online_cfg_.onset_offset_threshold, cfg.online_offset_noise_multiple * sd);
  if (online_cfg_.onset_offset_threshold >= online_cfg_.peak_threshold)
    online_cfg_.onset_offset_threshold = 0.5 * online_cfg_.peak_threshold;
  online_ = OnlineClassifier(online_cfg_);
}

std::array<KalmanState, 2> Opkf::state() const {
  std::array<KalmanState, 2> out;
  for (std::size_t a = 0; a < 2; ++a) out[a] = {kf_[a].mean(), kf_[a].covariance()};
  return out;
}

void Opkf::fixation_predict(KalmanFilter<4>& kf) const {
  const double tau = cfg_.fixation_velocity_tau_ms;
  double c1 = 1e-3;
  double decay = 1.0;
  if (std::isfinite(tau)) {
    decay = std::exp(-1.0 / tau);
    c1 = tau * 1e-3 * (1.0 - decay);
  }
  const auto& p = plant_->model.params();
  const double k = p.stiffness() / (2.0 * p.force_gain());
  Mat4 F = Mat4::Zero();
  F(0, 0) = 1.0;
  F(0, 1) = c1;
  F(1, 1) = decay;
  F(2, 0) = k;
  F(2, 1) = k * c1;
  F(3, 0) = -k;
  F(3, 1) = -k * c1;
  const Vec4 b(0.0, 0.0, kTonicDrive, kTonicDrive);
  Eigen::Matrix<double, 4, 2> G;
  G << 1.0, 0.0, 0.0, 1.0, k, 0.0, -k, 0.0;
  const Mat4 Q = G * Eigen::Vector2d(cfg_.q_fix_pos, cfg_.q_fix_vel).asDiagonal() * G.transpose();
  kf.predict(F, b, Q);
}

void Opkf::plant_predict(KalmanFilter<4>& kf, const PulseStep& ps, double t_rel) const {
  Mat4 F;
  Vec4 b;
  plant_affine_step(plant_->model, kf.mean(), ps, t_rel, F, b);
  const Vec4 q(cfg_.q_sac_pos, cfg_.q_sac_vel, cfg_.q_sac_force, cfg_.q_sac_force);
  kf.predict(F, b, q.asDiagonal().toDenseMatrix());
}

void Opkf::measure(KalmanFilter<4>& kf, double pos, double vel, bool saccade) const {
  if (!std::isfinite(pos)) return;
  if (std::isfinite(vel)) {
    Eigen::Matrix<double, 2, 4> H = Eigen::Matrix<double, 2, 4>::Zero();
    H(0, 0) = 1.0;
    H(1, 1) = 1.0;
    Eigen::Matrix2d R = Eigen::Matrix2d::Zero();
    R(0, 0) = noise_.pos;
    R(1, 1) = noise_.vel * (saccade ? cfg_.saccade_velocity_r_scale : 1.0);
    kf.update<2>(Eigen::Vector2d(pos, vel), H, R);
  } else {
    Eigen::Matrix<double, 1, 4> H = Eigen::Matrix<double, 1, 4>::Zero();
    H(0, 0) = 1.0;
    kf.update<1>(Eigen::Matrix<double, 1, 1>(pos), H, Eigen::Matrix<double, 1, 1>(noise_.pos));
  }
}

double Opkf::fixation_forecast(const KalmanFilter<4>& kf) const {
  const double tau = cfg_.fixation_velocity_tau_ms;
  const double horizon = cfg_.pi_ms;
  const double gain = std::isfinite(tau) ? tau * 1e-3 * (1.0 - std::exp(-horizon / tau)) : horizon * 1e-3;
  return kf.mean()(0) + kf.mean()(1) * gain;
}

double Opkf::plant_forecast(const KalmanFilter<4>& kf, const PulseStep& ps, double t_rel) const {
  PlantState s = PlantState::from_vec(kf.mean());
  for (int k = 0; k < cfg_.pi_ms; ++k) s = plant_->model.advance(s, ps, t_rel + k, 1.0);
  return s.theta;
}

void Opkf::begin_saccade() {
  const double thr = online_cfg_.onset_offset_threshold;
  long first = t_;
  const long oldest = t_ - static_cast<long>(history_.size()) + 1;
  while (first - 1 >= oldest && t_ - (first - 1) <= kMaxBacktrack) {
    const auto& z = history_[static_cast<std::size_t>(first - 1 - oldest)].z;
    if (!z.velocity_valid() || std::hypot(z.vx, z.vy) < thr) break;
    --first;
  }
  onset_ = first;
  const long start = std::max(oldest + 1, onset_ + cfg_.onset_search_min);
  // posterior one sample before the earliest candidate onset
  pre_onset_ = history_[static_cast<std::size_t>(start - 1 - oldest)].posterior;
  onset_ = std::max(onset_, start - cfg_.onset_search_min);
}

void Opkf::refit_and_replay() {
  const long oldest = t_ - static_cast<long>(history_.size()) + 1;
  const long start = std::max(oldest + 1, onset_ + cfg_.onset_search_min);
  const std::size_t first = static_cast<std::size_t>(start - oldest);
  const std::size_t m = history_.size() - first;

  std::array<double, 2> theta0{pre_onset_[0].mean()(0), pre_onset_[1].mean()(0)};
  std::array<std::vector<double>, 2> obs;
  std::vector<int> offs;
  for (std::size_t k = 0; k < m; ++k) {
    const auto& z = history_[first + k].z;
    if (!z.position_valid()) continue;
    obs[0].push_back(z.x - theta0[0]);
    obs[1].push_back(z.y - theta0[1]);
    offs.push_back(static_cast<int>(k));
  }

  std::array<double, 2> amp{0.0, 0.0};
  long best_onset = onset_;
  if (!offs.empty()) {
    const std::size_t dom = std::fabs(obs[0].back()) >= std::fabs(obs[1].back()) ? 0 : 1;
    auto sse = [&](std::size_t axis, double a, long onset) {
      const int shift = static_cast<int>(onset - start);
      double s = 0.0;
      for (std::size_t i = 0; i < offs.size(); ++i) {
        const double r = obs[axis][i] - plant_->table.displacement(a, offs[i] - shift);
        s += r * r;
      }
      return s;
    };
    auto fit_axis = [&](std::size_t axis, long onset, double* err) {
      const double sign = obs[axis].back() >= 0.0 ? 1.0 : -1.0;
      auto f = [&](double a) { return sse(axis, sign * a, onset); };
      double best_a = 0.0;
      double best_f = f(0.0);
      for (double a = 2.0; a <= PulseTable::kMaxAmplitude; a += 2.0) {
        const double v = f(a);
        if (v < best_f) {
          best_f = v;
          best_a = a;
        }
      }
      const double a = golden_min(f, std::max(0.0, best_a - 2.0), std::min(PulseTable::kMaxAmplitude, best_a + 2.0), 20);
      if (err) *err = f(a);
      return sign * a;
    };
    double best_err = std::numeric_limits<double>::infinity();
    for (int d = cfg_.onset_search_min; d <= cfg_.onset_search_max; ++d) {
      const long onset = onset_ + d;
      if (onset < start || onset > t_) continue;
      double err = 0.0;
      const double a = fit_axis(dom, onset, &err);
      if (err < best_err) {
        best_err = err;
        best_onset = onset;
        amp[dom] = a;
      }
    }
    amp[1 - dom] = fit_axis(1 - dom, best_onset, nullptr);
  }

  for (std::size_t axis = 0; axis < 2; ++axis) {
    schedule_[axis] = plant_->model.pulse_step(theta0[axis], theta0[axis] + amp[axis]);
    KalmanFilter<4> kf = pre_onset_[axis];
    for (std::size_t k = 0; k < m; ++k) {
      const long idx = start + static_cast<long>(k);
      plant_predict(kf, schedule_[axis], static_cast<double>(idx - 1 - best_onset));
      const auto& z = history_[first + k].z;
      measure(kf, axis == 0 ? z.x : z.y, axis == 0 ? z.vx : z.vy, true);
      history_[first + k].posterior[axis] = kf;
    }
    kf_[axis] = kf;
  }
  replay_onset_ = best_onset;
}

OpkfOutput Opkf::step(const GazeMeasurement& z) {
  const double v = z.velocity_valid() ? std::hypot(z.vx, z.vy) : (z.position_valid() ? 0.0 : kNaN);
  return step(z, online_.push(v));
}

OpkfOutput Opkf::step(const GazeMeasurement& z, EventKind regime) {
  ++t_;
  OpkfOutput out{kNaN, kNaN, regime};
  if (!initialized_) {
    if (!z.position_valid()) {
      history_.push_back({z, kf_});
      if (history_.size() > kHistoryLength) history_.pop_front();
      return out;
    }
    const auto& model = plant_->model;
    for (std::size_t a = 0; a < 2; ++a) {
      const double pos = a == 0 ? z.x : z.y;
      const PlantState eq = model.equilibrium(pos);
      Mat4 P = Mat4::Zero();
      P.diagonal() << noise_.pos, noise_.vel, 1e-6, 1e-6;
      kf_[a].set(eq.vec(), P);
    }
    initialized_ = true;
    history_.push_back({z, kf_});
    if (history_.size() > kHistoryLength) history_.pop_front();
    out.x = kf_[0].mean()(0);
    out.y = kf_[1].mean()(0);
    regime_ = EventKind::Fixation;
    return out;
  }

  history_.push_back({z, kf_});
  if (history_.size() > kHistoryLength) history_.pop_front();

  if (regime == EventKind::Saccade) {
    if (regime_ != EventKind::Saccade) begin_saccade();
    regime_ = regime;
    refit_and_replay();
    const double t_rel = static_cast<double>(t_ - replay_onset_);
    out.x = plant_forecast(kf_[0], schedule_[0], t_rel);
    out.y = plant_forecast(kf_[1], schedule_[1], t_rel);
    return out;
  }

  regime_ = regime;
  for (std::size_t a = 0; a < 2; ++a) {
    fixation_predict(kf_[a]);
    measure(kf_[a], a == 0 ? z.x : z.y, a == 0 ? z.vx : z.vy, false);
    history_.back().posterior[a] = kf_[a];
  }
  out.x = fixation_forecast(kf_[0]);
  out.y = fixation_forecast(kf_[1]);
  return out;
}

PredictionRun opkf_predict_recording(const GazeRecording& rec, const std::vector<EventSegment>& segs,
                                     const OpkfConfig& cfg) {
  validate_recording(rec);
  const MeasurementNoise noise =
      cfg.r_pos && cfg.r_vel ? MeasurementNoise{*cfg.r_pos, *cfg.r_vel} : estimate_noise(rec, segs);
  const VelocityTrace vel = compute_velocity(rec, predictor_diff_config());
  PredictionRun run = make_run("opkf", rec, cfg.pi_ms);
  Opkf filter(cfg, noise);
  for (std::size_t i = 0; i < rec.size(); ++i) {
    const auto& s = rec.samples[i];
    GazeMeasurement z;
    if (s.valid) {
      z.x = s.x_dva;
      z.y = s.y_dva;
      if (vel.valid(i)) {
        z.vx = vel.vx[i];
        z.vy = vel.vy[i];
      }
    }
    const OpkfOutput o = filter.step(z);
    run.x[i] = o.x;
    run.y[i] = o.y;
    run.valid[i] = std::isfinite(o.x) && std::isfinite(o.y);
  }
  apply_truth_mask(run, rec);
  return run;
}

const std::array<const char*, 7>& fitted_parameter_names() {
  static const std::array<const char*, 7> kNames = {"Kse", "Klt", "Bag", "Bant", "tau_ag_act", "pulse_height_coeff",
                                                    "pulse_width_coeff"};
  return kNames;
}

namespace {

std::array<double*, 7> fitted_fields(PlantParams& p) {
  return {&p.Kse, &p.Klt, &p.Bag, &p.Bant, &p.tau_ag_act, &p.pulse_height_coeff, &p.pulse_width_coeff};
}

std::vector<const EventSegment*> saccades_of(const std::vector<EventSegment>& segs) {
  std::vector<const EventSegment*> out;
  for (const auto& s : segs)
    if (s.kind == EventKind::Saccade) out.push_back(&s);
  return out;
}

double window_error(const GazeRecording& rec, const VelocityTrace& vel, const std::vector<const EventSegment*>& sacs,
                    const OpkfConfig& cfg, const MeasurementNoise& noise, std::shared_ptr<const Opkf::Plant> plant,
                    std::size_t first, std::size_t last, const FitOptions& opts) {
  const std::size_t n = rec.size();
  const std::size_t pi = static_cast<std::size_t>(cfg.pi_ms);
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t j = first; j < last && j < sacs.size(); ++j) {
    const auto& sac = *sacs[j];
    const std::size_t w0 = sac.start_idx > static_cast<std::size_t>(opts.lead_ms) ? sac.start_idx - opts.lead_ms : 0;
    const std::size_t w1 = std::min(n - 1, sac.end_idx + static_cast<std::size_t>(opts.tail_ms));
    const std::size_t score_from = sac.start_idx > pi ? sac.start_idx - pi : 0;
    Opkf filter(cfg, noise, plant);
    for (std::size_t i = w0; i + pi <= w1; ++i) {
      const auto& s = rec.samples[i];
      GazeMeasurement z;
      if (s.valid) {
        z.x = s.x_dva;
        z.y = s.y_dva;
        if (vel.valid(i)) {
          z.vx = vel.vx[i];
          z.vy = vel.vy[i];
        }
      }
      const OpkfOutput o = filter.step(z);
      if (i < score_from || !s.valid || !rec.samples[i + pi].valid || !std::isfinite(o.x)) continue;
      sum += std::hypot(o.x - rec.samples[i + pi].x_dva, o.y - rec.samples[i + pi].y_dva);
      ++count;
    }
  }
  if (count == 0) throw InsufficientDataError("no scorable samples around the selected saccades");
  return sum / static_cast<double>(count);
}

}  // namespace

double saccade_window_error(const GazeRecording& rec, const std::vector<EventSegment>& segs, const OpkfConfig& cfg,
                            const MeasurementNoise& noise, std::size_t first, std::size_t last,
                            const FitOptions& opts) {
  const VelocityTrace vel = compute_velocity(rec, predictor_diff_config());
  return window_error(rec, vel, saccades_of(segs), cfg, noise, std::make_shared<const Opkf::Plant>(cfg.params), first,
                      last, opts);
}

nlohmann::json to_json(const FitResult& r) {
  return {{"params", to_json(r.params)},
          {"converged", r.converged},
          {"evaluations", r.evaluations},
          {"calibration_error", r.calibration_error},
          {"base_error", r.base_error},
          {"calibration_saccades", r.calibration_saccades}};
}

FitResult fit_subject_params(const GazeRecording& rec, const std::vector<EventSegment>& segs, const PlantParams& base,
                             const OpkfConfig& cfg, const FitOptions& opts) {
  validate_recording(rec);
  base.validate();
  const auto sacs = saccades_of(segs);
  if (sacs.size() < opts.min_saccades)
    throw InsufficientDataError("fitting needs " + std::to_string(opts.min_saccades) + " saccades, have " +
                                std::to_string(sacs.size()));
  const std::size_t n_cal =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(opts.calibration_fraction * sacs.size())));
  const MeasurementNoise noise =
      cfg.r_pos && cfg.r_vel ? MeasurementNoise{*cfg.r_pos, *cfg.r_vel} : estimate_noise(rec, segs);
  const VelocityTrace vel = compute_velocity(rec, predictor_diff_config());

  auto params_from = [&](const std::vector<double>& logs) {
    PlantParams p = base;
    auto fields = fitted_fields(p);
    for (std::size_t i = 0; i < fields.size(); ++i) *fields[i] = std::exp(logs[i]);
    return p;
  };
  auto objective = [&](const std::vector<double>& logs) {
    const PlantParams p = params_from(logs);
    std::shared_ptr<const Opkf::Plant> plant;
    try {
      plant = std::make_shared<const Opkf::Plant>(p);
    } catch (const Error&) {
      return std::numeric_limits<double>::infinity();
    }
    return window_error(rec, vel, sacs, cfg, noise, plant, 0, n_cal, opts);
  };

  PlantParams start = base;
  std::vector<double> x0;
  for (double* f : fitted_fields(start)) x0.push_back(std::log(*f));

  NelderMeadOptions nm;
  nm.tolerance = opts.tolerance;
  nm.max_evaluations = opts.max_evaluations;
  nm.relative_step = 0.0;
  nm.absolute_step = 0.1;
  const double base_error = objective(x0);
  const NelderMeadResult r = nelder_mead(objective, x0, nm);

  FitResult out;
  out.params = params_from(r.x);
  out.converged = r.converged;
  out.evaluations = r.evaluations + 1;
  out.calibration_error = r.f;
  out.base_error = base_error;
  out.calibration_saccades = n_cal;
  if (!(r.f <= base_error)) {
    out.params = base;
    out.calibration_error = base_error;
  }
  return out;
}

}  // namespace gazepred
