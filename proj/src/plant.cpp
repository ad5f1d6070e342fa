#include "gazepred/plant.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>

#include "gazepred/error.hpp"

namespace gazepred {

const std::array<const char*, PlantParams::kCount>& PlantParams::names() {
  static const std::array<const char*, kCount> kNames = {
      "Kse",          "Klt",           "J",           "Bag",           "Bant",
      "Kp",           "Bp",            "tau_ag_act",  "tau_ag_deact",  "tau_ant_act",
      "tau_ant_deact", "pulse_height_coeff", "pulse_width_coeff"};
  return kNames;
}

std::array<double, PlantParams::kCount> PlantParams::to_array() const {
  return {Kse, Klt, J, Bag, Bant, Kp, Bp, tau_ag_act, tau_ag_deact, tau_ant_act, tau_ant_deact,
          pulse_height_coeff, pulse_width_coeff};
}

PlantParams PlantParams::from_array(const std::array<double, kCount>& a) {
  PlantParams p;
  p.Kse = a[0];
  p.Klt = a[1];
  p.J = a[2];
  p.Bag = a[3];
  p.Bant = a[4];
  p.Kp = a[5];
  p.Bp = a[6];
  p.tau_ag_act = a[7];
  p.tau_ag_deact = a[8];
  p.tau_ant_act = a[9];
  p.tau_ant_deact = a[10];
  p.pulse_height_coeff = a[11];
  p.pulse_width_coeff = a[12];
  return p;
}

void PlantParams::validate() const {
  const auto values = to_array();
  for (std::size_t i = 0; i < kCount; ++i) {
    if (!std::isfinite(values[i]) || !(values[i] > 0.0))
      throw ConfigError(std::string("plant parameter ") + names()[i] + " must be positive and finite");
  }
  for (double tau : {tau_ag_act, tau_ag_deact, tau_ant_act, tau_ant_deact}) {
    if (tau < 0.001 || tau > 0.5) throw ConfigError("plant time constants must lie in [0.001, 0.5] s");
  }
}

nlohmann::json to_json(const PlantParams& p) {
  nlohmann::json j = nlohmann::json::object();
  const auto values = p.to_array();
  for (std::size_t i = 0; i < PlantParams::kCount; ++i) j[PlantParams::names()[i]] = values[i];
  return j;
}

PlantParams plant_params_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw DataError("plant parameters must be a JSON object");
  std::array<double, PlantParams::kCount> a{};
  for (std::size_t i = 0; i < PlantParams::kCount; ++i) {
    const char* name = PlantParams::names()[i];
    if (!j.contains(name) || !j[name].is_number())
      throw DataError(std::string("plant parameter '") + name + "' missing or not a number");
    a[i] = j[name].get<double>();
  }
  if (j.size() != PlantParams::kCount) throw DataError("plant parameter object must have exactly 13 fields");
  return PlantParams::from_array(a);
}

namespace {

std::size_t regime_index(bool ag_activating, bool ant_activating) {
  return (ag_activating ? 1u : 0u) | (ant_activating ? 2u : 0u);
}

std::string describe(const PlantParams& p) { return to_json(p).dump(); }

}  // namespace

PlantModel::PlantModel(const PlantParams& params) : params_(params) {
  params_.validate();
  for (bool ag : {false, true}) {
    for (bool ant : {false, true}) {
      const Eigen::Vector4cd eig = continuous_a(ag, ant).eigenvalues();
      for (int k = 0; k < 4; ++k) {
        if (!std::isfinite(eig(k).real()) || eig(k).real() >= 0.0)
          throw InstabilityError("plant dynamics are not stable for parameters " + describe(params_));
      }
      unit_steps_[regime_index(ag, ant)] = discretize(ag, ant, 1.0);
      const auto& d = unit_steps_[regime_index(ag, ant)];
      if (!d.A.allFinite() || !d.B.allFinite())
        throw InstabilityError("non-finite plant discretization for parameters " + describe(params_));
    }
  }
}

PlantModel::Matrix4 PlantModel::continuous_a(bool ag_activating, bool ant_activating) const {
  const auto& p = params_;
  const double g = p.force_gain();
  const double tau_ag = ag_activating ? p.tau_ag_act : p.tau_ag_deact;
  const double tau_ant = ant_activating ? p.tau_ant_act : p.tau_ant_deact;
  Matrix4 a = Matrix4::Zero();
  a(0, 1) = 1.0;
  a(1, 0) = -p.stiffness() / p.J;
  a(1, 1) = -p.viscosity() / p.J;
  a(1, 2) = g / p.J;
  a(1, 3) = -g / p.J;
  a(2, 2) = -1.0 / tau_ag;
  a(3, 3) = -1.0 / tau_ant;
  return a;
}

PlantModel::Matrix42 PlantModel::continuous_b(bool ag_activating, bool ant_activating) const {
  const auto& p = params_;
  Matrix42 b = Matrix42::Zero();
  b(2, 0) = 1.0 / (ag_activating ? p.tau_ag_act : p.tau_ag_deact);
  b(3, 1) = 1.0 / (ant_activating ? p.tau_ant_act : p.tau_ant_deact);
  return b;
}

const PlantModel::Discrete& PlantModel::step_matrices(bool ag_activating, bool ant_activating) const {
  return unit_steps_[regime_index(ag_activating, ant_activating)];
}

PlantModel::Discrete PlantModel::discretize(bool ag_activating, bool ant_activating, double dt_ms) const {
  // exp([[A, B], [0, 0]] dt) = [[Ad, Bd], [0, I]]
  Eigen::Matrix<double, 6, 6> m = Eigen::Matrix<double, 6, 6>::Zero();
  m.topLeftCorner<4, 4>() = continuous_a(ag_activating, ant_activating);
  m.topRightCorner<4, 2>() = continuous_b(ag_activating, ant_activating);
  const Eigen::Matrix<double, 6, 6> e = (m * (dt_ms * 1e-3)).exp();
  return {e.topLeftCorner<4, 4>(), e.topRightCorner<4, 2>()};
}

NeuralInput PlantModel::holding_input(double theta) const {
  const double half = params_.stiffness() * theta / (2.0 * params_.force_gain());
  return {kTonicDrive + half, kTonicDrive - half};
}

PlantState PlantModel::equilibrium(double theta) const {
  const NeuralInput u = holding_input(theta);
  return {theta, 0.0, u.ag, u.ant};
}

PulseStep PlantModel::pulse_step(double start, double target) const {
  const double amp = std::fabs(target - start);
  const double root = std::sqrt(amp);
  return {start, target, params_.pulse_height_coeff * root, params_.pulse_width_coeff * root};
}

NeuralInput PlantModel::drive(const PulseStep& ps, double t_ms) const {
  if (t_ms < 0.0) return holding_input(ps.start);
  NeuralInput u = holding_input(ps.target);
  if (t_ms < ps.width_ms) {
    if (ps.target > ps.start)
      u.ag += ps.height;
    else
      u.ant += ps.height;
  }
  return u;
}

PlantState PlantModel::transition(const PlantState& s, const NeuralInput& u, double dt_ms) const {
  if (dt_ms <= 0.0) return s;
  const bool ag = u.ag >= s.f_ag;
  const bool ant = u.ant >= s.f_ant;
  const Eigen::Vector4d x = s.vec();
  const Eigen::Vector2d in(u.ag, u.ant);
  Eigen::Vector4d next;
  if (dt_ms == 1.0) {
    const auto& d = step_matrices(ag, ant);
    next = d.A * x + d.B * in;
  } else {
    const auto d = discretize(ag, ant, dt_ms);
    next = d.A * x + d.B * in;
  }
  if (!next.allFinite()) throw InstabilityError("non-finite plant state for parameters " + describe(params_));
  return PlantState::from_vec(next);
}

PlantState PlantModel::advance(const PlantState& s, const PulseStep& ps, double t_ms, double dt_ms) const {
  const double end = t_ms + dt_ms;
  if (t_ms < 0.0 && 0.0 < end) {
    const PlantState mid = transition(s, drive(ps, t_ms), -t_ms);
    return advance(mid, ps, 0.0, end);
  }
  if (t_ms < ps.width_ms && ps.width_ms < end) {
    const PlantState mid = transition(s, drive(ps, t_ms), ps.width_ms - t_ms);
    return transition(mid, drive(ps, ps.width_ms), end - ps.width_ms);
  }
  return transition(s, drive(ps, t_ms), dt_ms);
}

PlantState plant_transition(const PlantParams& params, const PlantState& state, const NeuralInput& input,
                            double dt_ms) {
  return PlantModel(params).transition(state, input, dt_ms);
}

std::vector<PlantState> simulate_saccade(const PlantParams& params, double start_dva, double target_dva,
                                         double dt_ms) {
  if (!(dt_ms > 0.0) || dt_ms > 1.0) throw ConfigError("simulation step must lie in (0, 1] ms");
  const double amp = std::fabs(target_dva - start_dva);
  if (amp > 40.0) throw ConfigError("saccade amplitude above 40 dva");
  const PlantModel model(params);
  const PulseStep ps = model.pulse_step(start_dva, target_dva);
  const double tol = std::max(0.01 * amp, 1e-9);
  constexpr double kSettleMs = 20.0;
  constexpr double kCapMs = 400.0;

  std::vector<PlantState> traj;
  PlantState s = model.equilibrium(start_dva);
  traj.push_back(s);
  double t = 0.0;
  double settled_ms = 0.0;
  while (t < kCapMs - 1e-9) {
    s = model.advance(s, ps, t, dt_ms);
    t += dt_ms;
    traj.push_back(s);
    settled_ms = std::fabs(s.theta - target_dva) < tol ? settled_ms + dt_ms : 0.0;
    if (settled_ms >= kSettleMs - 1e-9) break;
  }
  return traj;
}

}  // namespace gazepred
