#pragma once

#include <array>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

namespace gazepred {

/// Parameters of the linear two-muscle oculomotor plant (one axis).
///
/// Units: forces in g, positions in dva, time constants in s.
struct PlantParams {
  double Kse = 2.5;              ///< series elasticity (g/dva)
  double Klt = 1.2;              ///< length-tension elasticity (g/dva)
  double J = 4.3e-5;             ///< globe inertia (g s^2/dva)
  double Bag = 0.15;             ///< agonist viscosity (g s/dva)
  double Bant = 0.12;            ///< antagonist viscosity (g s/dva)
  double Kp = 0.5;               ///< passive elasticity (g/dva)
  double Bp = 0.06;              ///< passive viscosity (g s/dva)
  double tau_ag_act = 0.005;     ///< s
  double tau_ag_deact = 0.009;   ///< s
  double tau_ant_act = 0.0055;   ///< s
  double tau_ant_deact = 0.0095; ///< s
  double pulse_height_coeff = 49.0;  ///< g per sqrt(dva) of intended amplitude
  double pulse_width_coeff = 7.9;    ///< ms per sqrt(dva) of intended amplitude

  static constexpr std::size_t kCount = 13;
  static const std::array<const char*, kCount>& names();

  std::array<double, kCount> to_array() const;
  static PlantParams from_array(const std::array<double, kCount>& a);

  /// Throws ConfigError when a parameter is non-positive or a time constant
  /// lies outside [0.001, 0.5] s.
  void validate() const;

  /// Force transmission ratio of the series-elastic/length-tension divider.
  double force_gain() const { return Kse / (Kse + Klt); }
  double stiffness() const { return Kp + 2.0 * Kse * Klt / (Kse + Klt); }
  double viscosity() const { return Bp + Bag + Bant; }
};

nlohmann::json to_json(const PlantParams& p);
PlantParams plant_params_from_json(const nlohmann::json& j);

/// Plant state of one axis: position (dva), velocity (dva/s), and the two
/// active-state tensions (g). The agonist pulls toward positive angles.
struct PlantState {
  double theta = 0.0;
  double omega = 0.0;
  double f_ag = 0.0;
  double f_ant = 0.0;

  Eigen::Vector4d vec() const { return {theta, omega, f_ag, f_ant}; }
  static PlantState from_vec(const Eigen::Vector4d& v) { return {v(0), v(1), v(2), v(3)}; }
};

/// Neural drive to the two muscles (g).
struct NeuralInput {
  double ag = 0.0;
  double ant = 0.0;
};

/// Pulse-step innervation for one intended movement.
struct PulseStep {
  double start = 0.0;   ///< dva
  double target = 0.0;  ///< dva
  double height = 0.0;  ///< extra drive on the pulling muscle during the pulse (g)
  double width_ms = 0.0;
};

/// Exact zero-order-hold discretization of the continuous plant
///
///   theta' = omega
///   omega' = (g (F_ag - F_ant) - B omega - K theta) / J
///   F_ag'  = (N_ag  - F_ag)  / tau_ag
///   F_ant' = (N_ant - F_ant) / tau_ant
///
/// where g = Kse/(Kse+Klt), K = Kp + 2 Kse Klt/(Kse+Klt), B = Bp + Bag + Bant,
/// and each muscle uses its activation time constant while its drive is at or
/// above its tension and its deactivation constant otherwise. Within one
/// constant-input step the tension never crosses the drive, so the time
/// constant choice made at the start of a step holds for the whole step.
class PlantModel {
 public:
  using Matrix4 = Eigen::Matrix4d;
  using Matrix42 = Eigen::Matrix<double, 4, 2>;

  struct Discrete {
    Matrix4 A;
    Matrix42 B;
  };

  /// Throws InstabilityError when the continuous dynamics are not stable.
  explicit PlantModel(const PlantParams& params);

  const PlantParams& params() const { return params_; }

  /// Continuous-time system matrices for the given muscle regimes.
  Matrix4 continuous_a(bool ag_activating, bool ant_activating) const;
  Matrix42 continuous_b(bool ag_activating, bool ant_activating) const;

  /// Cached 1 ms discretization.
  const Discrete& step_matrices(bool ag_activating, bool ant_activating) const;
  Discrete discretize(bool ag_activating, bool ant_activating, double dt_ms) const;

  /// Drive that holds the eye at `theta`.
  NeuralInput holding_input(double theta) const;
  PlantState equilibrium(double theta) const;
  PulseStep pulse_step(double start, double target) const;
  /// Drive at time `t_ms` after pulse onset; before onset the start position is held.
  NeuralInput drive(const PulseStep& ps, double t_ms) const;

  /// One exact step with constant drive.
  PlantState transition(const PlantState& s, const NeuralInput& u, double dt_ms) const;
  /// Advances under a pulse-step from `t_ms` to `t_ms + dt_ms` (relative to
  /// pulse onset), splitting the step at the pulse end if it falls inside.
  PlantState advance(const PlantState& s, const PulseStep& ps, double t_ms, double dt_ms) const;

 private:
  PlantParams params_;
  std::array<Discrete, 4> unit_steps_;
};

/// Tonic drive shared by both muscles at primary position (g).
inline constexpr double kTonicDrive = 50.0;

/// One discrete plant step (builds a PlantModel; prefer the class in loops).
PlantState plant_transition(const PlantParams& params, const PlantState& state, const NeuralInput& input,
                            double dt_ms);

/// Simulates a saccade from rest at `start_dva` to `target_dva`; returns the
/// trajectory sampled every `dt_ms` (first element is the initial state).
/// Stops once the position stays within 1% of the amplitude for 20 ms, or
/// after 400 ms.
std::vector<PlantState> simulate_saccade(const PlantParams& params, double start_dva, double target_dva,
                                         double dt_ms = 1.0);

}  // namespace gazepred
