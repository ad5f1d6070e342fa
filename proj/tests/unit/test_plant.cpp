#include <array>
#include <cmath>

#include <doctest.h>

#include "gazepred/error.hpp"
#include "gazepred/plant.hpp"

using namespace gazepred;

namespace {

// Reference integrator: classical RK4 on the continuous 4-state plant with time
// in seconds, independent of the matrix-exponential discretization.
struct Rk4Plant {
  PlantParams p;

  std::array<double, 4> deriv(const std::array<double, 4>& x, const NeuralInput& u) const {
    const double g = p.Kse / (p.Kse + p.Klt);
    const double K = p.Kp + 2.0 * p.Kse * p.Klt / (p.Kse + p.Klt);
    const double B = p.Bp + p.Bag + p.Bant;
    const double tau_ag = u.ag >= x[2] ? p.tau_ag_act : p.tau_ag_deact;
    const double tau_ant = u.ant >= x[3] ? p.tau_ant_act : p.tau_ant_deact;
    return {x[1], (g * (x[2] - x[3]) - B * x[1] - K * x[0]) / p.J, (u.ag - x[2]) / tau_ag, (u.ant - x[3]) / tau_ant};
  }

  PlantState step(const PlantState& s, const NeuralInput& u, double dt_ms) const {
    const double h = dt_ms / 1000.0;
    std::array<double, 4> x = {s.theta, s.omega, s.f_ag, s.f_ant};
    auto add = [](const std::array<double, 4>& a, const std::array<double, 4>& b, double c) {
      return std::array<double, 4>{a[0] + c * b[0], a[1] + c * b[1], a[2] + c * b[2], a[3] + c * b[3]};
    };
    const auto k1 = deriv(x, u);
    const auto k2 = deriv(add(x, k1, h / 2), u);
    const auto k3 = deriv(add(x, k2, h / 2), u);
    const auto k4 = deriv(add(x, k3, h), u);
    for (int i = 0; i < 4; ++i) x[i] += h / 6.0 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
    return {x[0], x[1], x[2], x[3]};
  }
};

// Fine-step trajectory sampled every 1 ms.
std::vector<PlantState> rk4_saccade(const PlantModel& model, const PulseStep& ps, int ms, double fine_ms = 0.01) {
  const Rk4Plant rk{model.params()};
  const int sub = static_cast<int>(std::lround(1.0 / fine_ms));
  PlantState s = model.equilibrium(ps.start);
  std::vector<PlantState> out = {s};
  for (int k = 0; k < ms; ++k) {
    for (int j = 0; j < sub; ++j) {
      const double t = k + j * fine_ms;
      s = rk.step(s, model.drive(ps, t + 0.5 * fine_ms), fine_ms);
    }
    out.push_back(s);
  }
  return out;
}

double settle_time_ms(const std::vector<PlantState>& traj, double target, double amp, double dt_ms) {
  const double tol = 0.01 * amp;
  std::size_t last_out = 0;
  for (std::size_t k = 0; k < traj.size(); ++k)
    if (std::abs(traj[k].theta - target) > tol) last_out = k;
  return static_cast<double>(last_out + 1) * dt_ms;
}

}  // namespace

TEST_SUITE("plant") {
  TEST_CASE("thirteen named parameters") {
    CHECK(PlantParams::kCount == 13);
    CHECK(PlantParams::names().size() == 13);
    const PlantParams p;
    const auto back = PlantParams::from_array(p.to_array());
    CHECK(back.to_array() == p.to_array());
    const auto j = to_json(p);
    CHECK(j.size() == 13);
    CHECK(plant_params_from_json(j).to_array() == p.to_array());
    CHECK_NOTHROW(p.validate());
  }

  TEST_CASE("invalid parameters") {
    PlantParams p;
    p.Kse = -1.0;
    CHECK_THROWS_AS(p.validate(), ConfigError);
    p = PlantParams{};
    p.tau_ag_act = 0.0005;
    CHECK_THROWS_AS(p.validate(), ConfigError);
    p = PlantParams{};
    p.tau_ant_deact = 0.6;
    CHECK_THROWS_AS(PlantModel{p}, ConfigError);
  }

  TEST_CASE("equilibrium holds for one second") {
    const PlantModel model(PlantParams{});
    for (double theta : {0.0, 7.5, -12.0}) {
      PlantState s = model.equilibrium(theta);
      const NeuralInput u = model.holding_input(theta);
      for (int k = 0; k < 1000; ++k) s = model.transition(s, u, 1.0);
      CHECK(std::abs(s.theta - theta) < 1e-9);
      CHECK(std::abs(s.omega) < 1e-9);
    }
    PlantState rest{};
    for (int k = 0; k < 1000; ++k) rest = plant_transition(PlantParams{}, rest, {}, 1.0);
    CHECK(std::abs(rest.theta) < 1e-9);
  }

  TEST_CASE("zero-amplitude saccade stays put") {
    const auto traj = simulate_saccade(PlantParams{}, 3.0, 3.0);
    for (const auto& s : traj) CHECK(std::abs(s.theta - 3.0) < 1e-9);
  }

  TEST_CASE("10 dva saccade settles within 1% in under 150 ms") {
    const PlantModel model(PlantParams{});
    const auto ps = model.pulse_step(0.0, 10.0);
    const auto fine = rk4_saccade(model, ps, 300);
    const double oracle_settle = settle_time_ms(fine, 10.0, 10.0, 1.0);
    CHECK(oracle_settle < 150.0);

    const auto traj = simulate_saccade(PlantParams{}, 0.0, 10.0);
    const double settle = settle_time_ms(traj, 10.0, 10.0, 1.0);
    CHECK(settle < 150.0);
    CHECK(std::abs(settle - oracle_settle) <= 1.0);
    std::size_t n = std::min(traj.size(), fine.size());
    for (std::size_t k = 0; k < n; ++k) CHECK(std::abs(traj[k].theta - fine[k].theta) < 1e-3);
  }

  TEST_CASE("exact steps agree with the fine-step reference") {
    const PlantModel model(PlantParams{});
    for (double amp : {2.0, 10.0, -15.0}) {
      const auto ps = model.pulse_step(1.0, 1.0 + amp);
      const auto fine = rk4_saccade(model, ps, 40);
      PlantState s = model.equilibrium(1.0);
      double worst = 0.0;
      for (int k = 0; k < 40; ++k) {
        s = model.advance(s, ps, k, 1.0);
        worst = std::max(worst, std::abs(s.theta - fine[static_cast<std::size_t>(k) + 1].theta));
      }
      CHECK(worst < 0.01);
    }
  }

  TEST_CASE("one long constant-input step equals composed unit steps") {
    const PlantModel model(PlantParams{});
    PlantState a = model.equilibrium(0.0);
    const NeuralInput u = model.holding_input(5.0);
    PlantState b = model.transition(a, u, 40.0);
    for (int k = 0; k < 40; ++k) a = model.transition(a, u, 1.0);
    CHECK(std::abs(a.theta - b.theta) < 1e-9);
    CHECK(std::abs(a.omega - b.omega) < 1e-6);
  }

  TEST_CASE("main sequence and overshoot") {
    double prev_peak = 0.0;
    for (double amp : {2.0, 5.0, 10.0, 15.0, 20.0}) {
      const auto traj = simulate_saccade(PlantParams{}, 0.0, amp);
      double peak = 0.0;
      int crossings = 0;
      for (std::size_t k = 1; k < traj.size(); ++k) {
        peak = std::max(peak, std::abs(traj[k].omega));
        const double a = traj[k - 1].theta - amp, b = traj[k].theta - amp;
        if ((a < 0 && b >= 0) || (a > 0 && b <= 0)) ++crossings;
      }
      CHECK(peak > prev_peak);
      CHECK(crossings <= 1);
      prev_peak = peak;
    }
  }

  TEST_CASE("step size bounds") {
    CHECK_THROWS_AS(simulate_saccade(PlantParams{}, 0.0, 5.0, 0.0), ConfigError);
    CHECK_THROWS_AS(simulate_saccade(PlantParams{}, 0.0, 50.0), ConfigError);
    const auto half = simulate_saccade(PlantParams{}, 0.0, 10.0, 0.5);
    const auto one = simulate_saccade(PlantParams{}, 0.0, 10.0, 1.0);
    CHECK(std::abs(half[40].theta - one[20].theta) < 1e-6);
  }
}
