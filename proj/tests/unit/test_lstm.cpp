#include <cmath>

#include <doctest.h>

#include "gazepred/error.hpp"
#include "gazepred/lstm.hpp"
#include "gazepred/rng.hpp"
#include "helpers.hpp"

using namespace gazepred;
using Eigen::MatrixXd;

namespace {

// Straight-line scalar evaluation of the network, reading weights by layout offset.
std::pair<double, double> scalar_forward(const LstmModel& m, const std::vector<double>& window) {
  const auto& p = m.parameters();
  const auto& l = LstmModel::layout();
  // Eigen storage is column-major: element (r, c) sits at offset + c * rows + r.
  auto w = [&](int tensor, int r, int c) { return p[static_cast<Eigen::Index>(l[tensor].offset + c * l[tensor].rows + r)]; };
  auto sig = [](double z) { return 1.0 / (1.0 + std::exp(-z)); };
  const int H = LstmModel::kHidden;
  const std::size_t T = window.size() / 2;

  std::vector<std::vector<double>> seq(T, std::vector<double>(2));
  for (std::size_t t = 0; t < T; ++t) {
    seq[t][0] = window[2 * t] * m.input_scale();
    seq[t][1] = window[2 * t + 1] * m.input_scale();
  }
  for (int layer = 0; layer < 2; ++layer) {
    const int ih = layer * 3, hh = layer * 3 + 1, b = layer * 3 + 2;
    std::vector<double> h(H, 0.0), c(H, 0.0);
    std::vector<std::vector<double>> out(T, std::vector<double>(H));
    for (std::size_t t = 0; t < T; ++t) {
      std::vector<double> z(4 * H);
      for (int r = 0; r < 4 * H; ++r) {
        double s = w(b, r, 0);
        for (std::size_t k = 0; k < seq[t].size(); ++k) s += w(ih, r, static_cast<int>(k)) * seq[t][k];
        for (int k = 0; k < H; ++k) s += w(hh, r, k) * h[k];
        z[r] = s;
      }
      for (int j = 0; j < H; ++j) {
        const double ig = sig(z[j]), fg = sig(z[H + j]), gg = std::tanh(z[2 * H + j]), og = sig(z[3 * H + j]);
        c[j] = fg * c[j] + ig * gg;
        h[j] = og * std::tanh(c[j]);
      }
      out[t] = h;
    }
    seq = out;
  }
  const std::vector<double>& last = seq.back();
  std::vector<double> a1(32), a2(16);
  for (int r = 0; r < 32; ++r) {
    double s = w(7, r, 0);
    for (int k = 0; k < H; ++k) s += w(6, r, k) * last[k];
    a1[r] = std::max(0.0, s);
  }
  for (int r = 0; r < 16; ++r) {
    double s = w(9, r, 0);
    for (int k = 0; k < 32; ++k) s += w(8, r, k) * a1[k];
    a2[r] = std::max(0.0, s);
  }
  double y[2];
  for (int r = 0; r < 2; ++r) {
    double s = w(11, r, 0);
    for (int k = 0; k < 16; ++k) s += w(10, r, k) * a2[k];
    y[r] = s;
  }
  return {y[0], y[1]};
}

// Output of scalar_forward for initialize(42) on fixed_window().
constexpr double kGoldenDx = 0.25632851558353725;
constexpr double kGoldenDy = 0.14353221648380579;

std::vector<double> fixed_window() {
  std::vector<double> w(2 * kWindowMs);
  for (int t = 0; t < kWindowMs; ++t) {
    w[2 * t] = 80.0 * std::sin(0.07 * t) + 5.0;
    w[2 * t + 1] = -40.0 * std::cos(0.05 * t);
  }
  return w;
}

WindowSample constant_velocity_window(double vx, double vy, int pi_ms) {
  WindowSample w;
  w.input.resize(2 * kWindowMs);
  for (int t = 0; t < kWindowMs; ++t) {
    w.input[2 * t] = vx;
    w.input[2 * t + 1] = vy;
  }
  w.dx = vx * pi_ms / 1000.0;
  w.dy = vy * pi_ms / 1000.0;
  return w;
}

}  // namespace

TEST_SUITE("lstm") {
  TEST_CASE("parameter count of the chosen wiring") {
    // 2 x LSTM(4 * 32 gates) + FC 32->32 + FC 32->16 + linear 16->2
    const std::size_t lstm1 = 4 * 32 * 2 + 4 * 32 * 32 + 4 * 32;
    const std::size_t lstm2 = 4 * 32 * 32 + 4 * 32 * 32 + 4 * 32;
    const std::size_t head = 32 * 32 + 32 + 16 * 32 + 16 + 2 * 16 + 2;
    CHECK(LstmModel::parameter_count() == lstm1 + lstm2 + head);
    CHECK(LstmModel::parameter_count() == 14418);
  }

  TEST_CASE("zero network outputs zero") {
    LstmModel m;
    const auto [dx, dy] = m.forward(fixed_window());
    CHECK(dx == 0.0);
    CHECK(dy == 0.0);
  }

  TEST_CASE("forward matches the scalar reference and the committed golden value") {
    LstmModel m;
    m.initialize(42);
    const auto [dx, dy] = m.forward(fixed_window());
    const auto [rx, ry] = scalar_forward(m, fixed_window());
    CHECK(std::abs(dx - rx) < 1e-12);
    CHECK(std::abs(dy - ry) < 1e-12);
    CHECK(rx == doctest::Approx(kGoldenDx).epsilon(1e-12));
    CHECK(ry == doctest::Approx(kGoldenDy).epsilon(1e-12));
  }

  TEST_CASE("analytic gradient matches central differences") {
    LstmModel m;
    m.initialize(3);
    Rng rng(1);
    const int T = 8, B = 3;
    std::vector<MatrixXd> in(T, MatrixXd(2, B));
    for (auto& x : in)
      for (int i = 0; i < 2 * B; ++i) x.data()[i] = 100.0 * rng.normal();
    // Targets near the current output keep the loss small, so the difference
    // quotient is not swamped by round-off in the loss value.
    MatrixXd tgt = m.forward(in);
    for (int i = 0; i < 2 * B; ++i) tgt.data()[i] += 0.02 * rng.normal();
    Eigen::VectorXd g;
    m.loss_and_gradient(in, tgt, g);
    REQUIRE(static_cast<std::size_t>(g.size()) == LstmModel::parameter_count());
    const double eps = 1e-5;
    double worst = 0.0;
    for (Eigen::Index k = 0; k < g.size(); ++k) {
      LstmModel a = m, b = m;
      a.parameters()[k] += eps;
      b.parameters()[k] -= eps;
      const double num = (a.loss(in, tgt) - b.loss(in, tgt)) / (2 * eps);
      worst = std::max(worst, std::abs(num - g[k]) / std::max({std::abs(num), std::abs(g[k]), 1e-7}));
    }
    CHECK(worst < 1e-4);
  }

  TEST_CASE("windows") {
    auto rec = testutil::make_recording(400, [](std::size_t i) { return 0.01 * static_cast<double>(i); });
    const auto vel = compute_velocity(rec, predictor_diff_config());
    const auto ws = make_windows(rec, vel, 40);
    REQUIRE_FALSE(ws.empty());
    for (const auto& w : ws) {
      CHECK(w.dx == doctest::Approx(0.4).epsilon(1e-9));
      CHECK(w.dy == doctest::Approx(0.0).scale(1.0));
      CHECK(w.input.size() == 2 * kWindowMs);
      CHECK(w.input[0] == doctest::Approx(10.0));
    }
    CHECK(make_windows(testutil::constant_recording(139), compute_velocity(testutil::constant_recording(139)), 40).empty());

    rec.samples[150].valid = false;
    const auto vel2 = compute_velocity(rec, predictor_diff_config());
    for (std::size_t e : window_ends(rec, vel2, 40)) {
      const bool touches = e + 1 - kWindowMs <= 150 && 150 <= e + 40;
      CHECK_FALSE(touches);
    }
  }

  TEST_CASE("training is deterministic and lowers the loss") {
    TrainConfig cfg;
    cfg.batch_size = 32;
    cfg.epochs = 3;
    cfg.learning_rate = 3e-3;
    WindowSet train, val;
    Rng rng(4);
    for (int i = 0; i < 160; ++i) train.append(constant_velocity_window(rng.uniform(-10, 10), rng.uniform(-10, 10), 40));
    for (int i = 0; i < 32; ++i) val.append(constant_velocity_window(rng.uniform(-10, 10), rng.uniform(-10, 10), 40));
    LstmModel m;
    m.initialize(cfg.seed);
    const auto a = lstm_train(m, train, val, cfg);
    const auto b = lstm_train(m, train, val, cfg);
    CHECK(a.model.parameters() == b.model.parameters());
    REQUIRE(a.history.size() == 3);
    CHECK(a.history.back().train_loss < a.initial_train_loss);
  }

  TEST_CASE("learns constant-velocity displacement") {
    const int pi = 40;
    TrainConfig cfg;
    cfg.batch_size = 32;
    cfg.learning_rate = 3e-3;
    cfg.epochs = 60;
    cfg.patience = 60;
    WindowSet train, val;
    Rng rng(9);
    for (int i = 0; i < 512; ++i) train.append(constant_velocity_window(rng.uniform(-10, 10), rng.uniform(-10, 10), pi));
    for (int i = 0; i < 64; ++i) val.append(constant_velocity_window(rng.uniform(-10, 10), rng.uniform(-10, 10), pi));
    LstmModel m;
    m.initialize(cfg.seed);
    const auto res = lstm_train(m, train, val, cfg);
    double err = 0.0;
    for (int i = 0; i < 100; ++i) {
      const double vx = rng.uniform(-9, 9), vy = rng.uniform(-9, 9);
      const auto w = constant_velocity_window(vx, vy, pi);
      const auto [dx, dy] = res.model.forward(w.input);
      err += std::hypot(dx - vx * pi / 1000.0, dy - vy * pi / 1000.0);
    }
    CHECK(err / 100 < 0.02);
  }

  TEST_CASE("divergence reports epoch and batch") {
    TrainConfig cfg;
    cfg.batch_size = 4;
    cfg.epochs = 1;
    WindowSet train;
    for (int i = 0; i < 8; ++i) train.append(constant_velocity_window(1.0, 1.0, 40));
    train.targets[3] = std::nan("");
    LstmModel m;
    m.initialize(1);
    try {
      lstm_train(m, train, {}, cfg);
      FAIL("expected divergence");
    } catch (const DivergenceError& e) {
      CHECK(e.epoch() >= 0);
      CHECK(e.batch() >= 0);
    }
  }

  TEST_CASE("weights survive a JSON round trip") {
    LstmModel m;
    m.initialize(5);
    const auto back = LstmModel::from_json(m.to_json());
    CHECK(back.parameters() == m.parameters());
    CHECK(back.input_scale() == m.input_scale());
    auto j = m.to_json();
    j["tensors"].erase(j["tensors"].begin());
    CHECK_THROWS_AS(LstmModel::from_json(j), DataError);
    TrainConfig cfg;
    cfg.batch_size = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
  }

  TEST_CASE("strided inference masks skipped issue times") {
    LstmModel m;
    m.initialize(2);
    const auto rec = testutil::make_recording(600, [](std::size_t i) { return 0.005 * static_cast<double>(i); });
    const auto full = lstm_predict_recording(m, rec, 40, 1);
    const auto strided = lstm_predict_recording(m, rec, 40, 10);
    for (std::size_t i = 0; i < rec.size(); ++i) {
      if (!strided.valid[i]) continue;
      CHECK(i % 10 == 0);
      CHECK(full.valid[i]);
      CHECK(strided.x[i] == full.x[i]);
    }
  }
}
