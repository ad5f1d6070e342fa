#include <cmath>

#include <doctest.h>

#include "gazepred/error.hpp"
#include "gazepred/predict.hpp"
#include "helpers.hpp"

using namespace gazepred;

namespace {

std::vector<double> errors_of(const PredictionRun& run, const GazeRecording& rec) {
  std::vector<double> e;
  for (std::size_t i = 0; i < run.size(); ++i) {
    if (!run.valid[i]) continue;
    const auto& t = rec.samples[i + static_cast<std::size_t>(run.pi_ms)];
    e.push_back(std::hypot(run.x[i] - t.x_dva, run.y[i] - t.y_dva));
  }
  return e;
}

}  // namespace

TEST_SUITE("predict") {
  TEST_CASE("constant position on a static fixation") {
    const auto rec = testutil::constant_recording(300, 2.0, 3.0);
    const auto run = baseline_predict(BaselineKind::ConstantPosition, rec, compute_velocity(rec, predictor_diff_config()), 40);
    const auto e = errors_of(run, rec);
    CHECK(e.size() == 260);
    for (double x : e) CHECK(x == 0.0);
  }

  TEST_CASE("constant velocity on a ramp") {
    const auto rec = testutil::make_recording(300, [](std::size_t i) { return 0.01 * static_cast<double>(i); },
                                              [](std::size_t i) { return -0.003 * static_cast<double>(i); });
    const auto run =
        baseline_predict(BaselineKind::ConstantVelocity, rec, compute_velocity(rec, predictor_diff_config()), 40);
    const auto e = errors_of(run, rec);
    CHECK(e.size() == 260 - 6);
    for (double x : e) CHECK(x < 1e-9);
    CHECK_FALSE(run.valid[5]);
    CHECK(run.valid[6]);
  }

  TEST_CASE("constant position on a 10 dva/s ramp lags by v * pi") {
    const auto rec = testutil::make_recording(300, [](std::size_t i) { return 0.01 * static_cast<double>(i); });
    const auto run =
        baseline_predict(BaselineKind::ConstantPosition, rec, compute_velocity(rec, predictor_diff_config()), 40);
    for (double x : errors_of(run, rec)) CHECK(x == doctest::Approx(0.4).epsilon(1e-12));
  }

  TEST_CASE("masking of invalid inputs and targets") {
    auto rec = testutil::constant_recording(200);
    rec.samples[100].valid = false;
    const auto run = baseline_predict(BaselineKind::ConstantPosition, rec, compute_velocity(rec, predictor_diff_config()), 25);
    CHECK_FALSE(run.valid[100]);
    CHECK_FALSE(run.valid[75]);
    CHECK(run.valid[74]);
    CHECK(run.valid[76]);
    CHECK_FALSE(run.valid[175]);
    CHECK(run.valid[174]);
    CHECK(std::isnan(run.x[100]));
  }

  TEST_CASE("prediction runs round trip through CSV") {
    const auto rec = testutil::make_recording(120, [](std::size_t i) { return std::sin(0.1 * static_cast<double>(i)); });
    auto run = baseline_predict(BaselineKind::ConstantVelocity, rec, compute_velocity(rec, predictor_diff_config()), 40);
    run.subject_id = "S001";
    const auto dir = testutil::temp_dir("predict_io");
    write_run_csv(run, dir / "run.csv");
    const auto back = read_run_csv(dir / "run.csv");
    REQUIRE(back.size() == run.size());
    CHECK(back.pi_ms == run.pi_ms);
    for (std::size_t i = 0; i < run.size(); ++i) {
      CHECK(back.valid[i] == run.valid[i]);
      if (run.valid[i]) CHECK(back.x[i] == run.x[i]);
    }
  }
}
