#include <cmath>
#include <numbers>
#include <sstream>

#include <doctest.h>

#include "gazepred/error.hpp"
#include "gazepred/io.hpp"
#include "gazepred/signal.hpp"
#include "helpers.hpp"

using namespace gazepred;

TEST_SUITE("signal") {
  TEST_CASE("three identical rows parse to three valid samples") {
    std::istringstream in("t_ms,x_dva,y_dva\n0,1.0,2.0\n1,1.0,2.0\n2,1.0,2.0\n");
    const auto rec = parse_csv(in, {});
    REQUIRE(rec.size() == 3);
    for (const auto& s : rec.samples) {
      CHECK(s.valid);
      CHECK(s.x_dva == 1.0);
      CHECK(s.y_dva == 2.0);
    }
    CHECK(rec.valid_count() == 3);
    CHECK_FALSE(rec.has_targets());
  }

  TEST_CASE("NaN or empty position marks only that sample invalid") {
    std::istringstream in("t_ms,x_dva,y_dva\n0,1.0,2.0\n1,NaN,2.0\n2,1.0,\n3,1.5,2.5\n");
    const auto rec = parse_csv(in, {});
    REQUIRE(rec.size() == 4);
    CHECK(rec.samples[0].valid);
    CHECK_FALSE(rec.samples[1].valid);
    CHECK_FALSE(rec.samples[2].valid);
    CHECK(rec.samples[3].valid);
    CHECK(rec.samples[3].x_dva == 1.5);
  }

  TEST_CASE("validity column with zero-is-valid convention") {
    std::istringstream in("n,x,y,val\n0,1,2,0\n1,1,2,4\n");
    ColumnMapping m;
    m.time = "n";
    m.x = "x";
    m.y = "y";
    m.validity = "val";
    m.validity_zero_is_valid = true;
    const auto rec = parse_csv(in, m);
    CHECK(rec.samples[0].valid);
    CHECK_FALSE(rec.samples[1].valid);
  }

  TEST_CASE("timestamp step other than 1 ms is a rate error") {
    std::istringstream in("t_ms,x_dva,y_dva\n0,1,1\n2,1,1\n4,1,1\n");
    std::vector<std::int64_t> t = {0, 2, 4};
    bool unit_steps = true;
    for (std::size_t i = 1; i < t.size(); ++i) unit_steps = unit_steps && t[i] - t[i - 1] == 1;
    REQUIRE_FALSE(unit_steps);
    CHECK_THROWS_AS(parse_csv(in, {}), RateError);
  }

  TEST_CASE("empty input and malformed rows") {
    std::istringstream empty("");
    CHECK_THROWS_AS(parse_csv(empty, {}), EmptyInputError);
    std::istringstream header_only("t_ms,x_dva,y_dva\n");
    CHECK_THROWS_AS(parse_csv(header_only, {}), EmptyInputError);
    std::istringstream bad("t_ms,x_dva,y_dva\n0,1,1\n1,abc,1\n");
    try {
      parse_csv(bad, {});
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      CHECK(e.row() == 3);
    }
    std::istringstream missing("t_ms,x_dva\n0,1\n");
    CHECK_THROWS_AS(parse_csv(missing, {}), DataError);
  }

  TEST_CASE("ingest then export reproduces the canonical file") {
    Rng rng(5);
    std::ostringstream src;
    src << "t_ms,x_dva,y_dva,valid,target_x,target_y\n";
    for (int i = 0; i < 200; ++i) {
      src << i << ',' << io::format_double(rng.normal(0.0, 7.0)) << ',' << io::format_double(rng.normal(0.0, 5.0))
          << ",1," << io::format_double(rng.uniform(-15, 15)) << ',' << io::format_double(rng.uniform(-9, 9)) << '\n';
    }
    std::istringstream in(src.str());
    const auto rec = parse_csv(in, {});
    std::ostringstream out;
    export_csv(rec, out);
    CHECK(out.str() == src.str());
  }

  TEST_CASE("constant position has zero velocity") {
    const auto rec = testutil::constant_recording(50, 5.0);
    const auto vel = compute_velocity(rec);
    for (std::size_t i = 3; i + 3 < rec.size(); ++i) {
      CHECK(std::abs(vel.vx[i]) < 1e-12);
    }
    CHECK(std::isnan(vel.vx[0]));
    CHECK(std::isnan(vel.v_radial[49]));
    CHECK_FALSE(vel.valid(0));
  }

  TEST_CASE("linear ramp gives its slope") {
    const auto rec = testutil::make_recording(100, [](std::size_t i) { return 0.01 * static_cast<double>(i); });
    for (const DiffConfig cfg : {DiffConfig{}, DiffConfig{7, 1, true}, DiffConfig{9, 3, false}}) {
      const auto vel = compute_velocity(rec, cfg);
      std::size_t checked = 0;
      for (std::size_t i = 0; i < rec.size(); ++i) {
        if (!vel.valid(i)) continue;
        CHECK(vel.vx[i] == doctest::Approx(10.0).epsilon(1e-9));
        ++checked;
      }
      CHECK(checked >= 90);
    }
  }

  TEST_CASE("quadratic derivative matches the analytic value") {
    const double a = 5.0;
    const auto rec = testutil::make_recording(400, [a](std::size_t i) {
      const double t = static_cast<double>(i) / 1000.0;
      return a * t * t;
    });
    const auto vel = compute_velocity(rec);
    for (std::size_t i = 3; i + 3 < rec.size(); ++i) {
      const double t = static_cast<double>(i) / 1000.0;
      CHECK(std::abs(vel.vx[i] - 2.0 * a * t) < 1e-9);
    }
  }

  TEST_CASE("sinusoid velocity") {
    // The 7-point quadratic fit has gain sum_k k sin(k w) / (28 w) on a
    // sinusoid of w rad/sample; the gain approaches 1 as w -> 0.
    for (double f : {0.1, 1.0, 5.0, 10.0, 24.0}) {
      const double w = 2.0 * std::numbers::pi * f / 1000.0;
      double gain = 0.0;
      for (int k = -3; k <= 3; ++k) gain += k * std::sin(k * w);
      gain /= 28.0 * w;
      const double amp = 3.0;
      const auto rec =
          testutil::make_recording(3000, [&](std::size_t i) { return amp * std::sin(w * static_cast<double>(i)); });
      const auto vel = compute_velocity(rec);
      double worst_model = 0.0;
      double worst_true = 0.0;
      const double peak = amp * w * 1000.0;
      for (std::size_t i = 3; i + 3 < rec.size(); ++i) {
        const double truth = peak * std::cos(w * static_cast<double>(i));
        worst_model = std::max(worst_model, std::abs(vel.vx[i] - gain * truth) / peak);
        worst_true = std::max(worst_true, std::abs(vel.vx[i] - truth) / peak);
      }
      CHECK(worst_model < 1e-9);
      CHECK(worst_true <= std::abs(1.0 - gain) + 1e-9);
      if (f <= 0.1) CHECK(worst_true < 1e-6);
    }
  }

  TEST_CASE("radial velocity is invariant under a 90 degree rotation") {
    Rng rng(11);
    std::vector<double> xs(500), ys(500);
    double x = 0, y = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      x += rng.normal(0.0, 0.1);
      y += rng.normal(0.0, 0.1);
      xs[i] = x;
      ys[i] = y;
    }
    const auto rec = testutil::make_recording(500, [&](std::size_t i) { return xs[i]; }, [&](std::size_t i) { return ys[i]; });
    const auto rot = testutil::make_recording(500, [&](std::size_t i) { return -ys[i]; }, [&](std::size_t i) { return xs[i]; });
    const auto a = compute_velocity(rec);
    const auto b = compute_velocity(rot);
    for (std::size_t i = 3; i + 3 < 500; ++i) {
      CHECK(std::abs(a.v_radial[i] - b.v_radial[i]) < 1e-9);
      CHECK(a.v_radial[i] == doctest::Approx(std::hypot(a.vx[i], a.vy[i])));
    }
  }

  TEST_CASE("invalid samples poison every window that touches them") {
    auto rec = testutil::make_recording(60, [](std::size_t i) { return 0.02 * static_cast<double>(i); });
    rec.samples[30].valid = false;
    const auto vel = compute_velocity(rec);
    for (std::size_t i = 27; i <= 33; ++i) CHECK(std::isnan(vel.vx[i]));
    CHECK_FALSE(std::isnan(vel.vx[26]));
    CHECK_FALSE(std::isnan(vel.vx[34]));
    const auto causal = compute_velocity(rec, {7, 1, true});
    for (std::size_t i = 30; i <= 36; ++i) CHECK(std::isnan(causal.vx[i]));
    CHECK_FALSE(std::isnan(causal.vx[29]));
    CHECK_FALSE(std::isnan(causal.vx[37]));
  }

  TEST_CASE("differentiator weights") {
    const auto w = savgol_derivative_weights(7, 1, 6);
    REQUIRE(w.size() == 7);
    for (int k = 0; k < 7; ++k) CHECK(w[k] == doctest::Approx((k - 3) / 28.0));
    const auto c = savgol_derivative_weights(7, 2, 3);
    for (int k = 0; k < 7; ++k) CHECK(c[k] == doctest::Approx((k - 3) / 28.0));
  }

  TEST_CASE("window larger than the recording is a config error") {
    const auto rec = testutil::constant_recording(5);
    CHECK_THROWS_AS(compute_velocity(rec), ConfigError);
    CHECK_THROWS_AS(compute_velocity(testutil::constant_recording(50), DiffConfig{6, 2, false}), ConfigError);
  }

  TEST_CASE("evaluation requires 1000 valid samples") {
    auto rec = testutil::constant_recording(1000);
    CHECK_NOTHROW(require_evaluable(rec));
    rec.samples[10].valid = false;
    CHECK_THROWS_AS(require_evaluable(rec), InsufficientDataError);
    rec.rate_hz = 500;
    CHECK_THROWS_AS(validate_recording(rec), RateError);
  }
}
