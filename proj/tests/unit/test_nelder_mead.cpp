#include <cmath>
#include <limits>

#include <doctest.h>

#include "gazepred/error.hpp"
#include "gazepred/nelder_mead.hpp"

using namespace gazepred;

namespace {

double rosenbrock(const std::vector<double>& p) {
  return 100.0 * std::pow(p[1] - p[0] * p[0], 2) + std::pow(1.0 - p[0], 2);
}

}  // namespace

TEST_SUITE("nelder_mead") {
  TEST_CASE("quadratic bowl") {
    NelderMeadOptions opts;
    opts.tolerance = 1e-10;
    const auto r = nelder_mead([](const std::vector<double>& p) { return std::pow(p[0] - 3, 2) + std::pow(p[1] + 1, 2); },
                               {0.0, 0.0}, opts);
    CHECK(std::abs(r.x[0] - 3.0) < 1e-4);
    CHECK(std::abs(r.x[1] + 1.0) < 1e-4);
    CHECK(r.converged);
  }

  TEST_CASE("Rosenbrock valley") {
    // Dense grid refinement around the optimum as the oracle.
    std::vector<double> best = {0.0, 0.0};
    double lo_x = 0.5, hi_x = 1.5, lo_y = 0.5, hi_y = 1.5;
    for (int level = 0; level < 8; ++level) {
      double fbest = std::numeric_limits<double>::infinity();
      for (int i = 0; i <= 100; ++i)
        for (int j = 0; j <= 100; ++j) {
          const std::vector<double> p = {lo_x + (hi_x - lo_x) * i / 100.0, lo_y + (hi_y - lo_y) * j / 100.0};
          const double f = rosenbrock(p);
          if (f < fbest) {
            fbest = f;
            best = p;
          }
        }
      const double wx = (hi_x - lo_x) / 10.0, wy = (hi_y - lo_y) / 10.0;
      lo_x = best[0] - wx;
      hi_x = best[0] + wx;
      lo_y = best[1] - wy;
      hi_y = best[1] + wy;
    }
    NelderMeadOptions opts;
    opts.tolerance = 1e-12;
    opts.max_evaluations = 5000;
    const auto r = nelder_mead(rosenbrock, {-1.2, 1.0}, opts);
    CHECK(std::abs(r.x[0] - best[0]) < 1e-3);
    CHECK(std::abs(r.x[1] - best[1]) < 1e-3);
    CHECK(std::abs(r.x[0] - 1.0) < 1e-3);
    CHECK(std::abs(r.x[1] - 1.0) < 1e-3);
  }

  TEST_CASE("absolute value") {
    NelderMeadOptions opts;
    opts.tolerance = 1e-12;
    const auto r = nelder_mead([](const std::vector<double>& p) { return std::abs(p[0]); }, {5.0}, opts);
    CHECK(std::abs(r.x[0]) < 1e-5);
  }

  TEST_CASE("never worse than the best initial vertex") {
    int calls = 0;
    double first = 0.0;
    auto f = [&](const std::vector<double>& p) {
      const double v = std::sin(3 * p[0]) * std::cos(2 * p[1]) + 0.1 * p[0] * p[0];
      if (calls++ == 0) first = v;
      return v;
    };
    NelderMeadOptions opts;
    opts.max_evaluations = 40;
    const auto r = nelder_mead(f, {0.7, -0.3}, opts);
    CHECK(r.f <= first);
    CHECK(r.evaluations <= 40 + 2);
  }

  TEST_CASE("budget exhaustion returns best so far, not converged") {
    NelderMeadOptions opts;
    opts.max_evaluations = 10;
    opts.tolerance = 1e-14;
    const auto r = nelder_mead(rosenbrock, {-1.2, 1.0}, opts);
    CHECK_FALSE(r.converged);
    CHECK(std::isfinite(r.f));
    CHECK(r.f <= rosenbrock({-1.2, 1.0}));
  }

  TEST_CASE("non-finite objective") {
    auto nan = [](const std::vector<double>&) { return std::nan(""); };
    CHECK_THROWS_AS(nelder_mead(nan, {1.0, 2.0}), NumericalError);
    // partially infinite landscapes are fine
    auto walled = [](const std::vector<double>& p) {
      return p[0] < 0 ? std::numeric_limits<double>::infinity() : std::pow(p[0] - 1, 2);
    };
    NelderMeadOptions opts;
    opts.tolerance = 1e-10;
    const auto r = nelder_mead(walled, {0.1}, opts);
    CHECK(std::abs(r.x[0] - 1.0) < 1e-4);
  }
}
