#include <cmath>

#include <boost/math/special_functions/beta.hpp>
#include <doctest.h>

#include "gazepred/error.hpp"
#include "gazepred/rng.hpp"
#include "gazepred/stats.hpp"
#include "oracles.hpp"

using namespace gazepred;

TEST_SUITE("stats") {
  TEST_CASE("quantile examples") {
    const std::vector<double> v = {4, 1, 3, 2};
    CHECK(stats::quantile(v, 0.25) == doctest::Approx(oracle::quantile(v, 0.25)).epsilon(1e-15));
    CHECK(stats::quantile(v, 0.25) == 1.75);
    CHECK(stats::quantile(v, 0.75) == 3.25);
    CHECK(stats::quantile(v, 0.0) == 1.0);
    CHECK(stats::quantile(v, 1.0) == 4.0);
    for (double p : {0.0, 0.3, 1.0}) CHECK(stats::quantile(std::vector<double>{7.5}, p) == 7.5);
    CHECK(stats::median(v) == 2.5);
    CHECK(stats::iqr(v) == 1.5);
    CHECK_THROWS_AS(stats::quantile(std::vector<double>{}, 0.5), InsufficientDataError);
    CHECK_THROWS_AS(stats::quantile(v, 1.5), ConfigError);
  }

  TEST_CASE("quantile matches the order-statistic oracle on random vectors") {
    Rng rng(100);
    for (int trial = 0; trial < 1000; ++trial) {
      std::vector<double> v(1 + rng.below(60));
      for (auto& x : v) x = rng.uniform() < 0.2 ? std::round(rng.normal(0, 3)) : rng.normal(0, 10);
      const double p = rng.uniform();
      CHECK(std::abs(stats::quantile(v, p) - oracle::quantile(v, p)) <= 1e-12);
    }
  }

  TEST_CASE("average ranks with ties") {
    const std::vector<double> x = {10, 20, 10, 30, 20, 10};
    const auto r = stats::average_ranks(x);
    CHECK(r == oracle::ranks(x));
    CHECK(r[0] == 2.0);
    CHECK(r[1] == 4.5);
    CHECK(r[3] == 6.0);
  }

  TEST_CASE("Spearman monotone and tie-heavy fixtures") {
    std::vector<double> x, up, down;
    for (int i = 0; i < 20; ++i) {
      x.push_back(i * 0.5 - 3);
      up.push_back(std::exp(x.back()));
      down.push_back(-std::pow(x.back(), 3));
    }
    CHECK(stats::spearman(x, up).r_s == doctest::Approx(1.0));
    CHECK(stats::spearman(x, down).r_s == doctest::Approx(-1.0));
    CHECK(stats::spearman(x, up).p_value < 1e-10);

    const std::vector<double> a = {1, 2, 2, 3, 3, 3, 4, 5, 5, 6, 6, 6};
    const std::vector<double> b = {2, 1, 1, 4, 3, 3, 5, 5, 7, 6, 6, 9};
    CHECK(std::abs(stats::spearman(a, b).r_s - oracle::spearman(a, b)) <= 1e-12);
  }

  TEST_CASE("Spearman p-value is the two-sided t tail") {
    const std::vector<double> a = {1, 3, 2, 5, 4, 7, 6, 9, 8, 10, 12, 11};
    const std::vector<double> b = {2, 1, 4, 3, 6, 5, 9, 7, 8, 12, 10, 11};
    const auto res = stats::spearman(a, b);
    const double n = 12.0, r = res.r_s;
    const double t2 = r * r * (n - 2) / (1 - r * r);
    // two-sided tail of Student t with n-2 dof via the regularized incomplete beta
    const double p = boost::math::ibeta((n - 2) / 2, 0.5, (n - 2) / (n - 2 + t2));
    CHECK(res.p_value == doctest::Approx(p).epsilon(1e-10));
  }

  TEST_CASE("Spearman matches the oracle on random tied fixtures") {
    Rng rng(7);
    for (int trial = 0; trial < 1000; ++trial) {
      const std::size_t n = 5 + rng.below(40);
      std::vector<double> x(n), y(n);
      for (std::size_t i = 0; i < n; ++i) {
        x[i] = static_cast<double>(rng.below(8));
        y[i] = x[i] + static_cast<double>(rng.below(6));
      }
      x[0] = 0;
      x[1] = 9;
      CHECK(std::abs(stats::spearman(x, y).r_s - oracle::spearman(x, y)) <= 1e-12);
    }
  }

  TEST_CASE("Spearman invariances") {
    Rng rng(13);
    for (int trial = 0; trial < 100; ++trial) {
      std::vector<double> x(15), y(15), xe(15), yc(15), neg(15);
      for (std::size_t i = 0; i < 15; ++i) {
        x[i] = rng.normal();
        y[i] = x[i] + rng.normal();
        xe[i] = std::exp(x[i]);
        yc[i] = y[i] * y[i] * y[i];
        neg[i] = -x[i];
      }
      CHECK(stats::spearman(x, x).r_s == doctest::Approx(1.0).epsilon(1e-12));
      CHECK(stats::spearman(x, neg).r_s == doctest::Approx(-1.0).epsilon(1e-12));
      CHECK(std::abs(stats::spearman(x, y).r_s - stats::spearman(xe, yc).r_s) < 1e-12);
    }
  }

  TEST_CASE("Spearman preconditions") {
    CHECK_THROWS_AS(stats::spearman(std::vector<double>{1, 2, 3, 4}, std::vector<double>{1, 2, 3, 4}),
                    InsufficientDataError);
    CHECK_THROWS_AS(stats::spearman(std::vector<double>{1, 1, 1, 1, 1}, std::vector<double>{1, 2, 3, 4, 5}),
                    NumericalError);
    CHECK_THROWS_AS(stats::spearman(std::vector<double>{1, 2, 3, 4, 5}, std::vector<double>{1, 2, 3, 4}),
                    AlignmentError);
  }

  TEST_CASE("Bonferroni") {
    const double thr = 0.05 / 114.0;
    CHECK(thr == doctest::Approx(4.386e-4).epsilon(1e-3));
    std::vector<double> fam(114, 0.5);
    fam[0] = 0.001;
    fam[1] = 1e-5;
    const auto flags = stats::bonferroni(fam);
    CHECK_FALSE(flags[0]);
    CHECK(flags[1]);
    CHECK(stats::bonferroni(std::vector<double>{0.049})[0]);
    CHECK_FALSE(stats::bonferroni(std::vector<double>{0.05})[0]);
    CHECK(stats::bonferroni(std::vector<double>{0.02, 0.03}, 0.1) == std::vector<bool>{true, true});
  }

  TEST_CASE("Kendall W") {
    const std::vector<std::vector<double>> same = {{1, 2, 3, 4}, {10, 20, 30, 40}, {0.1, 0.2, 0.3, 0.4}};
    CHECK(stats::kendall_w(same) == doctest::Approx(1.0));
    const std::vector<std::vector<double>> fixture = {{1, 2, 3, 4}, {2, 1, 4, 3}, {1, 3, 2, 4}};
    CHECK(std::abs(stats::kendall_w(fixture) - oracle::kendall_w(fixture)) <= 1e-12);
    // rank sums 4, 6, 9, 11: S = 29, W = 12 * 29 / (9 * 60)
    CHECK(stats::kendall_w(fixture) == doctest::Approx(12.0 * 29.0 / 540.0).epsilon(1e-14));
    CHECK_THROWS_AS(stats::kendall_w({{1, 2, 3}}), InsufficientDataError);
    CHECK_THROWS_AS(stats::kendall_w({{1, 2}, {2, 1}}), InsufficientDataError);
    CHECK_THROWS_AS(stats::kendall_w({{1, 1, 1}, {1, 1, 1}}), NumericalError);
  }

  TEST_CASE("Kendall W matches the oracle and is rank based") {
    Rng rng(31);
    for (int trial = 0; trial < 1000; ++trial) {
      const std::size_t m = 2 + rng.below(4), n = 3 + rng.below(20);
      std::vector<std::vector<double>> s(m, std::vector<double>(n)), t(m, std::vector<double>(n));
      for (std::size_t r = 0; r < m; ++r) {
        for (std::size_t i = 0; i < n; ++i) {
          s[r][i] = static_cast<double>(rng.below(6)) + (rng.uniform() < 0.5 ? rng.uniform() : 0.0);
          t[r][i] = std::exp(0.5 * s[r][i]) + 3.0;
        }
        s[r][0] = -1.0;
        t[r][0] = std::exp(-0.5) + 3.0;
      }
      const double w = stats::kendall_w(s);
      CHECK(std::abs(w - oracle::kendall_w(s)) <= 1e-12);
      CHECK(std::abs(w - stats::kendall_w(t)) <= 1e-12);
      CHECK(w >= -1e-12);
      CHECK(w <= 1.0 + 1e-12);
    }
  }
}
