#include "gazepred/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <boost/math/distributions/students_t.hpp>

#include "gazepred/error.hpp"

namespace gazepred::stats {

double quantile_sorted(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw InsufficientDataError("quantile of an empty sample");
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("quantile level must lie in [0, 1]");
  const double h = static_cast<double>(sorted.size() - 1) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = h - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

double quantile(std::span<const double> values, double p) {
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  return quantile_sorted(v, p);
}

double median(std::span<const double> values) { return quantile(values, 0.5); }

double iqr(std::span<const double> values) {
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  return quantile_sorted(v, 0.75) - quantile_sorted(v, 0.25);
}

std::vector<double> average_ranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    // positions i..j (0-based) share ranks i+1..j+1
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

namespace {

double pearson(std::span<const double> a, std::span<const double> b) {
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double num = 0.0, da = 0.0, db = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - ma) * (b[i] - mb);
    da += (a[i] - ma) * (a[i] - ma);
    db += (b[i] - mb) * (b[i] - mb);
  }
  return num / std::sqrt(da * db);
}

bool constant(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); });
}

}  // namespace

SpearmanResult spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw AlignmentError("spearman inputs differ in length");
  if (x.size() < kMinSpearmanSamples)
    throw InsufficientDataError("spearman needs at least " + std::to_string(kMinSpearmanSamples) + " pairs");
  for (std::size_t i = 0; i < x.size(); ++i)
    if (!std::isfinite(x[i]) || !std::isfinite(y[i])) throw DataError("spearman inputs must be finite");
  if (constant(x) || constant(y)) throw NumericalError("spearman correlation undefined for a constant input");

  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  SpearmanResult res;
  res.r_s = std::clamp(pearson(rx, ry), -1.0, 1.0);

  const double dof = static_cast<double>(x.size()) - 2.0;
  const double denom = (1.0 - res.r_s) * (1.0 + res.r_s);
  if (denom <= 0.0) {
    res.p_value = 0.0;
  } else {
    const double t = res.r_s * std::sqrt(dof / denom);
    boost::math::students_t dist(dof);
    res.p_value = std::clamp(2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(t))), 0.0, 1.0);
  }
  return res;
}

std::vector<bool> bonferroni(std::span<const double> p_values, double alpha) {
  const double threshold = alpha / static_cast<double>(p_values.size());
  std::vector<bool> flags(p_values.size());
  for (std::size_t i = 0; i < p_values.size(); ++i) flags[i] = p_values[i] < threshold;
  return flags;
}

double kendall_w(const std::vector<std::vector<double>>& scores) {
  const std::size_t m = scores.size();
  if (m < 2) throw InsufficientDataError("Kendall's W needs at least 2 raters");
  const std::size_t n = scores.front().size();
  if (n < 3) throw InsufficientDataError("Kendall's W needs at least 3 items");

  std::vector<double> rank_sums(n, 0.0);
  double tie_sum = 0.0;
  for (const auto& rater : scores) {
    if (rater.size() != n) throw AlignmentError("raters scored different numbers of items");
    if (constant(rater)) throw NumericalError("Kendall's W undefined: a rater tied every item");
    const auto r = average_ranks(rater);
    for (std::size_t i = 0; i < n; ++i) rank_sums[i] += r[i];

    std::vector<double> sorted(rater.begin(), rater.end());
    std::sort(sorted.begin(), sorted.end());
    std::size_t i = 0;
    while (i < n) {
      std::size_t j = i;
      while (j + 1 < n && sorted[j + 1] == sorted[i]) ++j;
      const double t = static_cast<double>(j - i + 1);
      tie_sum += t * t * t - t;
      i = j + 1;
    }
  }
  const double mean = std::accumulate(rank_sums.begin(), rank_sums.end(), 0.0) / static_cast<double>(n);
  double s = 0.0;
  for (double r : rank_sums) s += (r - mean) * (r - mean);
  const double md = static_cast<double>(m);
  const double nd = static_cast<double>(n);
  return 12.0 * s / (md * md * (nd * nd * nd - nd) - md * tie_sum);
}

}  // namespace gazepred::stats
