#pragma once

#include <span>
#include <vector>

namespace gazepred::stats {

/// Linear interpolation between order statistics at rank (n-1)*p.
/// Throws InsufficientDataError on empty input.
double quantile(std::span<const double> values, double p);
/// quantile() on already sorted data; no copy.
double quantile_sorted(std::span<const double> sorted, double p);

double median(std::span<const double> values);
/// P75 - P25.
double iqr(std::span<const double> values);

/// 1-based ranks; tied values share the average of their ranks.
std::vector<double> average_ranks(std::span<const double> values);

struct SpearmanResult {
  double r_s = 0.0;
  double p_value = 1.0;
};

/// Pearson correlation of average ranks, two-sided p-value from the
/// t-approximation with n-2 degrees of freedom.
SpearmanResult spearman(std::span<const double> x, std::span<const double> y);
inline constexpr std::size_t kMinSpearmanSamples = 5;

/// Flags p_i < alpha / m, with m the number of p-values in the family.
std::vector<bool> bonferroni(std::span<const double> p_values, double alpha = 0.05);

/// Kendall's coefficient of concordance with tie correction.
/// `scores[r][i]` is rater r's score for item i.
double kendall_w(const std::vector<std::vector<double>>& scores);

}  // namespace gazepred::stats
