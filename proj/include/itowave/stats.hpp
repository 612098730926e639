#pragma once

#include <functional>
#include <span>

namespace itowave::stats {

double mean(std::span<const double> x);
/// Unbiased sample variance.
double variance(std::span<const double> x);
double normal_cdf(double x, double mean = 0.0, double sd = 1.0);

/// One-sample Kolmogorov-Smirnov statistic sup |F_n - F|.
double ks_statistic(std::span<const double> samples, const std::function<double(double)>& cdf);
/// Asymptotic p-value for statistic d from n samples.
double ks_pvalue(double d, std::size_t n);

}  // namespace itowave::stats
