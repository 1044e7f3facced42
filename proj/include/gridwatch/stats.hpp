#pragma once

#include <vector>

namespace gridwatch::stats {

// Regularized lower incomplete gamma P(a, x).
double gamma_p(double a, double x);

// Chi-square CDF with dof degrees of freedom.
double chi2_cdf(double x, double dof);

// Inverse chi-square CDF (quantile). p in (0, 1), dof > 0.
double chi2_quantile(double p, double dof);

// Empirical quantile: smallest sample value s with F_hat(s) >= p.
// p = 1 returns the maximum. Sorts a copy.
double empirical_quantile(std::vector<double> samples, double p);

// Two-sided Kolmogorov-Smirnov distance of samples against U[lo, hi].
double ks_distance_uniform(std::vector<double> samples, double lo, double hi);

double mean(const std::vector<double>& v);

// Sample autocorrelation at a lag.
double autocorrelation(const std::vector<double>& v, int lag);

}  // namespace gridwatch::stats
