#pragma once

#include <vector>

namespace iqrtest {

double logit(double p);
double inv_logit(double x);

// Standard normal CDF via erfc.
double normal_cdf(double x);

// Standard normal quantile function (Wichura's AS 241, double precision).
double normal_quantile(double p);

// Linear-interpolation sample quantile (R type 7) of an ascending-sorted
// vector. q is clamped to [0,1].
double quantile_sorted(const std::vector<double>& sorted, double q);

}  // namespace iqrtest
