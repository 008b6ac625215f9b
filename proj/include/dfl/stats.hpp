#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace dfl {

// Pairwise summation: result depends only on the input order, never on threading.
double pairwise_sum(std::span<const double> x);

struct MeanSE {
  double mean = 0.0;
  double se = 0.0;
  std::size_t n = 0;
};

MeanSE mean_se(std::span<const double> x);

// Mean and SE of a - b for paired samples.
MeanSE paired_diff(std::span<const double> a, std::span<const double> b);

struct LinearFit {
  double slope = 0.0, intercept = 0.0, r2 = 0.0;
  double slope_se = 0.0, intercept_se = 0.0;
  std::size_t n = 0;
};

// Ordinary least squares y = intercept + slope * x.
LinearFit linear_fit(std::span<const double> x, std::span<const double> y);

// Slope of log(err) against log(n).
double loglog_slope(const std::vector<double>& n, const std::vector<double>& err);

}  // namespace dfl
