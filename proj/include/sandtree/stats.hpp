#pragma once

#include <boost/math/statistics/linear_regression.hpp>
#include <boost/math/statistics/univariate_statistics.hpp>

#include <cmath>
#include <stdexcept>
#include <vector>

namespace sandtree {

struct LinearFit {
  double slope = 0;
  double intercept = 0;
  double r2 = 0;
  std::size_t points = 0;
};

inline LinearFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("fit needs two or more paired points");
  const auto [c0, c1, r2] = boost::math::statistics::simple_ordinary_least_squares_with_R_squared(x, y);
  return {c1, c0, r2, x.size()};
}

struct MeanStd {
  double mean = 0;
  double std = 0;     // sample standard deviation
  double stderr_of_mean = 0;
};

inline MeanStd mean_std(const std::vector<double>& v) {
  if (v.empty()) throw std::invalid_argument("no samples");
  MeanStd out;
  out.mean = boost::math::statistics::mean(v);
  if (v.size() > 1) {
    out.std = std::sqrt(boost::math::statistics::sample_variance(v));
    out.stderr_of_mean = out.std / std::sqrt(static_cast<double>(v.size()));
  }
  return out;
}

}  // namespace sandtree
