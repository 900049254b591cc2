#include <cmath>
#include <limits>
#include <numeric>

#include <boost/math/distributions/students_t.hpp>
#include <fmt/format.h>

#include "chatasu/evaluation.hpp"

namespace chatasu::evaluation {

TTestResult significance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw UsageError(fmt::format("significance: {} scores vs {} scores", a.size(), b.size()));
  if (a.size() < 2) throw UsageError("significance: need at least two paired scores");

  const std::size_t n = a.size();
  std::vector<double> diff(n);
  for (std::size_t i = 0; i < n; ++i) diff[i] = a[i] - b[i];
  const double mean = std::accumulate(diff.begin(), diff.end(), 0.0) / static_cast<double>(n);
  double ss = 0.0;
  for (double d : diff) ss += (d - mean) * (d - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));

  TTestResult r;
  r.degrees_of_freedom = n - 1;
  r.mean_difference = mean;

  // Differences that are equal up to rounding carry no variance information.
  const double scale = std::max(1.0, std::abs(mean));
  if (!(sd > 1e-12 * scale)) {
    r.degenerate = true;
    if (std::abs(mean) <= 1e-12 * scale) {
      r.t_statistic = 0.0;
      r.p_value = 1.0;
    } else {
      r.t_statistic = std::copysign(std::numeric_limits<double>::infinity(), mean);
      r.p_value = 0.0;
    }
    return r;
  }

  r.t_statistic = mean / (sd / std::sqrt(static_cast<double>(n)));
  const boost::math::students_t dist(static_cast<double>(n - 1));
  r.p_value = std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(r.t_statistic))));
  return r;
}

}  // namespace chatasu::evaluation
