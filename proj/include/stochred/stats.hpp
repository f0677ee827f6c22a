#pragma once

// Small statistics toolkit for the ensemble checks.

#include <boost/math/distributions/chi_squared.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace stochred::stats {

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

/// Wilson score interval for k successes out of n at z standard errors.
inline Interval wilson_interval(std::size_t k, std::size_t n, double z = 4.0) {
  if (n == 0) return {0.0, 1.0};
  const double nn = static_cast<double>(n);
  const double p = static_cast<double>(k) / nn;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / nn;
  const double center = (p + z2 / (2.0 * nn)) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn)) / denom;
  return {std::max(0.0, center - half), std::min(1.0, center + half)};
}

/// |freq - p| measured in binomial standard errors sqrt(p(1-p)/n).
inline double binomial_z(double freq, double p, std::size_t n) {
  const double se = std::sqrt(p * (1.0 - p) / static_cast<double>(n));
  if (se == 0.0) return freq == p ? 0.0 : std::numeric_limits<double>::infinity();
  return std::abs(freq - p) / se;
}

struct ChiSquare {
  double statistic = 0.0;
  std::size_t dof = 0;
  double p_value = 1.0;
};

/// Pearson goodness of fit. Bins with expected count below `min_expected`
/// are merged with their neighbours (in order) before testing.
inline ChiSquare chi_square_gof(const std::vector<double>& observed_counts,
                                const std::vector<double>& expected_probs,
                                double min_expected = 5.0) {
  if (observed_counts.size() != expected_probs.size() || observed_counts.empty()) {
    throw std::invalid_argument("chi-square: size mismatch");
  }
  const double n = std::accumulate(observed_counts.begin(), observed_counts.end(), 0.0);
  std::vector<double> obs, exp;
  double o_acc = 0.0, e_acc = 0.0;
  for (std::size_t i = 0; i < observed_counts.size(); ++i) {
    o_acc += observed_counts[i];
    e_acc += expected_probs[i] * n;
    if (e_acc >= min_expected) {
      obs.push_back(o_acc);
      exp.push_back(e_acc);
      o_acc = e_acc = 0.0;
    }
  }
  if (e_acc > 0.0 || o_acc > 0.0) {
    if (exp.empty()) {
      obs.push_back(o_acc);
      exp.push_back(e_acc);
    } else {
      obs.back() += o_acc;
      exp.back() += e_acc;
    }
  }
  ChiSquare r;
  for (std::size_t i = 0; i < obs.size(); ++i) {
    if (exp[i] <= 0.0) {
      if (obs[i] > 0.0) r.statistic = std::numeric_limits<double>::infinity();
      continue;
    }
    const double d = obs[i] - exp[i];
    r.statistic += d * d / exp[i];
  }
  r.dof = obs.size() > 1 ? obs.size() - 1 : 0;
  if (r.dof == 0) {
    r.p_value = 1.0;
  } else if (!std::isfinite(r.statistic)) {
    r.p_value = 0.0;
  } else {
    boost::math::chi_squared dist(static_cast<double>(r.dof));
    r.p_value = boost::math::cdf(boost::math::complement(dist, r.statistic));
  }
  return r;
}

struct MeanSem {
  double mean = 0.0;
  double sem = 0.0;
};

inline MeanSem mean_sem(const std::vector<double>& x) {
  MeanSem r;
  if (x.empty()) return r;
  const double n = static_cast<double>(x.size());
  r.mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
  if (x.size() > 1) {
    double ss = 0.0;
    for (double v : x) ss += (v - r.mean) * (v - r.mean);
    r.sem = std::sqrt(ss / (n - 1.0) / n);
  }
  return r;
}

inline double median(std::vector<double> x) {
  if (x.empty()) return std::numeric_limits<double>::quiet_NaN();
  const std::size_t mid = x.size() / 2;
  std::nth_element(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(mid), x.end());
  const double hi = x[mid];
  if (x.size() % 2 == 1) return hi;
  const double lo = *std::max_element(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lo + hi);
}

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_se = 0.0;
};

/// Ordinary least squares y = a + b x.
inline LinearFit linear_fit(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw std::invalid_argument("linear_fit needs at least two points");
  }
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  LinearFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  if (x.size() > 2) {
    double ss = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double r = y[i] - f.intercept - f.slope * x[i];
      ss += r * r;
    }
    f.slope_se = std::sqrt(ss / (n - 2.0) / sxx);
  }
  return f;
}

}  // namespace stochred::stats
