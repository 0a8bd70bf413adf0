#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numbers>
#include <span>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>

#include "fdnet/error.hpp"
#include "fdnet/parallel.hpp"

namespace fdnet::stats {

/// Standard normal CDF via erfc (absolute error well below 1e-15).
inline double normal_cdf(double x) noexcept { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

/// CDF of the chi-square distribution with k degrees of freedom.
inline double chi_square_cdf(double x, double k) {
  if (x <= 0.0) return 0.0;
  return boost::math::gamma_p(0.5 * k, 0.5 * x);
}

/// E|N(0,1)|^p = 2^{p/2} Gamma((p+1)/2) / sqrt(pi).
inline double normal_abs_moment(double p) {
  return std::exp(0.5 * p * std::log(2.0) + std::lgamma(0.5 * (p + 1.0))) / std::sqrt(std::numbers::pi);
}

/// One-sample Kolmogorov-Smirnov statistic sup |F_R - F|.
inline double ks_statistic(std::vector<double> sample, const std::function<double(double)>& cdf) {
  if (sample.empty()) throw ParameterError("ks_statistic: empty sample");
  std::sort(sample.begin(), sample.end());
  const double r = static_cast<double>(sample.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double f = cdf(sample[i]);
    d = std::max({d, static_cast<double>(i + 1) / r - f, f - static_cast<double>(i) / r});
  }
  return d;
}

/// Asymptotic KS coefficient c(alpha) with critical value c(alpha)/sqrt(R).
inline double ks_coefficient(double alpha) {
  if (alpha == 0.01) return 1.628;
  if (alpha == 0.05) return 1.358;
  if (alpha == 0.10) return 1.224;
  if (!(alpha > 0.0 && alpha < 1.0)) throw ParameterError("ks_coefficient: alpha must lie in (0,1)");
  return std::sqrt(-0.5 * std::log(alpha / 2.0));
}

inline double ks_critical(std::size_t replications, double alpha = 0.01) {
  return ks_coefficient(alpha) / std::sqrt(static_cast<double>(replications));
}

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
};

/// Ordinary least squares y = intercept + slope * x.
inline LineFit fit_line(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw ParameterError("fit_line: need at least two paired points");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0) throw ParameterError("fit_line: degenerate abscissae");
  LineFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  fit.r_squared = syy == 0.0 ? 1.0 : (sxy * sxy) / (sxx * syy);
  return fit;
}

/// Running mean / second central moment; merges are order-dependent only
/// through the caller's fixed merge order.
struct Moments {
  double count = 0.0;
  double mean = 0.0;
  double m2 = 0.0;

  void add(double x) noexcept {
    count += 1.0;
    const double d = x - mean;
    mean += d / count;
    m2 += d * (x - mean);
  }

  void merge(const Moments& o) noexcept {
    if (o.count == 0.0) return;
    if (count == 0.0) {
      *this = o;
      return;
    }
    const double total = count + o.count;
    const double d = o.mean - mean;
    mean += d * o.count / total;
    m2 += o.m2 + d * d * count * o.count / total;
    count = total;
  }

  double variance() const noexcept { return count > 1.0 ? m2 / (count - 1.0) : 0.0; }
  /// Jackknife standard error of the mean (coincides with sd / sqrt(R)).
  double std_error() const noexcept { return count > 1.0 ? std::sqrt(variance() / count) : 0.0; }
};

/// L^p norm estimate (mean of |X|^p)^{1/p} from moments of |X|^p, with a
/// delta-method standard error propagated from the jackknife s.e. of the mean.
struct NormEstimate {
  double value = 0.0;
  double std_error = 0.0;
};

inline NormEstimate root_of_power_mean(const Moments& powered, double p) noexcept {
  NormEstimate out;
  if (powered.mean <= 0.0) return out;
  out.value = std::pow(powered.mean, 1.0 / p);
  out.std_error = out.value / (p * powered.mean) * powered.std_error();
  return out;
}

/// Type-1 empirical quantile (the ceil(q R)-th order statistic).
inline double empirical_quantile(std::vector<double> sample, double q) {
  if (sample.empty()) throw ParameterError("empirical_quantile: empty sample");
  std::sort(sample.begin(), sample.end());
  const auto r = sample.size();
  auto k = static_cast<std::size_t>(std::ceil(q * static_cast<double>(r)));
  k = std::clamp<std::size_t>(k, 1, r);
  return sample[k - 1];
}

/// Distribution-free half-width of a ~68% interval for the q-quantile,
/// from the binomial spread of order-statistic ranks.
inline double quantile_std_error(std::vector<double> sample, double q) {
  std::sort(sample.begin(), sample.end());
  const double r = static_cast<double>(sample.size());
  const double spread = std::sqrt(r * q * (1.0 - q));
  auto at = [&](double rank) {
    const auto k = static_cast<std::size_t>(std::clamp(std::ceil(rank), 1.0, r));
    return sample[k - 1];
  };
  return 0.5 * (at(q * r + spread) - at(q * r - spread));
}

}  // namespace fdnet::stats
