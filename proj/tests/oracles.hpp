#pragma once

// Reference formulas written directly from the textbook definitions, in long
// double and without the log1p / expm1 rewrites the library uses, plus small
// statistical helpers for Monte Carlo checks.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

namespace oracle {

inline long double gev_cdf(long double x, long double mu, long double sigma, long double xi) {
  const long double z = (x - mu) / sigma;
  if (xi == 0.0L) return std::exp(-std::exp(-z));
  const long double base = 1.0L + xi * z;
  if (base <= 0.0L) return xi > 0.0L ? 0.0L : 1.0L;
  return std::exp(-std::pow(base, -1.0L / xi));
}

inline long double gev_pdf(long double x, long double mu, long double sigma, long double xi) {
  const long double z = (x - mu) / sigma;
  if (xi == 0.0L) {
    const long double t = std::exp(-z);
    return t * std::exp(-t) / sigma;
  }
  const long double base = 1.0L + xi * z;
  if (base <= 0.0L) return 0.0L;
  const long double t = std::pow(base, -1.0L / xi);
  return std::pow(base, -1.0L / xi - 1.0L) * std::exp(-t) / sigma;
}

inline long double gpd_survival(long double x, long double u, long double st, long double xi) {
  const long double y = (x - u) / st;
  if (xi == 0.0L) return std::exp(-y);
  const long double base = 1.0L + xi * y;
  if (base <= 0.0L) return 0.0L;
  return std::pow(base, -1.0L / xi);
}

// One-sample Kolmogorov-Smirnov distance of `sample` against `cdf`.
inline double ks_distance(std::vector<double> sample, const std::function<double(double)>& cdf) {
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(sample.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double f = cdf(sample[i]);
    d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
  }
  return d;
}

// Two-sample Kolmogorov-Smirnov distance.
inline double ks_two_sample(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return d;
}

inline double mean(const std::vector<double>& x) {
  long double s = 0.0L;
  for (double v : x) s += v;
  return static_cast<double>(s / x.size());
}

inline double variance(const std::vector<double>& x) {
  const double m = mean(x);
  long double s = 0.0L;
  for (double v : x) s += (v - m) * (v - m);
  return static_cast<double>(s / (x.size() - 1));
}

// Monte Carlo standard error of the mean of a correlated series by batch means.
inline double batch_means_se(const std::vector<double>& x, std::size_t batches = 40) {
  const std::size_t len = x.size() / batches;
  std::vector<double> means;
  for (std::size_t b = 0; b < batches; ++b) {
    long double s = 0.0L;
    for (std::size_t i = b * len; i < (b + 1) * len; ++i) s += x[i];
    means.push_back(static_cast<double>(s / len));
  }
  return std::sqrt(variance(means) / static_cast<double>(batches));
}

}  // namespace oracle
