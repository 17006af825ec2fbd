#include "bmot/dists.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <boost/math/distributions/binomial.hpp>
#include <boost/math/special_functions/erf.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <fmt/core.h>

#include "bmot/error.hpp"

namespace bmot {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void require_finite(double x, const char* what) {
  if (!std::isfinite(x)) throw DomainError(fmt::format("{}: non-finite argument {}", what, x));
}

void require_positive(double v, const char* what) {
  if (!(v > 0.0) || !std::isfinite(v)) {
    throw DomainError(fmt::format("{} must be finite and positive, got {}", what, v));
  }
}

// Inverse transform for a discrete law, walking outwards from an anchor k
// whose CDF and mass are known.
template <class Up, class Down>
std::int64_t invert_discrete(double u, std::int64_t k, double cdf, double pmf, std::int64_t kmax,
                             Up up_ratio, Down down_ratio) {
  if (u <= cdf) {
    while (k > 0) {
      const double below = cdf - pmf;
      if (u > below) break;
      cdf = below;
      pmf *= down_ratio(k);
      --k;
    }
    return k;
  }
  while (u > cdf && k < kmax) {
    pmf *= up_ratio(k);
    ++k;
    cdf += pmf;
    if (pmf == 0.0) break;
  }
  return k;
}

}  // namespace

// --- parameter bundles -------------------------------------------------------

void GevParams::validate() const {
  if (!std::isfinite(mu) || !std::isfinite(xi) || !std::isfinite(sigma) || !(sigma > 0.0)) {
    throw InvalidParameters(
        fmt::format("GEV parameters must be finite with sigma > 0 (mu={}, sigma={}, xi={})", mu,
                    sigma, xi));
  }
}

double GevParams::lower_bound() const { return xi > kShapeSwitch ? mu - sigma / xi : -kInf; }

double GevParams::upper_bound() const { return xi < -kShapeSwitch ? mu - sigma / xi : kInf; }

void GpdParams::validate() const {
  if (!std::isfinite(threshold) || !std::isfinite(xi) || !std::isfinite(sigma_tilde) ||
      !(sigma_tilde > 0.0)) {
    throw InvalidParameters(fmt::format(
        "GPD parameters must be finite with sigma_tilde > 0 (sigma_tilde={}, xi={}, u={})",
        sigma_tilde, xi, threshold));
  }
}

double GpdParams::upper_bound() const {
  return xi < -kShapeSwitch ? threshold - sigma_tilde / xi : kInf;
}

// --- GEV ---------------------------------------------------------------------

double gev_log_t(double x, const GevParams& p) {
  const double z = (x - p.mu) / p.sigma;
  if (std::abs(p.xi) < kShapeSwitch) return -z;
  const double a = p.xi * z;
  if (a <= -1.0) return p.xi > 0.0 ? kInf : -kInf;
  return -std::log1p(a) / p.xi;
}

double gev_log_density(double x, const GevParams& p) {
  require_finite(x, "gev_log_density");
  p.validate();
  const double lt = gev_log_t(x, p);
  if (!std::isfinite(lt)) return -kInf;
  return -std::log(p.sigma) + (p.xi + 1.0) * lt - std::exp(lt);
}

double gev_cdf(double x, const GevParams& p) {
  require_finite(x, "gev_cdf");
  p.validate();
  return std::exp(-std::exp(gev_log_t(x, p)));
}

double gev_survival(double x, const GevParams& p) {
  require_finite(x, "gev_survival");
  p.validate();
  return -std::expm1(-std::exp(gev_log_t(x, p)));
}

double gev_quantile_from_log_t(double log_t, const GevParams& p) {
  if (std::abs(p.xi) < kShapeSwitch) return p.mu - p.sigma * log_t;
  return p.mu + p.sigma * std::expm1(-p.xi * log_t) / p.xi;
}

double gev_quantile(double q, const GevParams& p) {
  if (!(q > 0.0 && q < 1.0)) throw DomainError(fmt::format("gev_quantile: q={} not in (0,1)", q));
  p.validate();
  return gev_quantile_from_log_t(std::log(-std::log(q)), p);
}

double gev_sample(const GevParams& p, Rng& rng) { return gev_quantile(rng.uniform(), p); }

double gev_sample_truncated(const GevParams& p, double lo, double hi, Rng& rng) {
  p.validate();
  if (std::isnan(lo) || std::isnan(hi) || lo > hi) {
    throw DomainError(fmt::format("gev_sample_truncated: invalid interval [{}, {}]", lo, hi));
  }
  const double lt_lo = gev_log_t(lo, p);
  const double lt_hi = gev_log_t(hi, p);
  const double g_lo = std::exp(-std::exp(lt_lo));
  const double u = rng.uniform();

  double mass = 0.0;
  double lt_star = 0.0;
  if (g_lo > 0.5) {
    // Upper tail: invert the survival function to keep precision.
    const double s_lo = -std::expm1(-std::exp(lt_lo));
    const double s_hi = -std::expm1(-std::exp(lt_hi));
    mass = s_lo - s_hi;
    const double s_star = s_lo - u * mass;
    lt_star = std::log(-std::log1p(-s_star));
  } else {
    const double g_hi = std::exp(-std::exp(lt_hi));
    mass = g_hi - g_lo;
    const double g_star = g_lo + u * mass;
    lt_star = std::log(-std::log(g_star));
  }

  if (!(mass > 0.0)) {
    const double a = std::max(lo, p.lower_bound());
    const double b = std::min(hi, p.upper_bound());
    if (a <= b && std::isfinite(a) && std::isfinite(b)) return 0.5 * (a + b);
    throw DegenerateInterval(fmt::format(
        "gev_sample_truncated: [{}, {}] has no mass under GEV(mu={}, sigma={}, xi={})", lo, hi,
        p.mu, p.sigma, p.xi));
  }
  return std::clamp(gev_quantile_from_log_t(lt_star, p), lo, hi);
}

GevParams gev_block_max(const GevParams& p, double n) {
  p.validate();
  if (!(n >= 1.0) || !std::isfinite(n)) {
    throw DomainError(fmt::format("gev_block_max: block size {} must be >= 1", n));
  }
  const double log_n = std::log(n);
  if (std::abs(p.xi) < kShapeSwitch) return {p.mu + p.sigma * log_n, p.sigma, p.xi};
  return {p.mu + p.sigma * std::expm1(p.xi * log_n) / p.xi, p.sigma * std::exp(p.xi * log_n),
          p.xi};
}

// --- GPD ---------------------------------------------------------------------

namespace {

// log S(x) for x at or above the threshold; -inf beyond a finite end-point.
double gpd_log_survival(double x, const GpdParams& p) {
  const double y = (x - p.threshold) / p.sigma_tilde;
  if (std::abs(p.xi) < kShapeSwitch) return -y;
  const double a = p.xi * y;
  if (a <= -1.0) return -kInf;
  return -std::log1p(a) / p.xi;
}

double gpd_from_log_survival(double log_s, const GpdParams& p) {
  if (std::abs(p.xi) < kShapeSwitch) return p.threshold - p.sigma_tilde * log_s;
  return p.threshold + p.sigma_tilde * std::expm1(-p.xi * log_s) / p.xi;
}

void require_above_threshold(double x, const GpdParams& p, const char* what) {
  require_finite(x, what);
  p.validate();
  if (x < p.threshold) {
    throw DomainError(fmt::format("{}: x={} below threshold {}", what, x, p.threshold));
  }
}

}  // namespace

double gpd_survival(double x, const GpdParams& p) {
  require_above_threshold(x, p, "gpd_survival");
  return std::exp(gpd_log_survival(x, p));
}

double gpd_cdf(double x, const GpdParams& p) {
  require_above_threshold(x, p, "gpd_cdf");
  return -std::expm1(gpd_log_survival(x, p));
}

double gpd_log_density(double x, const GpdParams& p) {
  require_above_threshold(x, p, "gpd_log_density");
  const double log_s = gpd_log_survival(x, p);
  if (log_s == -kInf) return -kInf;
  // f = S^(1 + xi) / sigma_tilde
  return (1.0 + p.xi) * log_s - std::log(p.sigma_tilde);
}

double gpd_quantile(double q, const GpdParams& p) {
  p.validate();
  if (!(q >= 0.0 && q < 1.0)) throw DomainError(fmt::format("gpd_quantile: q={} not in [0,1)", q));
  return gpd_from_log_survival(std::log1p(-q), p);
}

double gpd_sample(const GpdParams& p, Rng& rng) {
  p.validate();
  return gpd_from_log_survival(std::log(rng.uniform()), p);
}

// --- Gamma -------------------------------------------------------------------

double gamma_log_density(double x, double shape, double rate) {
  require_positive(shape, "gamma shape");
  require_positive(rate, "gamma rate");
  if (std::isnan(x)) throw DomainError("gamma_log_density: NaN argument");
  if (x < 0.0 || std::isinf(x)) return -kInf;
  if (x == 0.0) {
    if (shape < 1.0) return kInf;
    return shape == 1.0 ? std::log(rate) : -kInf;
  }
  return shape * std::log(rate) - boost::math::lgamma(shape) + (shape - 1.0) * std::log(x) -
         rate * x;
}

double gamma_quantile(double q, double shape, double rate) {
  require_positive(shape, "gamma shape");
  require_positive(rate, "gamma rate");
  if (!(q > 0.0 && q < 1.0)) throw DomainError(fmt::format("gamma_quantile: q={} not in (0,1)", q));
  const double x = q <= 0.5 ? boost::math::gamma_p_inv(shape, q)
                            : boost::math::gamma_q_inv(shape, 1.0 - q);
  return std::max(x, std::numeric_limits<double>::min()) / rate;
}

double gamma_sample(double shape, double rate, Rng& rng) {
  return gamma_quantile(rng.uniform(), shape, rate);
}

// --- Poisson / binomial ------------------------------------------------------

double poisson_log_pmf(std::int64_t k, double rate) {
  require_positive(rate, "poisson rate");
  if (k < 0) return -kInf;
  const auto kd = static_cast<double>(k);
  return kd * std::log(rate) - rate - boost::math::lgamma(kd + 1.0);
}

std::int64_t poisson_sample(double rate, Rng& rng) {
  require_positive(rate, "poisson rate");
  const double u = rng.uniform();
  const auto mode = static_cast<std::int64_t>(std::floor(rate));
  const double cdf = boost::math::gamma_q(static_cast<double>(mode) + 1.0, rate);
  const double pmf = std::exp(poisson_log_pmf(mode, rate));
  return invert_discrete(
      u, mode, cdf, pmf, std::numeric_limits<std::int64_t>::max(),
      [rate](std::int64_t k) { return rate / static_cast<double>(k + 1); },
      [rate](std::int64_t k) { return static_cast<double>(k) / rate; });
}

std::int64_t binomial_sample(std::int64_t n, double p, Rng& rng) {
  if (n < 0) throw DomainError(fmt::format("binomial_sample: n={} negative", n));
  if (!(p >= 0.0 && p <= 1.0)) throw DomainError(fmt::format("binomial_sample: p={} not in [0,1]", p));
  const double u = rng.uniform();
  if (p == 0.0 || n == 0) return 0;
  if (p == 1.0) return n;
  const boost::math::binomial_distribution<double> law(static_cast<double>(n), p);
  const auto mode =
      std::min(n, static_cast<std::int64_t>(std::floor(static_cast<double>(n + 1) * p)));
  const double cdf = boost::math::cdf(law, static_cast<double>(mode));
  const double pmf = boost::math::pdf(law, static_cast<double>(mode));
  const double odds = p / (1.0 - p);
  return invert_discrete(
      u, mode, cdf, pmf, n,
      [n, odds](std::int64_t k) {
        return static_cast<double>(n - k) / static_cast<double>(k + 1) * odds;
      },
      [n, odds](std::int64_t k) {
        return static_cast<double>(k) / static_cast<double>(n - k + 1) / odds;
      });
}

// --- Normal ------------------------------------------------------------------

double normal_log_density(double x, double mean, double sd) {
  require_positive(sd, "normal sd");
  const double z = (x - mean) / sd;
  return -0.5 * std::log(2.0 * std::numbers::pi) - std::log(sd) - 0.5 * z * z;
}

double normal_quantile(double q, double mean, double sd) {
  require_positive(sd, "normal sd");
  if (!(q > 0.0 && q < 1.0)) throw DomainError(fmt::format("normal_quantile: q={} not in (0,1)", q));
  return mean - sd * std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * q);
}

double normal_sample(double mean, double sd, Rng& rng) {
  return normal_quantile(rng.uniform(), mean, sd);
}

}  // namespace bmot
