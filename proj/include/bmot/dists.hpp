#pragma once

#include <cstdint>

#include "bmot/rng.hpp"

namespace bmot {

// Below this |xi| the Gumbel / exponential limit forms are used.
inline constexpr double kShapeSwitch = 1e-8;

/// Generalised extreme value law G(x) = exp(-[1 + xi (x - mu) / sigma]_+^(-1/xi)).
struct GevParams {
  double mu = 0.0;
  double sigma = 1.0;
  double xi = 0.0;

  // Throws InvalidParameters unless sigma > 0 and every field is finite.
  void validate() const;

  // Support end-points; -inf / +inf when unbounded on that side.
  double lower_bound() const;
  double upper_bound() const;
};

/// Generalised Pareto law of exceedances over `threshold`.
struct GpdParams {
  double sigma_tilde = 1.0;
  double xi = 0.0;
  double threshold = 0.0;

  void validate() const;
  double upper_bound() const;
};

// --- GEV -------------------------------------------------------------------

// log t(x), where t(x) = [1 + xi z]^(-1/xi) and z = (x - mu) / sigma.
// +inf below a finite lower end-point, -inf above a finite upper end-point.
double gev_log_t(double x, const GevParams& p);

double gev_log_density(double x, const GevParams& p);
double gev_cdf(double x, const GevParams& p);
double gev_survival(double x, const GevParams& p);
double gev_quantile(double q, const GevParams& p);

// Inverse of gev_log_t: the x whose t-value has logarithm `log_t`.
double gev_quantile_from_log_t(double log_t, const GevParams& p);

double gev_sample(const GevParams& p, Rng& rng);

// Draw from the GEV conditioned on [lo, hi] by inverting the conditional CDF.
// Throws DegenerateInterval when the interval carries no mass.
double gev_sample_truncated(const GevParams& p, double lo, double hi, Rng& rng);

// Law of the maximum of n iid GEV(p) variables (max-stability).
GevParams gev_block_max(const GevParams& p, double n);

// --- GPD -------------------------------------------------------------------

// Defined for x at or above the threshold; DomainError below it.
double gpd_survival(double x, const GpdParams& p);
double gpd_cdf(double x, const GpdParams& p);
double gpd_log_density(double x, const GpdParams& p);
double gpd_quantile(double q, const GpdParams& p);
double gpd_sample(const GpdParams& p, Rng& rng);

// --- Gamma (shape, rate) ---------------------------------------------------

double gamma_log_density(double x, double shape, double rate);
double gamma_sample(double shape, double rate, Rng& rng);
double gamma_quantile(double q, double shape, double rate);

// --- Poisson / binomial ----------------------------------------------------

double poisson_log_pmf(std::int64_t k, double rate);
std::int64_t poisson_sample(double rate, Rng& rng);
std::int64_t binomial_sample(std::int64_t n, double p, Rng& rng);

// --- Normal ----------------------------------------------------------------

double normal_log_density(double x, double mean, double sd);
double normal_quantile(double q, double mean = 0.0, double sd = 1.0);
double normal_sample(double mean, double sd, Rng& rng);

}  // namespace bmot
