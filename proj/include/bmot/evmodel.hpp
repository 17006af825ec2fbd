#pragma once

// Block maxima over threshold: tube maxima modelled as a GEV left-censored at
// a threshold u, generated by a Poisson(lambda_u) count of pits deeper than u
// with GPD(sigma_tilde_u, xi) depths above u.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "bmot/dists.hpp"
#include "bmot/rng.hpp"

namespace bmot {

/// Generative parameterisation (lambda_u, sigma_tilde_u, xi, u).
struct BmotParams {
  double lambda_u = 1.0;
  double sigma_tilde_u = 1.0;
  double xi = 0.0;
  double u = 0.0;

  void validate() const;
};

/// GEV parameters together with the left-censoring point. Construction
/// enforces sigma > xi (mu - u).
class CensoredGevParams {
 public:
  CensoredGevParams(const GevParams& gev, double u);

  const GevParams& gev() const { return gev_; }
  double u() const { return u_; }

 private:
  struct Unchecked {};
  CensoredGevParams(const GevParams& gev, double u, Unchecked) : gev_(gev), u_(u) {}
  friend CensoredGevParams gev_from_bmot(const BmotParams& p);

  GevParams gev_;
  double u_;
};

CensoredGevParams gev_from_bmot(const BmotParams& p);
BmotParams bmot_from_gev(const CensoredGevParams& p);

// P(Y <= x) for x >= u; throws DomainError below u.
double censored_gev_cdf(double x, const CensoredGevParams& p);

// Law of the deepest pit over n_tubes independent tubes.
CensoredGevParams bundle_max_params(const BmotParams& p, std::size_t n_tubes);

// K ~ Poisson(lambda_u); u when K = 0, else u + max of K GPD draws.
double sample_tube_maximum(const BmotParams& p, Rng& rng);

// --- data ------------------------------------------------------------------

/// Recorded tube maximum; the true value lies in [value - half_width, value + half_width].
struct Observation {
  double value = 0.0;
  double half_width = 0.0;

  double lower() const { return value - half_width; }
  double upper() const { return value + half_width; }
  bool is_interval() const { return half_width > 0.0; }
};

/// Observations split at a threshold. Immutable after construction.
class Dataset {
 public:
  // No threshold: every observation counts as an exceedance (standard GEV).
  explicit Dataset(std::vector<Observation> observations);

  // Throws ConfigError if any rounding interval straddles u.
  Dataset(std::vector<Observation> observations, double u);

  bool has_threshold() const { return has_threshold_; }
  double threshold() const { return u_; }

  const std::vector<Observation>& observations() const { return observations_; }
  // Indices into observations() of the exceedances, in input order.
  const std::vector<std::size_t>& exceedance_index() const { return exceedances_; }

  std::size_t n() const { return observations_.size(); }
  std::size_t n_plus() const { return exceedances_.size(); }
  std::size_t n_minus() const { return n() - n_plus(); }

  // Recorded values of the exceedances.
  std::vector<double> exceedance_values() const;

  // Bounds an imputed exceedance must respect: its rounding interval,
  // clipped below at u.
  double imputation_lower(std::size_t exceedance) const;
  double imputation_upper(std::size_t exceedance) const;

 private:
  void validate_values() const;

  std::vector<Observation> observations_;
  std::vector<std::size_t> exceedances_;
  double u_;
  bool has_threshold_;
};

// --- priors ----------------------------------------------------------------

struct GammaShapeRate {
  double shape;
  double rate;
};

GammaShapeRate gamma_from_mean_sd(double mean, double sd);

/// Independent priors: logit(xi + 0.5) ~ Normal(0, psi), GEV scale
/// sigma ~ Gamma(alpha_sigma, beta_sigma), lambda_u ~ Gamma(alpha_lambda,
/// beta_lambda), and mu ~ Normal(mu_prior_mean, mu_prior_sd) for the
/// uncensored model. Defaults are the heat-exchanger case-study values.
struct PriorConfig {
  double psi = 1.4;
  double alpha_sigma = 0.16;
  double beta_sigma = 1.6;
  double alpha_lambda = 0.7225;
  double beta_lambda = 0.85;
  double mu_prior_mean = 0.1;
  double mu_prior_sd = 2.0;

  void validate() const;

  PriorConfig with_lambda_moments(double mean, double sd) const;
  PriorConfig with_sigma_moments(double mean, double sd) const;
};

// -ln(n_minus / n), with the ratio clamped to [0.5/n, 1 - 0.5/n].
double lambda_prior_mean(const Dataset& data);

double log_prior_xi(double xi, double psi);
double log_prior(const BmotParams& p, const PriorConfig& cfg);
double log_prior(const GevParams& p, const PriorConfig& cfg);

// --- likelihood / posterior ------------------------------------------------

// n_minus * (-lambda_u) + sum of GEV log densities over the exceedances.
// `exceedance_values`, when non-empty, replaces the recorded exceedance values
// (one per exceedance, in exceedance_index() order).
double log_likelihood_censored(const Dataset& data, const BmotParams& p,
                               std::span<const double> exceedance_values = {});

double log_likelihood_standard_gev(std::span<const double> values, const GevParams& p);

double log_posterior(const Dataset& data, const BmotParams& p, const PriorConfig& cfg,
                     std::span<const double> exceedance_values = {});
double log_posterior(const Dataset& data, const GevParams& p, const PriorConfig& cfg,
                     std::span<const double> exceedance_values = {});

}  // namespace bmot
