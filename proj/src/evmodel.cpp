#include "bmot/evmodel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/core.h>

#include "bmot/error.hpp"

namespace bmot {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double threshold_tolerance(double u) { return 1e-9 * std::max(1.0, std::abs(u)); }

// Sum of GEV log densities; -inf as soon as one value leaves the support.
double sum_gev_log_density(std::span<const double> values, const GevParams& g) {
  const double log_sigma = std::log(g.sigma);
  double total = 0.0;
  for (double y : values) {
    const double lt = gev_log_t(y, g);
    if (!std::isfinite(lt)) return -kInf;
    total += -log_sigma + (g.xi + 1.0) * lt - std::exp(lt);
  }
  return total;
}

}  // namespace

void BmotParams::validate() const {
  if (!(lambda_u > 0.0) || !std::isfinite(lambda_u) || !(sigma_tilde_u > 0.0) ||
      !std::isfinite(sigma_tilde_u) || !std::isfinite(xi) || !std::isfinite(u)) {
    throw InvalidParameters(fmt::format(
        "BMOT parameters need lambda_u > 0, sigma_tilde_u > 0 and finite values "
        "(lambda_u={}, sigma_tilde_u={}, xi={}, u={})",
        lambda_u, sigma_tilde_u, xi, u));
  }
}

CensoredGevParams::CensoredGevParams(const GevParams& gev, double u) : gev_(gev), u_(u) {
  gev.validate();
  if (!std::isfinite(u)) throw InvalidParameters("censoring point u must be finite");
  const double slack = gev.sigma - gev.xi * (gev.mu - u);
  if (!(slack > 0.0)) {
    throw InvalidParameters(fmt::format(
        "constraint sigma > xi * (mu - u) violated: sigma - xi*(mu - u) = {} "
        "(mu={}, sigma={}, xi={}, u={})",
        slack, gev.mu, gev.sigma, gev.xi, u));
  }
}

CensoredGevParams gev_from_bmot(const BmotParams& p) {
  p.validate();
  const double log_lambda = std::log(p.lambda_u);
  GevParams g;
  g.xi = p.xi;
  if (std::abs(p.xi) < kShapeSwitch) {
    g.mu = p.u + p.sigma_tilde_u * log_lambda;
    g.sigma = p.sigma_tilde_u;
  } else {
    g.mu = p.u + p.sigma_tilde_u * std::expm1(p.xi * log_lambda) / p.xi;
    g.sigma = p.sigma_tilde_u * std::exp(p.xi * log_lambda);
  }
  return CensoredGevParams(g, p.u, CensoredGevParams::Unchecked{});
}

BmotParams bmot_from_gev(const CensoredGevParams& c) {
  const GevParams& g = c.gev();
  BmotParams p;
  p.xi = g.xi;
  p.u = c.u();
  if (std::abs(g.xi) < kShapeSwitch) {
    p.sigma_tilde_u = g.sigma;
    p.lambda_u = std::exp((g.mu - c.u()) / g.sigma);
  } else {
    const double r = g.xi * (g.mu - c.u()) / g.sigma;
    p.sigma_tilde_u = g.sigma * (1.0 - r);
    p.lambda_u = std::exp(-std::log1p(-r) / g.xi);
  }
  return p;
}

double censored_gev_cdf(double x, const CensoredGevParams& p) {
  if (std::isnan(x) || x < p.u()) {
    throw DomainError(fmt::format(
        "censored_gev_cdf: x={} is below the censoring point u={}; the law is not specified there",
        x, p.u()));
  }
  return gev_cdf(x, p.gev());
}

CensoredGevParams bundle_max_params(const BmotParams& p, std::size_t n_tubes) {
  if (n_tubes == 0) throw DomainError("bundle_max_params: n_tubes must be >= 1");
  BmotParams scaled = p;
  scaled.lambda_u = static_cast<double>(n_tubes) * p.lambda_u;
  return gev_from_bmot(scaled);
}

double sample_tube_maximum(const BmotParams& p, Rng& rng) {
  p.validate();
  const std::int64_t k = poisson_sample(p.lambda_u, rng);
  if (k == 0) return p.u;
  const GpdParams depth{p.sigma_tilde_u, p.xi, p.u};
  double deepest = -kInf;
  for (std::int64_t i = 0; i < k; ++i) deepest = std::max(deepest, gpd_sample(depth, rng));
  return deepest;
}

// --- Dataset -----------------------------------------------------------------

Dataset::Dataset(std::vector<Observation> observations)
    : observations_(std::move(observations)), u_(-kInf), has_threshold_(false) {
  validate_values();
  exceedances_.resize(observations_.size());
  for (std::size_t i = 0; i < observations_.size(); ++i) exceedances_[i] = i;
}

Dataset::Dataset(std::vector<Observation> observations, double u)
    : observations_(std::move(observations)), u_(u), has_threshold_(true) {
  if (!std::isfinite(u)) throw ConfigError(fmt::format("threshold must be finite, got {}", u));
  validate_values();
  const double eps = threshold_tolerance(u);
  for (std::size_t i = 0; i < observations_.size(); ++i) {
    const Observation& o = observations_[i];
    if (!o.is_interval()) {
      if (o.value > u) exceedances_.push_back(i);
      continue;
    }
    if (o.lower() >= u - eps) {
      exceedances_.push_back(i);
    } else if (o.upper() > u + eps) {
      throw ConfigError(fmt::format(
          "observation {} (value {} +/- {}) straddles the threshold u={}; place the threshold on "
          "a rounding-interval boundary such as {} or {}",
          i + 1, o.value, o.half_width, u, o.lower(), o.upper()));
    }
  }
}

void Dataset::validate_values() const {
  for (std::size_t i = 0; i < observations_.size(); ++i) {
    const Observation& o = observations_[i];
    if (!std::isfinite(o.value) || !std::isfinite(o.half_width) || o.half_width < 0.0) {
      throw ConfigError(fmt::format("observation {} is invalid (value {}, half-width {})", i + 1,
                                    o.value, o.half_width));
    }
  }
}

std::vector<double> Dataset::exceedance_values() const {
  std::vector<double> out;
  out.reserve(exceedances_.size());
  for (std::size_t i : exceedances_) out.push_back(observations_[i].value);
  return out;
}

double Dataset::imputation_lower(std::size_t exceedance) const {
  const double lo = observations_.at(exceedances_.at(exceedance)).lower();
  return has_threshold_ ? std::max(lo, u_) : lo;
}

double Dataset::imputation_upper(std::size_t exceedance) const {
  return observations_.at(exceedances_.at(exceedance)).upper();
}

// --- priors ------------------------------------------------------------------

GammaShapeRate gamma_from_mean_sd(double mean, double sd) {
  if (!(mean > 0.0) || !(sd > 0.0) || !std::isfinite(mean) || !std::isfinite(sd)) {
    throw DomainError(fmt::format("Gamma moments must be positive (mean={}, sd={})", mean, sd));
  }
  return {(mean / sd) * (mean / sd), mean / (sd * sd)};
}

void PriorConfig::validate() const {
  const double positives[] = {psi, alpha_sigma, beta_sigma, alpha_lambda, beta_lambda, mu_prior_sd};
  for (double v : positives) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw ConfigError(fmt::format(
          "prior hyperparameters must be positive (psi={}, alpha_sigma={}, beta_sigma={}, "
          "alpha_lambda={}, beta_lambda={}, mu_prior_sd={})",
          psi, alpha_sigma, beta_sigma, alpha_lambda, beta_lambda, mu_prior_sd));
    }
  }
  if (!std::isfinite(mu_prior_mean)) throw ConfigError("mu_prior_mean must be finite");
}

PriorConfig PriorConfig::with_lambda_moments(double mean, double sd) const {
  const auto g = gamma_from_mean_sd(mean, sd);
  PriorConfig out = *this;
  out.alpha_lambda = g.shape;
  out.beta_lambda = g.rate;
  return out;
}

PriorConfig PriorConfig::with_sigma_moments(double mean, double sd) const {
  const auto g = gamma_from_mean_sd(mean, sd);
  PriorConfig out = *this;
  out.alpha_sigma = g.shape;
  out.beta_sigma = g.rate;
  return out;
}

double lambda_prior_mean(const Dataset& data) {
  if (data.n() == 0) throw DomainError("lambda_prior_mean: empty dataset");
  const double n = static_cast<double>(data.n());
  const double ratio = std::clamp(static_cast<double>(data.n_minus()) / n, 0.5 / n, 1.0 - 0.5 / n);
  return -std::log(ratio);
}

double log_prior_xi(double xi, double psi) {
  if (!(xi > -0.5 && xi < 0.5)) return -kInf;
  const double p = xi + 0.5;
  const double q = 0.5 - xi;
  // Density of xi when logit(xi + 0.5) ~ Normal(0, psi): Jacobian 1 / (p q).
  return normal_log_density(std::log(p / q), 0.0, psi) - std::log(p) - std::log(q);
}

double log_prior(const BmotParams& p, const PriorConfig& cfg) {
  const double xi_term = log_prior_xi(p.xi, cfg.psi);
  if (!std::isfinite(xi_term)) return -kInf;
  const double sigma = gev_from_bmot(p).gev().sigma;
  return gamma_log_density(p.lambda_u, cfg.alpha_lambda, cfg.beta_lambda) +
         gamma_log_density(sigma, cfg.alpha_sigma, cfg.beta_sigma) + xi_term;
}

double log_prior(const GevParams& p, const PriorConfig& cfg) {
  p.validate();
  const double xi_term = log_prior_xi(p.xi, cfg.psi);
  if (!std::isfinite(xi_term)) return -kInf;
  return normal_log_density(p.mu, cfg.mu_prior_mean, cfg.mu_prior_sd) +
         gamma_log_density(p.sigma, cfg.alpha_sigma, cfg.beta_sigma) + xi_term;
}

// --- likelihood ----------------------------------------------------------------

double log_likelihood_censored(const Dataset& data, const BmotParams& p,
                               std::span<const double> exceedance_values) {
  if (!data.has_threshold()) {
    throw ConfigError("censored likelihood needs a dataset split at a threshold");
  }
  if (std::abs(data.threshold() - p.u) > threshold_tolerance(p.u)) {
    throw ConfigError(fmt::format("threshold mismatch: dataset u={}, parameters u={}",
                                  data.threshold(), p.u));
  }
  if (!exceedance_values.empty() && exceedance_values.size() != data.n_plus()) {
    throw ConfigError(fmt::format("expected {} exceedance values, got {}", data.n_plus(),
                                  exceedance_values.size()));
  }
  const GevParams g = gev_from_bmot(p).gev();
  const double censored_part = -p.lambda_u * static_cast<double>(data.n_minus());
  if (exceedance_values.empty()) {
    const std::vector<double> recorded = data.exceedance_values();
    return censored_part + sum_gev_log_density(recorded, g);
  }
  return censored_part + sum_gev_log_density(exceedance_values, g);
}

double log_likelihood_standard_gev(std::span<const double> values, const GevParams& p) {
  if (values.empty()) throw DomainError("log_likelihood_standard_gev: no values");
  p.validate();
  return sum_gev_log_density(values, p);
}

double log_posterior(const Dataset& data, const BmotParams& p, const PriorConfig& cfg,
                     std::span<const double> exceedance_values) {
  const double lp = log_prior(p, cfg);
  if (!std::isfinite(lp)) return -kInf;
  return lp + log_likelihood_censored(data, p, exceedance_values);
}

double log_posterior(const Dataset& data, const GevParams& p, const PriorConfig& cfg,
                     std::span<const double> values) {
  const double lp = log_prior(p, cfg);
  if (!std::isfinite(lp)) return -kInf;
  if (!values.empty()) {
    if (values.size() != data.n()) {
      throw ConfigError(
          fmt::format("expected {} observation values, got {}", data.n(), values.size()));
    }
    return lp + log_likelihood_standard_gev(values, p);
  }
  if (data.n() == 0) return lp;
  std::vector<double> recorded;
  recorded.reserve(data.n());
  for (const auto& o : data.observations()) recorded.push_back(o.value);
  return lp + log_likelihood_standard_gev(recorded, p);
}

}  // namespace bmot
