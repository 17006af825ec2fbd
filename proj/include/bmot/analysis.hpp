#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "bmot/evmodel.hpp"
#include "bmot/sampler.hpp"

namespace bmot {

struct ParamSummary {
  double mean = 0.0;
  double sd = 0.0;
  Interval hdi{0.0, 0.0};
};

ParamSummary summarize(std::span<const double> draws);

struct FitReport {
  ModelKind kind = ModelKind::censored_gev;
  double u = 0.0;  // NaN for the standard model
  std::size_t n = 0;
  std::size_t n_plus = 0;
  std::size_t n_minus = 0;
  std::map<std::string, ParamSummary> params;  // mu, sigma, xi (+ lambda_u when censored)
  double prob_xi_positive = 0.0;
  std::map<std::string, double> rhat;
  double rhat_max = 0.0;
  bool converged = true;
  std::vector<double> accept_rate;
  std::vector<std::string> warnings;
  std::uint64_t seed = 0;
};

FitReport make_report(const PosteriorSamples& samples, const Dataset& data);

struct FitResult {
  FitReport report;
  PosteriorSamples samples;
};

// Runs the sampler for one model. For the standard model any threshold on
// `data` is ignored.
FitResult fit(const Dataset& data, ModelKind kind, const PriorConfig& priors,
              const SamplerConfig& cfg);

// Gamma prior on lambda_u with mean -ln(n_minus / n) and the given sd.
PriorConfig priors_for_threshold(const Dataset& data, const PriorConfig& base, double lambda_sd);

// --- fit assessment ------------------------------------------------------------

struct PredictiveResult {
  std::vector<double> values;          // n_rep_per_draw values per posterior draw
  std::vector<std::uint8_t> at_or_below_u;  // censored model: value is the atom marker
  std::size_t n_at_or_below_u = 0;
  Interval hdi{0.0, 0.0};

  double upper_hdi() const { return hdi.hi; }
};

PredictiveResult posterior_predictive(const PosteriorSamples& samples, std::size_t n_rep_per_draw,
                                      Rng& rng);

struct QqRow {
  double empirical_q;           // recorded value of the rounding bin
  double plotting_position;     // i / (n + 1) at the bin's mid rank
  std::size_t count;            // observations in the bin
  double model_q_mean;
  Interval model_q_hdi;
};

// Censored model: only bins above u, with quantiles of the law conditioned
// on exceeding u.
std::vector<QqRow> qq_data(const PosteriorSamples& samples, const Dataset& data);

// --- extrapolation ---------------------------------------------------------------

enum class BundleMethod { closed_form, literal };

struct MaxPrediction {
  std::vector<double> draws;  // one per posterior draw, chain-major
  double mean = 0.0;
  Interval hdi{0.0, 0.0};

  double upper_hdi() const { return hdi.hi; }
};

// Maximum wall loss over n_star unobserved tubes, one realisation per
// posterior draw. closed_form samples the max-stable bundle law directly;
// literal draws n_star tube maxima and keeps the largest.
MaxPrediction predict_max_wall_loss(const PosteriorSamples& samples, std::size_t n_star, Rng& rng,
                                    BundleMethod method = BundleMethod::closed_form);

struct CountPrediction {
  std::vector<std::int64_t> draws;
  double mean = 0.0;
  Interval hdi{0.0, 0.0};
};

// Number of pits deeper than `depth` over n_star tubes:
// N ~ Poisson(n_star * lambda_u * gpd_survival(depth)) per posterior draw.
CountPrediction expected_exceedance_count(const PosteriorSamples& samples, double depth,
                                          std::size_t n_star, Rng& rng);

// --- threshold selection -----------------------------------------------------------

struct ThresholdScanRow {
  ModelKind kind = ModelKind::censored_gev;
  double u = 0.0;
  std::size_t n_plus = 0;
  double xi_mean = 0.0;
  Interval xi_hdi{0.0, 0.0};
  double rhat_max = 0.0;
};

struct ScanResult {
  std::vector<ThresholdScanRow> rows;  // standard-GEV row first (u = 0), then by increasing u
  std::vector<std::string> warnings;
};

ScanResult threshold_scan(const std::vector<Observation>& observations,
                          std::vector<double> candidates, const PriorConfig& priors,
                          double lambda_prior_sd, const SamplerConfig& cfg);

struct ThresholdSelection {
  double u = 0.0;
  bool stable = false;  // false when the fallback rule was used
};

// Smallest candidate whose 95% HDI for xi contains every higher candidate's
// posterior mean; otherwise the candidate minimising
// HDI width * |xi_mean - xi_mean(highest u)|. Standard-model rows are ignored.
ThresholdSelection select_threshold(std::span<const ThresholdScanRow> rows);

// Rounding-interval end-points usable as thresholds: no interval straddles
// them, at least one observation lies at or below and at least
// `min_exceedances` above.
std::vector<double> rounding_boundaries(const std::vector<Observation>& observations,
                                        std::size_t min_exceedances);

}  // namespace bmot
