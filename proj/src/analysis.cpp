#include "bmot/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/core.h>

#include "bmot/error.hpp"

namespace bmot {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void require_draws(const PosteriorSamples& s) {
  if (s.total_draws() == 0) throw DomainError("posterior sample is empty");
}

}  // namespace

ParamSummary summarize(std::span<const double> draws) {
  return {mean(draws), sample_sd(draws), hdi(draws)};
}

FitReport make_report(const PosteriorSamples& samples, const Dataset& data) {
  require_draws(samples);
  FitReport r;
  r.kind = samples.kind;
  r.u = samples.u;
  r.n = data.n();
  if (samples.kind == ModelKind::censored_gev) {
    r.n_plus = data.n_plus();
    r.n_minus = data.n_minus();
  } else {
    r.n_plus = data.n();
    r.n_minus = 0;
  }
  std::vector<Param> params{Param::mu, Param::sigma, Param::xi};
  if (samples.kind == ModelKind::censored_gev) params.push_back(Param::lambda_u);
  for (Param p : params) r.params[to_string(p)] = summarize(samples.column(p));

  const auto xi = samples.column(Param::xi);
  const auto positive = std::count_if(xi.begin(), xi.end(), [](double v) { return v > 0.0; });
  r.prob_xi_positive = static_cast<double>(positive) / static_cast<double>(xi.size());
  r.rhat = samples.rhat;
  r.rhat_max = samples.rhat_max;
  r.converged = samples.converged;
  r.accept_rate = samples.accept_rate;
  r.warnings = samples.warnings;
  r.seed = samples.seed;
  return r;
}

FitResult fit(const Dataset& data, ModelKind kind, const PriorConfig& priors,
              const SamplerConfig& cfg) {
  PosteriorSamples samples = run_chains(data, kind, priors, cfg);
  FitReport report = make_report(samples, data);
  return {std::move(report), std::move(samples)};
}

PriorConfig priors_for_threshold(const Dataset& data, const PriorConfig& base, double lambda_sd) {
  return base.with_lambda_moments(lambda_prior_mean(data), lambda_sd);
}

// --- fit assessment ------------------------------------------------------------

PredictiveResult posterior_predictive(const PosteriorSamples& samples, std::size_t n_rep_per_draw,
                                      Rng& rng) {
  require_draws(samples);
  if (n_rep_per_draw == 0) throw DomainError("posterior_predictive: n_rep_per_draw must be >= 1");
  PredictiveResult out;
  const std::size_t total = samples.total_draws() * n_rep_per_draw;
  out.values.reserve(total);
  out.at_or_below_u.reserve(total);
  for (const auto& chain : samples.chains) {
    for (const auto& d : chain) {
      if (samples.kind == ModelKind::censored_gev) {
        const BmotParams b = to_bmot(d, samples.u);
        for (std::size_t r = 0; r < n_rep_per_draw; ++r) {
          const double y = sample_tube_maximum(b, rng);
          const bool atom = y <= samples.u;
          out.values.push_back(y);
          out.at_or_below_u.push_back(atom);
          out.n_at_or_below_u += atom;
        }
      } else {
        const GevParams g = to_gev(d);
        for (std::size_t r = 0; r < n_rep_per_draw; ++r) {
          out.values.push_back(gev_sample(g, rng));
          out.at_or_below_u.push_back(0);
        }
      }
    }
  }
  out.hdi = hdi(out.values);
  return out;
}

std::vector<QqRow> qq_data(const PosteriorSamples& samples, const Dataset& data) {
  require_draws(samples);
  const bool censored = samples.kind == ModelKind::censored_gev;
  std::vector<double> values;
  if (censored) {
    const Dataset split(data.observations(), samples.u);
    values = split.exceedance_values();
  } else {
    for (const auto& o : data.observations()) values.push_back(o.value);
  }
  std::sort(values.begin(), values.end());
  const auto n = static_cast<double>(values.size());

  const std::vector<ParamDraw> draws = samples.pooled();
  std::vector<QqRow> rows;
  std::vector<double> model_q(draws.size());
  std::size_t first = 0;
  while (first < values.size()) {
    std::size_t last = first;
    while (last + 1 < values.size() && values[last + 1] == values[first]) ++last;
    // 1-based mid rank of the bin.
    const double mid_rank = 0.5 * static_cast<double>(first + last) + 1.0;
    const double p = mid_rank / (n + 1.0);
    for (std::size_t i = 0; i < draws.size(); ++i) {
      const GevParams g = to_gev(draws[i]);
      if (censored) {
        // Conditional on Y > u: P(Y > x) = (1 - p) * (1 - G(u)).
        const double above_u = -std::expm1(-draws[i].lambda_u);
        const double survival = (1.0 - p) * above_u;
        model_q[i] = gev_quantile_from_log_t(std::log(-std::log1p(-survival)), g);
      } else {
        model_q[i] = gev_quantile(p, g);
      }
    }
    rows.push_back({values[first], p, last - first + 1, mean(model_q), hdi(model_q)});
    first = last + 1;
  }
  return rows;
}

// --- extrapolation ---------------------------------------------------------------

MaxPrediction predict_max_wall_loss(const PosteriorSamples& samples, std::size_t n_star, Rng& rng,
                                    BundleMethod method) {
  require_draws(samples);
  if (n_star == 0) throw DomainError("predict_max_wall_loss: n_star must be >= 1");
  const bool censored = samples.kind == ModelKind::censored_gev;
  MaxPrediction out;
  out.draws.reserve(samples.total_draws());
  for (const auto& chain : samples.chains) {
    for (const auto& d : chain) {
      double m;
      if (method == BundleMethod::closed_form) {
        const GevParams bundle = censored ? bundle_max_params(to_bmot(d, samples.u), n_star).gev()
                                          : gev_block_max(to_gev(d), static_cast<double>(n_star));
        m = gev_sample(bundle, rng);
      } else {
        const GevParams g = to_gev(d);
        m = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < n_star; ++i) m = std::max(m, gev_sample(g, rng));
      }
      if (censored) m = std::max(m, samples.u);
      out.draws.push_back(m);
    }
  }
  out.mean = mean(out.draws);
  out.hdi = hdi(out.draws);
  return out;
}

CountPrediction expected_exceedance_count(const PosteriorSamples& samples, double depth,
                                          std::size_t n_star, Rng& rng) {
  require_draws(samples);
  if (samples.kind != ModelKind::censored_gev) {
    throw DomainError("exceedance counts need the censored-GEV model");
  }
  if (!std::isfinite(depth) || depth < samples.u) {
    throw DomainError(fmt::format("depth {} is below the threshold u={}", depth, samples.u));
  }
  if (n_star == 0) throw DomainError("expected_exceedance_count: n_star must be >= 1");
  CountPrediction out;
  out.draws.reserve(samples.total_draws());
  std::vector<double> as_double;
  as_double.reserve(samples.total_draws());
  for (const auto& chain : samples.chains) {
    for (const auto& d : chain) {
      const BmotParams b = to_bmot(d, samples.u);
      const double rate = static_cast<double>(n_star) * b.lambda_u *
                          gpd_survival(depth, GpdParams{b.sigma_tilde_u, b.xi, b.u});
      const std::int64_t k = rate > 0.0 ? poisson_sample(rate, rng) : 0;
      out.draws.push_back(k);
      as_double.push_back(static_cast<double>(k));
    }
  }
  out.mean = mean(as_double);
  out.hdi = hdi(as_double);
  return out;
}

// --- threshold selection -----------------------------------------------------------

ScanResult threshold_scan(const std::vector<Observation>& observations,
                          std::vector<double> candidates, const PriorConfig& priors,
                          double lambda_prior_sd, const SamplerConfig& cfg) {
  if (candidates.empty()) throw ConfigError("threshold_scan: no candidate thresholds");
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

  // Validate every candidate before spending any compute.
  std::vector<Dataset> splits;
  for (double u : candidates) splits.emplace_back(observations, u);

  ScanResult out;
  const Rng seeds(cfg.seed);
  auto row_config = [&](std::size_t i) {
    SamplerConfig c = cfg;
    c.seed = seeds.split(i).key();
    return c;
  };

  const Dataset all(observations);
  const FitResult standard = fit(all, ModelKind::standard_gev, priors, row_config(0));
  const auto standard_xi = standard.samples.column(Param::xi);
  out.rows.push_back({ModelKind::standard_gev, 0.0, all.n(), mean(standard_xi), hdi(standard_xi),
                      standard.samples.rhat_max});

  for (std::size_t i = 0; i < splits.size(); ++i) {
    const Dataset& d = splits[i];
    const PriorConfig p = priors_for_threshold(d, priors, lambda_prior_sd);
    const FitResult r = fit(d, ModelKind::censored_gev, p, row_config(i + 1));
    const auto xi = r.samples.column(Param::xi);
    out.rows.push_back({ModelKind::censored_gev, d.threshold(), d.n_plus(), mean(xi), hdi(xi),
                        r.samples.rhat_max});
    for (const auto& w : r.samples.warnings) {
      out.warnings.push_back(fmt::format("u={}: {}", d.threshold(), w));
    }
  }
  if (splits.back().n_plus() < 30) {
    out.warnings.push_back(fmt::format("only {} exceedances at the largest candidate u={}",
                                       splits.back().n_plus(), splits.back().threshold()));
  }
  return out;
}

ThresholdSelection select_threshold(std::span<const ThresholdScanRow> all_rows) {
  std::vector<ThresholdScanRow> rows;
  for (const auto& r : all_rows) {
    if (r.kind == ModelKind::censored_gev) rows.push_back(r);
  }
  if (rows.size() < 3) {
    throw ConfigError(fmt::format("threshold selection needs at least 3 censored rows, got {}",
                                  rows.size()));
  }
  std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.u < b.u; });

  for (std::size_t i = 0; i + 1 < rows.size(); ++i) {
    const bool stable = std::all_of(rows.begin() + static_cast<std::ptrdiff_t>(i) + 1, rows.end(),
                                    [&](const auto& r) { return rows[i].xi_hdi.contains(r.xi_mean); });
    if (stable) return {rows[i].u, true};
  }
  const double top_xi = rows.back().xi_mean;
  std::size_t best = 0;
  double best_score = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i + 1 < rows.size(); ++i) {
    const double score = rows[i].xi_hdi.width() * std::abs(rows[i].xi_mean - top_xi);
    if (score < best_score) {
      best_score = score;
      best = i;
    }
  }
  return {rows[best].u, false};
}

std::vector<double> rounding_boundaries(const std::vector<Observation>& observations,
                                        std::size_t min_exceedances) {
  std::vector<double> edges;
  for (const auto& o : observations) {
    if (!o.is_interval()) continue;
    edges.push_back(o.lower());
    edges.push_back(o.upper());
  }
  std::sort(edges.begin(), edges.end());
  std::vector<double> unique;
  for (double e : edges) {
    if (unique.empty() || e - unique.back() > 1e-9 * std::max(1.0, std::abs(e))) {
      unique.push_back(e);
    }
  }
  std::vector<double> out;
  for (double u : unique) {
    try {
      const Dataset d(observations, u);
      if (d.n_minus() >= 1 && d.n_plus() >= min_exceedances) out.push_back(u);
    } catch (const ConfigError&) {
      // straddled by some rounding interval
    }
  }
  return out;
}

}  // namespace bmot
