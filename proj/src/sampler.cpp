#include "bmot/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include <fmt/core.h>

#include "bmot/error.hpp"
#include "bmot/parallel.hpp"

namespace bmot {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kEulerGamma = 0.5772156649015329;

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

// Dispersion of the start-point jitter, in unconstrained coordinates.
constexpr double kStartJitter = 0.5;
constexpr int kStartAttempts = 100;

struct ChainResult {
  std::vector<ParamDraw> draws;
  std::vector<double> imputed;
  double accept_rate = 0.0;
};

class PosteriorTarget {
 public:
  PosteriorTarget(const Dataset& data, ModelKind kind, const PriorConfig& priors)
      : data_(data), kind_(kind), priors_(priors) {}

  // Log posterior on the unconstrained scale, Jacobian included.
  double operator()(const ParamVector& v, std::span<const double> values) const {
    for (double c : v) {
      if (!std::isfinite(c)) return -kInf;
    }
    const ParamVector nat = from_unconstrained(kind_, v);
    if (!(nat[1] > 0.0) || !std::isfinite(nat[1])) return -kInf;
    double lp;
    if (kind_ == ModelKind::censored_gev) {
      if (!(nat[0] > 0.0) || !std::isfinite(nat[0])) return -kInf;
      const double sigma_tilde = nat[1] * std::exp(-nat[2] * v[0]);
      if (!(sigma_tilde > 0.0) || !std::isfinite(sigma_tilde)) return -kInf;
      lp = log_posterior(data_, BmotParams{nat[0], sigma_tilde, nat[2], data_.threshold()},
                         priors_, values);
    } else {
      lp = log_posterior(data_, GevParams{nat[0], nat[1], nat[2]}, priors_, values);
    }
    if (!std::isfinite(lp)) return -kInf;
    return lp + log_jacobian(kind_, v);
  }

  GevParams gev(const ParamVector& nat) const {
    if (kind_ == ModelKind::standard_gev) return {nat[0], nat[1], nat[2]};
    return gev_from_bmot(
               BmotParams{nat[0], nat[1] * std::pow(nat[0], -nat[2]), nat[2], data_.threshold()})
        .gev();
  }

 private:
  const Dataset& data_;
  ModelKind kind_;
  const PriorConfig& priors_;
};

// Moment-based point estimate (Gumbel moments, xi = 0) on the natural scale.
ParamVector moment_start(const Dataset& data, ModelKind kind, const PriorConfig& priors) {
  std::vector<double> values = data.exceedance_values();
  double sigma0 = priors.alpha_sigma / priors.beta_sigma;
  if (values.size() >= 2) {
    const double sd = sample_sd(values);
    if (sd > 0.0) sigma0 = sd * std::sqrt(6.0) / std::numbers::pi;
  }
  if (kind == ModelKind::censored_gev) return {lambda_prior_mean(data), sigma0, 0.0};
  const double m = values.empty() ? priors.mu_prior_mean : mean(values);
  return {m - kEulerGamma * sigma0, sigma0, 0.0};
}

ChainResult run_one_chain(const Dataset& data, ModelKind kind, const PriorConfig& priors,
                          const SamplerConfig& cfg, const std::vector<std::size_t>& imputed_index,
                          std::size_t chain) {
  Rng rng = Rng(cfg.seed).split(chain);
  const PosteriorTarget target(data, kind, priors);

  std::vector<double> values = data.exceedance_values();
  const bool impute = cfg.impute && !imputed_index.empty();

  // Overdispersed start around the moment estimate.
  const ParamVector centre = moment_start(data, kind, priors);
  const ParamVector centre_v = to_unconstrained(kind, centre);
  const double location_unit = kind == ModelKind::standard_gev ? centre[1] : 1.0;
  ParamVector v{};
  double log_density = -kInf;
  double jitter = kStartJitter;
  for (int attempt = 0; attempt < kStartAttempts && !std::isfinite(log_density); ++attempt) {
    v = centre_v;
    v[0] += normal_sample(0.0, jitter * location_unit, rng);
    v[1] += normal_sample(0.0, jitter, rng);
    v[2] += normal_sample(0.0, jitter, rng);
    log_density = target(v, values);
    jitter *= 0.9;
  }
  if (!std::isfinite(log_density)) {
    v = centre_v;
    log_density = target(v, values);
  }
  if (!std::isfinite(log_density)) {
    throw NumericalError(fmt::format(
        "chain {}: no finite posterior density found near the moment estimate", chain));
  }

  Eigen::VectorXd initial_sd(3);
  initial_sd << 0.1 * location_unit, 0.1, 0.3;
  AdaptiveMetropolis kernel(initial_sd, cfg.target_accept, cfg.n_warmup);

  ChainResult out;
  out.draws.reserve(cfg.n_draws);
  const bool keep = impute && cfg.keep_imputed;
  if (keep) out.imputed.reserve(cfg.n_draws * imputed_index.size());

  Eigen::VectorXd state = Eigen::Map<const Eigen::Vector3d>(v.data());
  auto log_target = [&](const Eigen::VectorXd& x) {
    return target(ParamVector{x[0], x[1], x[2]}, values);
  };

  std::size_t warmup_accepts = 0;
  std::size_t draw_accepts = 0;
  const std::size_t total = cfg.n_warmup + cfg.n_draws;
  for (std::size_t it = 0; it < total; ++it) {
    const bool warmup = it < cfg.n_warmup;
    if (!warmup && !kernel.frozen()) {
      kernel.freeze();
      const double rate = static_cast<double>(warmup_accepts) / static_cast<double>(cfg.n_warmup);
      if (rate < 0.01) {
        throw NumericalError(fmt::format(
            "chain {}: adaptation failed, warmup acceptance rate {:.4f} < 0.01", chain, rate));
      }
    }

    double accept_prob = 0.0;
    const bool accepted = kernel.step(state, log_density, log_target, rng, &accept_prob);
    if (warmup) {
      warmup_accepts += accepted;
      kernel.adapt(state, accept_prob);
    } else {
      draw_accepts += accepted;
    }

    const ParamVector nat = from_unconstrained(kind, {state[0], state[1], state[2]});
    if (impute) {
      const GevParams g = target.gev(nat);
      for (std::size_t k : imputed_index) {
        try {
          values[k] = gev_sample_truncated(g, data.imputation_lower(k), data.imputation_upper(k), rng);
        } catch (const DegenerateInterval&) {
          // Keep the previous value; it already lies inside the interval.
        }
      }
      log_density = log_target(state);
    }

    if (!warmup) {
      ParamDraw d{};
      if (kind == ModelKind::censored_gev) {
        d.lambda_u = nat[0];
        d.mu = target.gev(nat).mu;
      } else {
        d.lambda_u = kNaN;
        d.mu = nat[0];
      }
      d.sigma = nat[1];
      d.xi = nat[2];
      out.draws.push_back(d);
      if (keep) {
        for (std::size_t k : imputed_index) out.imputed.push_back(values[k]);
      }
    }
  }
  out.accept_rate = static_cast<double>(draw_accepts) / static_cast<double>(cfg.n_draws);
  return out;
}

}  // namespace

std::string to_string(ModelKind kind) {
  return kind == ModelKind::censored_gev ? "censored" : "standard";
}

ModelKind model_kind_from_string(const std::string& name) {
  if (name == "censored" || name == "censored-gev" || name == "censored_gev") {
    return ModelKind::censored_gev;
  }
  if (name == "standard" || name == "standard-gev" || name == "standard_gev") {
    return ModelKind::standard_gev;
  }
  throw ConfigError(fmt::format("unknown model kind '{}' (expected censored or standard)", name));
}

std::string to_string(Param p) {
  switch (p) {
    case Param::lambda_u: return "lambda_u";
    case Param::mu: return "mu";
    case Param::sigma: return "sigma";
    case Param::xi: return "xi";
  }
  return "?";
}

// --- transforms ----------------------------------------------------------------

ParamVector to_unconstrained(ModelKind kind, const ParamVector& nat) {
  const bool censored = kind == ModelKind::censored_gev;
  if ((censored && !(nat[0] > 0.0)) || !std::isfinite(nat[0]) || !(nat[1] > 0.0) ||
      !std::isfinite(nat[1]) || !(nat[2] > -0.5 && nat[2] < 0.5)) {
    throw DomainError(fmt::format("to_unconstrained: ({}, {}, {}) outside the parameter domain",
                                  nat[0], nat[1], nat[2]));
  }
  return {censored ? std::log(nat[0]) : nat[0], std::log(nat[1]), 2.0 * std::atanh(2.0 * nat[2])};
}

ParamVector from_unconstrained(ModelKind kind, const ParamVector& v) {
  const double first = kind == ModelKind::censored_gev ? std::exp(v[0]) : v[0];
  return {first, std::exp(v[1]), 0.5 * std::tanh(0.5 * v[2])};
}

double log_jacobian(ModelKind kind, const ParamVector& v) {
  // d xi / d v2 = p (1 - p) with p = logistic(v2).
  const double logistic_term = -softplus(v[2]) - softplus(-v[2]);
  const double first = kind == ModelKind::censored_gev ? v[0] : 0.0;
  return first + v[1] + logistic_term;
}

void SamplerConfig::validate() const {
  if (n_chains < 2) throw ConfigError("sampler needs at least 2 chains for R-hat");
  if (n_draws < 100) throw ConfigError(fmt::format("n_draws must be >= 100, got {}", n_draws));
  if (n_warmup < 1) throw ConfigError("n_warmup must be positive");
  if (!(target_accept > 0.0 && target_accept < 1.0)) {
    throw ConfigError(fmt::format("target_accept {} not in (0,1)", target_accept));
  }
  if (!(rhat_threshold > 1.0)) throw ConfigError("rhat_threshold must exceed 1");
}

// --- AdaptiveMetropolis ----------------------------------------------------------

AdaptiveMetropolis::AdaptiveMetropolis(const Eigen::VectorXd& initial_sd, double target_accept,
                                       std::size_t n_warmup)
    : target_accept_(target_accept),
      log_scale_(std::log(2.38 / std::sqrt(static_cast<double>(initial_sd.size())))) {
  set_covariance(Eigen::MatrixXd(initial_sd.array().square().matrix().asDiagonal()));
  if (n_warmup >= 40) {
    for (double f : {0.15, 0.3, 0.5, 0.75}) {
      window_ends_.push_back(static_cast<std::size_t>(f * static_cast<double>(n_warmup)));
    }
  }
}

void AdaptiveMetropolis::set_covariance(const Eigen::MatrixXd& cov) {
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) throw NumericalError("proposal covariance not positive definite");
  covariance_ = cov;
  chol_ = llt.matrixL();
}

Eigen::VectorXd AdaptiveMetropolis::propose(const Eigen::VectorXd& state, Rng& rng) const {
  Eigen::VectorXd z(state.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = normal_sample(0.0, 1.0, rng);
  return state + std::exp(log_scale_) * (chol_ * z);
}

void AdaptiveMetropolis::adapt(const Eigen::VectorXd& state, double accept_prob) {
  if (frozen_) return;
  ++iteration_;
  ++rm_step_;
  const double gain = std::pow(static_cast<double>(rm_step_), -0.6);
  log_scale_ += std::clamp(gain * (accept_prob - target_accept_), -1.0, 1.0);
  window_.push_back(state);

  if (std::find(window_ends_.begin(), window_ends_.end(), iteration_) == window_ends_.end()) return;
  const auto n = static_cast<double>(window_.size());
  if (window_.size() < 10) {
    window_.clear();
    return;
  }
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(state.size());
  for (const auto& x : window_) mean += x;
  mean /= n;
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(state.size(), state.size());
  for (const auto& x : window_) cov += (x - mean) * (x - mean).transpose();
  cov /= (n - 1.0);
  window_.clear();
  const Eigen::VectorXd diag = cov.diagonal();
  if ((diag.array() <= 0.0).any()) return;
  // Shrink the off-diagonal part toward zero for short windows.
  Eigen::MatrixXd shrunk = (n / (n + 5.0)) * cov;
  shrunk.diagonal() = diag;
  shrunk.diagonal().array() += 1e-12;
  try {
    set_covariance(shrunk);
  } catch (const NumericalError&) {
    set_covariance(Eigen::MatrixXd(diag.asDiagonal()));
  }
  log_scale_ = std::log(2.38 / std::sqrt(static_cast<double>(state.size())));
  rm_step_ = 0;
}

// --- PosteriorSamples ------------------------------------------------------------

std::vector<std::string> PosteriorSamples::param_names() const {
  if (kind == ModelKind::censored_gev) return {"lambda_u", "sigma", "xi", "mu"};
  return {"mu", "sigma", "xi"};
}

namespace {
double field(const ParamDraw& d, Param p) {
  switch (p) {
    case Param::lambda_u: return d.lambda_u;
    case Param::mu: return d.mu;
    case Param::sigma: return d.sigma;
    case Param::xi: return d.xi;
  }
  return kNaN;
}
}  // namespace

std::vector<double> PosteriorSamples::column(Param p) const {
  std::vector<double> out;
  out.reserve(total_draws());
  for (const auto& chain : chains) {
    for (const auto& d : chain) out.push_back(field(d, p));
  }
  return out;
}

std::vector<std::vector<double>> PosteriorSamples::per_chain(Param p) const {
  std::vector<std::vector<double>> out;
  for (const auto& chain : chains) {
    auto& col = out.emplace_back();
    col.reserve(chain.size());
    for (const auto& d : chain) col.push_back(field(d, p));
  }
  return out;
}

std::vector<ParamDraw> PosteriorSamples::pooled() const {
  std::vector<ParamDraw> out;
  out.reserve(total_draws());
  for (const auto& chain : chains) out.insert(out.end(), chain.begin(), chain.end());
  return out;
}

void PosteriorSamples::update_diagnostics(double rhat_threshold) {
  rhat.clear();
  rhat_max = 0.0;
  const std::vector<Param> params = kind == ModelKind::censored_gev
                                        ? std::vector<Param>{Param::lambda_u, Param::sigma,
                                                             Param::xi, Param::mu}
                                        : std::vector<Param>{Param::mu, Param::sigma, Param::xi};
  for (Param p : params) {
    double r;
    try {
      r = gelman_rubin(per_chain(p));
    } catch (const NumericalError&) {
      r = kInf;
    }
    rhat[to_string(p)] = r;
    rhat_max = std::max(rhat_max, r);
  }
  converged = rhat_max <= rhat_threshold;
  if (!converged) {
    warnings.push_back(fmt::format("R-hat {:.4f} exceeds {:.4f}: chains have not converged",
                                   rhat_max, rhat_threshold));
  }
}

BmotParams to_bmot(const ParamDraw& d, double u) {
  return BmotParams{d.lambda_u, d.sigma * std::pow(d.lambda_u, -d.xi), d.xi, u};
}

GevParams to_gev(const ParamDraw& d) { return {d.mu, d.sigma, d.xi}; }

// --- run_chains ------------------------------------------------------------------

PosteriorSamples run_chains(const Dataset& input, ModelKind kind, const PriorConfig& priors,
                            const SamplerConfig& cfg) {
  cfg.validate();
  priors.validate();
  if (kind == ModelKind::censored_gev && !input.has_threshold()) {
    throw ConfigError("censored-GEV fit needs a threshold");
  }
  const Dataset data = kind == ModelKind::censored_gev ? input : Dataset(input.observations());
  if (kind == ModelKind::standard_gev && data.n() == 0) {
    throw ConfigError("standard-GEV fit needs at least one observation");
  }

  PosteriorSamples out;
  out.kind = kind;
  out.u = kind == ModelKind::censored_gev ? data.threshold() : kNaN;
  out.seed = cfg.seed;
  if (kind == ModelKind::censored_gev && data.n_plus() == 0) {
    out.warnings.push_back(
        "no observations above the threshold: lambda_u is informed only by the censored count, "
        "sigma and xi revert to their priors");
  }
  if (kind == ModelKind::censored_gev && data.n_minus() == 0) {
    out.warnings.push_back("no observations at or below the threshold");
  }

  if (cfg.impute) {
    const auto& idx = data.exceedance_index();
    for (std::size_t k = 0; k < idx.size(); ++k) {
      if (data.observations()[idx[k]].is_interval()) out.imputed_index.push_back(k);
    }
  }

  std::vector<ChainResult> results(cfg.n_chains);
  parallel_for(cfg.n_chains, cfg.jobs, [&](std::size_t c) {
    results[c] = run_one_chain(data, kind, priors, cfg, out.imputed_index, c);
  });

  for (auto& r : results) {
    out.chains.push_back(std::move(r.draws));
    out.accept_rate.push_back(r.accept_rate);
    if (!r.imputed.empty()) out.imputed.push_back(std::move(r.imputed));
  }
  out.update_diagnostics(cfg.rhat_threshold);
  return out;
}

// --- diagnostics / summaries -----------------------------------------------------

double gelman_rubin(const std::vector<std::vector<double>>& chains) {
  if (chains.size() < 2) throw DomainError("gelman_rubin: need at least 2 chains");
  const std::size_t len = chains.front().size();
  if (len < 4) throw DomainError("gelman_rubin: chains need at least 4 draws");
  for (const auto& c : chains) {
    if (c.size() != len) throw DomainError("gelman_rubin: chains must have equal length");
  }
  const std::size_t half = len / 2;
  std::vector<std::span<const double>> split;
  for (const auto& c : chains) {
    split.emplace_back(c.data(), half);
    split.emplace_back(c.data() + (len - half), half);
  }
  const auto n = static_cast<double>(half);
  const auto m = static_cast<double>(split.size());
  std::vector<double> means;
  double within = 0.0;
  for (const auto& s : split) {
    const double mu = mean(s);
    means.push_back(mu);
    double ss = 0.0;
    for (double x : s) ss += (x - mu) * (x - mu);
    within += ss / (n - 1.0);
  }
  within /= m;
  if (!(within > 0.0)) throw NumericalError("gelman_rubin: zero within-chain variance");
  const double grand = mean(means);
  double between = 0.0;
  for (double mu : means) between += (mu - grand) * (mu - grand);
  between *= n / (m - 1.0);
  const double var_plus = (n - 1.0) / n * within + between / n;
  return std::sqrt(var_plus / within);
}

Interval hdi(std::span<const double> samples, double mass) {
  if (samples.empty()) throw DomainError("hdi: empty sample");
  if (!(mass > 0.0 && mass <= 1.0)) throw DomainError(fmt::format("hdi: mass {} not in (0,1]", mass));
  std::vector<double> x(samples.begin(), samples.end());
  std::sort(x.begin(), x.end());
  const std::size_t n = x.size();
  auto k = static_cast<std::size_t>(std::ceil(mass * static_cast<double>(n) - 1e-9));
  k = std::clamp<std::size_t>(k, 1, n);
  std::size_t best = 0;
  double best_width = kInf;
  for (std::size_t i = 0; i + k <= n; ++i) {
    const double w = x[i + k - 1] - x[i];
    if (w < best_width) {
      best_width = w;
      best = i;
    }
  }
  return {x[best], x[best + k - 1]};
}

Interval central_interval(std::span<const double> samples, double mass) {
  if (samples.empty()) throw DomainError("central_interval: empty sample");
  if (!(mass > 0.0 && mass <= 1.0)) {
    throw DomainError(fmt::format("central_interval: mass {} not in (0,1]", mass));
  }
  std::vector<double> x(samples.begin(), samples.end());
  std::sort(x.begin(), x.end());
  auto quantile = [&x](double q) {
    const double pos = q * static_cast<double>(x.size() - 1);
    const auto i = static_cast<std::size_t>(std::floor(pos));
    if (i + 1 >= x.size()) return x.back();
    return x[i] + (pos - static_cast<double>(i)) * (x[i + 1] - x[i]);
  };
  return {quantile(0.5 * (1.0 - mass)), quantile(0.5 * (1.0 + mass))};
}

double mean(std::span<const double> x) {
  if (x.empty()) return kNaN;
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double sample_sd(std::span<const double> x) {
  if (x.size() < 2) return 0.0;
  const double m = mean(x);
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  return std::sqrt(ss / static_cast<double>(x.size() - 1));
}

}  // namespace bmot
