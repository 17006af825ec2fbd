#include "bmot/simstudy.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/core.h>

#include "bmot/analysis.hpp"
#include "bmot/error.hpp"
#include "bmot/parallel.hpp"

namespace bmot {
namespace {

bool on_grid(double v, std::span<const double> grid) {
  return std::any_of(grid.begin(), grid.end(), [v](double g) { return std::abs(v - g) < 1e-12; });
}

ModelSummary summarise_fit(const PosteriorSamples& samples, std::size_t bundle, Rng& rng) {
  ModelSummary m;
  const auto put = [&m](Quantity q, const std::vector<double>& draws) {
    m.mean[static_cast<int>(q)] = mean(draws);
    m.sd[static_cast<int>(q)] = sample_sd(draws);
  };
  put(Quantity::location, samples.column(Param::mu));
  put(Quantity::scale, samples.column(Param::sigma));
  put(Quantity::shape, samples.column(Param::xi));
  put(Quantity::return_level, predict_max_wall_loss(samples, bundle, rng).draws);
  m.rhat_max = samples.rhat_max;
  m.converged = samples.converged;
  return m;
}

}  // namespace

void Scenario::validate(bool restricted) const {
  if (n == 0 || replications == 0) throw ConfigError("scenario needs n >= 1 and replications >= 1");
  if (!(p_g >= 0.0 && p_g <= 1.0)) throw ConfigError(fmt::format("p_g={} not in [0,1]", p_g));
  if (!(gev_sigma > 0.0) || !(gamma_variance > 0.0) || !(mu_gamma > 0.0)) {
    throw ConfigError("scenario needs gev_sigma, gamma_variance and mu_gamma positive");
  }
  if (!std::isfinite(xi_true) || !std::isfinite(gev_mu) || !std::isfinite(u_fit)) {
    throw ConfigError("scenario values must be finite");
  }
  if (restricted) {
    if (!on_grid(xi_true, kStudyXiGrid)) {
      throw ConfigError(fmt::format(
          "xi={} is not one of -0.2, -0.1, 0.001, 0.1, 0.2 (use --unrestricted to allow it)",
          xi_true));
    }
    if (!on_grid(mu_gamma, kStudyMuGammaGrid)) {
      throw ConfigError(fmt::format(
          "mu_gamma={} is not one of 3, 4, 5 (use --unrestricted to allow it)", mu_gamma));
    }
  }
}

std::vector<Scenario> full_grid() {
  std::vector<Scenario> out;
  for (double xi : kStudyXiGrid) {
    for (double mg : kStudyMuGammaGrid) {
      Scenario s;
      s.xi_true = xi;
      s.mu_gamma = mg;
      s.replications = 100;
      out.push_back(s);
    }
  }
  return out;
}

std::vector<Scenario> desk_grid() {
  std::vector<Scenario> out;
  for (double xi : {-0.1, 0.1}) {
    for (double mg : {3.0, 5.0}) {
      Scenario s;
      s.xi_true = xi;
      s.mu_gamma = mg;
      s.replications = 20;
      out.push_back(s);
    }
  }
  return out;
}

std::size_t MixtureSample::n_gev() const {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), Component::gev));
}

std::vector<double> MixtureSample::gev_values() const {
  std::vector<double> out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (labels[i] == Component::gev) out.push_back(values[i]);
  }
  return out;
}

MixtureSample generate_mixture(const Scenario& s, Rng& rng) {
  s.validate(false);
  const auto n_gev =
      static_cast<std::size_t>(binomial_sample(static_cast<std::int64_t>(s.n), s.p_g, rng));
  MixtureSample out;
  out.values.reserve(s.n);
  out.labels.reserve(s.n);
  const GevParams gev{s.gev_mu, s.gev_sigma, s.xi_true};
  for (std::size_t i = 0; i < n_gev; ++i) {
    out.values.push_back(gev_sample(gev, rng));
    out.labels.push_back(Component::gev);
  }
  for (std::size_t i = n_gev; i < s.n; ++i) {
    out.values.push_back(gamma_sample(s.gamma_shape(), s.gamma_rate(), rng));
    out.labels.push_back(Component::gamma);
  }
  for (std::size_t i = s.n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i));
    std::swap(out.values[i - 1], out.values[j]);
    std::swap(out.labels[i - 1], out.labels[j]);
  }
  return out;
}

std::string to_string(StudyModel m) {
  switch (m) {
    case StudyModel::censored: return "censored";
    case StudyModel::standard: return "standard";
    case StudyModel::simulated: return "simulated";
  }
  return "?";
}

std::string to_string(Quantity q) {
  switch (q) {
    case Quantity::location: return "location";
    case Quantity::scale: return "scale";
    case Quantity::shape: return "shape";
    case Quantity::return_level: return "return_level";
  }
  return "?";
}

std::uint64_t replication_seed(std::uint64_t study_seed, std::size_t scenario, std::size_t rep) {
  return Rng(study_seed).split(scenario).split(rep).key();
}

ReplicationResult run_replication(const Scenario& s, std::uint64_t seed, const StudyConfig& cfg) {
  const Rng root(seed);
  Rng data_rng = root.split(0);
  const MixtureSample mix = generate_mixture(s, data_rng);

  ReplicationResult out;
  out.n_gev = mix.n_gev();

  std::vector<Observation> all;
  for (double v : mix.values) all.push_back({v, 0.0});
  std::vector<Observation> gev_only;
  for (double v : mix.gev_values()) gev_only.push_back({v, 0.0});

  auto sampler = [&](std::size_t stream) {
    SamplerConfig c = cfg.sampler;
    c.seed = root.split(stream).key();
    c.jobs = 1;
    return c;
  };

  try {
    const Dataset censored_data(all, s.u_fit);
    const PriorConfig censored_priors =
        priors_for_threshold(censored_data, cfg.priors, cfg.lambda_prior_sd);
    const auto censored = run_chains(censored_data, ModelKind::censored_gev, censored_priors, sampler(1));
    const auto standard = run_chains(Dataset(all), ModelKind::standard_gev, cfg.priors, sampler(2));
    const auto simulated = run_chains(Dataset(gev_only), ModelKind::standard_gev, cfg.priors, sampler(3));

    const std::size_t bundle = cfg.return_factor * s.n;
    const std::size_t gev_bundle = std::max<std::size_t>(1, cfg.return_factor * out.n_gev);
    Rng r1 = root.split(4), r2 = root.split(5), r3 = root.split(6);
    out.models[static_cast<int>(StudyModel::censored)] = summarise_fit(censored, bundle, r1);
    out.models[static_cast<int>(StudyModel::standard)] = summarise_fit(standard, bundle, r2);
    out.models[static_cast<int>(StudyModel::simulated)] = summarise_fit(simulated, gev_bundle, r3);
  } catch (const Error& e) {
    out.excluded = true;
    out.note = e.what();
    return out;
  }
  for (std::size_t m = 0; m < out.models.size(); ++m) {
    if (!out.models[m].converged) {
      out.excluded = true;
      out.note = fmt::format("{} fit not converged (R-hat {:.4f})",
                             to_string(static_cast<StudyModel>(m)), out.models[m].rhat_max);
      break;
    }
  }
  return out;
}

std::vector<AggregateRow> aggregate(const Scenario& s, const std::vector<ReplicationResult>& reps) {
  std::vector<const ReplicationResult*> used;
  for (const auto& r : reps) {
    if (!r.excluded) used.push_back(&r);
  }
  const std::size_t excluded = reps.size() - used.size();
  if (used.size() < 2) {
    throw DomainError(fmt::format(
        "scenario xi={} mu_gamma={}: only {} of {} replications usable ({} excluded)", s.xi_true,
        s.mu_gamma, used.size(), reps.size(), excluded));
  }
  const auto sim = static_cast<int>(StudyModel::simulated);
  std::vector<AggregateRow> rows;
  for (StudyModel model : {StudyModel::censored, StudyModel::standard}) {
    const auto m = static_cast<int>(model);
    for (Quantity q : kQuantities) {
      const auto k = static_cast<int>(q);
      std::vector<double> bias;
      std::vector<double> ratio;
      for (const auto* r : used) {
        bias.push_back(r->models[m].mean[k] - r->models[sim].mean[k]);
        ratio.push_back(r->models[m].sd[k] / r->models[sim].sd[k]);
      }
      AggregateRow row;
      row.scenario = s;
      row.model = model;
      row.quantity = q;
      row.bias_mean = mean(bias);
      row.bias_hdi = hdi(bias);
      row.sd_ratio_mean = mean(ratio);
      row.sd_ratio_hdi = hdi(ratio);
      row.n_used = used.size();
      row.n_excluded = excluded;
      rows.push_back(row);
    }
  }
  return rows;
}

std::vector<ScenarioOutcome> run_study(const std::vector<Scenario>& grid, const StudyConfig& cfg) {
  std::vector<ScenarioOutcome> out(grid.size());
  std::vector<std::pair<std::size_t, std::size_t>> jobs;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    out[i].scenario = grid[i];
    out[i].replications.resize(grid[i].replications);
    for (std::size_t r = 0; r < grid[i].replications; ++r) jobs.emplace_back(i, r);
  }
  parallel_for(jobs.size(), cfg.jobs, [&](std::size_t j) {
    const auto [i, r] = jobs[j];
    ReplicationResult res = run_replication(grid[i], replication_seed(cfg.seed, i, r), cfg);
    res.index = r;
    out[i].replications[r] = std::move(res);
  });
  for (auto& o : out) {
    try {
      o.rows = aggregate(o.scenario, o.replications);
    } catch (const DomainError& e) {
      o.error = e.what();
    }
  }
  return out;
}

}  // namespace bmot
