#pragma once

// Gamma-GEV mixture simulation study: each replication fits a censored GEV,
// a standard GEV on all data, and a standard GEV on the GEV-labelled values
// only (the "simulated fit" baseline), then compares posterior means and sds.

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "bmot/evmodel.hpp"
#include "bmot/sampler.hpp"

namespace bmot {

struct Scenario {
  double xi_true = -0.1;
  double mu_gamma = 3.0;
  std::size_t n = 200;
  double p_g = 0.6;
  double gev_mu = 5.5;
  double gev_sigma = 1.0;
  double gamma_variance = 1.0;
  double u_fit = 5.5;
  std::size_t replications = 100;

  double gamma_shape() const { return mu_gamma * mu_gamma / gamma_variance; }
  double gamma_rate() const { return mu_gamma / gamma_variance; }

  // Structural checks always; with `restricted`, xi_true and mu_gamma must
  // come from the published grid.
  void validate(bool restricted) const;
};

inline constexpr std::array<double, 5> kStudyXiGrid{-0.2, -0.1, 0.001, 0.1, 0.2};
inline constexpr std::array<double, 3> kStudyMuGammaGrid{3.0, 4.0, 5.0};

std::vector<Scenario> full_grid();
std::vector<Scenario> desk_grid();

enum class Component : std::uint8_t { gev, gamma };

struct MixtureSample {
  std::vector<double> values;
  std::vector<Component> labels;

  std::size_t n_gev() const;
  std::vector<double> gev_values() const;
};

MixtureSample generate_mixture(const Scenario& s, Rng& rng);

enum class StudyModel { censored, standard, simulated };
std::string to_string(StudyModel m);

enum class Quantity { location, scale, shape, return_level };
std::string to_string(Quantity q);

inline constexpr std::array<Quantity, 4> kQuantities{Quantity::location, Quantity::scale,
                                                      Quantity::shape, Quantity::return_level};

struct ModelSummary {
  // Posterior mean and sd per Quantity, indexed by static_cast<int>(Quantity).
  std::array<double, 4> mean{};
  std::array<double, 4> sd{};
  double rhat_max = 0.0;
  bool converged = true;
};

struct ReplicationResult {
  std::size_t index = 0;
  std::size_t n_gev = 0;
  std::array<ModelSummary, 3> models;  // indexed by StudyModel
  bool excluded = false;
  std::string note;
};

struct StudyConfig {
  std::uint64_t seed = 0;
  PriorConfig priors{};
  double lambda_prior_sd = 1.0;
  SamplerConfig sampler{4, 1000, 2000, 0, 0.3, 1.05, true, false, 1};
  // Return level is the maximum over return_factor * n tubes.
  std::size_t return_factor = 10;
  std::size_t jobs = 0;
};

// Seed for replication `rep` of scenario `scenario` under `study_seed`.
std::uint64_t replication_seed(std::uint64_t study_seed, std::size_t scenario, std::size_t rep);

ReplicationResult run_replication(const Scenario& s, std::uint64_t seed, const StudyConfig& cfg);

struct AggregateRow {
  Scenario scenario;
  StudyModel model = StudyModel::censored;
  Quantity quantity = Quantity::shape;
  double bias_mean = 0.0;
  Interval bias_hdi{0.0, 0.0};
  double sd_ratio_mean = 0.0;
  Interval sd_ratio_hdi{0.0, 0.0};
  std::size_t n_used = 0;
  std::size_t n_excluded = 0;
};

// Rows for the censored and standard models, one per quantity. Throws
// DomainError when fewer than 2 replications survive exclusion.
std::vector<AggregateRow> aggregate(const Scenario& s, const std::vector<ReplicationResult>& reps);

struct ScenarioOutcome {
  Scenario scenario;
  std::vector<ReplicationResult> replications;
  std::vector<AggregateRow> rows;
  std::string error;  // set when aggregation failed
};

std::vector<ScenarioOutcome> run_study(const std::vector<Scenario>& grid, const StudyConfig& cfg);

}  // namespace bmot
