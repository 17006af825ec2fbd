#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bmot/evmodel.hpp"

namespace bmot {

enum class ModelKind { censored_gev, standard_gev };

std::string to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& name);

// Sampled coordinates on the natural scale: (lambda_u, sigma, xi) for the
// censored model, (mu, sigma, xi) for the standard model. sigma is always the
// GEV scale.
using ParamVector = std::array<double, 3>;

ParamVector to_unconstrained(ModelKind kind, const ParamVector& natural);
ParamVector from_unconstrained(ModelKind kind, const ParamVector& v);
// log |d natural / d v| at v.
double log_jacobian(ModelKind kind, const ParamVector& v);

struct SamplerConfig {
  std::size_t n_chains = 4;
  std::size_t n_warmup = 1000;
  std::size_t n_draws = 2000;
  std::uint64_t seed = 0;
  double target_accept = 0.3;
  double rhat_threshold = 1.05;
  // Gibbs imputation of interval-censored exceedances.
  bool impute = true;
  bool keep_imputed = true;
  // Worker threads for chains; 0 means hardware concurrency.
  std::size_t jobs = 0;

  void validate() const;
};

/// One stored state. lambda_u is NaN for the standard model; mu is derived
/// for the censored model.
struct ParamDraw {
  double lambda_u;
  double mu;
  double sigma;
  double xi;
};

enum class Param { lambda_u, mu, sigma, xi };
std::string to_string(Param p);

struct PosteriorSamples {
  ModelKind kind = ModelKind::censored_gev;
  double u = 0.0;  // NaN for the standard model
  std::uint64_t seed = 0;
  std::vector<std::vector<ParamDraw>> chains;
  // imputed[c][d * imputed_index.size() + j]: value of exceedance imputed_index[j].
  std::vector<std::vector<double>> imputed;
  std::vector<std::size_t> imputed_index;  // positions in Dataset::exceedance_index()
  std::vector<double> accept_rate;         // post-warmup, per chain
  std::map<std::string, double> rhat;
  double rhat_max = 0.0;
  bool converged = true;
  std::vector<std::string> warnings;

  std::size_t n_chains() const { return chains.size(); }
  std::size_t n_draws() const { return chains.empty() ? 0 : chains.front().size(); }
  std::size_t total_draws() const { return n_chains() * n_draws(); }

  std::vector<std::string> param_names() const;
  // Draws of one parameter, chains concatenated.
  std::vector<double> column(Param p) const;
  std::vector<std::vector<double>> per_chain(Param p) const;
  // Pooled draws in chain-major order.
  std::vector<ParamDraw> pooled() const;

  // Recomputes rhat / rhat_max / converged from the stored chains.
  void update_diagnostics(double rhat_threshold);
};

// Censored-GEV parameters of a censored-model draw.
BmotParams to_bmot(const ParamDraw& d, double u);
GevParams to_gev(const ParamDraw& d);

// Random-walk Metropolis with a multivariate normal proposal
// scale^2 * covariance. During warmup the scale follows a Robbins-Monro
// recursion toward the target acceptance rate and the covariance is
// re-estimated from windows of warmup states; freeze() fixes the kernel.
class AdaptiveMetropolis {
 public:
  AdaptiveMetropolis(const Eigen::VectorXd& initial_sd, double target_accept,
                     std::size_t n_warmup);

  // Proposal around `state`.
  Eigen::VectorXd propose(const Eigen::VectorXd& state, Rng& rng) const;

  // Metropolis step in place; returns true on acceptance.
  template <class LogTarget>
  bool step(Eigen::VectorXd& state, double& log_density, LogTarget&& log_target, Rng& rng,
            double* accept_prob = nullptr) {
    Eigen::VectorXd candidate = propose(state, rng);
    const double lp = log_target(candidate);
    double ratio = lp - log_density;
    if (!std::isfinite(lp)) ratio = -std::numeric_limits<double>::infinity();
    if (accept_prob) *accept_prob = ratio >= 0.0 ? 1.0 : std::exp(ratio);
    if (std::log(rng.uniform()) < ratio) {
      state = std::move(candidate);
      log_density = lp;
      return true;
    }
    return false;
  }

  // Warmup bookkeeping after a step from which `state` resulted.
  void adapt(const Eigen::VectorXd& state, double accept_prob);
  void freeze() { frozen_ = true; }
  bool frozen() const { return frozen_; }

  double scale() const { return std::exp(log_scale_); }
  const Eigen::MatrixXd& covariance() const { return covariance_; }
  void set_covariance(const Eigen::MatrixXd& cov);
  void set_scale(double s) { log_scale_ = std::log(s); }

 private:
  double target_accept_;
  double log_scale_;
  Eigen::MatrixXd covariance_;
  Eigen::MatrixXd chol_;
  std::vector<std::size_t> window_ends_;
  std::vector<Eigen::VectorXd> window_;
  std::size_t iteration_ = 0;
  std::size_t rm_step_ = 0;
  bool frozen_ = false;
};

PosteriorSamples run_chains(const Dataset& data, ModelKind kind, const PriorConfig& priors,
                            const SamplerConfig& cfg);

// Split-chain potential scale reduction factor.
double gelman_rubin(const std::vector<std::vector<double>>& chains);

struct Interval {
  double lo;
  double hi;
  double width() const { return hi - lo; }
  bool contains(double x) const { return lo <= x && x <= hi; }
};

// Shortest interval of the sorted sample holding ceil(mass * N) points.
Interval hdi(std::span<const double> samples, double mass = 0.95);
// Equal-tailed interval between the (1-mass)/2 and (1+mass)/2 sample quantiles.
Interval central_interval(std::span<const double> samples, double mass = 0.95);

double mean(std::span<const double> x);
double sample_sd(std::span<const double> x);

}  // namespace bmot
