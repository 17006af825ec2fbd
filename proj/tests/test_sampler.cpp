#include <doctest.h>

#include <cmath>

#include "bmot/error.hpp"
#include "bmot/sampler.hpp"
#include "oracles.hpp"

using namespace bmot;

TEST_CASE("unconstrained transform round trip and jacobian") {
  for (ModelKind kind : {ModelKind::censored_gev, ModelKind::standard_gev}) {
    for (const ParamVector nat : {ParamVector{0.7, 0.05, 0.1}, ParamVector{3.0, 2.0, -0.45},
                                  ParamVector{1e-3, 10.0, 0.0}}) {
      ParamVector p = nat;
      if (kind == ModelKind::standard_gev) p[0] = -p[0];  // location may be negative
      const ParamVector v = to_unconstrained(kind, p);
      const ParamVector back = from_unconstrained(kind, v);
      for (int i = 0; i < 3; ++i) CHECK(back[i] == doctest::Approx(p[i]).epsilon(1e-13));

      // numeric jacobian determinant by central differences
      Eigen::Matrix3d jac;
      for (int j = 0; j < 3; ++j) {
        const double h = 1e-6;
        ParamVector up = v, dn = v;
        up[j] += h;
        dn[j] -= h;
        const auto fu = from_unconstrained(kind, up), fd = from_unconstrained(kind, dn);
        for (int i = 0; i < 3; ++i) jac(i, j) = (fu[i] - fd[i]) / (2 * h);
      }
      CHECK(log_jacobian(kind, v) == doctest::Approx(std::log(std::abs(jac.determinant()))).epsilon(1e-6));
    }
  }
}

TEST_CASE("gelman-rubin: hand-computed split R-hat") {
  // Halves: {-1,1,-1,1} x2 with mean 0 and {4,6,4,6} x2 with mean 5.
  // W = 4/3, B = 4 * var{0,0,5,5} = 100/3, var+ = 3/4 W + B/4 = 28/3, R = sqrt(7).
  const std::vector<std::vector<double>> chains{{-1, 1, -1, 1, -1, 1, -1, 1}, {4, 6, 4, 6, 4, 6, 4, 6}};
  CHECK(gelman_rubin(chains) == doctest::Approx(std::sqrt(7.0)).epsilon(1e-12));
}

TEST_CASE("gelman-rubin: iid chains are near one") {
  Rng rng(8);
  std::vector<std::vector<double>> chains(4, std::vector<double>(10000));
  for (auto& c : chains) {
    for (auto& v : c) v = normal_sample(0.0, 1.0, rng);
  }
  const double r = gelman_rubin(chains);
  CHECK(r > 0.999);
  CHECK(r < 1.01);
  CHECK_THROWS(gelman_rubin({{1, 1, 1, 1}, {1, 1, 1, 1}}));
}

TEST_CASE("intervals") {
  std::vector<double> x;
  for (int i = 1; i <= 100; ++i) x.push_back(i);
  const Interval c = central_interval(x);
  CHECK(c.lo == doctest::Approx(3.475));   // type-7 quantile at 0.025
  CHECK(c.hi == doctest::Approx(97.525));  // and at 0.975
  const Interval h = hdi(x);
  CHECK(h.width() == doctest::Approx(94.0));

  // skewed sample: the HDI hugs the mode and is shorter than the central interval
  Rng rng(1);
  std::vector<double> g(20000);
  for (auto& v : g) v = gamma_sample(1.0, 1.0, rng);
  const Interval gh = hdi(g), gc = central_interval(g);
  CHECK(gh.lo < 0.01);
  CHECK(gh.hi == doctest::Approx(-std::log(0.05)).epsilon(0.05));
  CHECK(gh.width() < gc.width());
  const auto inside = std::count_if(g.begin(), g.end(), [&](double v) { return gh.contains(v); });
  CHECK(inside >= 19000);

  CHECK(mean(std::vector<double>{1, 2, 3}) == doctest::Approx(2.0));
  CHECK(sample_sd(std::vector<double>{1, 2, 3}) == doctest::Approx(1.0));
}

TEST_CASE("adaptive metropolis: frozen kernel samples a correlated normal") {
  Eigen::Vector2d m(1.0, -2.0);
  Eigen::Matrix2d cov;
  cov << 1.0, 1.6, 1.6, 4.0;
  const Eigen::Matrix2d prec = cov.inverse();
  auto log_target = [&](const Eigen::VectorXd& x) {
    const Eigen::Vector2d d = x - m;
    return -0.5 * d.dot(prec * d);
  };
  const std::size_t warmup = 3000, draws = 60000;
  AdaptiveMetropolis am(Eigen::Vector2d(0.1, 0.1), 0.3, warmup);
  Rng rng(17);
  Eigen::VectorXd x = Eigen::Vector2d(0.0, 0.0);
  double lp = log_target(x);
  for (std::size_t i = 0; i < warmup; ++i) {
    double a = 0.0;
    am.step(x, lp, log_target, rng, &a);
    am.adapt(x, a);
  }
  am.freeze();
  const Eigen::MatrixXd frozen_cov = am.covariance();
  const double frozen_scale = am.scale();
  std::vector<double> xs, ys;
  std::size_t accepted = 0;
  for (std::size_t i = 0; i < draws; ++i) {
    double a = 0.0;
    accepted += am.step(x, lp, log_target, rng, &a);
    am.adapt(x, a);  // no-op once frozen
    xs.push_back(x[0]);
    ys.push_back(x[1]);
  }
  CHECK((am.covariance() - frozen_cov).norm() == 0.0);
  CHECK(am.scale() == frozen_scale);
  CHECK(accepted > draws / 10);
  CHECK(std::abs(oracle::mean(xs) - 1.0) < 3.0 * oracle::batch_means_se(xs));
  CHECK(std::abs(oracle::mean(ys) + 2.0) < 3.0 * oracle::batch_means_se(ys));
  CHECK(oracle::variance(xs) == doctest::Approx(1.0).epsilon(0.1));
  CHECK(oracle::variance(ys) == doctest::Approx(4.0).epsilon(0.1));
}

TEST_CASE("sampler: no exceedances gives the conjugate Gamma posterior for lambda") {
  std::vector<Observation> obs;
  for (int i = 0; i < 50; ++i) obs.push_back({0.01 * (i % 7), 0.0});
  const Dataset data(obs, 0.1);
  REQUIRE(data.n_plus() == 0);
  PriorConfig priors;
  SamplerConfig cfg;
  cfg.n_draws = 5000;
  cfg.seed = 31;
  const auto s = run_chains(data, ModelKind::censored_gev, priors, cfg);
  CHECK_FALSE(s.warnings.empty());
  const auto lam = s.column(Param::lambda_u);
  const double a = priors.alpha_lambda, b = priors.beta_lambda + 50.0;
  const double m = a / b, v = a / (b * b);
  CHECK(std::abs(oracle::mean(lam) - m) < 3.0 * oracle::batch_means_se(lam));
  std::vector<double> sq;
  for (double l : lam) sq.push_back((l - m) * (l - m));
  CHECK(std::abs(oracle::mean(sq) - v) < 3.0 * oracle::batch_means_se(sq));
}

TEST_CASE("sampler: standard GEV recovers simulated parameters") {
  Rng rng(5);
  const GevParams truth{0.1, 0.03, 0.1};
  std::vector<Observation> obs;
  for (int i = 0; i < 400; ++i) obs.push_back({gev_sample(truth, rng), 0.0});
  SamplerConfig cfg;
  cfg.seed = 6;
  const auto s = run_chains(Dataset(obs), ModelKind::standard_gev, PriorConfig{}, cfg);
  CHECK(s.converged);
  CHECK(std::isnan(s.u));
  for (auto [p, t] : {std::pair{Param::mu, truth.mu}, {Param::sigma, truth.sigma}, {Param::xi, truth.xi}}) {
    const auto col = s.column(p);
    CHECK(std::abs(mean(col) - t) < 4.0 * sample_sd(col));
  }
  for (double a : s.accept_rate) {
    CHECK(a > 0.1);
    CHECK(a < 0.6);
  }
}

TEST_CASE("sampler: deterministic and independent of the worker count") {
  Rng rng(3);
  std::vector<Observation> obs;
  const BmotParams b{1.0, 0.05, 0.1, 0.1};
  for (int i = 0; i < 200; ++i) obs.push_back({sample_tube_maximum(b, rng), 0.0});
  const Dataset data(obs, 0.1);
  SamplerConfig cfg;
  cfg.n_warmup = 300;
  cfg.n_draws = 300;
  cfg.seed = 77;
  cfg.jobs = 1;
  const auto a = run_chains(data, ModelKind::censored_gev, PriorConfig{}, cfg);
  cfg.jobs = 3;
  const auto c = run_chains(data, ModelKind::censored_gev, PriorConfig{}, cfg);
  REQUIRE(a.chains.size() == c.chains.size());
  for (std::size_t k = 0; k < a.chains.size(); ++k) {
    for (std::size_t d = 0; d < a.chains[k].size(); ++d) {
      REQUIRE(a.chains[k][d].lambda_u == c.chains[k][d].lambda_u);
      REQUIRE(a.chains[k][d].xi == c.chains[k][d].xi);
    }
  }
  cfg.seed = 78;
  const auto other = run_chains(data, ModelKind::censored_gev, PriorConfig{}, cfg);
  CHECK(other.chains[0][10].xi != a.chains[0][10].xi);
}

TEST_CASE("sampler: imputed values respect their intervals") {
  Rng rng(12);
  const BmotParams b{1.5, 0.04, 0.1, 0.11};
  std::vector<Observation> obs;
  for (int i = 0; i < 300; ++i) {
    const double y = sample_tube_maximum(b, rng);
    obs.push_back({std::round(y / 0.02) * 0.02, 0.01});
  }
  const Dataset data(obs, 0.11);
  SamplerConfig cfg;
  cfg.n_warmup = 300;
  cfg.n_draws = 300;
  cfg.seed = 4;
  const auto s = run_chains(data, ModelKind::censored_gev, PriorConfig{}, cfg);
  REQUIRE(s.imputed_index.size() == data.n_plus());
  REQUIRE(s.imputed.size() == cfg.n_chains);
  const std::size_t k = s.imputed_index.size();
  for (const auto& chain : s.imputed) {
    REQUIRE(chain.size() == cfg.n_draws * k);
    for (std::size_t i = 0; i < chain.size(); ++i) {
      const std::size_t j = s.imputed_index[i % k];
      REQUIRE(chain[i] >= data.imputation_lower(j));
      REQUIRE(chain[i] <= data.imputation_upper(j));
      REQUIRE(chain[i] > 0.11);
    }
  }
}

TEST_CASE("sampler: imputation is a no-op on exact data") {
  Rng rng(13);
  const BmotParams b{1.5, 0.04, 0.1, 0.11};
  std::vector<Observation> obs;
  for (int i = 0; i < 200; ++i) obs.push_back({sample_tube_maximum(b, rng), 0.0});
  const Dataset data(obs, 0.11);
  SamplerConfig cfg;
  cfg.n_warmup = 200;
  cfg.n_draws = 200;
  cfg.seed = 9;
  const auto on = run_chains(data, ModelKind::censored_gev, PriorConfig{}, cfg);
  cfg.impute = false;
  const auto off = run_chains(data, ModelKind::censored_gev, PriorConfig{}, cfg);
  for (std::size_t c = 0; c < on.chains.size(); ++c) {
    for (std::size_t d = 0; d < on.chains[c].size(); ++d) {
      REQUIRE(on.chains[c][d].lambda_u == off.chains[c][d].lambda_u);
      REQUIRE(on.chains[c][d].sigma == off.chains[c][d].sigma);
      REQUIRE(on.chains[c][d].xi == off.chains[c][d].xi);
    }
  }
}

TEST_CASE("sampler config validation") {
  SamplerConfig cfg;
  cfg.n_chains = 1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = SamplerConfig{};
  cfg.n_draws = 10;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  CHECK(model_kind_from_string("censored") == ModelKind::censored_gev);
  CHECK(model_kind_from_string("standard") == ModelKind::standard_gev);
  CHECK_THROWS_AS(model_kind_from_string("gpd"), ConfigError);
}
