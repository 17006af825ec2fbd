#include <doctest.h>

#include <cmath>

#include "bmot/error.hpp"
#include "bmot/simstudy.hpp"
#include "oracles.hpp"

using namespace bmot;

TEST_CASE("study grids") {
  std::size_t total = 0;
  for (const auto& s : full_grid()) total += s.replications;
  CHECK(full_grid().size() == 15);
  CHECK(total == 1500);
  total = 0;
  for (const auto& s : desk_grid()) total += s.replications;
  CHECK(desk_grid().size() == 4);
  CHECK(total == 80);
}

TEST_CASE("scenario validation") {
  Scenario s;
  CHECK_NOTHROW(s.validate(true));
  s.xi_true = 0.3;
  CHECK_THROWS_AS(s.validate(true), ConfigError);
  CHECK_NOTHROW(s.validate(false));
  s = Scenario{};
  s.mu_gamma = 4.5;
  CHECK_THROWS_AS(s.validate(true), ConfigError);
  s = Scenario{};
  s.p_g = 1.5;
  CHECK_THROWS_AS(s.validate(false), ConfigError);
}

TEST_CASE("mixture generation") {
  Scenario s;
  s.n = 1000;
  s.xi_true = 0.1;
  s.mu_gamma = 4.0;
  Rng rng(3);
  std::vector<double> gev_all, gamma_all;
  std::vector<double> counts;
  for (int rep = 0; rep < 40; ++rep) {
    const auto m = generate_mixture(s, rng);
    REQUIRE(m.values.size() == 1000);
    counts.push_back(static_cast<double>(m.n_gev()));
    for (std::size_t i = 0; i < m.values.size(); ++i) {
      (m.labels[i] == Component::gev ? gev_all : gamma_all).push_back(m.values[i]);
    }
  }
  CHECK(std::abs(oracle::mean(counts) - 600.0) < 4.0 * std::sqrt(240.0 / 40.0));
  CHECK(oracle::ks_distance(gev_all, [&](double x) {
          return static_cast<double>(oracle::gev_cdf(x, 5.5, 1.0, 0.1));
        }) < 0.015);
  CHECK(oracle::mean(gamma_all) == doctest::Approx(4.0).epsilon(0.01));
  CHECK(oracle::variance(gamma_all) == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("replications are reproducible from their seed") {
  Scenario s;
  s.n = 150;
  StudyConfig cfg;
  cfg.sampler.n_warmup = 200;
  cfg.sampler.n_draws = 200;
  const auto a = run_replication(s, 99, cfg);
  const auto b = run_replication(s, 99, cfg);
  CHECK(a.n_gev == b.n_gev);
  for (std::size_t m = 0; m < 3; ++m) {
    for (std::size_t q = 0; q < 4; ++q) {
      CHECK(a.models[m].mean[q] == b.models[m].mean[q]);
      CHECK(a.models[m].sd[q] == b.models[m].sd[q]);
    }
  }
  CHECK(replication_seed(1, 0, 0) != replication_seed(1, 0, 1));
  CHECK(replication_seed(1, 0, 1) != replication_seed(1, 1, 0));
}

TEST_CASE("aggregation: bias and sd ratio relative to the simulated fit") {
  Scenario s;
  std::vector<ReplicationResult> reps(3);
  for (std::size_t r = 0; r < 3; ++r) {
    for (int q = 0; q < 4; ++q) {
      reps[r].models[0].mean[q] = 1.0 + r;  // censored
      reps[r].models[1].mean[q] = 2.0;      // standard
      reps[r].models[2].mean[q] = 1.0;      // simulated
      reps[r].models[0].sd[q] = 2.0;
      reps[r].models[1].sd[q] = 0.5;
      reps[r].models[2].sd[q] = 1.0;
    }
  }
  reps[2].excluded = true;
  const auto rows = aggregate(s, reps);
  REQUIRE(rows.size() == 8);
  const auto& c_shape = rows[static_cast<int>(Quantity::shape)];
  CHECK(c_shape.model == StudyModel::censored);
  CHECK(c_shape.bias_mean == doctest::Approx(0.5));  // biases 0 and 1
  CHECK(c_shape.sd_ratio_mean == doctest::Approx(2.0));
  CHECK(c_shape.n_used == 2);
  CHECK(c_shape.n_excluded == 1);
  const auto& s_rl = rows[4 + static_cast<int>(Quantity::return_level)];
  CHECK(s_rl.model == StudyModel::standard);
  CHECK(s_rl.bias_mean == doctest::Approx(1.0));
  CHECK(s_rl.sd_ratio_mean == doctest::Approx(0.5));

  reps[1].excluded = true;
  CHECK_THROWS_AS(aggregate(s, reps), DomainError);
}

TEST_CASE("run_study is independent of the worker count") {
  Scenario s;
  s.n = 120;
  s.replications = 3;
  StudyConfig cfg;
  cfg.seed = 5;
  cfg.sampler.n_warmup = 150;
  cfg.sampler.n_draws = 150;
  cfg.jobs = 1;
  const auto a = run_study({s}, cfg);
  cfg.jobs = 3;
  const auto b = run_study({s}, cfg);
  REQUIRE(a[0].rows.size() == b[0].rows.size());
  for (std::size_t i = 0; i < a[0].rows.size(); ++i) {
    CHECK(a[0].rows[i].bias_mean == b[0].rows[i].bias_mean);
    CHECK(a[0].rows[i].sd_ratio_mean == b[0].rows[i].sd_ratio_mean);
  }
}
