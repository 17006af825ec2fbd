#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <sstream>

#include <json.hpp>

#include "bmot/cli.hpp"
#include "bmot/evmodel.hpp"
#include "bmot/io.hpp"
#include "bmot/sampler.hpp"
#include "tmpdir.hpp"

using namespace bmot;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

// Tube maxima from the censored model, rounded to 0.02 with half-width 0.01.
std::string synthetic_csv(std::size_t n, bool rounded, std::uint64_t seed = 1) {
  Rng rng(seed);
  const BmotParams b{1.5, 0.04, 0.1, 0.05};
  std::string s = rounded ? "wall_loss,rounding_halfwidth\n" : "wall_loss\n";
  for (std::size_t i = 0; i < n; ++i) {
    const double y = sample_tube_maximum(b, rng) + 0.02 * rng.uniform();
    if (rounded) s += format_double(std::round(y / 0.02) * 0.02) + ",0.01\n";
    else s += format_double(y) + "\n";
  }
  return s;
}

const char* kFastConfig = "[sampler]\nwarmup = 300\ndraws = 300\n";

std::vector<std::vector<std::string>> read_rows(const fs::path& p) {
  std::istringstream in(slurp(p));
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

}  // namespace

TEST_CASE("cli: fit writes the report, chains and plot data") {
  TempDir dir;
  const auto input = dir.write("data.csv", synthetic_csv(500, true));
  const auto cfg = dir.write("fast.ini", kFastConfig);
  const auto out = dir.path / "fit";
  const auto r = cli({"fit", input.string(), "--threshold", "0.11", "--config", cfg.string(),
                      "--seed", "3", "--out", out.string()});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const auto report = nlohmann::json::parse(slurp(out / "report.json"));
  for (const char* key : {"schema_version", "model_kind", "u", "n", "n_plus", "n_minus", "parameters",
                          "prob_xi_positive", "rhat", "rhat_max", "converged", "accept_rate",
                          "warnings", "seeds", "sampler", "priors"}) {
    CHECK_MESSAGE(report.contains(key), key);
  }
  CHECK(report["model_kind"] == "censored");
  CHECK(report["n"] == 500);
  for (const char* p : {"mu", "sigma", "xi", "lambda_u"}) {
    CHECK(report["rhat"].contains(p));
    CHECK(report["parameters"][p].contains("hdi_lo"));
  }
  CHECK(read_rows(out / "chains.csv").size() == 4 * 300 + 1);
  CHECK(read_rows(out / "qq.csv")[0] == std::vector<std::string>{"empirical_q", "plotting_position", "count",
                                                                  "model_q_mean", "model_q_hdi_lo",
                                                                  "model_q_hdi_hi"});
  for (const char* f : {"histogram.csv", "ecdf.csv", "predictive.csv", "run_manifest.json"}) {
    CHECK_MESSAGE(fs::exists(out / f), f);
  }
  const auto manifest = nlohmann::json::parse(slurp(out / "run_manifest.json"));
  CHECK(manifest["command"] == "fit");
  CHECK(manifest["seed"] == 3);
  CHECK(manifest.contains("timestamp"));
  CHECK(manifest["inputs"][0] == input.string());
}

TEST_CASE("cli: threshold below all data degenerates to an atom of mass near zero") {
  TempDir dir;
  const auto input = dir.write("data.csv", synthetic_csv(300, false));
  const auto cfg = dir.write("fast.ini", kFastConfig);
  const auto r = cli({"fit", input.string(), "--threshold", "-1", "--config", cfg.string(), "--seed", "1",
                      "--out", (dir.path / "o").string()});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(r.err.find("warning") != std::string::npos);
  const auto report = nlohmann::json::parse(slurp(dir.path / "o" / "report.json"));
  CHECK(report["n_minus"] == 0);
  // atom exp(-lambda_u) essentially zero
  CHECK(std::exp(-report["parameters"]["lambda_u"]["mean"].get<double>()) < 1e-3);
}

TEST_CASE("cli: input errors exit with code 1") {
  TempDir dir;
  auto r = cli({"fit", (dir.path / "missing.csv").string(), "--threshold", "0.1", "--out",
                (dir.path / "o").string()});
  CHECK(r.code == 1);
  CHECK(r.err.find("missing.csv") != std::string::npos);

  const auto bad = dir.write("bad.csv", "wall_loss\n0.1\nx\n");
  r = cli({"fit", bad.string(), "--threshold", "0.1", "--out", (dir.path / "o").string()});
  CHECK(r.code == 1);
  CHECK(r.err.find(":3") != std::string::npos);

  const auto rounded = dir.write("r.csv", synthetic_csv(50, true));
  r = cli({"fit", rounded.string(), "--threshold", "0.1", "--out", (dir.path / "o").string()});
  CHECK(r.code == 1);
  CHECK(r.err.find("straddles") != std::string::npos);

  CHECK(cli({"no-such-command"}).code == 1);
  CHECK(cli({"fit"}).code == 1);
  CHECK(cli({"--help"}).code == 0);
}

TEST_CASE("cli: --strict turns a convergence warning into exit code 2") {
  TempDir dir;
  const auto input = dir.write("data.csv", synthetic_csv(200, false));
  // an unreachable R-hat threshold flags every fit
  const auto cfg = dir.write("strict.ini", std::string(kFastConfig) + "rhat_threshold = 1.0000000001\n");
  const std::vector<std::string> base{"fit", input.string(), "--threshold", "0.1", "--config",
                                      cfg.string(), "--seed", "2", "--out", (dir.path / "o").string()};
  const auto lenient = cli(base);
  CHECK(lenient.code == 0);
  CHECK(lenient.err.find("not converged") != std::string::npos);
  auto strict_args = base;
  strict_args.push_back("--strict");
  CHECK(cli(strict_args).code == 2);
}

TEST_CASE("cli: threshold scan") {
  TempDir dir;
  const auto input = dir.write("data.csv", synthetic_csv(400, true));
  const auto cfg = dir.write("fast.ini", kFastConfig);
  const auto out = dir.path / "scan";
  const auto r = cli({"threshold-scan", input.string(), "--candidates", "0.09,0.11,0.13", "--config",
                      cfg.string(), "--seed", "4", "--out", out.string()});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const auto rows = read_rows(out / "threshold_scan.csv");
  REQUIRE(rows.size() == 5);
  CHECK(rows[0] == std::vector<std::string>{"u", "n_plus", "xi_mean", "xi_hdi_lo", "xi_hdi_hi", "rhat_max"});
  CHECK(rows[1][0] == "0");
  CHECK(r.out.find("selected threshold") != std::string::npos);
  const auto manifest = nlohmann::json::parse(slurp(out / "run_manifest.json"));
  CHECK(manifest["selected_threshold"].is_number());

  const auto a = cli({"threshold-scan", input.string(), "--auto-from-rounding", "--min-exceedances", "60",
                      "--config", cfg.string(), "--seed", "4", "--out", (dir.path / "auto").string()});
  REQUIRE_MESSAGE(a.code == 0, a.err);
  CHECK(read_rows(dir.path / "auto" / "threshold_scan.csv").size() >= 3);
}

TEST_CASE("cli: predict from a stored fit") {
  TempDir dir;
  const auto input = dir.write("data.csv", synthetic_csv(300, true));
  const auto cfg = dir.write("fast.ini", kFastConfig);
  const auto fit_dir = dir.path / "fit";
  REQUIRE(cli({"fit", input.string(), "--threshold", "0.11", "--config", cfg.string(), "--seed", "5",
               "--out", fit_dir.string()})
              .code == 0);
  const auto out = dir.path / "pred";
  const auto r = cli({"predict", fit_dir.string(), "--n-star", "3489", "--depth", "0.3", "--seed", "6",
                      "--out", out.string()});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const auto rows = read_rows(out / "max_prediction.csv");
  REQUIRE(rows.size() == 4 * 300 + 1);
  std::vector<double> draws;
  for (std::size_t i = 1; i < rows.size(); ++i) draws.push_back(std::stod(rows[i][1]));
  const auto summary = nlohmann::json::parse(slurp(out / "prediction_summary.json"));
  CHECK(summary["max_wall_loss"]["hdi_hi"].get<double>() == hdi(draws).hi);
  CHECK(summary["n_star"] == 3489);
  CHECK(read_rows(out / "exceedance_count.csv").size() == rows.size());

  const auto below = cli({"predict", fit_dir.string(), "--n-star", "10", "--depth", "0.05", "--out",
                          (dir.path / "p2").string()});
  CHECK(below.code == 1);
  CHECK(below.err.find("below the threshold") != std::string::npos);

  fs::remove(fit_dir / "chains.csv");
  const auto missing = cli({"predict", fit_dir.string(), "--n-star", "10", "--out", (dir.path / "p3").string()});
  CHECK(missing.code == 1);
  CHECK(missing.err.find("chains.csv") != std::string::npos);
}

TEST_CASE("cli: simulate") {
  TempDir dir;
  const std::vector<std::string> args{"simulate", "--xi", "0.1", "--mu-gamma", "4", "--replications", "2",
                                      "--warmup", "200", "--draws", "200", "--seed", "8", "--out"};
  auto a = args;
  a.push_back((dir.path / "s1").string());
  auto b = args;
  b.push_back((dir.path / "s2").string());
  auto b_jobs = b;
  b_jobs.insert(b_jobs.end(), {"--jobs", "2"});
  REQUIRE(cli(a).code == 0);
  REQUIRE(cli(b_jobs).code == 0);
  CHECK(slurp(dir.path / "s1" / "study_results.csv") == slurp(dir.path / "s2" / "study_results.csv"));
  CHECK(slurp(dir.path / "s1" / "replications.csv") == slurp(dir.path / "s2" / "replications.csv"));
  const auto rows = read_rows(dir.path / "s1" / "study_results.csv");
  CHECK(rows[0].back() == "n_excluded");
  CHECK(rows.size() == 1 + 8);

  const auto full = cli({"simulate", "--full", "--dry-run", "--out", (dir.path / "full").string()});
  CHECK(full.code == 0);
  CHECK(full.out.find("1500 datasets") != std::string::npos);
  CHECK(nlohmann::json::parse(slurp(dir.path / "full" / "run_manifest.json"))["n_datasets"] == 1500);

  CHECK(cli({"simulate", "--xi", "0.3", "--dry-run", "--out", (dir.path / "x").string()}).code == 1);
  CHECK(cli({"simulate", "--xi", "0.3", "--unrestricted", "--dry-run", "--out", (dir.path / "x").string()})
            .code == 0);

  const auto study = dir.write("study.json",
                               R"({"scenarios": [{"xi": -0.1, "mu_gamma": 3, "replications": 2, "n": 120}],
                                   "sampler": {"warmup": 150, "draws": 150}})");
  const auto m = cli({"simulate", "--study", study.string(), "--seed", "1", "--out", (dir.path / "m").string()});
  CHECK_MESSAGE(m.code == 0, m.err);
  CHECK(m.out.find("1 scenarios, 2 datasets") != std::string::npos);
}

TEST_CASE("cli: replay reproduces the outputs") {
  TempDir dir;
  const auto input = dir.write("data.csv", synthetic_csv(200, true));
  const auto cfg = dir.write("fast.ini", kFastConfig);
  const auto first = dir.path / "a";
  // seed from the environment
  setenv("BMOT_SEED", "12345", 1);
  const auto r = cli({"fit", input.string(), "--threshold", "0.11", "--config", cfg.string(), "--out",
                      first.string()});
  unsetenv("BMOT_SEED");
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(nlohmann::json::parse(slurp(first / "run_manifest.json"))["seed"] == 12345);

  const auto second = dir.path / "b";
  const auto rp = cli({"replay", (first / "run_manifest.json").string(), "--out", second.string()});
  REQUIRE_MESSAGE(rp.code == 0, rp.err);
  for (const char* f : {"report.json", "chains.csv", "qq.csv", "predictive.csv", "ecdf.csv", "histogram.csv"}) {
    CHECK_MESSAGE(slurp(first / f) == slurp(second / f), f);
  }
  CHECK(nlohmann::json::parse(slurp(second / "run_manifest.json"))["seed"] == 12345);
}
