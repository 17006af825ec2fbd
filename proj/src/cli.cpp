#include "bmot/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <random>
#include <set>

#include <CLI11.hpp>
#include <fmt/chrono.h>
#include <fmt/core.h>
#include <fmt/ostream.h>

#include "bmot/analysis.hpp"
#include "bmot/error.hpp"
#include "bmot/io.hpp"
#include "bmot/simstudy.hpp"

namespace bmot {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::size_t kHistogramBins = 30;

// Returned from a command when the run finished but --strict flags it.
struct Outcome {
  int code = kExitOk;
};

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag) {
  if (flag) return *flag;
  if (const char* env = std::getenv("BMOT_SEED"); env != nullptr && *env != '\0') {
    try {
      std::size_t used = 0;
      const unsigned long long v = std::stoull(env, &used);
      if (used == std::char_traits<char>::length(env)) return v;
    } catch (const std::exception&) {
    }
    throw ConfigError(fmt::format("BMOT_SEED='{}' is not an unsigned integer", env));
  }
  std::random_device rd;
  return (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  return fmt::format("{:%Y-%m-%dT%H:%M:%SZ}", fmt::gmtime(std::chrono::system_clock::to_time_t(now)));
}

std::string csv_safe(std::string s) {
  std::replace(s.begin(), s.end(), ',', ';');
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

// Everything a command shares: parsed argv, resolved seed and output dir.
struct Run {
  std::string command;
  std::vector<std::string> args;
  fs::path out_dir;
  std::uint64_t seed = 0;
  std::vector<std::string> inputs;
  std::string config;
  json extra = json::object();
  std::vector<std::string> outputs;

  fs::path output(const std::string& name) {
    outputs.push_back(name);
    return out_dir / name;
  }

  void write_manifest() {
    json j;
    j["command"] = command;
    j["args"] = args;
    j["inputs"] = inputs;
    j["config"] = config.empty() ? json(nullptr) : json(config);
    j["seed"] = seed;
    j["version"] = kVersion;
    j["timestamp"] = utc_timestamp();
    j["out_dir"] = out_dir.string();
    j["outputs"] = outputs;
    for (const auto& [k, v] : extra.items()) j[k] = v;
    write_json(out_dir / "run_manifest.json", j);
  }
};

void prepare_out_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw ConfigError(fmt::format("cannot create output directory '{}'", dir.string()));
  }
}

RunConfig load_config(const std::string& path) {
  if (path.empty()) return {};
  return read_config(path);
}

PriorConfig censored_priors(const Dataset& data, const RunConfig& cfg) {
  if (cfg.lambda_mean) return cfg.priors.with_lambda_moments(*cfg.lambda_mean, cfg.lambda_sd);
  return priors_for_threshold(data, cfg.priors, cfg.lambda_sd);
}

std::vector<std::vector<std::string>> histogram_rows(std::span<const double> values, double lo,
                                                     double hi) {
  std::vector<std::size_t> counts(kHistogramBins, 0);
  const double width = (hi - lo) / static_cast<double>(kHistogramBins);
  for (double v : values) {
    if (v < lo || v > hi) continue;
    auto b = width > 0.0 ? static_cast<std::size_t>((v - lo) / width) : 0;
    counts[std::min(b, kHistogramBins - 1)]++;
  }
  std::vector<std::vector<std::string>> rows;
  for (std::size_t b = 0; b < kHistogramBins; ++b) {
    rows.push_back({format_double(lo + width * static_cast<double>(b)),
                    format_double(lo + width * static_cast<double>(b + 1)),
                    std::to_string(counts[b])});
  }
  return rows;
}

// Observed vs posterior-predictive fractions on shared bins. For the censored
// model the first row is the atom (values at or below u).
void write_predictive(const fs::path& path, const PosteriorSamples& samples,
                      const std::vector<double>& observed, const PredictiveResult& pred) {
  const bool censored = samples.kind == ModelKind::censored_gev;
  const double obs_n = static_cast<double>(observed.size());
  const double pred_n = static_cast<double>(pred.values.size());
  const double top = *std::max_element(observed.begin(), observed.end());
  double lo = *std::min_element(observed.begin(), observed.end());

  std::vector<std::vector<std::string>> rows;
  std::vector<double> obs_cont = observed;
  std::vector<double> pred_cont = pred.values;
  if (censored) {
    const double u = samples.u;
    const auto below = std::count_if(observed.begin(), observed.end(), [u](double v) { return v <= u; });
    rows.push_back({format_double(std::min(lo, u)), format_double(u), "1",
                    format_double(static_cast<double>(below) / obs_n),
                    format_double(static_cast<double>(pred.n_at_or_below_u) / pred_n)});
    std::erase_if(obs_cont, [u](double v) { return v <= u; });
    std::erase_if(pred_cont, [u](double v) { return v <= u; });
    lo = u;
  }
  const double hi = std::max(top, lo);
  const auto obs_rows = histogram_rows(obs_cont, lo, hi);
  const auto pred_rows = histogram_rows(pred_cont, lo, hi);
  for (std::size_t b = 0; b < obs_rows.size(); ++b) {
    rows.push_back({obs_rows[b][0], obs_rows[b][1], "0",
                    format_double(std::stod(obs_rows[b][2]) / obs_n),
                    format_double(std::stod(pred_rows[b][2]) / pred_n)});
  }
  write_csv(path, {"bin_lo", "bin_hi", "atom", "observed_fraction", "predictive_fraction"}, rows);
}

void write_ecdf(const fs::path& path, std::vector<double> values) {
  std::sort(values.begin(), values.end());
  std::vector<std::vector<std::string>> rows;
  const double n = static_cast<double>(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i + 1 < values.size() && values[i + 1] == values[i]) continue;
    rows.push_back({format_double(values[i]), format_double(static_cast<double>(i + 1) / n)});
  }
  write_csv(path, {"wall_loss", "ecdf"}, rows);
}

void write_qq(const fs::path& path, const std::vector<QqRow>& qq) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& r : qq) {
    rows.push_back({format_double(r.empirical_q), format_double(r.plotting_position),
                    std::to_string(r.count), format_double(r.model_q_mean),
                    format_double(r.model_q_hdi.lo), format_double(r.model_q_hdi.hi)});
  }
  write_csv(path,
            {"empirical_q", "plotting_position", "count", "model_q_mean", "model_q_hdi_lo",
             "model_q_hdi_hi"},
            rows);
}

void print_warnings(const std::vector<std::string>& warnings, std::ostream& err) {
  for (const auto& w : warnings) fmt::print(err, "warning: {}\n", w);
}

// --- fit ------------------------------------------------------------------------

struct FitOptions {
  std::string input;
  std::string model = "censored";
  std::optional<double> threshold;
  std::string config;
  bool strict = false;
};

Outcome cmd_fit(const FitOptions& o, Run& run, std::size_t jobs, std::ostream& out,
                std::ostream& err) {
  const ModelKind kind = model_kind_from_string(o.model);
  if (kind == ModelKind::censored_gev && !o.threshold) {
    throw ConfigError("--threshold is required for the censored model");
  }
  const RunConfig cfg = load_config(o.config);
  const auto observations = read_observations_csv(o.input);
  run.inputs = {o.input};
  run.config = o.config;

  const Dataset data = kind == ModelKind::censored_gev ? Dataset(observations, *o.threshold)
                                                       : Dataset(observations);
  const PriorConfig priors = kind == ModelKind::censored_gev ? censored_priors(data, cfg) : cfg.priors;
  SamplerConfig sampler = cfg.sampler;
  const Rng root(run.seed);
  sampler.seed = root.split(0).key();
  sampler.jobs = jobs;

  prepare_out_dir(run.out_dir);
  const FitResult result = fit(data, kind, priors, sampler);

  Rng pred_rng = root.split(1);
  const std::size_t reps = cfg.predictive_reps != 0 ? cfg.predictive_reps : data.n();
  const PredictiveResult pred = posterior_predictive(result.samples, reps, pred_rng);

  std::vector<double> values;
  for (const auto& ob : observations) values.push_back(ob.value);

  json report = to_json(result.report);
  report["seeds"]["run"] = run.seed;
  report["sampler"] = to_json(sampler);
  report["priors"] = to_json(priors);
  report["input"] = o.input;
  report["predictive"] = {{"reps_per_draw", reps},
                          {"hdi_lo", pred.hdi.lo},
                          {"hdi_hi", pred.hdi.hi},
                          {"fraction_at_or_below_u", static_cast<double>(pred.n_at_or_below_u) /
                                                         static_cast<double>(pred.values.size())}};
  write_json(run.output("report.json"), report);
  write_chains_csv(run.output("chains.csv"), result.samples);
  write_csv(run.output("histogram.csv"), {"bin_lo", "bin_hi", "count"},
            histogram_rows(values, *std::min_element(values.begin(), values.end()),
                           *std::max_element(values.begin(), values.end())));
  write_ecdf(run.output("ecdf.csv"), values);
  write_qq(run.output("qq.csv"), qq_data(result.samples, data));
  write_predictive(run.output("predictive.csv"), result.samples, values, pred);

  const FitReport& r = result.report;
  fmt::print(out, "model {} ", to_string(kind));
  if (kind == ModelKind::censored_gev) fmt::print(out, "u={} ", r.u);
  fmt::print(out, "n={} n_plus={} n_minus={}\n", r.n, r.n_plus, r.n_minus);
  for (const auto& [name, s] : r.params) {
    fmt::print(out, "  {:<9} mean {:.6g}  sd {:.4g}  95% HDI ({:.6g}, {:.6g})\n", name, s.mean,
               s.sd, s.hdi.lo, s.hdi.hi);
  }
  fmt::print(out, "  P(xi > 0) = {:.4f}\n", r.prob_xi_positive);
  fmt::print(out, "R-hat max {:.4f}\n", r.rhat_max);
  print_warnings(r.warnings, err);

  Outcome outcome;
  if (!r.converged) {
    fmt::print(err, "WARNING: not converged, R-hat max {:.4f} exceeds {}\n", r.rhat_max,
               sampler.rhat_threshold);
    if (o.strict) outcome.code = kExitNumerical;
  }
  run.extra["converged"] = r.converged;
  return outcome;
}

// --- threshold scan -------------------------------------------------------------

struct ScanOptions {
  std::string input;
  std::vector<double> candidates;
  bool auto_from_rounding = false;
  std::optional<std::size_t> min_exceedances;
  std::string config;
  bool strict = false;
};

Outcome cmd_threshold_scan(const ScanOptions& o, Run& run, std::size_t jobs, std::ostream& out,
                           std::ostream& err) {
  const RunConfig cfg = load_config(o.config);
  const auto observations = read_observations_csv(o.input);
  run.inputs = {o.input};
  run.config = o.config;

  std::vector<double> candidates = o.candidates;
  if (o.auto_from_rounding) {
    if (!candidates.empty()) throw ConfigError("use either --candidates or --auto-from-rounding");
    candidates = rounding_boundaries(observations, o.min_exceedances.value_or(cfg.min_exceedances));
    if (candidates.empty()) {
      throw ConfigError("no rounding boundary leaves enough exceedances; lower --min-exceedances");
    }
  }
  if (candidates.empty()) candidates = cfg.candidates;
  if (candidates.empty()) throw ConfigError("no candidate thresholds (--candidates or [scan] candidates)");

  SamplerConfig sampler = cfg.sampler;
  sampler.seed = Rng(run.seed).split(0).key();
  sampler.jobs = jobs;
  if (cfg.lambda_mean) err << "note: prior.lambda_mean is ignored by the scan (set per threshold)\n";

  prepare_out_dir(run.out_dir);
  const ScanResult scan = threshold_scan(observations, candidates, cfg.priors, cfg.lambda_sd, sampler);

  std::vector<std::vector<std::string>> rows;
  bool converged = true;
  for (const auto& r : scan.rows) {
    rows.push_back({format_double(r.u), std::to_string(r.n_plus), format_double(r.xi_mean),
                    format_double(r.xi_hdi.lo), format_double(r.xi_hdi.hi),
                    format_double(r.rhat_max)});
    converged = converged && r.rhat_max <= sampler.rhat_threshold;
    fmt::print(out, "{:<9} u={:<10.6g} n_plus={:<5} xi {:.4f} ({:.4f}, {:.4f})  R-hat {:.4f}\n",
               to_string(r.kind), r.u, r.n_plus, r.xi_mean, r.xi_hdi.lo, r.xi_hdi.hi, r.rhat_max);
  }
  write_csv(run.output("threshold_scan.csv"),
            {"u", "n_plus", "xi_mean", "xi_hdi_lo", "xi_hdi_hi", "rhat_max"}, rows);
  print_warnings(scan.warnings, err);

  Outcome outcome;
  if (!converged) {
    fmt::print(err, "WARNING: some scan fits have R-hat above {}\n", sampler.rhat_threshold);
    if (o.strict) outcome.code = kExitNumerical;
  }
  const auto n_censored = scan.rows.size() - 1;
  if (n_censored >= 3) {
    const ThresholdSelection sel = select_threshold(scan.rows);
    fmt::print(out, "selected threshold: {} ({})\n", format_double(sel.u),
               sel.stable ? "stable" : "fallback rule");
    run.extra["selected_threshold"] = sel.u;
    run.extra["selection_stable"] = sel.stable;
  } else {
    fmt::print(err, "warning: {} candidate(s); selection needs at least 3\n", n_censored);
    run.extra["selected_threshold"] = nullptr;
  }
  run.extra["candidates"] = candidates;
  return outcome;
}

// --- predict --------------------------------------------------------------------

struct PredictOptions {
  std::string fit_dir;
  std::size_t n_star = 0;
  std::optional<double> depth;
  bool literal = false;
};

Outcome cmd_predict(const PredictOptions& o, Run& run, std::ostream& out) {
  const fs::path dir(o.fit_dir);
  const fs::path report_path = dir / "report.json";
  const fs::path chains_path = dir / "chains.csv";
  if (!fs::exists(report_path)) {
    throw ConfigError(fmt::format("missing fit report: expected '{}'", report_path.string()));
  }
  if (!fs::exists(chains_path)) {
    throw ConfigError(fmt::format("missing chains: expected '{}'", chains_path.string()));
  }
  run.inputs = {report_path.string(), chains_path.string()};
  const json report = read_json(report_path);
  ModelKind kind;
  double u = std::numeric_limits<double>::quiet_NaN();
  try {
    kind = model_kind_from_string(report.at("model_kind").get<std::string>());
    if (kind == ModelKind::censored_gev) u = report.at("u").get<double>();
  } catch (const json::exception& e) {
    throw ConfigError(fmt::format("{}: {}", report_path.string(), e.what()));
  }
  const PosteriorSamples samples = read_chains_csv(chains_path, kind, u);
  if (o.depth && kind != ModelKind::censored_gev) {
    throw DomainError("--depth needs a censored-model fit");
  }
  if (o.depth && !(*o.depth >= u)) {
    throw DomainError(fmt::format("--depth {} is below the threshold u={}", *o.depth, u));
  }

  prepare_out_dir(run.out_dir);
  const Rng root(run.seed);
  Rng max_rng = root.split(0);
  const MaxPrediction pred = predict_max_wall_loss(
      samples, o.n_star, max_rng, o.literal ? BundleMethod::literal : BundleMethod::closed_form);

  std::vector<std::vector<std::string>> rows;
  for (std::size_t i = 0; i < pred.draws.size(); ++i) {
    rows.push_back({std::to_string(i), format_double(pred.draws[i])});
  }
  write_csv(run.output("max_prediction.csv"), {"draw", "max_wall_loss"}, rows);

  json summary;
  summary["model_kind"] = to_string(kind);
  summary["u"] = kind == ModelKind::censored_gev ? json(u) : json(nullptr);
  summary["n_star"] = o.n_star;
  summary["method"] = o.literal ? "literal" : "closed_form";
  summary["seed"] = run.seed;
  summary["max_wall_loss"] = {{"mean", pred.mean}, {"hdi_lo", pred.hdi.lo}, {"hdi_hi", pred.hdi.hi}};
  fmt::print(out, "max wall loss over {} tubes: mean {:.6g}  95% HDI ({:.6g}, {:.6g})\n", o.n_star,
             pred.mean, pred.hdi.lo, pred.hdi.hi);

  if (o.depth) {
    Rng count_rng = root.split(1);
    const CountPrediction c = expected_exceedance_count(samples, *o.depth, o.n_star, count_rng);
    std::vector<std::vector<std::string>> crows;
    for (std::size_t i = 0; i < c.draws.size(); ++i) {
      crows.push_back({std::to_string(i), std::to_string(c.draws[i])});
    }
    write_csv(run.output("exceedance_count.csv"), {"draw", "count"}, crows);
    summary["exceedance_count"] = {
        {"depth", *o.depth}, {"mean", c.mean}, {"hdi_lo", c.hdi.lo}, {"hdi_hi", c.hdi.hi}};
    fmt::print(out, "pits deeper than {} over {} tubes: mean {:.6g}  95% HDI ({}, {})\n", *o.depth,
               o.n_star, c.mean, c.hdi.lo, c.hdi.hi);
  }
  write_json(run.output("prediction_summary.json"), summary);
  return {};
}

// --- simulate -------------------------------------------------------------------

struct SimulateOptions {
  std::string study;
  bool full = false;
  bool unrestricted = false;
  bool dry_run = false;
  std::optional<double> xi;
  std::optional<double> mu_gamma;
  std::optional<std::size_t> n;
  std::optional<double> p_g;
  std::optional<double> u_fit;
  std::optional<std::size_t> replications;
  std::optional<std::size_t> chains;
  std::optional<std::size_t> warmup;
  std::optional<std::size_t> draws;
  std::string config;
  bool strict = false;
};

Scenario scenario_from_json(const json& j) {
  static const std::set<std::string> known{"xi",         "mu_gamma",  "n",
                                           "p_g",        "gev_mu",    "gev_sigma",
                                           "gamma_variance", "u_fit", "replications"};
  Scenario s;
  for (const auto& [k, v] : j.items()) {
    if (!known.contains(k)) throw ConfigError(fmt::format("study manifest: unknown scenario key '{}'", k));
  }
  s.xi_true = j.value("xi", s.xi_true);
  s.mu_gamma = j.value("mu_gamma", s.mu_gamma);
  s.n = j.value("n", s.n);
  s.p_g = j.value("p_g", s.p_g);
  s.gev_mu = j.value("gev_mu", s.gev_mu);
  s.gev_sigma = j.value("gev_sigma", s.gev_sigma);
  s.gamma_variance = j.value("gamma_variance", s.gamma_variance);
  s.u_fit = j.value("u_fit", s.u_fit);
  s.replications = j.value("replications", s.replications);
  return s;
}

// Study manifest: {"grid": "desk"|"full"} or {"scenarios": [...]}, plus
// optional "sampler" {chains, warmup, draws}, "return_factor", "lambda_prior_sd".
void apply_study_manifest(const fs::path& path, std::vector<Scenario>& grid, StudyConfig& cfg) {
  const json j = read_json(path);
  static const std::set<std::string> known{"grid", "scenarios", "sampler", "return_factor",
                                           "lambda_prior_sd"};
  try {
    for (const auto& [k, v] : j.items()) {
      if (!known.contains(k)) throw ConfigError(fmt::format("{}: unknown key '{}'", path.string(), k));
    }
    if (j.contains("grid") && j.contains("scenarios")) {
      throw ConfigError(fmt::format("{}: give either 'grid' or 'scenarios'", path.string()));
    }
    if (j.contains("grid")) {
      const auto g = j.at("grid").get<std::string>();
      if (g == "desk") grid = desk_grid();
      else if (g == "full") grid = full_grid();
      else throw ConfigError(fmt::format("{}: grid must be 'desk' or 'full'", path.string()));
    }
    if (j.contains("scenarios")) {
      grid.clear();
      for (const auto& s : j.at("scenarios")) grid.push_back(scenario_from_json(s));
    }
    if (j.contains("sampler")) {
      const auto& s = j.at("sampler");
      cfg.sampler.n_chains = s.value("chains", cfg.sampler.n_chains);
      cfg.sampler.n_warmup = s.value("warmup", cfg.sampler.n_warmup);
      cfg.sampler.n_draws = s.value("draws", cfg.sampler.n_draws);
    }
    cfg.return_factor = j.value("return_factor", cfg.return_factor);
    cfg.lambda_prior_sd = j.value("lambda_prior_sd", cfg.lambda_prior_sd);
  } catch (const json::exception& e) {
    throw ConfigError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

Outcome cmd_simulate(const SimulateOptions& o, Run& run, std::size_t jobs, std::ostream& out,
                     std::ostream& err) {
  StudyConfig cfg;
  cfg.seed = run.seed;
  cfg.jobs = jobs;
  if (!o.config.empty()) {
    const RunConfig rc = read_config(o.config);
    cfg.priors = rc.priors;
    cfg.lambda_prior_sd = rc.lambda_sd;
    run.config = o.config;
  }

  std::vector<Scenario> grid = o.full ? full_grid() : desk_grid();
  if (!o.study.empty()) {
    if (o.full) throw ConfigError("use either --study or --full");
    apply_study_manifest(o.study, grid, cfg);
    run.inputs = {o.study};
  }
  const bool scenario_flags = o.xi || o.mu_gamma || o.n || o.p_g || o.u_fit;
  if (scenario_flags) {
    if (o.full || !o.study.empty()) throw ConfigError("scenario flags cannot be combined with --full or --study");
    Scenario s;
    s.replications = 20;
    if (o.xi) s.xi_true = *o.xi;
    if (o.mu_gamma) s.mu_gamma = *o.mu_gamma;
    if (o.n) s.n = *o.n;
    if (o.p_g) s.p_g = *o.p_g;
    if (o.u_fit) s.u_fit = *o.u_fit;
    grid = {s};
  }
  if (o.replications) {
    for (auto& s : grid) s.replications = *o.replications;
  }
  if (o.chains) cfg.sampler.n_chains = *o.chains;
  if (o.warmup) cfg.sampler.n_warmup = *o.warmup;
  if (o.draws) cfg.sampler.n_draws = *o.draws;
  cfg.sampler.validate();
  for (const auto& s : grid) s.validate(!o.unrestricted);

  std::size_t datasets = 0;
  for (const auto& s : grid) datasets += s.replications;
  fmt::print(out, "{} scenarios, {} datasets\n", grid.size(), datasets);
  run.extra["n_scenarios"] = grid.size();
  run.extra["n_datasets"] = datasets;

  prepare_out_dir(run.out_dir);
  if (o.dry_run) {
    std::vector<std::vector<std::string>> rows;
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const auto& s = grid[i];
      rows.push_back({std::to_string(i), format_double(s.xi_true), format_double(s.mu_gamma),
                      std::to_string(s.n), format_double(s.p_g), format_double(s.u_fit),
                      std::to_string(s.replications)});
    }
    write_csv(run.output("study_plan.csv"),
              {"scenario", "xi", "mu_gamma", "n", "p_g", "u_fit", "replications"}, rows);
    return {};
  }

  const std::vector<ScenarioOutcome> outcomes = run_study(grid, cfg);

  std::vector<std::vector<std::string>> rows;
  std::vector<std::vector<std::string>> reps;
  bool all_ok = true;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    const auto& oc = outcomes[i];
    const auto& s = oc.scenario;
    const std::vector<std::string> key{std::to_string(i), format_double(s.xi_true),
                                       format_double(s.mu_gamma), std::to_string(s.n),
                                       format_double(s.p_g)};
    std::size_t excluded = 0;
    for (const auto& r : oc.replications) excluded += r.excluded;
    if (!oc.error.empty()) {
      all_ok = false;
      fmt::print(err, "warning: {}\n", oc.error);
      for (StudyModel m : {StudyModel::censored, StudyModel::standard}) {
        for (Quantity q : kQuantities) {
          auto row = key;
          row.insert(row.end(), {to_string(m), to_string(q), "", "", "", "", "", "",
                                 std::to_string(oc.replications.size() - excluded),
                                 std::to_string(excluded)});
          rows.push_back(row);
        }
      }
    }
    for (const auto& a : oc.rows) {
      auto row = key;
      row.insert(row.end(), {to_string(a.model), to_string(a.quantity), format_double(a.bias_mean),
                             format_double(a.bias_hdi.lo), format_double(a.bias_hdi.hi),
                             format_double(a.sd_ratio_mean), format_double(a.sd_ratio_hdi.lo),
                             format_double(a.sd_ratio_hdi.hi), std::to_string(a.n_used),
                             std::to_string(a.n_excluded)});
      rows.push_back(row);
    }
    for (const auto& r : oc.replications) {
      for (StudyModel m : {StudyModel::censored, StudyModel::standard, StudyModel::simulated}) {
        const ModelSummary& ms = r.models[static_cast<int>(m)];
        std::vector<std::string> row{std::to_string(i), std::to_string(r.index),
                                     std::to_string(replication_seed(cfg.seed, i, r.index)),
                                     std::to_string(r.n_gev), r.excluded ? "1" : "0", to_string(m)};
        for (Quantity q : kQuantities) {
          row.push_back(r.excluded && ms.mean[static_cast<int>(q)] == 0.0
                            ? ""
                            : format_double(ms.mean[static_cast<int>(q)]));
          row.push_back(r.excluded && ms.sd[static_cast<int>(q)] == 0.0
                            ? ""
                            : format_double(ms.sd[static_cast<int>(q)]));
        }
        row.push_back(format_double(ms.rhat_max));
        row.push_back(csv_safe(r.note));
        reps.push_back(row);
      }
    }
    fmt::print(out, "scenario {} xi={} mu_gamma={}: {} of {} replications used\n", i, s.xi_true,
               s.mu_gamma, oc.replications.size() - excluded, oc.replications.size());
  }
  write_csv(run.output("study_results.csv"),
            {"scenario", "xi", "mu_gamma", "n", "p_g", "model", "quantity", "bias_mean",
             "bias_hdi_lo", "bias_hdi_hi", "sd_ratio_mean", "sd_ratio_hdi_lo", "sd_ratio_hdi_hi",
             "n_used", "n_excluded"},
            rows);
  write_csv(run.output("replications.csv"),
            {"scenario", "replication", "seed", "n_gev", "excluded", "model", "location_mean",
             "location_sd", "scale_mean", "scale_sd", "shape_mean", "shape_sd",
             "return_level_mean", "return_level_sd", "rhat_max", "note"},
            reps);
  Outcome outcome;
  if (!all_ok && o.strict) outcome.code = kExitNumerical;
  return outcome;
}

// --- dispatch -------------------------------------------------------------------

std::vector<std::string> replay_args(const fs::path& manifest_path, const std::string& out_override) {
  const json m = read_json(manifest_path);
  std::vector<std::string> args;
  std::uint64_t seed = 0;
  try {
    args = m.at("args").get<std::vector<std::string>>();
    seed = m.at("seed").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw ConfigError(fmt::format("{}: {}", manifest_path.string(), e.what()));
  }
  if (args.empty() || args.front() == "replay") {
    throw ConfigError(fmt::format("{}: manifest does not record a replayable command",
                                  manifest_path.string()));
  }
  const bool has_seed = std::any_of(args.begin(), args.end(), [](const std::string& a) {
    return a == "--seed" || a.rfind("--seed=", 0) == 0;
  });
  if (!has_seed) {
    args.push_back("--seed");
    args.push_back(std::to_string(seed));
  }
  if (!out_override.empty()) {
    for (std::size_t i = 0; i < args.size(); ++i) {
      if (args[i] == "--out" && i + 1 < args.size()) args[i + 1] = out_override;
      else if (args[i].rfind("--out=", 0) == 0) args[i] = "--out=" + out_override;
    }
  }
  return args;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Censored-GEV (block maxima over threshold) analysis of tube maximum wall loss"};
  app.name("bmot");
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  std::optional<std::uint64_t> seed;
  std::string out_dir;
  std::size_t jobs = 0;
  auto common = [&](CLI::App* sub, bool out_required) {
    sub->add_option("--seed", seed, "RNG seed (falls back to $BMOT_SEED)");
    auto* o = sub->add_option("--out", out_dir, "output directory");
    if (out_required) o->required();
    sub->add_option("--jobs", jobs, "worker threads (0: hardware concurrency)")->capture_default_str();
  };

  FitOptions fit_o;
  auto* fit_cmd = app.add_subcommand("fit", "fit the censored or standard GEV to tube maxima");
  fit_cmd->add_option("input", fit_o.input, "CSV with wall_loss[,rounding_halfwidth]")->required();
  fit_cmd->add_option("--model", fit_o.model, "censored or standard")
      ->check(CLI::IsMember({"censored", "standard"}))
      ->capture_default_str();
  fit_cmd->add_option("--threshold", fit_o.threshold, "censoring threshold u");
  fit_cmd->add_option("--config", fit_o.config, "INI config file");
  fit_cmd->add_flag("--strict", fit_o.strict, "exit 2 when the fit is not converged");
  common(fit_cmd, true);

  ScanOptions scan_o;
  auto* scan_cmd = app.add_subcommand("threshold-scan", "fit over candidate thresholds and pick one");
  scan_cmd->add_option("input", scan_o.input, "input CSV")->required();
  scan_cmd->add_option("--candidates", scan_o.candidates, "candidate thresholds")->delimiter(',');
  scan_cmd->add_flag("--auto-from-rounding", scan_o.auto_from_rounding,
                     "use rounding-interval boundaries as candidates");
  scan_cmd->add_option("--min-exceedances", scan_o.min_exceedances,
                       "minimum exceedances for automatic candidates");
  scan_cmd->add_option("--config", scan_o.config, "INI config file");
  scan_cmd->add_flag("--strict", scan_o.strict, "exit 2 when any fit is not converged");
  common(scan_cmd, true);

  PredictOptions pred_o;
  auto* pred_cmd = app.add_subcommand("predict", "extrapolate from a stored fit");
  pred_cmd->add_option("fit_dir", pred_o.fit_dir, "output directory of `bmot fit`")->required();
  pred_cmd->add_option("--n-star", pred_o.n_star, "number of unobserved tubes")
      ->required()
      ->check(CLI::PositiveNumber);
  pred_cmd->add_option("--depth", pred_o.depth, "count pits deeper than this");
  pred_cmd->add_flag("--literal", pred_o.literal, "max of n* simulated tubes instead of the closed form");
  common(pred_cmd, true);

  SimulateOptions sim_o;
  auto* sim_cmd = app.add_subcommand("simulate", "Gamma-GEV mixture simulation study");
  sim_cmd->add_option("--study", sim_o.study, "study manifest JSON");
  sim_cmd->add_flag("--full", sim_o.full, "complete 5 x 3 x 100 grid");
  sim_cmd->add_flag("--unrestricted", sim_o.unrestricted, "allow xi / mu_gamma off the study grid");
  sim_cmd->add_flag("--dry-run", sim_o.dry_run, "write the study plan only");
  sim_cmd->add_option("--xi", sim_o.xi, "true GEV shape");
  sim_cmd->add_option("--mu-gamma", sim_o.mu_gamma, "Gamma component mean");
  sim_cmd->add_option("--n", sim_o.n, "tubes per dataset");
  sim_cmd->add_option("--p-g", sim_o.p_g, "GEV mixture weight");
  sim_cmd->add_option("--u-fit", sim_o.u_fit, "threshold of the censored fit");
  sim_cmd->add_option("--replications", sim_o.replications, "replications per scenario");
  sim_cmd->add_option("--chains", sim_o.chains, "chains per fit");
  sim_cmd->add_option("--warmup", sim_o.warmup, "warmup iterations per chain");
  sim_cmd->add_option("--draws", sim_o.draws, "kept draws per chain");
  sim_cmd->add_option("--config", sim_o.config, "INI config file (priors)");
  sim_cmd->add_flag("--strict", sim_o.strict, "exit 2 when a scenario cannot be aggregated");
  common(sim_cmd, true);

  std::string manifest;
  auto* replay_cmd = app.add_subcommand("replay", "re-run the command recorded in a run manifest");
  replay_cmd->add_option("manifest", manifest, "run_manifest.json")->required();
  replay_cmd->add_option("--out", out_dir, "write to this directory instead");

  std::vector<const char*> argv{"bmot"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    if (replay_cmd->parsed()) {
      const auto replayed = replay_args(manifest, out_dir);
      fmt::print(out, "replaying: bmot {}\n", fmt::join(replayed, " "));
      return run_cli(replayed, out, err);
    }

    Run run;
    run.args = args;
    run.out_dir = out_dir;
    run.seed = resolve_seed(seed);
    Outcome outcome;
    if (fit_cmd->parsed()) {
      run.command = "fit";
      outcome = cmd_fit(fit_o, run, jobs, out, err);
    } else if (scan_cmd->parsed()) {
      run.command = "threshold-scan";
      outcome = cmd_threshold_scan(scan_o, run, jobs, out, err);
    } else if (pred_cmd->parsed()) {
      run.command = "predict";
      outcome = cmd_predict(pred_o, run, out);
    } else {
      run.command = "simulate";
      outcome = cmd_simulate(sim_o, run, jobs, out, err);
    }
    run.write_manifest();
    return outcome.code;
  } catch (const NumericalError& e) {
    fmt::print(err, "error: {}\n", e.what());
    return kExitNumerical;
  } catch (const DegenerateInterval& e) {
    fmt::print(err, "error: {}\n", e.what());
    return kExitNumerical;
  } catch (const Error& e) {
    fmt::print(err, "error: {}\n", e.what());
    return kExitInput;
  } catch (const std::exception& e) {
    fmt::print(err, "error: {}\n", e.what());
    return kExitInput;
  }
}

int run_cli(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run_cli(args, std::cout, std::cerr);
}

}  // namespace bmot
