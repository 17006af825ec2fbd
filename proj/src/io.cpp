#include "bmot/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/core.h>

#include "bmot/error.hpp"

namespace bmot {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::optional<double> parse_number(const std::string& s) {
  double v = 0.0;
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end) return std::nullopt;
  return v;
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open '{}'", path.string()));
  return in;
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError(fmt::format("cannot write '{}'", path.string()));
  return out;
}

}  // namespace

std::string format_double(double x) {
  if (std::isnan(x)) return {};
  return fmt::format("{:.17g}", x);
}

// --- observations ----------------------------------------------------------------

std::vector<Observation> parse_observations_csv(std::istream& in, const std::string& source) {
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (!trim(line).empty()) {
      header = split_commas(trim(line));
      break;
    }
  }
  if (header.empty()) throw ConfigError(fmt::format("{}: empty input", source));
  const bool with_rounding = header.size() == 2 && header[1] == "rounding_halfwidth";
  if (header[0] != "wall_loss" || (header.size() == 2 && !with_rounding) || header.size() > 2) {
    throw ConfigError(fmt::format(
        "{}:{}: expected header 'wall_loss' or 'wall_loss,rounding_halfwidth'", source, line_no));
  }

  std::vector<Observation> out;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto cells = split_commas(t);
    if (cells.size() != header.size()) {
      throw ConfigError(fmt::format("{}:{}: expected {} fields, found {}", source, line_no,
                                    header.size(), cells.size()));
    }
    const auto value = parse_number(cells[0]);
    if (!value || !std::isfinite(*value)) {
      throw ConfigError(fmt::format("{}:{}: bad wall_loss '{}'", source, line_no, cells[0]));
    }
    Observation o{*value, 0.0};
    if (with_rounding) {
      const auto hw = parse_number(cells[1]);
      if (!hw || !std::isfinite(*hw) || *hw < 0.0) {
        throw ConfigError(
            fmt::format("{}:{}: bad rounding_halfwidth '{}'", source, line_no, cells[1]));
      }
      o.half_width = *hw;
    }
    out.push_back(o);
  }
  if (out.empty()) throw ConfigError(fmt::format("{}: no observations", source));
  return out;
}

std::vector<Observation> read_observations_csv(const std::filesystem::path& path) {
  auto in = open_input(path);
  return parse_observations_csv(in, path.string());
}

// --- config ---------------------------------------------------------------------

RunConfig parse_config(std::istream& in, const std::string& source) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(fmt::format("{}:{}: {}", source, e.line(), e.message()));
  }

  static const std::set<std::string> known{
      "prior.psi",          "prior.sigma_mean",     "prior.sigma_sd",   "prior.alpha_sigma",
      "prior.beta_sigma",   "prior.lambda_mean",    "prior.lambda_sd",  "prior.mu_mean",
      "prior.mu_sd",        "sampler.chains",       "sampler.warmup",   "sampler.draws",
      "sampler.target_accept", "sampler.rhat_threshold", "sampler.impute", "predict.n_rep",
      "scan.candidates",    "scan.min_exceedances"};
  for (const auto& [section, body] : tree) {
    if (body.empty()) {
      throw ConfigError(fmt::format("{}: key '{}' must live in a [section]", source, section));
    }
    for (const auto& [key, value] : body) {
      const std::string full = section + "." + key;
      if (!known.contains(full)) throw ConfigError(fmt::format("{}: unknown key '{}'", source, full));
    }
  }

  auto number = [&](const std::string& key) -> std::optional<double> {
    const auto raw = tree.get_optional<std::string>(key);
    if (!raw) return std::nullopt;
    const auto v = parse_number(trim(*raw));
    if (!v) throw ConfigError(fmt::format("{}: '{}' is not a number ('{}')", source, key, *raw));
    return v;
  };
  auto count = [&](const std::string& key) -> std::optional<std::size_t> {
    const auto v = number(key);
    if (!v) return std::nullopt;
    if (*v < 0 || std::floor(*v) != *v) {
      throw ConfigError(fmt::format("{}: '{}' must be a non-negative integer", source, key));
    }
    return static_cast<std::size_t>(*v);
  };

  RunConfig cfg;
  if (auto v = number("prior.psi")) cfg.priors.psi = *v;
  const auto sigma_mean = number("prior.sigma_mean");
  const auto sigma_sd = number("prior.sigma_sd");
  if (sigma_mean || sigma_sd) {
    cfg.priors = cfg.priors.with_sigma_moments(sigma_mean.value_or(0.1), sigma_sd.value_or(0.25));
  }
  if (auto v = number("prior.alpha_sigma")) cfg.priors.alpha_sigma = *v;
  if (auto v = number("prior.beta_sigma")) cfg.priors.beta_sigma = *v;
  cfg.lambda_mean = number("prior.lambda_mean");
  if (auto v = number("prior.lambda_sd")) cfg.lambda_sd = *v;
  if (auto v = number("prior.mu_mean")) cfg.priors.mu_prior_mean = *v;
  if (auto v = number("prior.mu_sd")) cfg.priors.mu_prior_sd = *v;

  if (auto v = count("sampler.chains")) cfg.sampler.n_chains = *v;
  if (auto v = count("sampler.warmup")) cfg.sampler.n_warmup = *v;
  if (auto v = count("sampler.draws")) cfg.sampler.n_draws = *v;
  if (auto v = number("sampler.target_accept")) cfg.sampler.target_accept = *v;
  if (auto v = number("sampler.rhat_threshold")) cfg.sampler.rhat_threshold = *v;
  if (auto raw = tree.get_optional<std::string>("sampler.impute")) {
    const std::string s = trim(*raw);
    if (s != "true" && s != "false") {
      throw ConfigError(fmt::format("{}: sampler.impute must be true or false", source));
    }
    cfg.sampler.impute = s == "true";
  }
  if (auto v = count("predict.n_rep")) cfg.predictive_reps = *v;
  if (auto raw = tree.get_optional<std::string>("scan.candidates")) {
    for (const auto& cell : split_commas(*raw)) {
      const auto v = parse_number(cell);
      if (!v) throw ConfigError(fmt::format("{}: bad candidate threshold '{}'", source, cell));
      cfg.candidates.push_back(*v);
    }
  }
  if (auto v = count("scan.min_exceedances")) cfg.min_exceedances = *v;

  cfg.priors.validate();
  if (!(cfg.lambda_sd > 0.0)) throw ConfigError(fmt::format("{}: prior.lambda_sd must be positive", source));
  if (cfg.lambda_mean && !(*cfg.lambda_mean > 0.0)) {
    throw ConfigError(fmt::format("{}: prior.lambda_mean must be positive", source));
  }
  return cfg;
}

RunConfig read_config(const std::filesystem::path& path) {
  auto in = open_input(path);
  return parse_config(in, path.string());
}

// --- chains ---------------------------------------------------------------------

void write_chains_csv(const std::filesystem::path& path, const PosteriorSamples& samples) {
  auto out = open_output(path);
  out << "chain,draw,lambda_u,sigma,xi,mu\n";
  for (std::size_t c = 0; c < samples.chains.size(); ++c) {
    for (std::size_t d = 0; d < samples.chains[c].size(); ++d) {
      const ParamDraw& p = samples.chains[c][d];
      out << c << ',' << d << ',' << format_double(p.lambda_u) << ',' << format_double(p.sigma)
          << ',' << format_double(p.xi) << ',' << format_double(p.mu) << '\n';
    }
  }
}

PosteriorSamples read_chains_csv(const std::filesystem::path& path, ModelKind kind, double u) {
  auto in = open_input(path);
  std::string line;
  if (!std::getline(in, line) || trim(line) != "chain,draw,lambda_u,sigma,xi,mu") {
    throw ConfigError(fmt::format("{}: unexpected chains header", path.string()));
  }
  PosteriorSamples s;
  s.kind = kind;
  s.u = kind == ModelKind::censored_gev ? u : kNaN;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split_commas(trim(line));
    if (cells.size() != 6) {
      throw ConfigError(fmt::format("{}:{}: expected 6 fields", path.string(), line_no));
    }
    const auto chain = parse_number(cells[0]);
    if (!chain || *chain < 0) throw ConfigError(fmt::format("{}:{}: bad chain index", path.string(), line_no));
    auto field = [&](std::size_t i, bool optional) {
      if (cells[i].empty() && optional) return kNaN;
      const auto v = parse_number(cells[i]);
      if (!v) throw ConfigError(fmt::format("{}:{}: bad value '{}'", path.string(), line_no, cells[i]));
      return *v;
    };
    const ParamDraw d{field(2, kind == ModelKind::standard_gev), field(5, false), field(3, false),
                      field(4, false)};
    const auto c = static_cast<std::size_t>(*chain);
    if (c >= s.chains.size()) s.chains.resize(c + 1);
    s.chains[c].push_back(d);
  }
  if (s.chains.empty()) throw ConfigError(fmt::format("{}: no draws", path.string()));
  for (const auto& c : s.chains) {
    if (c.size() != s.chains.front().size()) {
      throw ConfigError(fmt::format("{}: chains have unequal lengths", path.string()));
    }
  }
  if (s.n_chains() >= 2 && s.n_draws() >= 4) s.update_diagnostics(1.05);
  return s;
}

// --- JSON -----------------------------------------------------------------------

nlohmann::json to_json(const PriorConfig& p) {
  return {{"psi", p.psi},
          {"alpha_sigma", p.alpha_sigma},
          {"beta_sigma", p.beta_sigma},
          {"alpha_lambda", p.alpha_lambda},
          {"beta_lambda", p.beta_lambda},
          {"mu_prior_mean", p.mu_prior_mean},
          {"mu_prior_sd", p.mu_prior_sd}};
}

nlohmann::json to_json(const SamplerConfig& c) {
  return {{"chains", c.n_chains},
          {"warmup", c.n_warmup},
          {"draws", c.n_draws},
          {"target_accept", c.target_accept},
          {"rhat_threshold", c.rhat_threshold},
          {"impute", c.impute}};
}

nlohmann::json to_json(const FitReport& r) {
  nlohmann::json params = nlohmann::json::object();
  for (const auto& [name, s] : r.params) {
    params[name] = {{"mean", s.mean}, {"sd", s.sd}, {"hdi_lo", s.hdi.lo}, {"hdi_hi", s.hdi.hi}};
  }
  nlohmann::json j;
  j["schema_version"] = kReportSchemaVersion;
  j["version"] = kVersion;
  j["model_kind"] = to_string(r.kind);
  j["u"] = r.kind == ModelKind::censored_gev ? nlohmann::json(r.u) : nlohmann::json(nullptr);
  j["n"] = r.n;
  j["n_plus"] = r.n_plus;
  j["n_minus"] = r.n_minus;
  j["parameters"] = params;
  j["prob_xi_positive"] = r.prob_xi_positive;
  j["rhat"] = r.rhat;
  j["rhat_max"] = r.rhat_max;
  j["converged"] = r.converged;
  j["accept_rate"] = r.accept_rate;
  j["warnings"] = r.warnings;
  j["seeds"] = {{"sampler", r.seed}};
  return j;
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  auto out = open_output(path);
  out << j.dump(2) << '\n';
}

nlohmann::json read_json(const std::filesystem::path& path) {
  auto in = open_input(path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
  auto out = open_output(path);
  for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  out << '\n';
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
    out << '\n';
  }
}

}  // namespace bmot
