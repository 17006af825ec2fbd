#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "bmot/analysis.hpp"
#include "bmot/evmodel.hpp"
#include "bmot/sampler.hpp"

namespace bmot {

inline constexpr int kReportSchemaVersion = 1;
inline constexpr const char* kVersion = "0.1.0";

// 17 significant digits; "" for NaN.
std::string format_double(double x);

// Input schema: header `wall_loss[,rounding_halfwidth]`, one tube maximum per row.
std::vector<Observation> parse_observations_csv(std::istream& in, const std::string& source);
std::vector<Observation> read_observations_csv(const std::filesystem::path& path);

/// Settings read from the INI-style config file. Every key is optional.
struct RunConfig {
  PriorConfig priors{};
  std::optional<double> lambda_mean;  // derived from the data when absent
  double lambda_sd = 1.0;
  SamplerConfig sampler{};
  std::size_t predictive_reps = 0;  // 0: dataset size
  std::vector<double> candidates;
  std::size_t min_exceedances = 30;
};

RunConfig parse_config(std::istream& in, const std::string& source);
RunConfig read_config(const std::filesystem::path& path);

void write_chains_csv(const std::filesystem::path& path, const PosteriorSamples& samples);
PosteriorSamples read_chains_csv(const std::filesystem::path& path, ModelKind kind, double u);

nlohmann::json to_json(const FitReport& report);
nlohmann::json to_json(const PriorConfig& priors);
nlohmann::json to_json(const SamplerConfig& cfg);

void write_json(const std::filesystem::path& path, const nlohmann::json& j);
nlohmann::json read_json(const std::filesystem::path& path);

// Writes rows of pre-formatted cells with a header line.
void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);

}  // namespace bmot
