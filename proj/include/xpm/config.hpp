#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

#include "xpm/covariance.hpp"
#include "xpm/dataset.hpp"
#include "xpm/dynamic.hpp"
#include "xpm/linear.hpp"
#include "xpm/simgen.hpp"

namespace xpm {

using ojson = nlohmann::ordered_json;

struct WlsBlock {
  ModelSpec model;
  CovarianceVariant covariance = CovarianceVariant::hc1;
  double level = 0.95;
};

struct QuantileBlock {
  std::vector<double> taus{0.5};
  int replicates = 1000;
  std::uint64_t seed = 0;
  double level = 0.95;
  bool regression = true;
};

struct PriorSource {
  // Explicit prior when `history` is unset.
  std::vector<double> mean;
  std::vector<std::vector<double>> covariance;
  std::optional<std::filesystem::path> history;
  std::string history_text;  // path as written in the config
};

struct BayesBlock {
  WlsBlock model;
  PriorSource prior;
  std::size_t draws = 100000;
  std::uint64_t seed = 0;
  bool higher_is_better = true;
};

struct DynamicBlock {
  TimeBasis basis;
  std::vector<std::string> covariates;
  std::optional<std::vector<double>> at_covariates;
  CovarianceVariant covariance = CovarianceVariant::cr1;
  CumulativeWeighting cumulative = CumulativeWeighting::equal;
  double level = 0.95;
  bool weighted = false;
  std::vector<std::pair<std::int64_t, std::int64_t>> differences;
};

struct AnalysisBlock {
  std::string id;
  std::variant<WlsBlock, QuantileBlock, BayesBlock, DynamicBlock> options;
};

struct AnalysisConfig {
  std::filesystem::path data_path;
  std::string data_text;
  Schema schema;
  std::vector<AnalysisBlock> analyses;
};

/// Parses an analysis config. Relative paths resolve against `base_dir`.
/// Unknown keys, wrong types and invalid values throw ConfigError with the
/// key path (e.g. "analyses[2].tau[0]").
AnalysisConfig parse_analysis_config(const ojson& j, const std::filesystem::path& base_dir);
AnalysisConfig load_analysis_config(const std::filesystem::path& path);

/// Resolved configuration, every default filled in.
ojson echo(const AnalysisConfig& c);

SimConfig parse_sim_config(const ojson& j);
SimConfig load_sim_config(const std::filesystem::path& path);
ojson echo(const SimConfig& c);

/// Reads and parses a JSON file; parse failures throw ConfigError with key "".
ojson read_json_file(const std::filesystem::path& path);

std::string_view analysis_type(const AnalysisBlock& b) noexcept;

}  // namespace xpm
