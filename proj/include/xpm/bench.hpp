#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "xpm/config.hpp"
#include "xpm/dataset.hpp"

namespace xpm {

struct BenchCase {
  std::string name;
  std::size_t rows = 0;
  /// Distinct (arm, features, outcome) prototypes; unset means every row is
  /// distinct.
  std::optional<std::size_t> unique;
  int covariates = 1;
};

struct BenchConfig {
  std::vector<BenchCase> cases;
  int runs = 5;
  std::uint64_t seed = 0;
};

struct BenchRow {
  std::string name;
  std::size_t rows = 0;
  std::size_t unique_rows = 0;
  /// Medians over the runs, in milliseconds. The raw and compressed figures
  /// both cover design construction plus the WLS solve; compressing the data
  /// is timed separately.
  double raw_ms = 0.0;
  double compressed_ms = 0.0;
  double compress_ms = 0.0;
  double speedup = 0.0;
  /// Largest |β_raw - β_compressed|.
  double max_coefficient_gap = 0.0;
};

/// Throws ConfigError; at least 5 runs and one case are required.
BenchConfig parse_bench_config(const ojson& j);

/// Synthetic two-arm data for one case. Rows beyond the first `unique` copy a
/// uniformly chosen prototype, so every prototype appears at least once.
Dataset bench_dataset(const BenchCase& c, std::uint64_t seed);

BenchRow run_bench_case(const BenchCase& c, int runs, std::uint64_t seed);
std::vector<BenchRow> run_bench(const BenchConfig& config, std::ostream* progress = nullptr);

std::string bench_table(const std::vector<BenchRow>& rows);
ojson to_json(const std::vector<BenchRow>& rows);

}  // namespace xpm
