#pragma once

#include <exception>
#include <filesystem>
#include <optional>
#include <ostream>

#include "xpm/config.hpp"
#include "xpm/dataset.hpp"

namespace xpm {

enum ExitCode : int { exit_ok = 0, exit_internal = 1, exit_config = 2, exit_data = 3, exit_estimation = 4 };

struct AnalyzeOptions {
  /// Run analysis blocks concurrently; results are identical either way.
  bool parallel = false;
  /// Add a "timings" section. Off by default so reports stay byte-identical.
  bool timings = false;
};

/// Runs every block of `config` against `ds` and assembles the report.
ojson analyze(const AnalysisConfig& config, const Dataset& ds, const ValidationReport& validation,
              const AnalyzeOptions& options = {});
/// Loads the data named by the config, then analyze().
ojson analyze(const AnalysisConfig& config, const AnalyzeOptions& options = {});

int exit_code_for(const std::exception& e) noexcept;
/// {"error": {"kind", "key"?, "message"}}.
ojson error_json(const std::exception& e);

/// Subcommand drivers: write outputs, report errors on `err` (and to the out
/// path for analyze) and return the process exit code.
int run_analyze(const std::filesystem::path& config, const std::filesystem::path& out, const AnalyzeOptions& options,
                std::ostream& log, std::ostream& err);
int run_simulate(const std::filesystem::path& config, const std::filesystem::path& out_dir, std::ostream& log,
                 std::ostream& err);
int run_bench(const std::filesystem::path& config, const std::optional<std::filesystem::path>& out, std::ostream& log,
              std::ostream& err);

}  // namespace xpm
