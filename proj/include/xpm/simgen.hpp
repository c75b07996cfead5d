#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "xpm/dataset.hpp"
#include "xpm/dynamic.hpp"

namespace xpm {

enum class NoiseKind { homoskedastic, heteroskedastic, zero_inflated };
enum class EffectShape { flat, linear, diminishing };
enum class ErrorCorrelation { equicorrelated, ar1 };

std::string_view to_string(NoiseKind k) noexcept;
std::string_view to_string(EffectShape s) noexcept;
std::string_view to_string(ErrorCorrelation c) noexcept;
std::optional<NoiseKind> parse_noise_kind(std::string_view text) noexcept;
std::optional<EffectShape> parse_effect_shape(std::string_view text) noexcept;
std::optional<ErrorCorrelation> parse_error_correlation(std::string_view text) noexcept;

struct PanelConfig {
  int periods = 4;
  EffectShape shape = EffectShape::flat;
  /// Per-period increment of the treatment effect for the linear shape.
  double slope = 0.0;
  /// Geometric decay per period for the diminishing shape.
  double decay = 0.5;
  double rho = 0.0;
  ErrorCorrelation correlation = ErrorCorrelation::equicorrelated;
};

struct SimConfig {
  std::size_t accounts = 1000;
  int arms = 2;
  /// Mean shift per arm, control first; arm effects are differences to it.
  std::vector<double> effects{0.0, 1.0};
  double baseline = 0.0;
  NoiseKind noise = NoiseKind::homoskedastic;
  double sigma = 1.0;
  /// Heteroskedastic noise has variance σ²·ω^variance_power.
  double variance_power = 1.0;
  /// Probability of a structural zero for zero-inflated noise.
  double zero_rate = 0.6;
  /// Integer analytic weights drawn uniformly from 1..max_weight.
  bool weighted = false;
  int max_weight = 10;
  /// Standard-normal baseline covariates x1..xq, each adding
  /// covariate_effect·x to the outcome.
  int covariates = 0;
  double covariate_effect = 0.5;
  /// Rounds outcomes and covariates to multiples of this granularity.
  std::optional<double> cardinality;
  std::optional<PanelConfig> panel;
  std::uint64_t seed = 0;

  /// Throws ConfigError naming the offending field.
  void validate() const;
};

/// Known parameters behind a generated dataset.
struct SimTruth {
  std::vector<std::string> arm_labels;
  /// Per arm (control = 0): shift of the non-inflated outcome against control.
  std::vector<double> effect;
  /// Per arm: difference in population means, (1 - zero_rate)·effect under
  /// zero inflation (ignores rounding).
  std::vector<double> mean_effect;
  /// Panel only: [arm][period] true daily effects and their equal-weight mean.
  std::vector<std::vector<double>> daily_effect;
  std::vector<double> average_effect;
  std::vector<std::int64_t> periods;
  /// Panel with linear shape: per-period slope of the effect.
  double slope = 0.0;
  double covariate_effect = 0.0;
  bool rounded = false;
};

struct SimData {
  Dataset data;
  SimTruth truth;
};

/// Cross-sectional experiment; requires panel unset.
SimData gen_ab(const SimConfig& c);
/// Panel experiment with one row per (member, period).
SimData gen_panel(const SimConfig& c);
/// gen_panel wrapped as a PanelDataset with its covariates as baseline columns.
PanelDataset as_panel(const SimData& s);

enum class CoverageEstimator {
  ols_iid,
  ols_hc1,
  wls_iid,
  wls_hc1,
  /// Average effect from a dummy-basis panel model.
  panel_iid,
  panel_cr1,
  /// treatment × t coefficient of a linear-basis panel model.
  panel_slope_cr1,
};
std::string_view to_string(CoverageEstimator e) noexcept;
std::optional<CoverageEstimator> parse_coverage_estimator(std::string_view text) noexcept;

struct CoverageReport {
  int repetitions = 0;
  double level = 0.95;
  double coverage = 0.0;
  double mean_width = 0.0;
  double bias = 0.0;
};

/// Repetition r simulates with seed derive_seed(c.seed, r) and estimates the
/// arm-1 effect. Requires at least 500 repetitions.
CoverageReport coverage_study(const SimConfig& c, CoverageEstimator estimator, int repetitions, double level = 0.95);

}  // namespace xpm
