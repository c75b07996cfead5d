#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "xpm/contrast.hpp"
#include "xpm/covariance.hpp"
#include "xpm/dataset.hpp"
#include "xpm/linear.hpp"

namespace xpm {

/// Repeated observations of clusters (members) over periods. Treatment and
/// the listed covariates must be constant within a cluster: covariates are
/// baseline values.
class PanelDataset {
 public:
  /// Throws DataError when the dataset has no cluster or period column, when
  /// (cluster, period) repeats, or when treatment or a covariate varies within
  /// a cluster.
  explicit PanelDataset(Dataset ds, std::span<const std::string> baseline_covariates = {});

  const Dataset& data() const noexcept { return ds_; }
  /// Ascending unique periods.
  const std::vector<std::int64_t>& periods() const noexcept { return periods_; }
  std::size_t cluster_count() const noexcept { return clusters_; }

 private:
  Dataset ds_;
  std::vector<std::int64_t> periods_;
  std::size_t clusters_ = 0;
};

enum class TimeBasisKind { dummies, linear, piecewise };
std::string_view to_string(TimeBasisKind k) noexcept;
std::optional<TimeBasisKind> parse_time_basis(std::string_view text) noexcept;

/// f(t). Dummies drop the first period as reference; linear is t - t₀ with
/// t₀ the first period; piecewise adds hinges max(0, t - knot).
struct TimeBasis {
  TimeBasisKind kind = TimeBasisKind::dummies;
  std::vector<std::int64_t> knots;

  std::vector<std::string> column_names(std::span<const std::int64_t> periods) const;
  std::vector<double> evaluate(std::int64_t t, std::span<const std::int64_t> periods) const;
};

/// Column bookkeeping for a panel design with k arms, q covariates and b
/// basis columns.
struct PanelLayout {
  TimeBasis basis;
  std::vector<std::int64_t> periods;
  std::vector<std::string> covariates;
  std::vector<std::string> arm_labels;
  /// periods × b matrix of f(t).
  Eigen::MatrixXd basis_values;
  std::vector<double> covariate_means;
  /// Σ W per period (observation count for unweighted fits).
  std::vector<double> period_exposure;

  Eigen::Index intercept = 0;
  // Indexed [arm-1], [arm-1][x], [arm-1][b], [arm-1][x][b].
  std::vector<Eigen::Index> treatment;
  std::vector<std::vector<Eigen::Index>> treatment_x;
  std::vector<std::vector<Eigen::Index>> treatment_f;
  std::vector<std::vector<std::vector<Eigen::Index>>> treatment_x_f;

  std::size_t period_index(std::int64_t t) const;
};

struct PanelDesign {
  DesignMatrix design;
  Eigen::VectorXd outcome;
  PanelLayout layout;
};

/// Emits, in order: intercept; arm dummies; covariates; f(t); arm×x; arm×f;
/// x×f; arm×x×f. Rows are compressed only within (cluster, period), so
/// cluster scores stay computable.
PanelDesign build_panel_design(const PanelDataset& p, const TimeBasis& basis, std::span<const std::string> covariates,
                               bool weighted = false);

enum class CumulativeWeighting { equal, exposure };

struct DynamicOptions {
  int arm = 1;
  /// Covariate values for the conditional effect; sample means when unset.
  std::optional<std::vector<double>> at_covariates;
  double level = 0.95;
  CumulativeWeighting cumulative = CumulativeWeighting::equal;
};

/// Contrast for the arm's effect at one period.
Eigen::VectorXd daily_contrast(const PanelLayout& layout, std::size_t period_index, const DynamicOptions& opt,
                               Eigen::Index p);

std::vector<EffectEstimate> daily_effects(const FitResult& f, const CovarianceMatrix& v, const PanelLayout& layout,
                                          const DynamicOptions& opt = {});
/// Running mean of daily contrasts over t ≤ T, combined before evaluation so
/// the SE uses the full covariance.
std::vector<EffectEstimate> cumulative_effects(const FitResult& f, const CovarianceMatrix& v,
                                               const PanelLayout& layout, const DynamicOptions& opt = {});
/// Exposure-weighted mean of all daily contrasts.
EffectEstimate average_effect(const FitResult& f, const CovarianceMatrix& v, const PanelLayout& layout,
                              const DynamicOptions& opt = {});
/// daily(t1) - daily(t2). Throws EstimationError when t1 == t2 or either is
/// not a panel period.
EffectEstimate difference_of_daily(const FitResult& f, const CovarianceMatrix& v, const PanelLayout& layout,
                                   std::int64_t t1, std::int64_t t2, const DynamicOptions& opt = {});

struct DynamicEffects {
  std::string arm_label;
  std::vector<std::int64_t> periods;
  std::vector<EffectEstimate> daily;
  std::vector<EffectEstimate> cumulative;
  EffectEstimate average;
  CovarianceVariant variant = CovarianceVariant::cr1;
  std::vector<double> at_covariates;
  bool at_sample_means = false;
};

DynamicEffects dynamic_effects(const FitResult& f, const CovarianceMatrix& v, const PanelLayout& layout,
                               const DynamicOptions& opt = {});

}  // namespace xpm
