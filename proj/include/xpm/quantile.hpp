#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "xpm/dataset.hpp"
#include "xpm/linear.hpp"

namespace xpm {

/// Tilted absolute loss ρ_τ(r) = r (τ - 1{r<0}).
double check_loss(double r, double tau);

struct QuantileSpec {
  double tau = 0.5;
  /// Relative decrease of the smoothed objective that ends a smoothing stage.
  double tolerance = 1e-10;
  int max_iterations = 2000;
  /// Smoothing widths, multiplied by the outcome scale; must decrease.
  std::vector<double> epsilon_schedule{1e-2, 1e-4, 1e-6};
};

struct QuantileFit {
  Eigen::VectorXd beta;
  /// Σ_j W_j ρ_τ(y_j - m_jᵀβ) at the returned coefficients.
  double objective = 0.0;
  bool converged = false;
  int iterations = 0;
  std::vector<std::string> labels;
};

/// Weighted check-loss objective; W_j are the design weights (multiplicities
/// for unweighted models).
double quantile_objective(const DesignMatrix& d, const Eigen::VectorXd& y, const Eigen::VectorXd& beta, double tau);

/// Quantile regression by IRLS on an epsilon-smoothed check loss. Each
/// iteration is a weighted least squares solve on the compressed rows; the
/// smoothing width is driven down `epsilon_schedule` with warm starts, and
/// the result is snapped to the best nearby basic solution (p rows
/// interpolated exactly) when that does not increase the objective.
QuantileFit fit_quantile(const DesignMatrix& d, const Eigen::VectorXd& y, const QuantileSpec& spec);

/// Weighted sign balance of residuals at a fit.
struct BalanceCheck {
  double negative = 0.0;
  double zero = 0.0;
  double positive = 0.0;
  /// p / N.
  double slack = 0.0;
  /// negative ≤ τ + slack and positive ≤ 1 - τ + slack; necessary at any
  /// minimiser of a model with an intercept, ties included.
  bool holds = false;
  /// |negative - τ| ≤ slack; the tie-free form of the same condition.
  bool tie_free_form = false;
};
BalanceCheck subgradient_balance(const DesignMatrix& d, const Eigen::VectorXd& y, const Eigen::VectorXd& beta,
                                 double tau);

/// 1-based rank of the inverted-CDF τ-quantile in a sample of size n:
/// the smallest k with k/n ≥ τ.
std::uint64_t inverted_cdf_rank(double tau, std::uint64_t n);
/// Inverted-CDF quantile of an ascending sample.
double empirical_quantile(std::span<const double> sorted, double tau);

struct QuantileEffect {
  std::string label;
  double tau = 0.5;
  double estimate = 0.0;
  double control_quantile = 0.0;
  double treatment_quantile = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double level = 0.95;
  int replicates = 0;
  std::uint64_t seed = 0;
  int accounts_control = 0;
  int accounts_treatment = 0;
};

/// Difference in τ-quantiles (treatment - control) with a percentile
/// bootstrap CI. Accounts (clusters when the dataset has them, rows
/// otherwise) are resampled with replacement within each arm; replicate r
/// draws only from Philox stream r of `seed`, so the result does not depend
/// on thread count. The CI is widened to contain the point estimate.
QuantileEffect bootstrap_qte(const Dataset& ds, double tau, int replicates, std::uint64_t seed, double level = 0.95,
                             int treatment_arm = 1);

}  // namespace xpm
