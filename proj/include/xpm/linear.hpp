#pragma once

#include <atomic>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "xpm/dataset.hpp"

namespace xpm {

/// Term name that expands to k-1 arm dummies against control.
inline constexpr std::string_view kTreatmentTerm = "treatment";

/// Linear model terms: y = m'β + ε with m built from an intercept, arm
/// dummies, covariates and elementwise-product interactions. An interaction
/// is a list of term names (covariates or "treatment").
struct ModelSpec {
  bool intercept = true;
  bool treatment = true;
  std::vector<std::string> covariates;
  std::vector<std::vector<std::string>> interactions;
  /// When true the analytic weight column enters the fit; otherwise every raw
  /// row has unit weight.
  bool weighted = false;
};

/// Design over unique rows. Row j stands for `multiplicity(j)` raw rows and
/// carries their folded weight.
struct DesignMatrix {
  Eigen::MatrixXd values;
  std::vector<std::string> labels;
  Eigen::VectorXd multiplicity;
  /// Effective weight W_j used by the fit (Σ ω over the folded rows).
  Eigen::VectorXd weight;
  /// Σ ω² over the folded rows.
  Eigen::VectorXd weight_sq;
  /// Cluster id per row; empty unless the source kept cluster identity.
  std::vector<std::int64_t> cluster;
  std::optional<ModelSpec> spec;

  Eigen::Index rows() const noexcept { return values.rows(); }
  Eigen::Index cols() const noexcept { return values.cols(); }
  /// Σ multiplicity: the raw observation count N.
  double observation_count() const noexcept { return multiplicity.sum(); }
  /// Column index by label; throws EstimationError when absent.
  Eigen::Index column(std::string_view label) const;
};

DesignMatrix build_design(const CompressedDataset& c, const ModelSpec& spec);
/// Uncompressed path: one design row per raw row.
DesignMatrix build_design(const Dataset& ds, const ModelSpec& spec);

Eigen::VectorXd outcome_vector(const CompressedDataset& c);
Eigen::VectorXd outcome_vector(const Dataset& ds);

struct FitResult {
  Eigen::VectorXd beta;
  /// MᵀWM.
  Eigen::MatrixXd xtwx;
  /// (MᵀWM)⁻¹, the bread of every sandwich.
  Eigen::MatrixXd xtwx_inverse;
  /// Σ_j (Σω²)_j e_j² m_j m_jᵀ; the heteroskedasticity-robust meat, exact for
  /// compressed rows because duplicates share their residual.
  Eigen::MatrixXd white_meat;
  Eigen::VectorXd residuals;
  double weighted_rss = 0.0;
  double observation_count = 0.0;
  /// N - p.
  long dof = 0;
  std::vector<std::string> labels;
  std::optional<ModelSpec> model;
};

/// Weighted least squares via compensated moment accumulation and a Cholesky
/// solve. Throws RankDeficientError naming collinear columns.
FitResult fit_wls(const DesignMatrix& d, const Eigen::VectorXd& y);

/// Number of fit_wls calls in this process; used to verify that effect
/// queries never refit.
std::uint64_t fit_count() noexcept;

/// Solves min Σ w_j (y_j - m_jᵀβ)² without building a FitResult. Shared by the
/// iterative solvers. Throws RankDeficientError.
Eigen::VectorXd solve_weighted_normal_equations(const Eigen::MatrixXd& m, const Eigen::VectorXd& w,
                                                const Eigen::VectorXd& y, const std::vector<std::string>& labels);

}  // namespace xpm
