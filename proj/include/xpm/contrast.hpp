#pragma once

#include <string>

#include <Eigen/Core>

#include "xpm/covariance.hpp"
#include "xpm/linear.hpp"

namespace xpm {

/// A linear contrast cᵀβ with normal-theory inference.
struct EffectEstimate {
  std::string label;
  double value = 0.0;
  double std_error = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double p_value = 1.0;
  double level = 0.95;
  CovarianceVariant covariance_variant = CovarianceVariant::iid;
  Eigen::VectorXd contrast;
};

/// value = cᵀβ, SE = sqrt(cᵀVc), CI = value ± z·SE with normal quantiles,
/// two-sided normal p-value. Tiny negative variances (> -1e-12 relative to
/// the diagonal scale) are clamped to 0; anything below throws.
EffectEstimate evaluate_contrast(const FitResult& f, const Eigen::VectorXd& c, const CovarianceMatrix& v,
                                 double level = 0.95, std::string label = {});

/// Contrast picking a single coefficient by label.
Eigen::VectorXd unit_contrast(const FitResult& f, std::string_view label);

struct WaldTest {
  double statistic = 0.0;
  int df = 0;
  double p_value = 1.0;
};

/// Joint test of Cβ = 0 (rows of C are contrasts) against χ²(rank).
WaldTest wald_test(const FitResult& f, const Eigen::MatrixXd& c, const CovarianceMatrix& v);

}  // namespace xpm
