#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>

#include <Eigen/Core>

#include "xpm/linear.hpp"

namespace xpm {

enum class CovarianceVariant { iid, hc0, hc1, cr0, cr1 };

std::string_view to_string(CovarianceVariant v) noexcept;
/// Accepts "IID", "HC0", "HC1", "CR0", "CR1" (case-insensitive).
std::optional<CovarianceVariant> parse_covariance_variant(std::string_view text) noexcept;
bool is_cluster_variant(CovarianceVariant v) noexcept;

struct CovarianceMatrix {
  Eigen::MatrixXd values;
  CovarianceVariant variant = CovarianceVariant::iid;
  std::optional<std::size_t> cluster_count;
};

/// σ̂² (MᵀWM)⁻¹ with σ̂² = weighted RSS / (N - p).
CovarianceMatrix cov_iid(const FitResult& f);

/// White sandwich from the meat stored in the fit. HC1 scales HC0 by N/(N-p).
CovarianceMatrix cov_white(const FitResult& f, CovarianceVariant variant = CovarianceVariant::hc1);

/// Cluster-robust sandwich with per-cluster scores s_g = Σ_{j∈g} W_j e_j m_j.
/// `clusters` gives one id per design row. CR1 scales CR0 by
/// G/(G-1) · (N-1)/(N-p).
CovarianceMatrix cov_cluster(const FitResult& f, const DesignMatrix& d, std::span<const std::int64_t> clusters,
                             CovarianceVariant variant = CovarianceVariant::cr1);
/// Uses the cluster ids carried by the design.
CovarianceMatrix cov_cluster(const FitResult& f, const DesignMatrix& d,
                             CovarianceVariant variant = CovarianceVariant::cr1);

/// Dispatches on the variant.
CovarianceMatrix compute_covariance(const FitResult& f, const DesignMatrix& d, CovarianceVariant variant);

}  // namespace xpm
