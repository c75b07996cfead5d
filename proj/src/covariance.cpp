#include "xpm/covariance.hpp"

#include <algorithm>
#include <cctype>
#include <string>
#include <unordered_map>
#include <vector>

#include "xpm/error.hpp"
#include "xpm/numeric.hpp"

namespace xpm {

std::string_view to_string(CovarianceVariant v) noexcept {
  switch (v) {
    case CovarianceVariant::iid: return "IID";
    case CovarianceVariant::hc0: return "HC0";
    case CovarianceVariant::hc1: return "HC1";
    case CovarianceVariant::cr0: return "CR0";
    case CovarianceVariant::cr1: return "CR1";
  }
  return "IID";
}

std::optional<CovarianceVariant> parse_covariance_variant(std::string_view text) noexcept {
  std::string up(text);
  std::transform(up.begin(), up.end(), up.begin(), [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  if (up == "IID") return CovarianceVariant::iid;
  if (up == "HC0") return CovarianceVariant::hc0;
  if (up == "HC1") return CovarianceVariant::hc1;
  if (up == "CR0") return CovarianceVariant::cr0;
  if (up == "CR1") return CovarianceVariant::cr1;
  return std::nullopt;
}

bool is_cluster_variant(CovarianceVariant v) noexcept {
  return v == CovarianceVariant::cr0 || v == CovarianceVariant::cr1;
}

namespace {

Eigen::MatrixXd sandwich(const Eigen::MatrixXd& bread, const Eigen::MatrixXd& meat) {
  Eigen::MatrixXd v = bread * meat * bread;
  return 0.5 * (v + v.transpose());
}

}  // namespace

CovarianceMatrix cov_iid(const FitResult& f) {
  if (f.dof < 1) throw EstimationError("IID covariance needs at least one residual degree of freedom");
  const double sigma2 = f.weighted_rss / static_cast<double>(f.dof);
  return {sigma2 * f.xtwx_inverse, CovarianceVariant::iid, std::nullopt};
}

CovarianceMatrix cov_white(const FitResult& f, CovarianceVariant variant) {
  if (variant != CovarianceVariant::hc0 && variant != CovarianceVariant::hc1)
    throw EstimationError("cov_white supports HC0 and HC1 only");
  CovarianceMatrix out{sandwich(f.xtwx_inverse, f.white_meat), variant, std::nullopt};
  if (variant == CovarianceVariant::hc1) {
    if (f.dof < 1) throw EstimationError("HC1 needs N > p");
    out.values *= f.observation_count / static_cast<double>(f.dof);
  }
  return out;
}

CovarianceMatrix cov_cluster(const FitResult& f, const DesignMatrix& d, std::span<const std::int64_t> clusters,
                             CovarianceVariant variant) {
  if (!is_cluster_variant(variant)) throw EstimationError("cov_cluster supports CR0 and CR1 only");
  if (clusters.empty()) throw EstimationError("cluster-robust covariance requires a cluster column");
  if (static_cast<Eigen::Index>(clusters.size()) != d.rows())
    throw EstimationError("cluster ids must be given per design row");
  if (f.residuals.size() != d.rows()) throw EstimationError("fit does not belong to this design");

  const Eigen::Index p = d.cols();
  std::unordered_map<std::int64_t, std::size_t> index;
  index.reserve(clusters.size());
  std::vector<std::vector<CompensatedSum>> scores;
  for (Eigen::Index j = 0; j < d.rows(); ++j) {
    const auto [it, fresh] = index.try_emplace(clusters[static_cast<std::size_t>(j)], scores.size());
    if (fresh) scores.emplace_back(static_cast<std::size_t>(p));
    auto& s = scores[it->second];
    const double we = d.weight(j) * f.residuals(j);
    for (Eigen::Index a = 0; a < p; ++a) s[static_cast<std::size_t>(a)].add(we * d.values(j, a));
  }
  const std::size_t g = scores.size();
  if (g < 2) throw EstimationError("cluster-robust covariance requires at least 2 clusters");

  MomentAccumulator meat(static_cast<std::size_t>(p));
  Eigen::VectorXd sg(p);
  for (const auto& s : scores) {
    for (Eigen::Index a = 0; a < p; ++a) sg(a) = s[static_cast<std::size_t>(a)].value();
    meat.add_outer(sg.data(), 1.0);
  }
  CovarianceMatrix out{sandwich(f.xtwx_inverse, meat.matrix()), variant, g};
  if (variant == CovarianceVariant::cr1) {
    if (f.dof < 1) throw EstimationError("CR1 needs N > p");
    const double gd = static_cast<double>(g);
    const double n = f.observation_count;
    out.values *= (gd / (gd - 1.0)) * ((n - 1.0) / static_cast<double>(f.dof));
  }
  return out;
}

CovarianceMatrix cov_cluster(const FitResult& f, const DesignMatrix& d, CovarianceVariant variant) {
  return cov_cluster(f, d, std::span<const std::int64_t>(d.cluster), variant);
}

CovarianceMatrix compute_covariance(const FitResult& f, const DesignMatrix& d, CovarianceVariant variant) {
  switch (variant) {
    case CovarianceVariant::iid: return cov_iid(f);
    case CovarianceVariant::hc0:
    case CovarianceVariant::hc1: return cov_white(f, variant);
    case CovarianceVariant::cr0:
    case CovarianceVariant::cr1: return cov_cluster(f, d, variant);
  }
  throw EstimationError("unknown covariance variant");
}

}  // namespace xpm
