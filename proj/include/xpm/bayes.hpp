#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "xpm/contrast.hpp"
#include "xpm/covariance.hpp"

namespace xpm {

/// Normal prior over arm effects (one entry per non-control arm × outcome).
struct Prior {
  std::string id = "prior";
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
};

/// Frequentist effect estimates and their covariance, from any linear fit.
struct Likelihood {
  Eigen::VectorXd estimate;
  Eigen::MatrixXd covariance;
  std::vector<std::string> labels;
  std::string model_id = "model";
  CovarianceVariant variant = CovarianceVariant::iid;
};

struct PosteriorProvenance {
  std::string prior_id;
  std::string model_id;
  CovarianceVariant variant = CovarianceVariant::iid;
  bool prior_regularized = false;
  bool likelihood_regularized = false;
};

struct Posterior {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
  std::vector<std::string> labels;
  PosteriorProvenance provenance;
};

/// Conjugate normal update:
///   Λ_post = Λ_prior + Λ_lik,  μ_post = Λ_post⁻¹ (Λ_prior μ_prior + Λ_lik β̂).
/// A covariance whose condition number exceeds 1e12 (or that is singular) is
/// regularised by adding 1e-12·I, and the fact is recorded in provenance.
/// Throws EstimationError on dimension mismatch or a covariance that is not
/// positive definite even after regularisation.
Posterior shrink(const Likelihood& likelihood, const Prior& prior);

/// Likelihood made of the arm main-effect coefficients ("treatment[...]").
Likelihood likelihood_from_fit(const FitResult& f, const CovarianceMatrix& v, std::string model_id = "model");

struct HistoricalEffect {
  double estimate = 0.0;
  double std_error = 0.0;
};

/// Method-of-moments empirical Bayes on past effects: mean is the
/// precision-weighted mean, variance is max(0, sample variance of the
/// estimates − mean squared SE). Needs at least 5 entries.
Prior estimate_prior_from_history(std::span<const HistoricalEffect> history, std::string id = "history");

/// Diagonal k-dimensional prior repeating a 1-D prior.
Prior replicate_prior(const Prior& one_dimensional, std::size_t k);

/// Reads a CSV with columns `estimate` and `std_error`.
std::vector<HistoricalEffect> load_history_csv(const std::filesystem::path& path);

/// Monte-Carlo probability that each arm is best under a joint normal over
/// arm effects. Draws come in blocks of 4096 from Philox stream = block
/// index; ties go to the lower arm index. Entries are in [0,1] and sum to 1.
std::vector<double> prob_best_arm(const Eigen::VectorXd& mean, const Eigen::MatrixXd& covariance, std::size_t draws,
                                  std::uint64_t seed, bool higher_is_better = true);

/// Same, with the control arm pinned at effect 0 (zero variance) as arm 0 and
/// the posterior's entries as arms 1..k.
std::vector<double> prob_best_arm(const Posterior& posterior, std::size_t draws, std::uint64_t seed,
                                  bool higher_is_better = true);

/// Marginal posterior over a subset of entries (e.g. one outcome's arms).
Posterior marginal(const Posterior& posterior, std::span<const Eigen::Index> indices);

}  // namespace xpm
