#include "xpm/bayes.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Eigenvalues>

#include "xpm/csv.hpp"
#include "xpm/error.hpp"
#include "xpm/numeric.hpp"
#include "xpm/parallel.hpp"
#include "xpm/rng.hpp"

namespace xpm {

namespace {

constexpr double kConditionLimit = 1e12;
constexpr double kRidge = 1e-12;

void require_symmetric(const Eigen::MatrixXd& m, const char* what) {
  if (m.rows() != m.cols()) throw EstimationError(std::string(what) + " covariance is not square");
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
    throw EstimationError(std::string(what) + " covariance is not symmetric");
}

Eigen::MatrixXd precision_of(const Eigen::MatrixXd& cov, bool& regularized, const char* what) {
  require_symmetric(cov, what);
  Eigen::MatrixXd sym = 0.5 * (cov + cov.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym);
  if (eig.info() != Eigen::Success) throw EstimationError(std::string("eigendecomposition of ") + what + " failed");
  double lo = eig.eigenvalues().minCoeff();
  double hi = eig.eigenvalues().maxCoeff();
  regularized = false;
  if (lo <= 0.0 || hi / lo > kConditionLimit) {
    sym += kRidge * Eigen::MatrixXd::Identity(sym.rows(), sym.cols());
    eig.compute(sym);
    lo = eig.eigenvalues().minCoeff();
    regularized = true;
    if (!(lo > 0.0)) throw EstimationError(std::string(what) + " covariance is singular beyond regularization");
  }
  const Eigen::MatrixXd& u = eig.eigenvectors();
  Eigen::MatrixXd p = u * eig.eigenvalues().cwiseInverse().asDiagonal() * u.transpose();
  return 0.5 * (p + p.transpose());
}

Eigen::MatrixXd psd_square_root(const Eigen::MatrixXd& cov) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (cov + cov.transpose()));
  if (eig.info() != Eigen::Success) throw EstimationError("eigendecomposition of posterior failed");
  const double hi = std::max(0.0, eig.eigenvalues().maxCoeff());
  if (eig.eigenvalues().minCoeff() < -1e-10 * std::max(1.0, hi))
    throw EstimationError("posterior covariance is not positive semi-definite");
  const Eigen::VectorXd root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * root.asDiagonal();
}

}  // namespace

Posterior shrink(const Likelihood& likelihood, const Prior& prior) {
  const Eigen::Index k = likelihood.estimate.size();
  if (k == 0) throw EstimationError("likelihood is empty");
  if (prior.mean.size() != k || prior.covariance.rows() != k || likelihood.covariance.rows() != k)
    throw EstimationError("prior dimension " + std::to_string(prior.mean.size()) +
                          " does not match likelihood dimension " + std::to_string(k));
  Posterior post;
  post.labels = likelihood.labels;
  post.provenance.prior_id = prior.id;
  post.provenance.model_id = likelihood.model_id;
  post.provenance.variant = likelihood.variant;
  const Eigen::MatrixXd prior_precision = precision_of(prior.covariance, post.provenance.prior_regularized, "prior");
  const Eigen::MatrixXd lik_precision =
      precision_of(likelihood.covariance, post.provenance.likelihood_regularized, "likelihood");
  const Eigen::MatrixXd precision = prior_precision + lik_precision;
  bool unused = false;
  post.covariance = precision_of(precision, unused, "posterior precision");
  post.mean = post.covariance * (prior_precision * prior.mean + lik_precision * likelihood.estimate);
  return post;
}

Likelihood likelihood_from_fit(const FitResult& f, const CovarianceMatrix& v, std::string model_id) {
  std::vector<Eigen::Index> idx;
  Likelihood l;
  for (std::size_t i = 0; i < f.labels.size(); ++i) {
    const auto& label = f.labels[i];
    if (label.starts_with("treatment[") && label.back() == ']' && label.find(':') == std::string::npos) {
      idx.push_back(static_cast<Eigen::Index>(i));
      l.labels.push_back(label);
    }
  }
  if (idx.empty()) throw EstimationError("fit has no treatment coefficients");
  const auto k = static_cast<Eigen::Index>(idx.size());
  l.estimate.resize(k);
  l.covariance.resize(k, k);
  for (Eigen::Index a = 0; a < k; ++a) {
    l.estimate(a) = f.beta(idx[static_cast<std::size_t>(a)]);
    for (Eigen::Index b = 0; b < k; ++b)
      l.covariance(a, b) = v.values(idx[static_cast<std::size_t>(a)], idx[static_cast<std::size_t>(b)]);
  }
  l.model_id = std::move(model_id);
  l.variant = v.variant;
  return l;
}

Prior estimate_prior_from_history(std::span<const HistoricalEffect> history, std::string id) {
  if (history.size() < 5) throw EstimationError("prior estimation needs at least 5 historical effects");
  CompensatedSum weighted, precision, sum, se2;
  for (const auto& h : history) {
    if (!std::isfinite(h.estimate) || !(h.std_error > 0.0) || !std::isfinite(h.std_error))
      throw EstimationError("historical effects need finite estimates and positive standard errors");
    const double w = 1.0 / (h.std_error * h.std_error);
    weighted.add(w * h.estimate);
    precision.add(w);
    sum.add(h.estimate);
    se2.add(h.std_error * h.std_error);
  }
  const auto n = static_cast<double>(history.size());
  const double mean = sum.value() / n;
  CompensatedSum ss;
  for (const auto& h : history) ss.add((h.estimate - mean) * (h.estimate - mean));
  const double sample_var = ss.value() / (n - 1.0);
  Prior p;
  p.id = std::move(id);
  p.mean = Eigen::VectorXd::Constant(1, weighted.value() / precision.value());
  p.covariance = Eigen::MatrixXd::Constant(1, 1, std::max(0.0, sample_var - se2.value() / n));
  return p;
}

Prior replicate_prior(const Prior& one_dimensional, std::size_t k) {
  if (one_dimensional.mean.size() != 1) throw EstimationError("replicate_prior expects a 1-D prior");
  Prior p;
  p.id = one_dimensional.id;
  const auto kk = static_cast<Eigen::Index>(k);
  p.mean = Eigen::VectorXd::Constant(kk, one_dimensional.mean(0));
  p.covariance = one_dimensional.covariance(0, 0) * Eigen::MatrixXd::Identity(kk, kk);
  return p;
}

std::vector<HistoricalEffect> load_history_csv(const std::filesystem::path& path) {
  csv::Reader reader(path);
  const auto& h = reader.header();
  const auto est = std::find(h.begin(), h.end(), "estimate");
  const auto se = std::find(h.begin(), h.end(), "std_error");
  if (est == h.end()) throw DataError("missing required column 'estimate'");
  if (se == h.end()) throw DataError("missing required column 'std_error'");
  const auto ei = static_cast<std::size_t>(est - h.begin());
  const auto si = static_cast<std::size_t>(se - h.begin());
  std::vector<HistoricalEffect> out;
  std::vector<std::string> fields;
  while (reader.next(fields)) {
    if (fields.size() != h.size()) throw DataError("malformed row at line " + std::to_string(reader.line()));
    const auto e = csv::parse_double(fields[ei]);
    const auto s = csv::parse_double(fields[si]);
    if (!e || !s) throw DataError("unparseable historical effect at line " + std::to_string(reader.line()));
    out.push_back({*e, *s});
  }
  return out;
}

std::vector<double> prob_best_arm(const Eigen::VectorXd& mean, const Eigen::MatrixXd& covariance, std::size_t draws,
                                  std::uint64_t seed, bool higher_is_better) {
  const Eigen::Index k = mean.size();
  if (k < 2) throw EstimationError("probability of best arm needs at least two arms");
  if (covariance.rows() != k || covariance.cols() != k) throw EstimationError("covariance dimension mismatch");
  if (draws < 10000) throw EstimationError("probability of best arm needs at least 10^4 draws");
  const Eigen::MatrixXd root = psd_square_root(covariance);

  constexpr std::size_t kBlock = 4096;
  const std::size_t blocks = (draws + kBlock - 1) / kBlock;
  std::vector<std::vector<std::uint64_t>> block_counts(blocks, std::vector<std::uint64_t>(static_cast<std::size_t>(k)));
  parallel_for(blocks, [&](std::size_t b) {
    CounterRng rng(seed, b);
    Eigen::VectorXd z(k), x(k);
    const std::size_t begin = b * kBlock;
    const std::size_t end = std::min(draws, begin + kBlock);
    auto& counts = block_counts[b];
    for (std::size_t d = begin; d < end; ++d) {
      for (Eigen::Index i = 0; i < k; ++i) z(i) = rng.normal();
      x.noalias() = mean + root * z;
      Eigen::Index best = 0;
      for (Eigen::Index i = 1; i < k; ++i) {
        if (higher_is_better ? x(i) > x(best) : x(i) < x(best)) best = i;
      }
      ++counts[static_cast<std::size_t>(best)];
    }
  });

  std::vector<std::uint64_t> counts(static_cast<std::size_t>(k), 0);
  for (const auto& bc : block_counts)
    for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += bc[i];
  std::vector<double> p(counts.size());
  const auto total = static_cast<double>(draws);
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = static_cast<double>(counts[i]) / total;
  // Push any rounding residue into the largest entry so the sum is exactly 1.
  for (int pass = 0; pass < 4; ++pass) {
    const double s = std::accumulate(p.begin(), p.end(), 0.0);
    if (s == 1.0) break;
    auto top = std::max_element(p.begin(), p.end());
    *top = std::clamp(*top + (1.0 - s), 0.0, 1.0);
  }
  return p;
}

std::vector<double> prob_best_arm(const Posterior& posterior, std::size_t draws, std::uint64_t seed,
                                  bool higher_is_better) {
  const Eigen::Index k = posterior.mean.size();
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(k + 1);
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(k + 1, k + 1);
  mean.tail(k) = posterior.mean;
  cov.bottomRightCorner(k, k) = posterior.covariance;
  return prob_best_arm(mean, cov, draws, seed, higher_is_better);
}

Posterior marginal(const Posterior& posterior, std::span<const Eigen::Index> indices) {
  Posterior out;
  out.provenance = posterior.provenance;
  const auto k = static_cast<Eigen::Index>(indices.size());
  out.mean.resize(k);
  out.covariance.resize(k, k);
  for (Eigen::Index a = 0; a < k; ++a) {
    const Eigen::Index ia = indices[static_cast<std::size_t>(a)];
    if (ia < 0 || ia >= posterior.mean.size()) throw EstimationError("marginal index out of range");
    out.mean(a) = posterior.mean(ia);
    if (static_cast<std::size_t>(ia) < posterior.labels.size())
      out.labels.push_back(posterior.labels[static_cast<std::size_t>(ia)]);
    for (Eigen::Index b = 0; b < k; ++b) out.covariance(a, b) = posterior.covariance(ia, indices[static_cast<std::size_t>(b)]);
  }
  return out;
}

}  // namespace xpm
