#include "xpm/contrast.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Eigenvalues>

#include "xpm/error.hpp"
#include "xpm/numeric.hpp"

namespace xpm {

EffectEstimate evaluate_contrast(const FitResult& f, const Eigen::VectorXd& c, const CovarianceMatrix& v,
                                 double level, std::string label) {
  if (c.size() != f.beta.size() || v.values.rows() != c.size() || v.values.cols() != c.size())
    throw EstimationError("contrast dimension does not match the fit");
  if (!(level > 0.0 && level < 1.0)) throw EstimationError("confidence level must be in (0,1)");

  EffectEstimate e;
  e.label = std::move(label);
  e.contrast = c;
  e.level = level;
  e.covariance_variant = v.variant;
  e.value = c.dot(f.beta);
  double var = c.dot(v.values * c);
  const double scale = std::max(1.0, (c.array().square() * v.values.diagonal().array().abs()).sum());
  if (var < 0.0) {
    if (var < -1e-12 * scale) throw EstimationError("contrast variance is negative; covariance is not PSD");
    var = 0.0;
  }
  e.std_error = std::sqrt(var);
  const double z = normal_quantile(0.5 + level / 2.0);
  e.ci_low = e.value - z * e.std_error;
  e.ci_high = e.value + z * e.std_error;
  if (e.std_error > 0.0) {
    e.p_value = normal_two_sided_p(e.value / e.std_error);
  } else {
    e.p_value = e.value == 0.0 ? 1.0 : 0.0;
  }
  return e;
}

Eigen::VectorXd unit_contrast(const FitResult& f, std::string_view label) {
  const auto it = std::find(f.labels.begin(), f.labels.end(), label);
  if (it == f.labels.end()) throw EstimationError("fit has no coefficient '" + std::string(label) + "'");
  Eigen::VectorXd c = Eigen::VectorXd::Zero(f.beta.size());
  c(it - f.labels.begin()) = 1.0;
  return c;
}

WaldTest wald_test(const FitResult& f, const Eigen::MatrixXd& c, const CovarianceMatrix& v) {
  if (c.cols() != f.beta.size()) throw EstimationError("Wald contrast matrix has wrong column count");
  const Eigen::VectorXd cb = c * f.beta;
  const Eigen::MatrixXd cvc = c * v.values * c.transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (cvc + cvc.transpose()));
  if (eig.info() != Eigen::Success) throw EstimationError("eigendecomposition failed in Wald test");
  const double top = std::max(eig.eigenvalues().cwiseAbs().maxCoeff(), 0.0);
  const double cutoff = top * 1e-10;
  WaldTest out;
  const Eigen::VectorXd proj = eig.eigenvectors().transpose() * cb;
  for (Eigen::Index i = 0; i < proj.size(); ++i) {
    const double lambda = eig.eigenvalues()(i);
    if (lambda > cutoff) {
      out.statistic += proj(i) * proj(i) / lambda;
      ++out.df;
    }
  }
  if (out.df == 0) throw EstimationError("Wald test has a degenerate covariance");
  out.p_value = chi_squared_sf(out.statistic, out.df);
  return out;
}

}  // namespace xpm
