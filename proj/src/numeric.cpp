#include "xpm/numeric.hpp"

#include <algorithm>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>

#include "xpm/error.hpp"

namespace xpm {

MomentAccumulator::MomentAccumulator(std::size_t p)
    : p_(p), upper_(p * (p + 1) / 2), rhs_(p) {}

void MomentAccumulator::add(const double* m, double w, double y) noexcept {
  std::size_t k = 0;
  for (std::size_t a = 0; a < p_; ++a) {
    const double wa = w * m[a];
    rhs_[a].add(wa * y);
    for (std::size_t b = a; b < p_; ++b) upper_[k++].add(wa * m[b]);
  }
}

void MomentAccumulator::add_outer(const double* m, double w) noexcept {
  std::size_t k = 0;
  for (std::size_t a = 0; a < p_; ++a) {
    const double wa = w * m[a];
    for (std::size_t b = a; b < p_; ++b) upper_[k++].add(wa * m[b]);
  }
}

Eigen::MatrixXd MomentAccumulator::matrix() const {
  const auto p = static_cast<Eigen::Index>(p_);
  Eigen::MatrixXd out(p, p);
  std::size_t k = 0;
  for (Eigen::Index a = 0; a < p; ++a) {
    for (Eigen::Index b = a; b < p; ++b) {
      out(a, b) = upper_[k].value();
      out(b, a) = out(a, b);
      ++k;
    }
  }
  return out;
}

Eigen::VectorXd MomentAccumulator::vector() const {
  Eigen::VectorXd out(static_cast<Eigen::Index>(p_));
  for (std::size_t a = 0; a < p_; ++a) out(static_cast<Eigen::Index>(a)) = rhs_[a].value();
  return out;
}

double normal_cdf(double x) {
  return boost::math::cdf(boost::math::normal_distribution<double>(), x);
}

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw EstimationError("normal quantile requires p in (0,1)");
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

double normal_two_sided_p(double z) {
  if (std::isnan(z)) return 1.0;
  const double tail = boost::math::cdf(
      boost::math::complement(boost::math::normal_distribution<double>(), std::abs(z)));
  return std::min(1.0, 2.0 * tail);
}

double chi_squared_sf(double x, double df) {
  if (x <= 0.0) return 1.0;
  return boost::math::cdf(boost::math::complement(boost::math::chi_squared_distribution<double>(df), x));
}

void symmetrize_upper(Eigen::MatrixXd& m) {
  for (Eigen::Index a = 0; a < m.rows(); ++a)
    for (Eigen::Index b = a + 1; b < m.cols(); ++b) m(b, a) = m(a, b);
}

}  // namespace xpm
