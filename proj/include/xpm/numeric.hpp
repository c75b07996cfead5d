#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace xpm {

/// Neumaier's variant of Kahan summation. Order-dependent but deterministic
/// for a fixed input order.
class CompensatedSum {
 public:
  void add(double x) noexcept {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  double value() const noexcept { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

/// Compensated accumulator for the upper triangle of a symmetric p x p matrix
/// and a companion p-vector: the MᵀWM / MᵀWy pair.
class MomentAccumulator {
 public:
  explicit MomentAccumulator(std::size_t p);

  /// Adds w * m mᵀ to the matrix and w * m * y to the vector.
  void add(const double* m, double w, double y) noexcept;
  /// Adds w * m mᵀ only.
  void add_outer(const double* m, double w) noexcept;

  Eigen::MatrixXd matrix() const;
  Eigen::VectorXd vector() const;

 private:
  std::size_t p_;
  std::vector<CompensatedSum> upper_;
  std::vector<CompensatedSum> rhs_;
};

double normal_cdf(double x);
double normal_quantile(double p);
/// Two-sided p-value of a standard-normal statistic.
double normal_two_sided_p(double z);
/// Upper tail of a chi-square distribution with `df` degrees of freedom.
double chi_squared_sf(double x, double df);

/// Copies the upper triangle onto the lower one.
void symmetrize_upper(Eigen::MatrixXd& m);

}  // namespace xpm
