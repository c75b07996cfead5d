#include <cmath>
#include <stdexcept>

#include "doctest.h"
#include "xpm/numeric.hpp"

TEST_CASE("compensated sum keeps low-order terms") {
  xpm::CompensatedSum s;
  s.add(1e16);
  s.add(1.0);
  s.add(-1e16);
  CHECK(s.value() == 1.0);

  xpm::CompensatedSum t;
  for (int i = 0; i < 1000000; ++i) t.add(0.1);
  CHECK(std::abs(t.value() - 100000.0) < 1e-9);
}

TEST_CASE("normal and chi-squared values match scipy") {
  // scipy.stats reference values
  CHECK(xpm::normal_quantile(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-14));
  CHECK(xpm::normal_cdf(-1.3) == doctest::Approx(0.09680048458561036).epsilon(1e-13));
  CHECK(xpm::chi_squared_sf(3.84, 1) == doctest::Approx(0.05004352124870519).epsilon(1e-12));
  CHECK(xpm::chi_squared_sf(7.5, 3) == doctest::Approx(0.0575584519726364).epsilon(1e-12));
  CHECK(xpm::normal_two_sided_p(0.0) == doctest::Approx(1.0));
  CHECK_THROWS(xpm::normal_quantile(0.0));
  CHECK_THROWS(xpm::normal_quantile(1.0));
}

TEST_CASE("moment accumulator forms weighted cross products") {
  xpm::MomentAccumulator acc(2);
  const double r1[2] = {1.0, 2.0};
  const double r2[2] = {1.0, -1.0};
  acc.add(r1, 2.0, 3.0);
  acc.add(r2, 1.0, 0.5);
  const Eigen::MatrixXd m = acc.matrix();
  const Eigen::VectorXd v = acc.vector();
  CHECK(m(0, 0) == 3.0);
  CHECK(m(0, 1) == 3.0);
  CHECK(m(1, 0) == 3.0);
  CHECK(m(1, 1) == 9.0);
  CHECK(v(0) == 6.5);
  CHECK(v(1) == 11.5);
}
