#include <algorithm>
#include <cmath>
#include <cstdlib>

#include "doctest.h"
#include "support.hpp"
#include "xpm/error.hpp"
#include "xpm/quantile.hpp"

using namespace testing;

namespace {

xpm::ModelSpec intercept_only() {
  xpm::ModelSpec s;
  s.treatment = false;
  return s;
}

Columns one_arm(std::vector<double> y) {
  Columns c;
  c.arm.assign(y.size(), 0);
  c.y = std::move(y);
  return c;
}

// Smallest objective over candidate intercepts drawn from the sample itself;
// some order statistic always minimises an intercept-only check loss.
double plugin_objective(const std::vector<double>& y, const std::vector<double>& w, double tau) {
  double best = INFINITY;
  for (double b : y) {
    double s = 0;
    for (std::size_t i = 0; i < y.size(); ++i) s += w[i] * xpm::check_loss(y[i] - b, tau);
    best = std::min(best, s);
  }
  return best;
}

}  // namespace

TEST_CASE("check loss values") {
  CHECK(xpm::check_loss(0, 0.5) == 0);
  CHECK(xpm::check_loss(1, 0.9) == doctest::Approx(0.9));
  CHECK(xpm::check_loss(-1, 0.9) == doctest::Approx(0.1));
  CHECK(xpm::check_loss(-3, 0.5) == 1.5);
  CHECK(xpm::check_loss(2, 0.5) == 1.0);
  CHECK_THROWS(xpm::check_loss(1, 0.0));
  CHECK_THROWS(xpm::check_loss(1, 1.0));
}

TEST_CASE("intercept-only fits return sample quantiles") {
  const auto ds = make_dataset(one_arm({1, 2, 9}));
  const auto cd = xpm::compress(ds);
  const auto d = xpm::build_design(cd, intercept_only());
  xpm::QuantileSpec spec;
  const auto f = xpm::fit_quantile(d, xpm::outcome_vector(cd), spec);
  CHECK(f.beta(0) == doctest::Approx(2.0).epsilon(1e-9));
  CHECK(f.objective == doctest::Approx(4.0).epsilon(1e-9));

  const auto flat = make_dataset(one_arm({1, 2, 3, 4}));
  const auto cf = xpm::compress(flat);
  spec.tau = 0.25;
  const auto g = xpm::fit_quantile(xpm::build_design(cf, intercept_only()), xpm::outcome_vector(cf), spec);
  CHECK(g.beta(0) >= 1.0 - 1e-9);
  CHECK(g.beta(0) <= 2.0 + 1e-9);
  // grid scan of the flat interval
  double grid_min = INFINITY;
  for (int k = 0; k <= 4000; ++k) {
    const double b = k / 1000.0;
    double s = 0;
    for (double v : {1.0, 2.0, 3.0, 4.0}) s += xpm::check_loss(v - b, 0.25);
    grid_min = std::min(grid_min, s);
  }
  CHECK(std::abs(g.objective - grid_min) < 1e-6);
}

TEST_CASE("binary treatment coefficient is the median difference") {
  Columns c;
  c.arm = {0, 0, 0, 0, 0, 1, 1, 1, 1, 1};
  c.y = {1, 2, 3, 4, 50, 10, 11, 13, 14, 15};
  const auto cd = xpm::compress(make_dataset(c));
  const auto f = xpm::fit_quantile(xpm::build_design(cd, {}), xpm::outcome_vector(cd), {});
  CHECK(f.beta(0) == doctest::Approx(3.0).epsilon(1e-8));
  CHECK(f.beta(1) == doctest::Approx(10.0).epsilon(1e-8));
}

TEST_CASE("regression objectives match an LP solution") {
  // scipy.optimize.linprog (HiGHS) on the reference fixture, unit weights
  const auto cd = xpm::compress(make_dataset(reference_columns()));
  xpm::ModelSpec m;
  m.covariates = {"x1"};
  const auto d = xpm::build_design(cd, m);
  const auto y = xpm::outcome_vector(cd);
  const std::pair<double, double> cases[] = {{0.25, 1.29}, {0.5, 1.72}, {0.9, 0.555}};
  for (const auto& [tau, objective] : cases) {
    xpm::QuantileSpec spec;
    spec.tau = tau;
    const auto f = xpm::fit_quantile(d, y, spec);
    CAPTURE(tau);
    CHECK(std::abs(f.objective - objective) < 1e-6);
    CHECK(f.objective == doctest::Approx(xpm::quantile_objective(d, y, f.beta, tau)).epsilon(1e-12));
    CHECK(xpm::subgradient_balance(d, y, f.beta, tau).holds);
  }
}

TEST_CASE("intercept-only objective matches the plug-in quantile (property)") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    xpm::CounterRng rng(seed, 42);
    const std::size_t n = 30 + rng.uniform_index(300);
    std::vector<double> y(n), w(n);
    const bool zero_inflated = seed % 2 == 0;
    const bool weighted = seed % 3 == 0;
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = zero_inflated && rng.bernoulli(0.7) ? 0.0 : std::round(rng.exponential() * 20) / 4;
      w[i] = weighted ? 1.0 + static_cast<double>(rng.uniform_index(4)) : 1.0;
    }
    Columns c = one_arm(y);
    if (weighted) c.w = w;
    const auto cd = xpm::compress(make_dataset(c));
    xpm::ModelSpec m = intercept_only();
    m.weighted = weighted;
    const auto d = xpm::build_design(cd, m);
    for (double tau : {0.1, 0.25, 0.5, 0.9, 0.99}) {
      xpm::QuantileSpec spec;
      spec.tau = tau;
      const auto f = xpm::fit_quantile(d, xpm::outcome_vector(cd), spec);
      CAPTURE(seed);
      CAPTURE(tau);
      CHECK(f.objective <= plugin_objective(y, w, tau) + 1e-6);
      CHECK(xpm::subgradient_balance(d, xpm::outcome_vector(cd), f.beta, tau).holds);

      // shifting every outcome moves the fit by the same constant
      Columns shifted = c;
      for (auto& v : shifted.y) v += 7.25;
      const auto cs = xpm::compress(make_dataset(shifted));
      const auto fs = xpm::fit_quantile(xpm::build_design(cs, m), xpm::outcome_vector(cs), spec);
      CHECK(std::abs(fs.objective - f.objective) < 1e-6);
    }
  }
}

TEST_CASE("inverted-CDF ranks and quantiles") {
  CHECK(xpm::inverted_cdf_rank(0.5, 4) == 2);
  CHECK(xpm::inverted_cdf_rank(0.5, 5) == 3);
  CHECK(xpm::inverted_cdf_rank(0.25, 4) == 1);
  CHECK(xpm::inverted_cdf_rank(0.26, 4) == 2);
  CHECK(xpm::inverted_cdf_rank(0.99, 10) == 10);
  CHECK(xpm::inverted_cdf_rank(0.1, 10) == 1);
  CHECK(xpm::inverted_cdf_rank(0.3, 10) == 3);
  const std::vector<double> s{0, 0, 0, 1, 5};
  CHECK(xpm::empirical_quantile(s, 0.5) == 0.0);
  CHECK(xpm::empirical_quantile(s, 0.7) == 1.0);
  CHECK(xpm::empirical_quantile(s, 0.9) == 5.0);
}

TEST_CASE("bootstrap QTE under a location shift") {
  Columns c;
  xpm::CounterRng rng(17, 0);
  for (int i = 0; i < 200; ++i) {
    const double v = rng.normal();
    c.y.push_back(v);
    c.arm.push_back(0);
    c.y.push_back(v + 1.0);
    c.arm.push_back(1);
  }
  const auto ds = make_dataset(c);
  const auto e = xpm::bootstrap_qte(ds, 0.9, 400, 99);
  CHECK(e.estimate == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(e.ci_low <= 1.0);
  CHECK(e.ci_high >= 1.0);
  CHECK(e.ci_low <= e.estimate);
  CHECK(e.estimate <= e.ci_high);
  CHECK(e.accounts_control == 200);
  CHECK(e.label == "treatment[t1]");
}

TEST_CASE("bootstrap is deterministic and thread-count independent") {
  const auto ds = make_dataset(random_columns(5, 600, 2, 0, 0, false, 150));
  ::setenv("XPM_THREADS", "1", 1);
  const auto a = xpm::bootstrap_qte(ds, 0.5, 300, 7);
  ::setenv("XPM_THREADS", "4", 1);
  const auto b = xpm::bootstrap_qte(ds, 0.5, 300, 7);
  ::unsetenv("XPM_THREADS");
  CHECK(a.ci_low == b.ci_low);
  CHECK(a.ci_high == b.ci_high);
  CHECK(a.estimate == b.estimate);
  CHECK(a.accounts_control < 300);  // clustered: accounts, not rows
  const auto other = xpm::bootstrap_qte(ds, 0.5, 300, 8);
  CHECK((other.ci_low != a.ci_low || other.ci_high != a.ci_high));
}

TEST_CASE("bootstrap argument errors") {
  const auto small = make_dataset(random_columns(1, 30, 2, 0, 0, false));
  CHECK_THROWS_AS(xpm::bootstrap_qte(small, 0.5, 200, 1), xpm::EstimationError);
  const auto ds = make_dataset(random_columns(1, 100, 2, 0, 0, false));
  CHECK_THROWS_AS(xpm::bootstrap_qte(ds, 0.5, 199, 1), xpm::EstimationError);
  CHECK_THROWS_AS(xpm::bootstrap_qte(ds, 1.5, 200, 1), xpm::EstimationError);
}
