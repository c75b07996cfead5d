#include <cmath>
#include <set>

#include "doctest.h"
#include "support.hpp"
#include "xpm/covariance.hpp"
#include "xpm/error.hpp"
#include "xpm/simgen.hpp"

using namespace testing;

TEST_CASE("noiseless experiment separates arms exactly") {
  xpm::SimConfig c;
  c.accounts = 101;
  c.sigma = 0.0;
  c.baseline = 3.0;
  c.seed = 1;
  const auto s = xpm::gen_ab(c);
  REQUIRE(s.data.size() == 101);
  int n[2] = {0, 0};
  for (std::size_t i = 0; i < s.data.size(); ++i) {
    const int a = s.data.arm(i);
    ++n[a];
    CHECK(s.data.outcome(i) == (a == 1 ? 4.0 : 3.0));
  }
  CHECK(std::abs(n[0] - n[1]) <= 1);
  CHECK(s.truth.arm_labels == std::vector<std::string>{"control", "t1"});
  CHECK(s.truth.effect[1] == 1.0);
}

TEST_CASE("generation is a pure function of the config") {
  xpm::SimConfig c;
  c.accounts = 500;
  c.arms = 3;
  c.effects = {0, 0.5, -0.5};
  c.noise = xpm::NoiseKind::zero_inflated;
  c.weighted = true;
  c.covariates = 2;
  c.seed = 99;
  const auto a = xpm::gen_ab(c);
  const auto b = xpm::gen_ab(c);
  REQUIRE(a.data.size() == b.data.size());
  bool any_zero = false;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    REQUIRE(a.data.outcome(i) == b.data.outcome(i));
    REQUIRE(a.data.weight(i) == b.data.weight(i));
    REQUIRE(a.data.arm(i) == b.data.arm(i));
    REQUIRE(a.data.features(i)[1] == b.data.features(i)[1]);
    any_zero = any_zero || a.data.outcome(i) == 0.0;
  }
  CHECK(any_zero);
  CHECK(a.truth.mean_effect[1] == doctest::Approx(0.4 * 0.5));
  c.seed = 100;
  const auto other = xpm::gen_ab(c);
  bool differs = false;
  for (std::size_t i = 0; i < a.data.size(); ++i) differs = differs || a.data.outcome(i) != other.data.outcome(i);
  CHECK(differs);
}

TEST_CASE("value rounding makes data highly compressible") {
  xpm::SimConfig c;
  c.accounts = 1000000;
  c.baseline = 5.0;
  c.effects = {0.0, 0.2};
  c.sigma = 1.5;
  c.cardinality = 1.0;
  c.seed = 3;
  const auto s = xpm::gen_ab(c);
  for (std::size_t i = 0; i < 1000; ++i) CHECK(s.data.outcome(i) == std::round(s.data.outcome(i)));
  CHECK(s.truth.rounded);
  CHECK(xpm::compression_ratio(xpm::compress(s.data)) > 1e4);
}

TEST_CASE("panel truth follows the configured shape") {
  xpm::SimConfig c;
  c.accounts = 40;
  c.effects = {0.0, 2.0};
  c.panel = xpm::PanelConfig{};
  c.panel->periods = 4;
  c.panel->shape = xpm::EffectShape::linear;
  c.panel->slope = 0.5;
  auto s = xpm::gen_panel(c);
  CHECK(s.truth.daily_effect[1] == std::vector<double>{2.0, 2.5, 3.0, 3.5});
  CHECK(s.truth.average_effect[1] == doctest::Approx(2.75));
  CHECK(s.truth.slope == 0.5);
  CHECK(s.truth.periods == std::vector<std::int64_t>{1, 2, 3, 4});
  CHECK(s.data.size() == 160);

  c.panel->shape = xpm::EffectShape::flat;
  s = xpm::gen_panel(c);
  CHECK(s.truth.daily_effect[1] == std::vector<double>{2.0, 2.0, 2.0, 2.0});

  c.panel->shape = xpm::EffectShape::diminishing;
  c.panel->decay = 0.5;
  s = xpm::gen_panel(c);
  CHECK(s.truth.daily_effect[1] == std::vector<double>{2.0, 1.0, 0.5, 0.25});

  const auto p = xpm::as_panel(s);
  CHECK(p.cluster_count() == 40);
  CHECK(p.periods().size() == 4);
}

TEST_CASE("invalid configs name the field") {
  auto expect_key = [](xpm::SimConfig c, const std::string& key) {
    try {
      c.validate();
      FAIL("expected ConfigError for " << key);
    } catch (const xpm::ConfigError& e) {
      CHECK(e.key() == key);
    }
  };
  xpm::SimConfig c;
  c.arms = 1;
  c.effects = {0};
  expect_key(c, "arms");
  c = {};
  c.accounts = 3;
  expect_key(c, "accounts");
  c = {};
  c.effects = {0, 1, 2};
  expect_key(c, "effects");
  c = {};
  c.sigma = -1;
  expect_key(c, "sigma");
  c = {};
  c.noise = xpm::NoiseKind::heteroskedastic;
  expect_key(c, "noise");
  c = {};
  c.panel = xpm::PanelConfig{};
  c.panel->rho = 1.0;
  expect_key(c, "panel.rho");
  c = {};
  c.cardinality = 0.0;
  expect_key(c, "cardinality");
  c = {};
  c.panel = xpm::PanelConfig{};
  CHECK_THROWS_AS(xpm::gen_ab(c), xpm::ConfigError);
  CHECK_THROWS_AS(xpm::gen_panel(xpm::SimConfig{}), xpm::ConfigError);
  CHECK_THROWS_AS(xpm::coverage_study(xpm::SimConfig{}, xpm::CoverageEstimator::ols_iid, 499), xpm::ConfigError);
}

TEST_CASE("uncorrelated panels give matching cluster and White variances") {
  xpm::SimConfig c;
  c.accounts = 2500;
  c.panel = xpm::PanelConfig{};
  c.panel->periods = 4;
  c.panel->rho = 0.0;
  c.seed = 8;
  const auto p = xpm::as_panel(xpm::gen_panel(c));
  const auto d = xpm::build_panel_design(p, {}, {});
  const auto f = xpm::fit_wls(d.design, d.outcome);
  const auto cr0 = xpm::cov_cluster(f, d.design, xpm::CovarianceVariant::cr0);
  const auto hc0 = xpm::cov_white(f, xpm::CovarianceVariant::hc0);
  for (Eigen::Index j = 0; j < f.beta.size(); ++j) {
    CAPTURE(j);
    CHECK(std::abs(cr0.values(j, j) / hc0.values(j, j) - 1.0) < 0.10);
  }
}

TEST_CASE("coverage studies") {
  SUBCASE("homoskedastic data with IID errors") {
    xpm::SimConfig c;
    c.accounts = 400;
    c.seed = 11;
    const auto r = xpm::coverage_study(c, xpm::CoverageEstimator::ols_iid, 1000);
    CHECK(r.repetitions == 1000);
    CHECK(r.coverage >= 0.93);
    CHECK(r.coverage <= 0.97);
    CHECK(std::abs(r.bias) < 0.02);
  }
  SUBCASE("variance inversely proportional to weight, WLS with HC1") {
    xpm::SimConfig c;
    c.accounts = 400;
    c.noise = xpm::NoiseKind::heteroskedastic;
    c.variance_power = -1.0;
    c.weighted = true;
    c.seed = 12;
    const auto r = xpm::coverage_study(c, xpm::CoverageEstimator::wls_hc1, 1000);
    CHECK(r.coverage >= 0.93);
    CHECK(r.coverage <= 0.97);
  }
  SUBCASE("correlated panel with IID errors undercovers") {
    xpm::SimConfig c;
    c.accounts = 400;
    c.panel = xpm::PanelConfig{};
    c.panel->rho = 0.7;
    c.seed = 13;
    const auto r = xpm::coverage_study(c, xpm::CoverageEstimator::panel_iid, 1000);
    CHECK(r.coverage < 0.90);
  }
  SUBCASE("studies are deterministic") {
    xpm::SimConfig c;
    c.accounts = 100;
    c.seed = 14;
    const auto a = xpm::coverage_study(c, xpm::CoverageEstimator::ols_hc1, 500);
    const auto b = xpm::coverage_study(c, xpm::CoverageEstimator::ols_hc1, 500);
    CHECK(a.coverage == b.coverage);
    CHECK(a.mean_width == b.mean_width);
    CHECK(a.bias == b.bias);
  }
}

TEST_CASE("enum names round trip") {
  for (auto k : {xpm::NoiseKind::homoskedastic, xpm::NoiseKind::heteroskedastic, xpm::NoiseKind::zero_inflated})
    CHECK(xpm::parse_noise_kind(xpm::to_string(k)) == k);
  for (auto s : {xpm::EffectShape::flat, xpm::EffectShape::linear, xpm::EffectShape::diminishing})
    CHECK(xpm::parse_effect_shape(xpm::to_string(s)) == s);
  for (auto e : {xpm::CoverageEstimator::ols_iid, xpm::CoverageEstimator::panel_slope_cr1})
    CHECK(xpm::parse_coverage_estimator(xpm::to_string(e)) == e);
  CHECK_FALSE(xpm::parse_error_correlation("none"));
}
