#include <cmath>

#include "doctest.h"
#include "support.hpp"
#include "xpm/contrast.hpp"
#include "xpm/covariance.hpp"
#include "xpm/error.hpp"

using namespace testing;

namespace {

struct Ref {
  std::vector<double> iid, hc0, hc1, cr0, cr1;
};

// statsmodels WLS(...).fit(cov_type=...) on the reference fixture.
const Ref kOls{
    {0.07537302295539035, -0.07703537214012328, -0.07814360492994524, -0.016623491847329235, -0.07703537214012328,
     0.12166812842545241, 0.08001704607464422, 0.01789004360712575, -0.07814360492994524, 0.08001704607464422,
     0.1526722600454713, 0.01873441144699009, -0.016623491847329235, 0.01789004360712575, 0.01873441144699009,
     0.012665517597965123},
    {0.03023121172774177, -0.02123132191098915, -0.04125372843240535, -0.010409435523950183, -0.02123132191098915,
     0.0563727961805064, 0.03181615020916916, 0.0035375401552178326, -0.04125372843240535, 0.03181615020916917,
     0.08961773185721357, 0.018782816054857543, -0.010409435523950183, 0.0035375401552178326, 0.018782816054857543,
     0.00778263388713462},
    {0.04534681759161265, -0.031846982866483735, -0.06188059264860802, -0.015614153285925273, -0.03184698286648373,
     0.0845591942707596, 0.04772422531375374, 0.005306310232826749, -0.06188059264860803, 0.04772422531375374,
     0.1344265977858204, 0.028174224082286314, -0.015614153285925273, 0.005306310232826749, 0.028174224082286318,
     0.011673950830701928},
    {0.028003252039164275, -0.02527258794254375, -0.05067193137509726, -0.00934843368725814, -0.02527258794254375,
     0.0682094256473219, 0.0375832958122504, 0.005933364054648726, -0.05067193137509725, 0.037583295812250395,
     0.11068986847750148, 0.017718174304616675, -0.009348433687258144, 0.005933364054648728, 0.017718174304616682,
     0.00745919725679174},
    {0.046205365864621054, -0.04169977010519719, -0.08360868676891048, -0.015424915583975931, -0.04169977010519719,
     0.11254555231808112, 0.06201243809021316, 0.009790050690170396, -0.08360868676891045, 0.062012438090213146,
     0.18263828298787743, 0.029234987602617512, -0.015424915583975938, 0.009790050690170402, 0.029234987602617526,
     0.01230767547370637}};

const Ref kWls{
    {0.06624015233730005, -0.0715599778571479, -0.06527291133369136, -0.015475856057739028, -0.0715599778571479,
     0.13977821732887716, 0.0703529086538739, 0.019313107252383357, -0.06527291133369136, 0.0703529086538739,
     0.12592863431101692, 0.014778174022349155, -0.015475856057739028, 0.019313107252383357, 0.014778174022349155,
     0.011162912566237979},
    {0.041558821396686006, -0.037549450713964316, -0.05106217278203291, -0.010523299269834665, -0.037549450713964316,
     0.09590412995790625, 0.049747208650823764, 0.007723875375308858, -0.05106217278203291, 0.049747208650823764,
     0.1048000837449395, 0.017361342735647687, -0.010523299269834665, 0.007723875375308856, 0.017361342735647687,
     0.007859903615138287},
    {0.062338232095029006, -0.056324176070946474, -0.07659325917304936, -0.015784948904751996, -0.05632417607094648,
     0.14385619493685936, 0.07462081297623566, 0.01158581306296329, -0.07659325917304936, 0.07462081297623567,
     0.15720012561740926, 0.026042014103471532, -0.015784948904751996, 0.011585813062963288, 0.02604201410347153,
     0.011789855422707428},
    {0.03749856309131492, -0.03550984129993527, -0.05586626363498324, -0.009105393451548482, -0.03550984129993526,
     0.09816053923789064, 0.04203617710866416, 0.010206090470105131, -0.05586626363498323, 0.04203617710866417,
     0.11844595613162082, 0.016121883873112714, -0.009105393451548479, 0.010206090470105131, 0.01612188387311271,
     0.007926912926247734},
    {0.06187262910066962, -0.05859123814489319, -0.09217933499772234, -0.015023899195054995, -0.05859123814489317,
     0.16196488974251955, 0.06935969222929586, 0.016840049275673466, -0.09217933499772232, 0.06935969222929587,
     0.19543582761717435, 0.026601108390635977, -0.01502389919505499, 0.016840049275673466, 0.02660110839063597,
     0.01307940632830876}};

void check_all(bool weighted, const Ref& ref) {
  const auto ds = make_dataset(reference_columns());
  xpm::ModelSpec spec;
  spec.covariates = {"x1"};
  spec.weighted = weighted;
  const auto cd = xpm::compress_within_clusters(ds);
  const auto d = xpm::build_design(cd, spec);
  const auto f = xpm::fit_wls(d, xpm::outcome_vector(cd));
  CHECK(max_abs_diff(xpm::cov_iid(f).values, square(ref.iid)) < 1e-13);
  CHECK(max_abs_diff(xpm::cov_white(f, xpm::CovarianceVariant::hc0).values, square(ref.hc0)) < 1e-13);
  CHECK(max_abs_diff(xpm::cov_white(f, xpm::CovarianceVariant::hc1).values, square(ref.hc1)) < 1e-13);
  const auto cr0 = xpm::cov_cluster(f, d, xpm::CovarianceVariant::cr0);
  CHECK(max_abs_diff(cr0.values, square(ref.cr0)) < 1e-13);
  CHECK(cr0.cluster_count == 6);
  CHECK(max_abs_diff(xpm::cov_cluster(f, d, xpm::CovarianceVariant::cr1).values, square(ref.cr1)) < 1e-13);
}

}  // namespace

TEST_CASE("OLS covariances match statsmodels") { check_all(false, kOls); }
TEST_CASE("WLS covariances match statsmodels") { check_all(true, kWls); }

TEST_CASE("HC1 and CR1 from compressed rows equal raw-row sandwiches (property)") {
  for (std::uint64_t seed = 100; seed < 120; ++seed) {
    const bool weighted = seed % 2 == 1;
    const int arms = 2 + static_cast<int>(seed % 2);
    const auto c = random_columns(seed, 300 + 50 * (seed % 7), arms, 1, 1 + static_cast<int>(seed % 3), weighted, 40);
    const auto ds = make_dataset(c);
    xpm::ModelSpec spec;
    spec.covariates = {"x1"};
    spec.weighted = weighted;
    const auto X = dense_design(c, arms);
    const Eigen::VectorXd w = weighted ? to_eigen(c.w) : Eigen::VectorXd::Ones(X.rows());
    const auto oracle = dense_wls(X, to_eigen(c.y), w);

    const auto cd = xpm::compress(ds);
    const auto f = xpm::fit_wls(xpm::build_design(cd, spec), xpm::outcome_vector(cd));
    CAPTURE(seed);
    CHECK(max_abs_diff(xpm::cov_white(f).values, oracle.hc1) < 1e-12);
    CHECK(max_abs_diff(xpm::cov_iid(f).values, oracle.iid) < 1e-12);

    const auto cc = xpm::compress_within_clusters(ds);
    const auto dc = xpm::build_design(cc, spec);
    const auto fc = xpm::fit_wls(dc, xpm::outcome_vector(cc));
    const auto cr1 = xpm::cov_cluster(fc, dc, xpm::CovarianceVariant::cr1);
    CHECK(max_abs_diff(cr1.values, dense_cluster(X, w, oracle, c.cluster, true)) < 1e-12);
  }
}

TEST_CASE("cluster covariance needs two clusters and cluster ids") {
  Columns c = random_columns(9, 30, 2, 0, 0, false);
  c.cluster.assign(30, 7);
  const auto ds = make_dataset(c);
  const auto cd = xpm::compress_within_clusters(ds);
  const auto d = xpm::build_design(cd, {});
  const auto f = xpm::fit_wls(d, xpm::outcome_vector(cd));
  CHECK_THROWS_AS(xpm::cov_cluster(f, d), xpm::EstimationError);
  const auto plain = xpm::compress(ds);
  const auto dp = xpm::build_design(plain, {});
  CHECK_THROWS_AS(xpm::cov_cluster(xpm::fit_wls(dp, xpm::outcome_vector(plain)), dp), xpm::EstimationError);
}

TEST_CASE("variant names parse case-insensitively") {
  CHECK(xpm::parse_covariance_variant("hc1") == xpm::CovarianceVariant::hc1);
  CHECK(xpm::parse_covariance_variant("CR0") == xpm::CovarianceVariant::cr0);
  CHECK_FALSE(xpm::parse_covariance_variant("HC3"));
  CHECK(xpm::to_string(xpm::CovarianceVariant::iid) == "IID");
}

TEST_CASE("contrast inference uses normal quantiles") {
  const auto ds = make_dataset(reference_columns());
  xpm::ModelSpec spec;
  spec.covariates = {"x1"};
  const auto cd = xpm::compress(ds);
  const auto f = xpm::fit_wls(xpm::build_design(cd, spec), xpm::outcome_vector(cd));
  const auto v = xpm::cov_white(f);
  const auto e = xpm::evaluate_contrast(f, xpm::unit_contrast(f, "treatment[t1]"), v, 0.95, "t1");
  const double se = std::sqrt(square(kOls.hc1)(1, 1));
  CHECK(e.value == doctest::Approx(1.2993533288169004).epsilon(1e-12));
  CHECK(e.std_error == doctest::Approx(se).epsilon(1e-12));
  CHECK(e.ci_high - e.value == doctest::Approx(1.959963984540054 * se).epsilon(1e-12));
  CHECK(e.covariance_variant == xpm::CovarianceVariant::hc1);

  // t1 - t2 through the full covariance
  Eigen::VectorXd c = Eigen::VectorXd::Zero(4);
  c(1) = 1;
  c(2) = -1;
  const auto diff = xpm::evaluate_contrast(f, c, v);
  const auto V = square(kOls.hc1);
  CHECK(diff.std_error == doctest::Approx(std::sqrt(V(1, 1) + V(2, 2) - 2 * V(1, 2))).epsilon(1e-12));

  // a one-row Wald test is the squared z statistic
  Eigen::MatrixXd C = Eigen::MatrixXd::Zero(1, 4);
  C(0, 1) = 1;
  const auto wt = xpm::wald_test(f, C, v);
  CHECK(wt.df == 1);
  CHECK(wt.statistic == doctest::Approx(std::pow(e.value / e.std_error, 2)).epsilon(1e-12));
  CHECK(wt.p_value == doctest::Approx(e.p_value).epsilon(1e-10));
  CHECK_THROWS_AS(xpm::unit_contrast(f, "missing"), xpm::EstimationError);
}
