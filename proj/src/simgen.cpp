#include "xpm/simgen.hpp"

#include <cmath>
#include <numeric>

#include "xpm/contrast.hpp"
#include "xpm/covariance.hpp"
#include "xpm/error.hpp"
#include "xpm/linear.hpp"
#include "xpm/parallel.hpp"
#include "xpm/rng.hpp"

namespace xpm {

std::string_view to_string(NoiseKind k) noexcept {
  switch (k) {
    case NoiseKind::homoskedastic: return "homoskedastic";
    case NoiseKind::heteroskedastic: return "heteroskedastic";
    case NoiseKind::zero_inflated: return "zero_inflated";
  }
  return "?";
}

std::string_view to_string(EffectShape s) noexcept {
  switch (s) {
    case EffectShape::flat: return "flat";
    case EffectShape::linear: return "linear";
    case EffectShape::diminishing: return "diminishing";
  }
  return "?";
}

std::string_view to_string(ErrorCorrelation c) noexcept {
  switch (c) {
    case ErrorCorrelation::equicorrelated: return "equicorrelated";
    case ErrorCorrelation::ar1: return "ar1";
  }
  return "?";
}

std::optional<NoiseKind> parse_noise_kind(std::string_view text) noexcept {
  for (auto k : {NoiseKind::homoskedastic, NoiseKind::heteroskedastic, NoiseKind::zero_inflated})
    if (text == to_string(k)) return k;
  return std::nullopt;
}

std::optional<EffectShape> parse_effect_shape(std::string_view text) noexcept {
  for (auto s : {EffectShape::flat, EffectShape::linear, EffectShape::diminishing})
    if (text == to_string(s)) return s;
  return std::nullopt;
}

std::optional<ErrorCorrelation> parse_error_correlation(std::string_view text) noexcept {
  for (auto c : {ErrorCorrelation::equicorrelated, ErrorCorrelation::ar1})
    if (text == to_string(c)) return c;
  return std::nullopt;
}

void SimConfig::validate() const {
  if (arms < 2) throw ConfigError("arms", "need at least 2 arms");
  if (accounts < 2 * static_cast<std::size_t>(arms)) throw ConfigError("accounts", "need at least 2 accounts per arm");
  if (effects.size() != static_cast<std::size_t>(arms))
    throw ConfigError("effects", "expected one effect per arm (" + std::to_string(arms) + ")");
  for (double e : effects)
    if (!std::isfinite(e)) throw ConfigError("effects", "effects must be finite");
  if (!std::isfinite(baseline)) throw ConfigError("baseline", "baseline must be finite");
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw ConfigError("sigma", "sigma must be finite and >= 0");
  if (!std::isfinite(variance_power)) throw ConfigError("variance_power", "variance_power must be finite");
  if (!(zero_rate >= 0.0 && zero_rate < 1.0)) throw ConfigError("zero_rate", "zero_rate must be in [0, 1)");
  if (noise == NoiseKind::heteroskedastic && !weighted)
    throw ConfigError("noise", "heteroskedastic noise is a function of the weights; set weighted");
  if (max_weight < 1) throw ConfigError("max_weight", "max_weight must be >= 1");
  if (covariates < 0) throw ConfigError("covariates", "covariates must be >= 0");
  if (!std::isfinite(covariate_effect)) throw ConfigError("covariate_effect", "covariate_effect must be finite");
  if (cardinality && !(*cardinality > 0.0 && std::isfinite(*cardinality)))
    throw ConfigError("cardinality", "cardinality must be a positive granularity");
  if (panel) {
    if (panel->periods < 1) throw ConfigError("panel.periods", "periods must be >= 1");
    if (!(panel->rho >= 0.0 && panel->rho < 1.0)) throw ConfigError("panel.rho", "rho must be in [0, 1)");
    if (!std::isfinite(panel->slope)) throw ConfigError("panel.slope", "slope must be finite");
    if (!(panel->decay > 0.0 && panel->decay <= 1.0)) throw ConfigError("panel.decay", "decay must be in (0, 1]");
  }
}

namespace {

struct Layout {
  Schema schema;
  std::vector<std::string> arm_labels;
  std::vector<int> arm_of_account;
};

Layout prepare(const SimConfig& c, bool panel) {
  Layout l;
  l.schema.outcome_column = "y";
  l.schema.treatment_column = "arm";
  for (int j = 1; j <= c.covariates; ++j) l.schema.feature_columns.push_back("x" + std::to_string(j));
  if (c.weighted) l.schema.weight_column = "w";
  if (panel) {
    l.schema.cluster_column = "member";
    l.schema.time_column = "period";
  }
  l.schema.control_label = "control";
  l.arm_labels.emplace_back("control");
  for (int a = 1; a < c.arms; ++a) l.arm_labels.push_back("t" + std::to_string(a));

  // Balanced assignment: a seeded Fisher-Yates permutation, arm = position mod arms.
  std::vector<std::size_t> order(c.accounts);
  std::iota(order.begin(), order.end(), std::size_t{0});
  CounterRng rng(derive_seed(c.seed, 0), 0);
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.uniform_index(i)]);
  l.arm_of_account.resize(c.accounts);
  for (std::size_t pos = 0; pos < order.size(); ++pos)
    l.arm_of_account[order[pos]] = static_cast<int>(pos % static_cast<std::size_t>(c.arms));
  return l;
}

double round_to(double v, const std::optional<double>& g) { return g ? std::round(v / *g) * *g : v; }

double treatment_path(const SimConfig& c, int arm, int period) {
  const double d = c.effects[static_cast<std::size_t>(arm)] - c.effects[0];
  if (arm == 0 || !c.panel) return d;
  const int k = period - 1;
  switch (c.panel->shape) {
    case EffectShape::flat: return d;
    case EffectShape::linear: return d + c.panel->slope * k;
    case EffectShape::diminishing: return d * std::pow(c.panel->decay, k);
  }
  return d;
}

SimTruth base_truth(const SimConfig& c, const Layout& l) {
  SimTruth t;
  t.arm_labels = l.arm_labels;
  const double keep = c.noise == NoiseKind::zero_inflated ? 1.0 - c.zero_rate : 1.0;
  for (int a = 0; a < c.arms; ++a) {
    const double e = c.effects[static_cast<std::size_t>(a)] - c.effects[0];
    t.effect.push_back(e);
    t.mean_effect.push_back(keep * e);
  }
  t.covariate_effect = c.covariate_effect;
  t.rounded = c.cardinality.has_value();
  return t;
}

struct AccountDraw {
  double weight = 1.0;
  std::vector<double> x;
  double signal = 0.0;  // covariate contribution
};

AccountDraw draw_account(const SimConfig& c, CounterRng& rng) {
  AccountDraw a;
  if (c.weighted) a.weight = 1.0 + static_cast<double>(rng.uniform_index(static_cast<std::uint64_t>(c.max_weight)));
  for (int j = 0; j < c.covariates; ++j) {
    const double x = round_to(rng.normal(), c.cardinality);
    a.x.push_back(x);
    a.signal += c.covariate_effect * x;
  }
  return a;
}

double noise_scale(const SimConfig& c, double weight) {
  if (c.noise == NoiseKind::heteroskedastic) return c.sigma * std::pow(weight, 0.5 * c.variance_power);
  return c.sigma;
}

}  // namespace

SimData gen_ab(const SimConfig& c) {
  c.validate();
  if (c.panel) throw ConfigError("panel", "gen_ab needs an unset panel section");
  Layout l = prepare(c, false);
  DatasetColumns cols;
  cols.outcome.resize(c.accounts);
  cols.weight.resize(c.accounts);
  cols.arm = l.arm_of_account;
  cols.features.reserve(c.accounts * static_cast<std::size_t>(c.covariates));
  const std::uint64_t row_seed = derive_seed(c.seed, 1);
  for (std::size_t i = 0; i < c.accounts; ++i) {
    CounterRng rng(row_seed, i);
    const AccountDraw a = draw_account(c, rng);
    const int arm = cols.arm[i];
    cols.weight[i] = a.weight;
    cols.features.insert(cols.features.end(), a.x.begin(), a.x.end());
    const bool zero = c.noise == NoiseKind::zero_inflated && rng.bernoulli(c.zero_rate);
    const double mean = c.baseline + c.effects[0] + treatment_path(c, arm, 1) + a.signal;
    const double y = zero ? 0.0 : mean + noise_scale(c, a.weight) * rng.normal();
    cols.outcome[i] = round_to(y, c.cardinality);
  }
  SimTruth truth = base_truth(c, l);
  return {Dataset(l.schema, l.arm_labels, std::move(cols)), std::move(truth)};
}

SimData gen_panel(const SimConfig& c) {
  c.validate();
  if (!c.panel) throw ConfigError("panel", "gen_panel needs a panel section");
  const PanelConfig& pc = *c.panel;
  Layout l = prepare(c, true);
  const auto periods = static_cast<std::size_t>(pc.periods);
  const std::size_t n = c.accounts * periods;
  DatasetColumns cols;
  cols.outcome.reserve(n);
  cols.weight.reserve(n);
  cols.arm.reserve(n);
  cols.cluster.reserve(n);
  cols.period.reserve(n);
  cols.features.reserve(n * static_cast<std::size_t>(c.covariates));
  const std::uint64_t row_seed = derive_seed(c.seed, 1);
  const double shared = std::sqrt(pc.rho);
  const double own = std::sqrt(1.0 - pc.rho);
  const double innovation = std::sqrt(1.0 - pc.rho * pc.rho);
  for (std::size_t i = 0; i < c.accounts; ++i) {
    CounterRng rng(row_seed, i);
    const AccountDraw a = draw_account(c, rng);
    const int arm = l.arm_of_account[i];
    const double sd = noise_scale(c, a.weight);
    const double member = rng.normal();
    double prev = 0.0;
    for (std::size_t t = 0; t < periods; ++t) {
      double e = 0.0;
      if (pc.correlation == ErrorCorrelation::equicorrelated) {
        e = shared * member + own * rng.normal();
      } else {
        e = t == 0 ? member : pc.rho * prev + innovation * rng.normal();
        prev = e;
      }
      const bool zero = c.noise == NoiseKind::zero_inflated && rng.bernoulli(c.zero_rate);
      const double mean = c.baseline + c.effects[0] + treatment_path(c, arm, static_cast<int>(t) + 1) + a.signal;
      const double y = zero ? 0.0 : mean + sd * e;
      cols.outcome.push_back(round_to(y, c.cardinality));
      cols.weight.push_back(a.weight);
      cols.arm.push_back(arm);
      cols.cluster.push_back(static_cast<std::int64_t>(i));
      cols.period.push_back(static_cast<std::int64_t>(t) + 1);
      cols.features.insert(cols.features.end(), a.x.begin(), a.x.end());
    }
  }
  SimTruth truth = base_truth(c, l);
  const double keep = c.noise == NoiseKind::zero_inflated ? 1.0 - c.zero_rate : 1.0;
  for (std::size_t t = 0; t < periods; ++t) truth.periods.push_back(static_cast<std::int64_t>(t) + 1);
  for (int a = 0; a < c.arms; ++a) {
    std::vector<double> daily;
    for (std::size_t t = 0; t < periods; ++t) daily.push_back(keep * treatment_path(c, a, static_cast<int>(t) + 1));
    truth.average_effect.push_back(std::accumulate(daily.begin(), daily.end(), 0.0) / static_cast<double>(periods));
    truth.daily_effect.push_back(std::move(daily));
  }
  truth.slope = pc.shape == EffectShape::linear ? keep * pc.slope : 0.0;
  return {Dataset(l.schema, l.arm_labels, std::move(cols)), std::move(truth)};
}

PanelDataset as_panel(const SimData& s) { return PanelDataset(s.data, s.data.schema().feature_columns); }

std::string_view to_string(CoverageEstimator e) noexcept {
  switch (e) {
    case CoverageEstimator::ols_iid: return "ols_iid";
    case CoverageEstimator::ols_hc1: return "ols_hc1";
    case CoverageEstimator::wls_iid: return "wls_iid";
    case CoverageEstimator::wls_hc1: return "wls_hc1";
    case CoverageEstimator::panel_iid: return "panel_iid";
    case CoverageEstimator::panel_cr1: return "panel_cr1";
    case CoverageEstimator::panel_slope_cr1: return "panel_slope_cr1";
  }
  return "?";
}

std::optional<CoverageEstimator> parse_coverage_estimator(std::string_view text) noexcept {
  for (auto e : {CoverageEstimator::ols_iid, CoverageEstimator::ols_hc1, CoverageEstimator::wls_iid,
                 CoverageEstimator::wls_hc1, CoverageEstimator::panel_iid, CoverageEstimator::panel_cr1,
                 CoverageEstimator::panel_slope_cr1})
    if (text == to_string(e)) return e;
  return std::nullopt;
}

namespace {

struct Draw {
  double estimate = 0.0;
  double low = 0.0;
  double high = 0.0;
  double truth = 0.0;
};

Draw one_repetition(const SimConfig& c, CoverageEstimator e, double level) {
  const std::string arm = "treatment[t1]";
  switch (e) {
    case CoverageEstimator::ols_iid:
    case CoverageEstimator::ols_hc1:
    case CoverageEstimator::wls_iid:
    case CoverageEstimator::wls_hc1: {
      const SimData s = gen_ab(c);
      ModelSpec spec;
      spec.covariates = s.data.schema().feature_columns;
      spec.weighted = e == CoverageEstimator::wls_iid || e == CoverageEstimator::wls_hc1;
      const CompressedDataset cd = compress(s.data);
      const DesignMatrix d = build_design(cd, spec);
      const FitResult f = fit_wls(d, outcome_vector(cd));
      const bool iid = e == CoverageEstimator::ols_iid || e == CoverageEstimator::wls_iid;
      const CovarianceMatrix v = iid ? cov_iid(f) : cov_white(f, CovarianceVariant::hc1);
      const EffectEstimate est = evaluate_contrast(f, unit_contrast(f, arm), v, level);
      return {est.value, est.ci_low, est.ci_high, s.truth.mean_effect[1]};
    }
    case CoverageEstimator::panel_iid:
    case CoverageEstimator::panel_cr1:
    case CoverageEstimator::panel_slope_cr1: {
      const SimData s = gen_panel(c);
      const PanelDataset p = as_panel(s);
      TimeBasis basis;
      basis.kind = e == CoverageEstimator::panel_slope_cr1 ? TimeBasisKind::linear : TimeBasisKind::dummies;
      const auto& covs = s.data.schema().feature_columns;
      const PanelDesign pd = build_panel_design(p, basis, covs, c.weighted);
      const FitResult f = fit_wls(pd.design, pd.outcome);
      const CovarianceMatrix v = e == CoverageEstimator::panel_iid
                                     ? cov_iid(f)
                                     : cov_cluster(f, pd.design, CovarianceVariant::cr1);
      if (e == CoverageEstimator::panel_slope_cr1) {
        const EffectEstimate est = evaluate_contrast(f, unit_contrast(f, arm + ":t"), v, level);
        return {est.value, est.ci_low, est.ci_high, s.truth.slope};
      }
      DynamicOptions opt;
      opt.level = level;
      const EffectEstimate est = average_effect(f, v, pd.layout, opt);
      return {est.value, est.ci_low, est.ci_high, s.truth.average_effect[1]};
    }
  }
  throw EstimationError("unknown coverage estimator");
}

}  // namespace

CoverageReport coverage_study(const SimConfig& c, CoverageEstimator estimator, int repetitions, double level) {
  if (repetitions < 500) throw ConfigError("repetitions", "coverage studies need at least 500 repetitions");
  c.validate();
  std::vector<Draw> draws(static_cast<std::size_t>(repetitions));
  parallel_for(draws.size(), [&](std::size_t r) {
    SimConfig rc = c;
    rc.seed = derive_seed(c.seed, r);
    draws[r] = one_repetition(rc, estimator, level);
  });
  CoverageReport out;
  out.repetitions = repetitions;
  out.level = level;
  double covered = 0.0, width = 0.0, bias = 0.0;
  for (const auto& d : draws) {
    if (d.low <= d.truth && d.truth <= d.high) covered += 1.0;
    width += d.high - d.low;
    bias += d.estimate - d.truth;
  }
  const auto n = static_cast<double>(repetitions);
  out.coverage = covered / n;
  out.mean_width = width / n;
  out.bias = bias / n;
  return out;
}

}  // namespace xpm
