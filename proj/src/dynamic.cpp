#include "xpm/dynamic.hpp"

#include <algorithm>
#include <unordered_map>

#include "xpm/error.hpp"
#include "xpm/numeric.hpp"

namespace xpm {

PanelDataset::PanelDataset(Dataset ds, std::span<const std::string> baseline_covariates) : ds_(std::move(ds)) {
  if (!ds_.has_clusters()) throw DataError("panel data needs a cluster column");
  if (!ds_.has_periods()) throw DataError("panel data needs a time column");
  std::vector<std::size_t> cov_idx;
  for (const auto& name : baseline_covariates) {
    const auto idx = ds_.feature_index(name);
    if (!idx) throw DataError("missing required column '" + name + "'");
    cov_idx.push_back(*idx);
  }

  std::unordered_map<std::int64_t, std::size_t> first_row;
  std::vector<std::pair<std::int64_t, std::int64_t>> keys;
  keys.reserve(ds_.size());
  for (std::size_t i = 0; i < ds_.size(); ++i) {
    const auto [it, inserted] = first_row.try_emplace(ds_.cluster(i), i);
    if (!inserted) {
      const std::size_t r = it->second;
      if (ds_.arm(r) != ds_.arm(i))
        throw DataError("treatment varies within cluster " + std::to_string(ds_.cluster(i)));
      for (std::size_t k = 0; k < cov_idx.size(); ++k) {
        if (ds_.features(r)[cov_idx[k]] != ds_.features(i)[cov_idx[k]])
          throw DataError("covariate '" + baseline_covariates[k] + "' varies within cluster " +
                          std::to_string(ds_.cluster(i)) + "; panel covariates must be baseline values");
      }
    }
    keys.emplace_back(ds_.cluster(i), ds_.period(i));
  }
  std::sort(keys.begin(), keys.end());
  const auto dup = std::adjacent_find(keys.begin(), keys.end());
  if (dup != keys.end())
    throw DataError("duplicate (cluster, period) pair (" + std::to_string(dup->first) + ", " +
                    std::to_string(dup->second) + ")");
  clusters_ = first_row.size();

  periods_ = ds_.columns().period;
  std::sort(periods_.begin(), periods_.end());
  periods_.erase(std::unique(periods_.begin(), periods_.end()), periods_.end());
}

std::string_view to_string(TimeBasisKind k) noexcept {
  switch (k) {
    case TimeBasisKind::dummies: return "dummies";
    case TimeBasisKind::linear: return "linear";
    case TimeBasisKind::piecewise: return "piecewise";
  }
  return "?";
}

std::optional<TimeBasisKind> parse_time_basis(std::string_view text) noexcept {
  if (text == "dummies") return TimeBasisKind::dummies;
  if (text == "linear") return TimeBasisKind::linear;
  if (text == "piecewise") return TimeBasisKind::piecewise;
  return std::nullopt;
}

std::vector<std::string> TimeBasis::column_names(std::span<const std::int64_t> periods) const {
  std::vector<std::string> out;
  switch (kind) {
    case TimeBasisKind::dummies:
      for (std::size_t i = 1; i < periods.size(); ++i) out.push_back("t=" + std::to_string(periods[i]));
      break;
    case TimeBasisKind::linear:
      out.emplace_back("t");
      break;
    case TimeBasisKind::piecewise:
      out.emplace_back("t");
      for (const auto k : knots) out.push_back("(t-" + std::to_string(k) + ")+");
      break;
  }
  return out;
}

std::vector<double> TimeBasis::evaluate(std::int64_t t, std::span<const std::int64_t> periods) const {
  if (periods.empty()) throw EstimationError("time basis needs at least one period");
  std::vector<double> out;
  switch (kind) {
    case TimeBasisKind::dummies:
      for (std::size_t i = 1; i < periods.size(); ++i) out.push_back(t == periods[i] ? 1.0 : 0.0);
      break;
    case TimeBasisKind::linear:
      out.push_back(static_cast<double>(t - periods.front()));
      break;
    case TimeBasisKind::piecewise:
      out.push_back(static_cast<double>(t - periods.front()));
      for (const auto k : knots) out.push_back(static_cast<double>(std::max<std::int64_t>(0, t - k)));
      break;
  }
  return out;
}

std::size_t PanelLayout::period_index(std::int64_t t) const {
  const auto it = std::lower_bound(periods.begin(), periods.end(), t);
  if (it == periods.end() || *it != t) throw EstimationError("unknown period " + std::to_string(t));
  return static_cast<std::size_t>(it - periods.begin());
}

PanelDesign build_panel_design(const PanelDataset& p, const TimeBasis& basis, std::span<const std::string> covariates,
                               bool weighted) {
  const Dataset& ds = p.data();
  const auto& periods = p.periods();
  if (basis.kind == TimeBasisKind::piecewise) {
    for (const auto k : basis.knots) {
      if (k <= periods.front() || k >= periods.back())
        throw EstimationError("piecewise knot " + std::to_string(k) + " is outside the panel's period range");
    }
    if (!std::is_sorted(basis.knots.begin(), basis.knots.end()) ||
        std::adjacent_find(basis.knots.begin(), basis.knots.end()) != basis.knots.end())
      throw EstimationError("piecewise knots must be strictly increasing");
  }
  if (periods.size() < 2 && basis.kind != TimeBasisKind::dummies)
    throw EstimationError("a trend basis needs at least two periods");

  const CompressedDataset c = compress_within_clusters(ds);
  std::vector<std::size_t> cov_idx;
  for (const auto& name : covariates) {
    const auto idx = c.feature_index(name);
    if (!idx) throw DataError("missing required column '" + name + "'");
    cov_idx.push_back(*idx);
  }

  PanelDesign out;
  PanelLayout& L = out.layout;
  L.basis = basis;
  L.periods = periods;
  L.covariates.assign(covariates.begin(), covariates.end());
  L.arm_labels = ds.arm_labels();
  const auto f_names = basis.column_names(periods);
  const std::size_t k = ds.arm_count() - 1;
  const std::size_t q = covariates.size();
  const std::size_t b = f_names.size();
  L.basis_values.resize(static_cast<Eigen::Index>(periods.size()), static_cast<Eigen::Index>(b));
  for (std::size_t t = 0; t < periods.size(); ++t) {
    const auto v = basis.evaluate(periods[t], periods);
    for (std::size_t j = 0; j < b; ++j) L.basis_values(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(j)) = v[j];
  }

  std::vector<std::string>& labels = out.design.labels;
  auto add = [&](std::string label) {
    labels.push_back(std::move(label));
    return static_cast<Eigen::Index>(labels.size() - 1);
  };
  auto arm_name = [&](std::size_t a) { return "treatment[" + L.arm_labels[a + 1] + "]"; };
  L.intercept = add("(intercept)");
  for (std::size_t a = 0; a < k; ++a) L.treatment.push_back(add(arm_name(a)));
  std::vector<Eigen::Index> x_col, f_col;
  std::vector<std::vector<Eigen::Index>> x_f_col(q);
  for (std::size_t x = 0; x < q; ++x) x_col.push_back(add(L.covariates[x]));
  for (std::size_t j = 0; j < b; ++j) f_col.push_back(add(f_names[j]));
  L.treatment_x.assign(k, {});
  L.treatment_f.assign(k, {});
  L.treatment_x_f.assign(k, std::vector<std::vector<Eigen::Index>>(q));
  for (std::size_t a = 0; a < k; ++a)
    for (std::size_t x = 0; x < q; ++x) L.treatment_x[a].push_back(add(arm_name(a) + ":" + L.covariates[x]));
  for (std::size_t a = 0; a < k; ++a)
    for (std::size_t j = 0; j < b; ++j) L.treatment_f[a].push_back(add(arm_name(a) + ":" + f_names[j]));
  for (std::size_t x = 0; x < q; ++x)
    for (std::size_t j = 0; j < b; ++j) x_f_col[x].push_back(add(L.covariates[x] + ":" + f_names[j]));
  for (std::size_t a = 0; a < k; ++a)
    for (std::size_t x = 0; x < q; ++x)
      for (std::size_t j = 0; j < b; ++j)
        L.treatment_x_f[a][x].push_back(add(arm_name(a) + ":" + L.covariates[x] + ":" + f_names[j]));

  const auto n = static_cast<Eigen::Index>(c.size());
  const auto cols = static_cast<Eigen::Index>(labels.size());
  DesignMatrix& d = out.design;
  d.values = Eigen::MatrixXd::Zero(n, cols);
  d.multiplicity.resize(n);
  d.weight.resize(n);
  d.weight_sq.resize(n);
  d.cluster.resize(c.size());
  out.outcome.resize(n);
  L.period_exposure.assign(periods.size(), 0.0);
  std::vector<CompensatedSum> cov_sum(q);
  CompensatedSum w_total;
  for (std::size_t r = 0; r < c.size(); ++r) {
    const auto row = static_cast<Eigen::Index>(r);
    const double m = static_cast<double>(c.multiplicity(r));
    d.multiplicity(row) = m;
    d.weight(row) = weighted ? c.aggregate_weight(r) : m;
    d.weight_sq(row) = weighted ? c.aggregate_weight_sq(r) : m;
    d.cluster[r] = c.cluster(r);
    out.outcome(row) = c.outcome(r);

    const std::size_t t = L.period_index(c.period(r));
    L.period_exposure[t] += d.weight(row);
    w_total.add(d.weight(row));
    const int arm = c.arm(r);
    const auto feats = c.features(r);
    auto fv = L.basis_values.row(static_cast<Eigen::Index>(t));
    auto v = d.values.row(row);
    v(L.intercept) = 1.0;
    for (std::size_t x = 0; x < q; ++x) {
      v(x_col[x]) = feats[cov_idx[x]];
      cov_sum[x].add(d.weight(row) * feats[cov_idx[x]]);
    }
    for (std::size_t j = 0; j < b; ++j) v(f_col[j]) = fv(static_cast<Eigen::Index>(j));
    for (std::size_t x = 0; x < q; ++x)
      for (std::size_t j = 0; j < b; ++j) v(x_f_col[x][j]) = feats[cov_idx[x]] * fv(static_cast<Eigen::Index>(j));
    if (arm > 0) {
      const auto a = static_cast<std::size_t>(arm - 1);
      v(L.treatment[a]) = 1.0;
      for (std::size_t x = 0; x < q; ++x) v(L.treatment_x[a][x]) = feats[cov_idx[x]];
      for (std::size_t j = 0; j < b; ++j) v(L.treatment_f[a][j]) = fv(static_cast<Eigen::Index>(j));
      for (std::size_t x = 0; x < q; ++x)
        for (std::size_t j = 0; j < b; ++j)
          v(L.treatment_x_f[a][x][j]) = feats[cov_idx[x]] * fv(static_cast<Eigen::Index>(j));
    }
  }
  for (std::size_t x = 0; x < q; ++x) L.covariate_means.push_back(cov_sum[x].value() / w_total.value());
  return out;
}

namespace {

const std::vector<double>& conditioning_point(const PanelLayout& layout, const DynamicOptions& opt) {
  if (!opt.at_covariates) return layout.covariate_means;
  if (opt.at_covariates->size() != layout.covariates.size())
    throw EstimationError("expected " + std::to_string(layout.covariates.size()) + " covariate values, got " +
                          std::to_string(opt.at_covariates->size()));
  return *opt.at_covariates;
}

std::size_t arm_slot(const PanelLayout& layout, int arm) {
  if (arm < 1 || static_cast<std::size_t>(arm) > layout.treatment.size())
    throw EstimationError("arm index " + std::to_string(arm) + " is not a treatment arm");
  return static_cast<std::size_t>(arm - 1);
}

std::string period_label(std::int64_t t) { return std::to_string(t); }

}  // namespace

Eigen::VectorXd daily_contrast(const PanelLayout& layout, std::size_t period_index, const DynamicOptions& opt,
                               Eigen::Index p) {
  const std::size_t a = arm_slot(layout, opt.arm);
  const auto& xbar = conditioning_point(layout, opt);
  if (period_index >= layout.periods.size()) throw EstimationError("period index out of range");
  Eigen::VectorXd c = Eigen::VectorXd::Zero(p);
  const auto fv = layout.basis_values.row(static_cast<Eigen::Index>(period_index));
  c(layout.treatment[a]) = 1.0;
  for (std::size_t j = 0; j < layout.treatment_f[a].size(); ++j)
    c(layout.treatment_f[a][j]) = fv(static_cast<Eigen::Index>(j));
  for (std::size_t x = 0; x < xbar.size(); ++x) {
    c(layout.treatment_x[a][x]) = xbar[x];
    for (std::size_t j = 0; j < layout.treatment_x_f[a][x].size(); ++j)
      c(layout.treatment_x_f[a][x][j]) = xbar[x] * fv(static_cast<Eigen::Index>(j));
  }
  return c;
}

std::vector<EffectEstimate> daily_effects(const FitResult& f, const CovarianceMatrix& v, const PanelLayout& layout,
                                          const DynamicOptions& opt) {
  std::vector<EffectEstimate> out;
  for (std::size_t t = 0; t < layout.periods.size(); ++t) {
    out.push_back(evaluate_contrast(f, daily_contrast(layout, t, opt, f.beta.size()), v, opt.level,
                                    "daily[t=" + period_label(layout.periods[t]) + "]"));
  }
  return out;
}

std::vector<EffectEstimate> cumulative_effects(const FitResult& f, const CovarianceMatrix& v,
                                               const PanelLayout& layout, const DynamicOptions& opt) {
  std::vector<EffectEstimate> out;
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(f.beta.size());
  double total = 0.0;
  for (std::size_t t = 0; t < layout.periods.size(); ++t) {
    const double w = opt.cumulative == CumulativeWeighting::equal ? 1.0 : layout.period_exposure[t];
    acc += w * daily_contrast(layout, t, opt, f.beta.size());
    total += w;
    if (!(total > 0.0)) throw EstimationError("cumulative weights sum to zero");
    out.push_back(
        evaluate_contrast(f, acc / total, v, opt.level, "cumulative[t<=" + period_label(layout.periods[t]) + "]"));
  }
  return out;
}

EffectEstimate average_effect(const FitResult& f, const CovarianceMatrix& v, const PanelLayout& layout,
                              const DynamicOptions& opt) {
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(f.beta.size());
  double total = 0.0;
  for (std::size_t t = 0; t < layout.periods.size(); ++t) {
    acc += layout.period_exposure[t] * daily_contrast(layout, t, opt, f.beta.size());
    total += layout.period_exposure[t];
  }
  if (!(total > 0.0)) throw EstimationError("panel has no exposure");
  return evaluate_contrast(f, acc / total, v, opt.level, "average");
}

EffectEstimate difference_of_daily(const FitResult& f, const CovarianceMatrix& v, const PanelLayout& layout,
                                   std::int64_t t1, std::int64_t t2, const DynamicOptions& opt) {
  if (t1 == t2) throw EstimationError("difference of daily effects needs two distinct periods");
  const std::size_t i1 = layout.period_index(t1);
  const std::size_t i2 = layout.period_index(t2);
  const Eigen::VectorXd c =
      daily_contrast(layout, i1, opt, f.beta.size()) - daily_contrast(layout, i2, opt, f.beta.size());
  return evaluate_contrast(f, c, v, opt.level, "daily[t=" + period_label(t1) + "]-daily[t=" + period_label(t2) + "]");
}

DynamicEffects dynamic_effects(const FitResult& f, const CovarianceMatrix& v, const PanelLayout& layout,
                               const DynamicOptions& opt) {
  DynamicEffects out;
  out.arm_label = layout.arm_labels.at(static_cast<std::size_t>(arm_slot(layout, opt.arm) + 1));
  out.periods = layout.periods;
  out.daily = daily_effects(f, v, layout, opt);
  out.cumulative = cumulative_effects(f, v, layout, opt);
  out.average = average_effect(f, v, layout, opt);
  out.variant = v.variant;
  out.at_covariates = conditioning_point(layout, opt);
  out.at_sample_means = !opt.at_covariates.has_value();
  return out;
}

}  // namespace xpm
