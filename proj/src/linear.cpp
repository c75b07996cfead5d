#include "xpm/linear.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Cholesky>

#include "xpm/error.hpp"
#include "xpm/numeric.hpp"

namespace xpm {

namespace {

std::atomic<std::uint64_t> g_fit_count{0};

// One design column: product of a set of feature indices, optionally times
// the indicator of a specific arm.
struct ColumnRecipe {
  std::string label;
  std::vector<std::size_t> features;
  int arm = -1;  // -1: no arm factor
  bool constant = false;
};

template <typename Source>
std::vector<ColumnRecipe> plan_columns(const Source& src, const ModelSpec& spec) {
  std::vector<ColumnRecipe> plan;
  const auto& arm_labels = src.arm_labels();
  auto feature = [&](const std::string& name) {
    const auto idx = src.feature_index(name);
    if (!idx) throw DataError("model references unknown column '" + name + "'");
    return *idx;
  };
  if (spec.intercept) plan.push_back({"(intercept)", {}, -1, true});
  if (spec.treatment) {
    for (std::size_t a = 1; a < arm_labels.size(); ++a)
      plan.push_back({"treatment[" + arm_labels[a] + "]", {}, static_cast<int>(a), false});
  }
  for (const auto& name : spec.covariates) plan.push_back({name, {feature(name)}, -1, false});
  for (const auto& terms : spec.interactions) {
    if (terms.size() < 2) throw EstimationError("an interaction needs at least two terms");
    std::vector<std::size_t> feats;
    std::string suffix;
    bool has_treatment = false;
    for (const auto& term : terms) {
      if (term == kTreatmentTerm) {
        if (has_treatment) throw EstimationError("treatment appears twice in one interaction");
        has_treatment = true;
      } else {
        feats.push_back(feature(term));
        suffix += ":" + term;
      }
    }
    if (has_treatment) {
      for (std::size_t a = 1; a < arm_labels.size(); ++a)
        plan.push_back({"treatment[" + arm_labels[a] + "]" + suffix, feats, static_cast<int>(a), false});
    } else {
      plan.push_back({suffix.substr(1), feats, -1, false});
    }
  }
  if (plan.empty()) throw EstimationError("model has no terms");
  for (std::size_t i = 0; i < plan.size(); ++i)
    for (std::size_t j = i + 1; j < plan.size(); ++j)
      if (plan[i].label == plan[j].label) throw EstimationError("model term '" + plan[i].label + "' appears twice");
  return plan;
}

template <typename Source, typename Mult, typename W, typename W2>
DesignMatrix fill_design(const Source& src, const ModelSpec& spec, std::size_t n, Mult mult, W weight,
                         W2 weight_sq) {
  const auto plan = plan_columns(src, spec);
  DesignMatrix d;
  const auto p = static_cast<Eigen::Index>(plan.size());
  d.values.resize(static_cast<Eigen::Index>(n), p);
  d.multiplicity.resize(static_cast<Eigen::Index>(n));
  d.weight.resize(static_cast<Eigen::Index>(n));
  d.weight_sq.resize(static_cast<Eigen::Index>(n));
  for (std::size_t j = 0; j < n; ++j) {
    const auto row = static_cast<Eigen::Index>(j);
    const auto f = src.features(j);
    const int arm = src.arm(j);
    for (Eigen::Index c = 0; c < p; ++c) {
      const auto& r = plan[static_cast<std::size_t>(c)];
      double v = 1.0;
      if (r.arm >= 0 && arm != r.arm) v = 0.0;
      for (std::size_t fi : r.features) v *= f[fi];
      d.values(row, c) = v;
    }
    d.multiplicity(row) = mult(j);
    d.weight(row) = weight(j);
    d.weight_sq(row) = weight_sq(j);
  }
  for (const auto& r : plan) d.labels.push_back(r.label);
  d.spec = spec;
  return d;
}

// Column-ordered Cholesky on the unit-diagonal scaling of A that skips
// columns whose residual variance, given the preceding kept columns, falls
// below `tol`. Returns indices of the skipped columns.
std::vector<std::size_t> collinear_columns(const Eigen::MatrixXd& a, double tol = 1e-10) {
  const Eigen::Index p = a.rows();
  std::vector<std::size_t> bad;
  Eigen::VectorXd scale(p);
  for (Eigen::Index i = 0; i < p; ++i) scale(i) = a(i, i) > 0.0 ? 1.0 / std::sqrt(a(i, i)) : 0.0;
  Eigen::MatrixXd c = scale.asDiagonal() * a * scale.asDiagonal();
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(p, p);
  std::vector<Eigen::Index> kept;
  for (Eigen::Index j = 0; j < p; ++j) {
    if (scale(j) == 0.0) {
      bad.push_back(static_cast<std::size_t>(j));
      continue;
    }
    for (std::size_t ki = 0; ki < kept.size(); ++ki) {
      const Eigen::Index k = kept[ki];
      double s = c(j, k);
      for (std::size_t mi = 0; mi < ki; ++mi) s -= l(j, kept[mi]) * l(k, kept[mi]);
      l(j, k) = s / l(k, k);
    }
    double d = c(j, j);
    for (const Eigen::Index k : kept) d -= l(j, k) * l(j, k);
    if (d <= tol) {
      bad.push_back(static_cast<std::size_t>(j));
      for (const Eigen::Index k : kept) l(j, k) = 0.0;
      continue;
    }
    l(j, j) = std::sqrt(d);
    kept.push_back(j);
  }
  return bad;
}

[[noreturn]] void throw_rank_error(const std::vector<std::size_t>& bad, const std::vector<std::string>& labels) {
  std::string names;
  for (std::size_t i = 0; i < bad.size(); ++i) {
    if (i) names += ", ";
    const auto& label = bad[i] < labels.size() ? labels[bad[i]] : std::to_string(bad[i]);
    names += "'" + label + "'";
  }
  throw RankDeficientError("rank-deficient design: column(s) " + names + " collinear with preceding columns");
}

struct SpdSolve {
  Eigen::VectorXd solution;
  Eigen::MatrixXd inverse;
};

SpdSolve solve_spd(const Eigen::MatrixXd& a, const Eigen::VectorXd& b, const std::vector<std::string>& labels,
                   bool want_inverse) {
  if (const auto bad = collinear_columns(a); !bad.empty()) throw_rank_error(bad, labels);
  const Eigen::Index p = a.rows();
  Eigen::VectorXd scale(p);
  for (Eigen::Index i = 0; i < p; ++i) scale(i) = 1.0 / std::sqrt(a(i, i));
  const Eigen::MatrixXd scaled = scale.asDiagonal() * a * scale.asDiagonal();
  Eigen::LLT<Eigen::MatrixXd> llt(scaled);
  if (llt.info() != Eigen::Success) throw RankDeficientError("normal equations are not positive definite");
  SpdSolve out;
  out.solution = scale.asDiagonal() * llt.solve((scale.asDiagonal() * b).eval());
  if (want_inverse) {
    out.inverse = scale.asDiagonal() * llt.solve(Eigen::MatrixXd::Identity(p, p)) * scale.asDiagonal();
    out.inverse = (0.5 * (out.inverse + out.inverse.transpose())).eval();
  }
  return out;
}

}  // namespace

Eigen::Index DesignMatrix::column(std::string_view label) const {
  const auto it = std::find(labels.begin(), labels.end(), label);
  if (it == labels.end()) throw EstimationError("design has no column '" + std::string(label) + "'");
  return static_cast<Eigen::Index>(it - labels.begin());
}

DesignMatrix build_design(const CompressedDataset& c, const ModelSpec& spec) {
  auto mult = [&](std::size_t j) { return static_cast<double>(c.multiplicity(j)); };
  DesignMatrix d = spec.weighted
                       ? fill_design(c, spec, c.size(), mult, [&](std::size_t j) { return c.aggregate_weight(j); },
                                     [&](std::size_t j) { return c.aggregate_weight_sq(j); })
                       : fill_design(c, spec, c.size(), mult, mult, mult);
  if (c.has_clusters()) {
    d.cluster.resize(c.size());
    for (std::size_t j = 0; j < c.size(); ++j) d.cluster[j] = c.cluster(j);
  }
  return d;
}

DesignMatrix build_design(const Dataset& ds, const ModelSpec& spec) {
  auto one = [](std::size_t) { return 1.0; };
  DesignMatrix d = spec.weighted ? fill_design(ds, spec, ds.size(), one, [&](std::size_t i) { return ds.weight(i); },
                                               [&](std::size_t i) { return ds.weight(i) * ds.weight(i); })
                                 : fill_design(ds, spec, ds.size(), one, one, one);
  if (ds.has_clusters()) d.cluster = ds.columns().cluster;
  return d;
}

Eigen::VectorXd outcome_vector(const CompressedDataset& c) {
  return Eigen::Map<const Eigen::VectorXd>(c.outcomes().data(), static_cast<Eigen::Index>(c.size()));
}

Eigen::VectorXd outcome_vector(const Dataset& ds) {
  return Eigen::Map<const Eigen::VectorXd>(ds.columns().outcome.data(), static_cast<Eigen::Index>(ds.size()));
}

Eigen::VectorXd solve_weighted_normal_equations(const Eigen::MatrixXd& m, const Eigen::VectorXd& w,
                                                const Eigen::VectorXd& y, const std::vector<std::string>& labels) {
  const auto p = static_cast<std::size_t>(m.cols());
  MomentAccumulator acc(p);
  Eigen::VectorXd row(m.cols());
  for (Eigen::Index j = 0; j < m.rows(); ++j) {
    row = m.row(j).transpose();
    acc.add(row.data(), w(j), y(j));
  }
  return solve_spd(acc.matrix(), acc.vector(), labels, false).solution;
}

FitResult fit_wls(const DesignMatrix& d, const Eigen::VectorXd& y) {
  g_fit_count.fetch_add(1, std::memory_order_relaxed);
  const Eigen::Index n = d.rows();
  const Eigen::Index p = d.cols();
  if (y.size() != n) throw EstimationError("outcome length does not match design rows");
  if (p == 0) throw EstimationError("design has no columns");
  const double big_n = d.observation_count();
  if (big_n < static_cast<double>(p))
    throw EstimationError("fewer observations than coefficients (" + std::to_string(static_cast<long>(big_n)) +
                          " < " + std::to_string(p) + ")");

  MomentAccumulator moments(static_cast<std::size_t>(p));
  Eigen::VectorXd row(p);
  for (Eigen::Index j = 0; j < n; ++j) {
    row = d.values.row(j).transpose();
    moments.add(row.data(), d.weight(j), y(j));
  }

  FitResult fit;
  fit.xtwx = moments.matrix();
  auto solved = solve_spd(fit.xtwx, moments.vector(), d.labels, true);
  fit.beta = std::move(solved.solution);
  fit.xtwx_inverse = std::move(solved.inverse);

  fit.residuals = y - d.values * fit.beta;
  CompensatedSum rss;
  MomentAccumulator meat(static_cast<std::size_t>(p));
  for (Eigen::Index j = 0; j < n; ++j) {
    const double e = fit.residuals(j);
    rss.add(d.weight(j) * e * e);
    row = d.values.row(j).transpose();
    meat.add_outer(row.data(), d.weight_sq(j) * e * e);
  }
  fit.weighted_rss = std::max(0.0, rss.value());
  fit.white_meat = meat.matrix();
  fit.observation_count = big_n;
  fit.dof = static_cast<long>(std::llround(big_n)) - static_cast<long>(p);
  fit.labels = d.labels;
  fit.model = d.spec;
  return fit;
}

std::uint64_t fit_count() noexcept { return g_fit_count.load(std::memory_order_relaxed); }

}  // namespace xpm
