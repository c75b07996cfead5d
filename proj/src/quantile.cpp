#include "xpm/quantile.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <unordered_map>

#include <Eigen/LU>

#include "xpm/error.hpp"
#include "xpm/numeric.hpp"
#include "xpm/parallel.hpp"
#include "xpm/rng.hpp"

namespace xpm {

namespace {

void require_tau(double tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw EstimationError("tau must lie in (0,1)");
}

double smoothed_objective(const Eigen::VectorXd& e, const Eigen::VectorXd& w, double tau, double eps) {
  CompensatedSum s;
  for (Eigen::Index j = 0; j < e.size(); ++j) {
    const double a = std::abs(e(j));
    const double h = a >= eps ? a : e(j) * e(j) / (2.0 * eps) + eps / 2.0;
    s.add(w(j) * (0.5 * h + (tau - 0.5) * e(j)));
  }
  return s.value();
}

double objective_from_residuals(const Eigen::VectorXd& e, const Eigen::VectorXd& w, double tau) {
  CompensatedSum s;
  for (Eigen::Index j = 0; j < e.size(); ++j) s.add(w(j) * check_loss(e(j), tau));
  return s.value();
}

double outcome_scale(const Eigen::VectorXd& y, const Eigen::VectorXd& w) {
  const double total = w.sum();
  const double mean = w.dot(y) / total;
  const double mad = w.dot((y.array() - mean).abs().matrix()) / total;
  if (mad > 0.0 && std::isfinite(mad)) return mad;
  const double top = y.cwiseAbs().maxCoeff();
  return top > 0.0 ? top : 1.0;
}

// Enumerates k-subsets of [0, m) in lexicographic order.
bool next_combination(std::vector<std::size_t>& idx, std::size_t m) {
  const std::size_t k = idx.size();
  for (std::size_t i = k; i-- > 0;) {
    if (idx[i] < m - k + i) {
      ++idx[i];
      for (std::size_t j = i + 1; j < k; ++j) idx[j] = idx[j - 1] + 1;
      return true;
    }
  }
  return false;
}

double binomial(std::size_t m, std::size_t k) {
  double c = 1.0;
  for (std::size_t i = 1; i <= k; ++i) c = c * static_cast<double>(m - k + i) / static_cast<double>(i);
  return c;
}

// Tries basic solutions built from the rows with the smallest residuals.
// Returns true and updates beta/objective when one is at least as good.
bool polish_to_vertex(const DesignMatrix& d, const Eigen::VectorXd& y, double tau, Eigen::VectorXd& beta,
                      double& objective) {
  const Eigen::Index n = d.rows();
  const auto p = static_cast<std::size_t>(d.cols());
  if (static_cast<std::size_t>(n) < p) return false;
  const Eigen::VectorXd e = y - d.values * beta;
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  const std::size_t m = std::min(static_cast<std::size_t>(n), p + 3);
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(m), order.end(),
                    [&](Eigen::Index a, Eigen::Index b) {
                      const double ea = std::abs(e(a));
                      const double eb = std::abs(e(b));
                      return ea < eb || (ea == eb && a < b);
                    });

  std::vector<std::vector<Eigen::Index>> subsets;
  if (binomial(m, p) <= 256.0) {
    std::vector<std::size_t> idx(p);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    do {
      std::vector<Eigen::Index> rows;
      for (std::size_t i : idx) rows.push_back(order[i]);
      subsets.push_back(std::move(rows));
    } while (next_combination(idx, m));
  } else {
    // Greedy: walk rows by residual size, keep those that raise the rank.
    std::partial_sort(order.begin(), order.begin() + std::min<std::ptrdiff_t>(n, 4 * static_cast<std::ptrdiff_t>(p)),
                      order.end(), [&](Eigen::Index a, Eigen::Index b) { return std::abs(e(a)) < std::abs(e(b)); });
    std::vector<Eigen::Index> rows;
    Eigen::MatrixXd acc(0, d.cols());
    for (const Eigen::Index r : order) {
      Eigen::MatrixXd trial(acc.rows() + 1, d.cols());
      trial << acc, d.values.row(r);
      Eigen::FullPivLU<Eigen::MatrixXd> lu(trial);
      if (lu.rank() == trial.rows()) {
        acc = trial;
        rows.push_back(r);
        if (rows.size() == p) break;
      }
    }
    if (rows.size() == p) subsets.push_back(std::move(rows));
  }

  bool improved = false;
  Eigen::MatrixXd a(static_cast<Eigen::Index>(p), d.cols());
  Eigen::VectorXd b(static_cast<Eigen::Index>(p));
  for (const auto& rows : subsets) {
    for (std::size_t i = 0; i < p; ++i) {
      a.row(static_cast<Eigen::Index>(i)) = d.values.row(rows[i]);
      b(static_cast<Eigen::Index>(i)) = y(rows[i]);
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
    if (lu.rank() < static_cast<Eigen::Index>(p)) continue;
    const Eigen::VectorXd candidate = lu.solve(b);
    if (!candidate.allFinite()) continue;
    const double obj = objective_from_residuals(y - d.values * candidate, d.weight, tau);
    if (obj <= objective) {
      objective = obj;
      beta = candidate;
      improved = true;
    }
  }
  return improved;
}

}  // namespace

double check_loss(double r, double tau) {
  require_tau(tau);
  return r * (tau - (r < 0.0 ? 1.0 : 0.0));
}

double quantile_objective(const DesignMatrix& d, const Eigen::VectorXd& y, const Eigen::VectorXd& beta, double tau) {
  require_tau(tau);
  return objective_from_residuals(y - d.values * beta, d.weight, tau);
}

QuantileFit fit_quantile(const DesignMatrix& d, const Eigen::VectorXd& y, const QuantileSpec& spec) {
  require_tau(spec.tau);
  if (y.size() != d.rows()) throw EstimationError("outcome length does not match design rows");
  if (spec.epsilon_schedule.empty()) throw EstimationError("epsilon schedule is empty");
  for (std::size_t i = 0; i < spec.epsilon_schedule.size(); ++i) {
    if (!(spec.epsilon_schedule[i] > 0.0)) throw EstimationError("epsilon schedule entries must be positive");
    if (i > 0 && !(spec.epsilon_schedule[i] < spec.epsilon_schedule[i - 1]))
      throw EstimationError("epsilon schedule must be decreasing");
  }
  if (!(spec.tolerance > 0.0) || spec.max_iterations < 1) throw EstimationError("invalid solver tolerance");

  const double tau = spec.tau;
  const Eigen::VectorXd& w = d.weight;
  QuantileFit out;
  out.labels = d.labels;

  // Least-squares start; also the rank check.
  Eigen::VectorXd beta = solve_weighted_normal_equations(d.values, w, y, d.labels);
  Eigen::VectorXd best_beta = beta;
  double best_obj = objective_from_residuals(y - d.values * beta, w, tau);

  const double scale = outcome_scale(y, w);
  bool stage_converged = false;
  Eigen::VectorXd a(d.rows());
  Eigen::VectorXd irls_w(d.rows());
  Eigen::VectorXd pseudo(d.rows());
  for (const double rel_eps : spec.epsilon_schedule) {
    const double eps = rel_eps * scale;
    Eigen::VectorXd e = y - d.values * beta;
    double current = smoothed_objective(e, w, tau, eps);
    stage_converged = false;
    while (out.iterations < spec.max_iterations) {
      a = e.cwiseAbs().cwiseMax(eps);
      irls_w = w.cwiseQuotient(a);
      pseudo = y + (2.0 * tau - 1.0) * a;
      Eigen::VectorXd next = solve_weighted_normal_equations(d.values, irls_w, pseudo, d.labels);
      ++out.iterations;
      Eigen::VectorXd e_next = y - d.values * next;
      const double value = smoothed_objective(e_next, w, tau, eps);
      const double decrease = current - value;
      // The majoriser guarantees descent up to rounding; a non-decrease means
      // the stage has reached its fixed point.
      if (value <= current) {
        beta = std::move(next);
        e = std::move(e_next);
        current = value;
      }
      const double obj = objective_from_residuals(e, w, tau);
      if (obj < best_obj) {
        best_obj = obj;
        best_beta = beta;
      }
      if (decrease <= spec.tolerance * std::max(std::abs(current), std::numeric_limits<double>::min())) {
        stage_converged = true;
        break;
      }
    }
    if (!stage_converged) break;
  }

  const double obj_at_beta = objective_from_residuals(y - d.values * beta, w, tau);
  if (obj_at_beta <= best_obj) {
    best_obj = obj_at_beta;
    best_beta = beta;
  }
  polish_to_vertex(d, y, tau, best_beta, best_obj);
  out.beta = std::move(best_beta);
  out.objective = std::max(0.0, best_obj);
  out.converged = stage_converged;
  return out;
}

BalanceCheck subgradient_balance(const DesignMatrix& d, const Eigen::VectorXd& y, const Eigen::VectorXd& beta,
                                 double tau) {
  require_tau(tau);
  const Eigen::VectorXd e = y - d.values * beta;
  const double zero_tol = 1e-9 * std::max(1.0, y.cwiseAbs().maxCoeff());
  CompensatedSum neg, zero, pos;
  for (Eigen::Index j = 0; j < e.size(); ++j) {
    if (e(j) < -zero_tol) neg.add(d.weight(j));
    else if (e(j) > zero_tol) pos.add(d.weight(j));
    else zero.add(d.weight(j));
  }
  const double total = d.weight.sum();
  BalanceCheck b;
  b.negative = neg.value() / total;
  b.zero = zero.value() / total;
  b.positive = pos.value() / total;
  b.slack = static_cast<double>(d.cols()) / d.observation_count();
  b.holds = b.negative <= tau + b.slack && b.positive <= 1.0 - tau + b.slack;
  b.tie_free_form = std::abs(b.negative - tau) <= b.slack;
  return b;
}

std::uint64_t inverted_cdf_rank(double tau, std::uint64_t n) {
  require_tau(tau);
  if (n == 0) throw EstimationError("quantile of an empty sample");
  const double nt = tau * static_cast<double>(n);
  // Fuzz absorbs representation error in products like 0.9 * 10.
  const double fuzz = 4.0 * std::numeric_limits<double>::epsilon() * nt;
  auto k = static_cast<std::uint64_t>(std::ceil(nt - fuzz));
  return std::clamp<std::uint64_t>(k, 1, n);
}

double empirical_quantile(std::span<const double> sorted, double tau) {
  const auto k = inverted_cdf_rank(tau, sorted.size());
  return sorted[k - 1];
}

namespace {

// One arm's outcomes: sorted distinct values and, per account, the value ids
// of its rows (CSR layout).
struct ArmSample {
  std::vector<double> values;
  std::vector<std::uint64_t> value_count;
  std::vector<std::size_t> offsets{0};
  std::vector<std::uint32_t> ids;
  std::uint64_t rows = 0;

  std::size_t accounts() const { return offsets.size() - 1; }
};

ArmSample build_arm(const Dataset& ds, int arm) {
  ArmSample s;
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < ds.size(); ++i)
    if (ds.arm(i) == arm) rows.push_back(i);
  for (std::size_t i : rows) s.values.push_back(ds.outcome(i));
  std::sort(s.values.begin(), s.values.end());
  s.values.erase(std::unique(s.values.begin(), s.values.end()), s.values.end());
  s.value_count.assign(s.values.size(), 0);
  auto id_of = [&](double v) {
    return static_cast<std::uint32_t>(std::lower_bound(s.values.begin(), s.values.end(), v) - s.values.begin());
  };
  if (ds.has_clusters()) {
    std::unordered_map<std::int64_t, std::size_t> account;
    std::vector<std::vector<std::uint32_t>> members;
    for (std::size_t i : rows) {
      const auto [it, fresh] = account.try_emplace(ds.cluster(i), members.size());
      if (fresh) members.emplace_back();
      members[it->second].push_back(id_of(ds.outcome(i)));
    }
    for (const auto& m : members) {
      s.ids.insert(s.ids.end(), m.begin(), m.end());
      s.offsets.push_back(s.ids.size());
    }
  } else {
    for (std::size_t i : rows) {
      s.ids.push_back(id_of(ds.outcome(i)));
      s.offsets.push_back(s.ids.size());
    }
  }
  for (std::uint32_t id : s.ids) ++s.value_count[id];
  s.rows = s.ids.size();
  return s;
}

double quantile_from_counts(const ArmSample& s, const std::vector<std::uint64_t>& counts, std::uint64_t total,
                            double tau) {
  const std::uint64_t k = inverted_cdf_rank(tau, total);
  std::uint64_t cum = 0;
  for (std::size_t v = 0; v < counts.size(); ++v) {
    cum += counts[v];
    if (cum >= k) return s.values[v];
  }
  return s.values.back();
}

double resampled_quantile(const ArmSample& s, CounterRng& rng, double tau, std::vector<std::uint64_t>& counts) {
  std::fill(counts.begin(), counts.end(), 0);
  const std::size_t accounts = s.accounts();
  std::uint64_t total = 0;
  for (std::size_t draw = 0; draw < accounts; ++draw) {
    const auto a = static_cast<std::size_t>(rng.uniform_index(accounts));
    for (std::size_t r = s.offsets[a]; r < s.offsets[a + 1]; ++r) ++counts[s.ids[r]];
    total += s.offsets[a + 1] - s.offsets[a];
  }
  return quantile_from_counts(s, counts, total, tau);
}

}  // namespace

QuantileEffect bootstrap_qte(const Dataset& ds, double tau, int replicates, std::uint64_t seed, double level,
                             int treatment_arm) {
  require_tau(tau);
  if (ds.arm_count() < 2) throw EstimationError("quantile bootstrap needs at least two arms");
  if (treatment_arm < 1 || static_cast<std::size_t>(treatment_arm) >= ds.arm_count())
    throw EstimationError("treatment arm index out of range");
  if (replicates < 200) throw EstimationError("quantile bootstrap needs at least 200 replicates");
  if (!(level > 0.0 && level < 1.0)) throw EstimationError("confidence level must be in (0,1)");

  const ArmSample control = build_arm(ds, 0);
  const ArmSample treated = build_arm(ds, treatment_arm);
  constexpr std::size_t kMinAccounts = 20;
  if (control.accounts() < kMinAccounts || treated.accounts() < kMinAccounts)
    throw EstimationError("quantile bootstrap needs at least 20 accounts per arm");

  QuantileEffect out;
  out.label = "treatment[" + ds.arm_labels()[static_cast<std::size_t>(treatment_arm)] + "]";
  out.tau = tau;
  out.level = level;
  out.replicates = replicates;
  out.seed = seed;
  out.accounts_control = static_cast<int>(control.accounts());
  out.accounts_treatment = static_cast<int>(treated.accounts());
  out.control_quantile = quantile_from_counts(control, control.value_count, control.rows, tau);
  out.treatment_quantile = quantile_from_counts(treated, treated.value_count, treated.rows, tau);
  out.estimate = out.treatment_quantile - out.control_quantile;

  std::vector<double> draws(static_cast<std::size_t>(replicates));
  parallel_for(draws.size(), [&](std::size_t r) {
    CounterRng rng(seed, r);
    std::vector<std::uint64_t> c_counts(control.values.size());
    std::vector<std::uint64_t> t_counts(treated.values.size());
    const double qc = resampled_quantile(control, rng, tau, c_counts);
    const double qt = resampled_quantile(treated, rng, tau, t_counts);
    draws[r] = qt - qc;
  });
  std::sort(draws.begin(), draws.end());
  const double alpha = 1.0 - level;
  out.ci_low = std::min(empirical_quantile(draws, alpha / 2.0), out.estimate);
  out.ci_high = std::max(empirical_quantile(draws, 1.0 - alpha / 2.0), out.estimate);
  return out;
}

}  // namespace xpm
