#include "xpm/app.hpp"

#include <chrono>
#include <cmath>
#include <fstream>

#include "xpm/bayes.hpp"
#include "xpm/bench.hpp"
#include "xpm/contrast.hpp"
#include "xpm/covariance.hpp"
#include "xpm/dynamic.hpp"
#include "xpm/error.hpp"
#include "xpm/linear.hpp"
#include "xpm/numeric.hpp"
#include "xpm/parallel.hpp"
#include "xpm/quantile.hpp"
#include "xpm/report.hpp"
#include "xpm/rng.hpp"
#include "xpm/simgen.hpp"

namespace xpm {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

ojson compression_json(const CompressedDataset& c, std::string_view mode) {
  ojson j;
  j["mode"] = std::string(mode);
  j["raw_rows"] = c.raw_row_count();
  j["unique_rows"] = c.size();
  j["ratio"] = compression_ratio(c);
  return j;
}

ojson fit_json(const FitResult& f, const DesignMatrix& d, const CovarianceMatrix& v) {
  ojson j;
  j["solver"] = "wls-cholesky";
  j["observations"] = f.observation_count;
  j["design_rows"] = d.rows();
  j["parameters"] = f.beta.size();
  j["dof"] = f.dof;
  j["weighted_rss"] = f.weighted_rss;
  j["covariance"] = std::string(to_string(v.variant));
  j["clusters"] = v.cluster_count ? ojson(*v.cluster_count) : ojson(nullptr);
  ojson coefs = ojson::array();
  for (Eigen::Index i = 0; i < f.beta.size(); ++i) {
    ojson c;
    c["label"] = f.labels[static_cast<std::size_t>(i)];
    c["estimate"] = f.beta(i);
    c["std_error"] = std::sqrt(std::max(0.0, v.values(i, i)));
    coefs.push_back(std::move(c));
  }
  j["coefficients"] = coefs;
  return j;
}

struct LinearRun {
  CompressedDataset data;
  std::string mode;
  DesignMatrix design;
  FitResult fit;
  CovarianceMatrix cov;
};

LinearRun run_linear(const Dataset& ds, const WlsBlock& b) {
  const bool clustered = is_cluster_variant(b.covariance);
  if (clustered && !ds.has_clusters()) throw DataError("cluster-robust covariance needs a cluster column");
  LinearRun r{clustered ? compress_within_clusters(ds) : compress(ds), clustered ? "within_cluster" : "cross_sectional",
              {}, {}, {}};
  r.design = build_design(r.data, b.model);
  r.fit = fit_wls(r.design, outcome_vector(r.data));
  r.cov = compute_covariance(r.fit, r.design, b.covariance);
  return r;
}

std::vector<Eigen::Index> treatment_columns(const FitResult& f) {
  std::vector<Eigen::Index> out;
  for (std::size_t i = 0; i < f.labels.size(); ++i) {
    const auto& l = f.labels[i];
    if (l.starts_with("treatment[") && l.back() == ']' && l.find(':') == std::string::npos)
      out.push_back(static_cast<Eigen::Index>(i));
  }
  return out;
}

ojson run_wls(const Dataset& ds, const WlsBlock& b) {
  const LinearRun r = run_linear(ds, b);
  ojson res;
  res["compression"] = compression_json(r.data, r.mode);
  ojson effects = ojson::array();
  const auto cols = treatment_columns(r.fit);
  for (const auto c : cols) {
    const auto& label = r.fit.labels[static_cast<std::size_t>(c)];
    effects.push_back(to_json(evaluate_contrast(r.fit, unit_contrast(r.fit, label), r.cov, b.level, label)));
  }
  res["effects"] = effects;
  if (cols.size() >= 2) {
    Eigen::MatrixXd c = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(cols.size()), r.fit.beta.size());
    for (std::size_t i = 0; i < cols.size(); ++i) c(static_cast<Eigen::Index>(i), cols[i]) = 1.0;
    const WaldTest w = wald_test(r.fit, c, r.cov);
    ojson jt;
    jt["hypothesis"] = "all arm effects are zero";
    jt["statistic"] = w.statistic;
    jt["df"] = w.df;
    jt["p_value"] = w.p_value;
    jt["covariance"] = std::string(to_string(r.cov.variant));
    res["joint_test"] = jt;
  }
  res["fit"] = fit_json(r.fit, r.design, r.cov);
  return res;
}

ojson run_quantile(const Dataset& ds, const QuantileBlock& b) {
  ojson res;
  ojson effects = ojson::array();
  ojson regressions = ojson::array();
  const CompressedDataset cd = compress(ds);
  res["compression"] = compression_json(cd, "cross_sectional");
  ModelSpec spec;
  const DesignMatrix d = build_design(cd, spec);
  const Eigen::VectorXd y = outcome_vector(cd);
  const auto arms = static_cast<int>(ds.arm_count());
  for (std::size_t t = 0; t < b.taus.size(); ++t) {
    const double tau = b.taus[t];
    for (int a = 1; a < arms; ++a) {
      // One substream seed per (tau, arm) so adding a tau never changes the others.
      const std::uint64_t seed = derive_seed(b.seed, t * static_cast<std::size_t>(arms) + static_cast<std::size_t>(a));
      QuantileEffect e = bootstrap_qte(ds, tau, b.replicates, seed, b.level, a);
      effects.push_back(to_json(e));
    }
    if (b.regression) {
      QuantileSpec qs;
      qs.tau = tau;
      const QuantileFit f = fit_quantile(d, y, qs);
      ojson r;
      r["tau"] = tau;
      r["solver"] = "irls-smoothed-check-loss";
      r["objective"] = f.objective;
      r["converged"] = f.converged;
      r["iterations"] = f.iterations;
      ojson coefs = ojson::array();
      for (Eigen::Index i = 0; i < f.beta.size(); ++i) {
        ojson c;
        c["label"] = f.labels[static_cast<std::size_t>(i)];
        c["estimate"] = f.beta(i);
        coefs.push_back(std::move(c));
      }
      r["coefficients"] = coefs;
      r["balance"] = to_json(subgradient_balance(d, y, f.beta, tau));
      regressions.push_back(std::move(r));
    }
  }
  res["quantile_effects"] = effects;
  if (b.regression) res["regressions"] = regressions;
  res["seed_derivation"] = "derive_seed(seed, tau_index * arms + arm)";
  return res;
}

Prior resolve_prior(const PriorSource& src, std::size_t k, const std::string& key) {
  if (src.history) {
    const auto history = load_history_csv(*src.history);
    return replicate_prior(estimate_prior_from_history(history, "history:" + src.history_text), k);
  }
  if (src.mean.size() != k)
    throw ConfigError(key + ".prior.mean", "prior has " + std::to_string(src.mean.size()) +
                                               " entries but the model has " + std::to_string(k) + " arm effects");
  Prior p;
  p.id = "explicit";
  const auto kk = static_cast<Eigen::Index>(k);
  p.mean.resize(kk);
  p.covariance.resize(kk, kk);
  for (Eigen::Index i = 0; i < kk; ++i) {
    p.mean(i) = src.mean[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < kk; ++j)
      p.covariance(i, j) = src.covariance[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  }
  return p;
}

ojson run_bayes(const Dataset& ds, const BayesBlock& b, const std::string& key, const std::string& id) {
  const LinearRun r = run_linear(ds, b.model);
  const Likelihood lik = likelihood_from_fit(r.fit, r.cov, id);
  const Prior prior = resolve_prior(b.prior, static_cast<std::size_t>(lik.estimate.size()), key);
  const Posterior post = shrink(lik, prior);
  const auto probs = prob_best_arm(post, b.draws, b.seed, b.higher_is_better);

  ojson res;
  res["compression"] = compression_json(r.data, r.mode);
  ojson l;
  l["labels"] = lik.labels;
  l["estimate"] = vector_json(lik.estimate);
  l["covariance_matrix"] = matrix_json(lik.covariance);
  l["covariance"] = std::string(to_string(lik.variant));
  res["likelihood"] = l;
  ojson p;
  p["id"] = prior.id;
  p["mean"] = vector_json(prior.mean);
  p["covariance_matrix"] = matrix_json(prior.covariance);
  res["prior"] = p;

  ojson po;
  po["labels"] = post.labels;
  po["mean"] = vector_json(post.mean);
  const Eigen::VectorXd sd = post.covariance.diagonal().cwiseMax(0.0).cwiseSqrt();
  po["std_dev"] = vector_json(sd);
  const double z = normal_quantile(0.5 + b.model.level / 2.0);
  po["credible_low"] = vector_json(post.mean - z * sd);
  po["credible_high"] = vector_json(post.mean + z * sd);
  po["level"] = b.model.level;
  po["covariance_matrix"] = matrix_json(post.covariance);
  ojson prov;
  prov["prior_id"] = post.provenance.prior_id;
  prov["model_id"] = post.provenance.model_id;
  prov["covariance"] = std::string(to_string(post.provenance.variant));
  prov["prior_regularized"] = post.provenance.prior_regularized;
  prov["likelihood_regularized"] = post.provenance.likelihood_regularized;
  prov["solver"] = "conjugate-normal";
  po["provenance"] = prov;
  res["posterior"] = po;

  ojson pb = ojson::array();
  for (std::size_t a = 0; a < probs.size(); ++a) {
    ojson e;
    e["arm"] = ds.arm_labels()[a];
    e["probability"] = probs[a];
    pb.push_back(std::move(e));
  }
  res["prob_best"] = pb;
  ojson mc;
  mc["draws"] = b.draws;
  mc["seed"] = b.seed;
  mc["higher_is_better"] = b.higher_is_better;
  mc["generator"] = "philox4x32-10";
  res["prob_best_sampling"] = mc;
  return res;
}

ojson run_dynamic(const Dataset& ds, const DynamicBlock& b) {
  const PanelDataset panel(ds, b.covariates);
  const PanelDesign pd = build_panel_design(panel, b.basis, b.covariates, b.weighted);
  const FitResult f = fit_wls(pd.design, pd.outcome);
  const CovarianceMatrix v = compute_covariance(f, pd.design, b.covariance);

  ojson res;
  ojson comp;
  comp["mode"] = "within_cluster";
  comp["raw_rows"] = ds.size();
  comp["unique_rows"] = pd.design.rows();
  comp["ratio"] = static_cast<double>(ds.size()) / static_cast<double>(std::max<Eigen::Index>(1, pd.design.rows()));
  res["compression"] = comp;
  ojson dyn = ojson::array();
  ojson diffs = ojson::array();
  for (int a = 1; a < static_cast<int>(ds.arm_count()); ++a) {
    DynamicOptions opt;
    opt.arm = a;
    opt.at_covariates = b.at_covariates;
    opt.level = b.level;
    opt.cumulative = b.cumulative;
    dyn.push_back(to_json(dynamic_effects(f, v, pd.layout, opt)));
    for (const auto& [t1, t2] : b.differences) {
      ojson e = to_json(difference_of_daily(f, v, pd.layout, t1, t2, opt));
      e["arm"] = ds.arm_labels()[static_cast<std::size_t>(a)];
      diffs.push_back(std::move(e));
    }
  }
  res["dynamic"] = dyn;
  res["differences"] = diffs;
  res["fit"] = fit_json(f, pd.design, v);
  res["fit"]["basis"] = std::string(to_string(b.basis.kind));
  return res;
}

}  // namespace

ojson analyze(const AnalysisConfig& config, const Dataset& ds, const ValidationReport& validation,
              const AnalyzeOptions& options) {
  const std::size_t n = config.analyses.size();
  std::vector<ojson> results(n);
  std::vector<double> elapsed(n, 0.0);
  auto run_block = [&](std::size_t i) {
    const auto& block = config.analyses[i];
    const std::string key = "analyses[" + std::to_string(i) + "]";
    const auto t0 = Clock::now();
    if (const auto* w = std::get_if<WlsBlock>(&block.options)) {
      results[i] = run_wls(ds, *w);
    } else if (const auto* q = std::get_if<QuantileBlock>(&block.options)) {
      results[i] = run_quantile(ds, *q);
    } else if (const auto* by = std::get_if<BayesBlock>(&block.options)) {
      results[i] = run_bayes(ds, *by, key, block.id);
    } else if (const auto* d = std::get_if<DynamicBlock>(&block.options)) {
      results[i] = run_dynamic(ds, *d);
    }
    elapsed[i] = ms_since(t0);
  };
  if (options.parallel) {
    parallel_for(n, run_block);
  } else {
    for (std::size_t i = 0; i < n; ++i) run_block(i);
  }

  ojson report;
  ojson engine;
  engine["name"] = std::string(kEngineName);
  engine["version"] = std::string(kEngineVersion);
  engine["generator"] = "philox4x32-10";
  report["engine"] = engine;
  report["config"] = echo(config);
  ojson data = to_json(validation);
  ojson arms = ojson::array();
  std::vector<std::size_t> counts(ds.arm_count(), 0);
  for (std::size_t i = 0; i < ds.size(); ++i) ++counts[static_cast<std::size_t>(ds.arm(i))];
  for (std::size_t a = 0; a < counts.size(); ++a) {
    ojson e;
    e["label"] = ds.arm_labels()[a];
    e["rows"] = counts[a];
    e["role"] = a == 0 ? "control" : "treatment";
    arms.push_back(std::move(e));
  }
  data["arms"] = arms;
  report["data"] = data;
  ojson list = ojson::array();
  for (std::size_t i = 0; i < n; ++i) {
    ojson a;
    a["id"] = config.analyses[i].id;
    a["type"] = std::string(analysis_type(config.analyses[i]));
    a["results"] = std::move(results[i]);
    list.push_back(std::move(a));
  }
  report["analyses"] = list;
  if (options.timings) {
    ojson t;
    for (std::size_t i = 0; i < n; ++i) t[config.analyses[i].id + "_ms"] = elapsed[i];
    report["timings"] = t;
  }
  return report;
}

ojson analyze(const AnalysisConfig& config, const AnalyzeOptions& options) {
  const auto t0 = Clock::now();
  auto [ds, validation] = load_csv(config.data_path, config.schema);
  const double load_ms = ms_since(t0);
  ojson report = analyze(config, ds, validation, options);
  if (options.timings) report["timings"]["load_ms"] = load_ms;
  return report;
}

int exit_code_for(const std::exception& e) noexcept {
  if (dynamic_cast<const ConfigError*>(&e)) return exit_config;
  if (dynamic_cast<const DataError*>(&e)) return exit_data;
  if (dynamic_cast<const EstimationError*>(&e)) return exit_estimation;
  return exit_internal;
}

ojson error_json(const std::exception& e) {
  ojson err;
  if (const auto* c = dynamic_cast<const ConfigError*>(&e)) {
    err["kind"] = "config";
    err["key"] = c->key();
  } else if (dynamic_cast<const DataError*>(&e)) {
    err["kind"] = "data";
  } else if (dynamic_cast<const EstimationError*>(&e)) {
    err["kind"] = "estimation";
  } else {
    err["kind"] = "internal";
  }
  err["message"] = e.what();
  err["exit_code"] = exit_code_for(e);
  ojson j;
  j["error"] = err;
  return j;
}

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw DataError("failed writing '" + path.string() + "'");
}

int report_failure(const std::exception& e, const std::optional<std::filesystem::path>& out, std::ostream& err) {
  const std::string text = render_json(error_json(e));
  err << text;
  if (out) {
    try {
      write_text(*out, text);
    } catch (const std::exception&) {
      // stderr already carries the error object
    }
  }
  return exit_code_for(e);
}

}  // namespace

int run_analyze(const std::filesystem::path& config, const std::filesystem::path& out, const AnalyzeOptions& options,
                std::ostream& log, std::ostream& err) {
  try {
    const AnalysisConfig c = load_analysis_config(config);
    const ojson report = analyze(c, options);
    write_text(out, render_json(report));
    log << summary_text(report);
    return exit_ok;
  } catch (const std::exception& e) {
    return report_failure(e, out, err);
  }
}

int run_simulate(const std::filesystem::path& config, const std::filesystem::path& out_dir, std::ostream& log,
                 std::ostream& err) {
  try {
    const SimConfig c = load_sim_config(config);
    const SimData s = c.panel ? gen_panel(c) : gen_ab(c);
    std::filesystem::create_directories(out_dir);
    write_csv(s.data, out_dir / "data.csv");
    ojson truth;
    ojson engine;
    engine["name"] = std::string(kEngineName);
    engine["version"] = std::string(kEngineVersion);
    truth["engine"] = engine;
    truth["config"] = echo(c);
    truth["rows"] = s.data.size();
    truth["truth"] = to_json(s.truth);
    write_text(out_dir / "truth.json", render_json(truth));
    log << "wrote " << s.data.size() << " rows to " << (out_dir / "data.csv").string() << "\n";
    return exit_ok;
  } catch (const std::exception& e) {
    return report_failure(e, std::nullopt, err);
  }
}

int run_bench(const std::filesystem::path& config, const std::optional<std::filesystem::path>& out, std::ostream& log,
              std::ostream& err) {
  try {
    const BenchConfig c = parse_bench_config(read_json_file(config));
    const auto rows = run_bench(c, &err);
    log << bench_table(rows);
    if (out) {
      ojson j;
      ojson engine;
      engine["name"] = std::string(kEngineName);
      engine["version"] = std::string(kEngineVersion);
      j["engine"] = engine;
      j["runs"] = c.runs;
      j["cases"] = to_json(rows);
      write_text(*out, render_json(j));
    }
    return exit_ok;
  } catch (const std::exception& e) {
    return report_failure(e, out, err);
  }
}

}  // namespace xpm
