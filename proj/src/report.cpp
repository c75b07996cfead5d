#include "xpm/report.hpp"

#include <sstream>

namespace xpm {

ojson vector_json(const Eigen::VectorXd& v) {
  ojson out = ojson::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

ojson matrix_json(const Eigen::MatrixXd& m) {
  ojson out = ojson::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) out.push_back(vector_json(m.row(i).transpose()));
  return out;
}

ojson to_json(const EffectEstimate& e) {
  ojson j;
  j["label"] = e.label;
  j["estimate"] = e.value;
  j["std_error"] = e.std_error;
  j["ci_low"] = e.ci_low;
  j["ci_high"] = e.ci_high;
  j["p_value"] = e.p_value;
  j["level"] = e.level;
  j["covariance"] = std::string(to_string(e.covariance_variant));
  return j;
}

ojson to_json(const QuantileEffect& e) {
  ojson j;
  j["label"] = e.label;
  j["tau"] = e.tau;
  j["estimate"] = e.estimate;
  j["control_quantile"] = e.control_quantile;
  j["treatment_quantile"] = e.treatment_quantile;
  j["ci_low"] = e.ci_low;
  j["ci_high"] = e.ci_high;
  j["level"] = e.level;
  j["inference"] = "account-bootstrap-percentile";
  j["replicates"] = e.replicates;
  j["seed"] = e.seed;
  j["accounts_control"] = e.accounts_control;
  j["accounts_treatment"] = e.accounts_treatment;
  return j;
}

ojson to_json(const BalanceCheck& b) {
  ojson j;
  j["negative"] = b.negative;
  j["zero"] = b.zero;
  j["positive"] = b.positive;
  j["slack"] = b.slack;
  j["holds"] = b.holds;
  return j;
}

ojson to_json(const DynamicEffects& d) {
  ojson j;
  j["arm"] = d.arm_label;
  j["covariance"] = std::string(to_string(d.variant));
  ojson cond;
  cond["source"] = d.at_sample_means ? "sample_means" : "supplied";
  cond["values"] = d.at_covariates;
  j["conditioning"] = cond;
  j["periods"] = d.periods;
  ojson daily = ojson::array(), cumulative = ojson::array();
  for (const auto& e : d.daily) daily.push_back(to_json(e));
  for (const auto& e : d.cumulative) cumulative.push_back(to_json(e));
  j["daily"] = daily;
  j["cumulative"] = cumulative;
  j["average"] = to_json(d.average);
  return j;
}

ojson to_json(const ValidationReport& r) {
  ojson j;
  j["rows"] = r.row_count;
  j["kept"] = r.kept;
  ojson dropped;
  for (auto reason : {DropReason::missing_value, DropReason::unparseable_value, DropReason::non_positive_weight,
                      DropReason::malformed_row})
    dropped[std::string(to_string(reason))] = r.dropped_count(reason);
  j["dropped"] = dropped;
  ojson first = ojson::array();
  for (std::size_t i = 0; i < r.dropped.size() && i < 20; ++i) {
    ojson d;
    d["line"] = r.dropped[i].line;
    d["reason"] = std::string(to_string(r.dropped[i].reason));
    d["column"] = r.dropped[i].column;
    first.push_back(std::move(d));
  }
  j["first_dropped"] = first;
  ojson cols = ojson::array();
  for (const auto& c : r.columns) {
    ojson s;
    s["name"] = c.name;
    s["min"] = c.min;
    s["max"] = c.max;
    s["mean"] = c.mean;
    s["zero_fraction"] = c.zero_fraction;
    cols.push_back(std::move(s));
  }
  j["columns"] = cols;
  return j;
}

ojson to_json(const SimTruth& t) {
  ojson j;
  j["arms"] = t.arm_labels;
  j["effect"] = t.effect;
  j["mean_effect"] = t.mean_effect;
  if (!t.periods.empty()) {
    j["periods"] = t.periods;
    j["daily_effect"] = t.daily_effect;
    j["average_effect"] = t.average_effect;
    j["slope"] = t.slope;
  }
  j["covariate_effect"] = t.covariate_effect;
  j["rounded"] = t.rounded;
  return j;
}

ojson to_json(const CoverageReport& c) {
  ojson j;
  j["repetitions"] = c.repetitions;
  j["level"] = c.level;
  j["coverage"] = c.coverage;
  j["mean_width"] = c.mean_width;
  j["bias"] = c.bias;
  return j;
}

std::string render_json(const ojson& j) { return j.dump(2) + "\n"; }

namespace {

std::string num(const ojson& v) {
  if (!v.is_number()) return "-";
  std::ostringstream os;
  os.precision(6);
  os << v.get<double>();
  return os.str();
}

void effect_line(std::ostringstream& os, const ojson& e) {
  os << "  " << e.value("label", std::string{}) << ": " << num(e["estimate"]) << "  [" << num(e["ci_low"]) << ", "
     << num(e["ci_high"]) << "]";
  if (e.contains("p_value")) os << "  p=" << num(e["p_value"]);
  os << "\n";
}

}  // namespace

std::string summary_text(const ojson& report) {
  std::ostringstream os;
  os << kEngineName << " " << kEngineVersion << "\n";
  if (report.contains("data")) {
    const auto& d = report["data"];
    os << "rows kept " << d.value("kept", 0) << " of " << d.value("rows", 0) << "\n";
  }
  for (const auto& a : report.value("analyses", ojson::array())) {
    os << "\n[" << a.value("type", std::string{}) << "] " << a.value("id", std::string{}) << "\n";
    if (!a.contains("results")) continue;
    const auto& r = a["results"];
    if (r.contains("effects"))
      for (const auto& e : r["effects"]) effect_line(os, e);
    if (r.contains("quantile_effects"))
      for (const auto& e : r["quantile_effects"]) effect_line(os, e);
    if (r.contains("posterior")) {
      const auto& p = r["posterior"];
      for (std::size_t i = 0; i < p["labels"].size(); ++i)
        os << "  " << p["labels"][i].get<std::string>() << ": posterior mean " << num(p["mean"][i]) << ", sd "
           << num(p["std_dev"][i]) << "\n";
      for (const auto& pb : r["prob_best"])
        os << "  P(best) " << pb["arm"].get<std::string>() << " = " << num(pb["probability"]) << "\n";
    }
    if (r.contains("dynamic"))
      for (const auto& d : r["dynamic"]) effect_line(os, d["average"]);
  }
  return os.str();
}

}  // namespace xpm
