#include "xpm/config.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "xpm/error.hpp"

namespace xpm {

namespace {

std::string join_key(const std::string& path, std::string_view k) {
  return path.empty() ? std::string(k) : path + "." + std::string(k);
}

std::string index_key(const std::string& path, std::size_t i) { return path + "[" + std::to_string(i) + "]"; }

double as_number(const ojson& v, const std::string& key) {
  if (!v.is_number()) throw ConfigError(key, "expected a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw ConfigError(key, "expected a finite number");
  return d;
}

std::int64_t as_integer(const ojson& v, const std::string& key) {
  if (v.is_number_integer()) return v.get<std::int64_t>();
  const double d = as_number(v, key);
  if (d != std::floor(d) || std::abs(d) > 9.0e15) throw ConfigError(key, "expected an integer");
  return static_cast<std::int64_t>(d);
}

std::uint64_t as_seed(const ojson& v, const std::string& key) {
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  const std::int64_t i = as_integer(v, key);
  if (i < 0) throw ConfigError(key, "expected a non-negative integer");
  return static_cast<std::uint64_t>(i);
}

std::string as_string(const ojson& v, const std::string& key) {
  if (!v.is_string()) throw ConfigError(key, "expected a string");
  std::string s = v.get<std::string>();
  if (s.empty()) throw ConfigError(key, "must not be empty");
  return s;
}

std::vector<std::string> as_strings(const ojson& v, const std::string& key) {
  if (!v.is_array()) throw ConfigError(key, "expected an array of strings");
  std::vector<std::string> out;
  for (std::size_t i = 0; i < v.size(); ++i) out.push_back(as_string(v[i], index_key(key, i)));
  return out;
}

std::vector<double> as_numbers(const ojson& v, const std::string& key) {
  if (!v.is_array()) throw ConfigError(key, "expected an array of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < v.size(); ++i) out.push_back(as_number(v[i], index_key(key, i)));
  return out;
}

/// Object reader that records which keys were consumed so leftovers can be
/// reported as unknown.
class Obj {
 public:
  Obj(const ojson& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_, "expected an object");
  }

  std::string key(std::string_view k) const { return join_key(path_, k); }

  const ojson* find(std::string_view k) {
    seen_.emplace(k);
    const auto it = j_.find(std::string(k));
    return it == j_.end() ? nullptr : &*it;
  }
  const ojson& require(std::string_view k) {
    const ojson* v = find(k);
    if (!v) throw ConfigError(key(k), "missing required key '" + std::string(k) + "'");
    return *v;
  }
  bool has(std::string_view k) const { return j_.contains(std::string(k)); }

  std::string str(std::string_view k) { return as_string(require(k), key(k)); }
  std::optional<std::string> opt_str(std::string_view k) {
    const ojson* v = find(k);
    if (!v || v->is_null()) return std::nullopt;
    return as_string(*v, key(k));
  }
  double num(std::string_view k, double def) {
    const ojson* v = find(k);
    return v ? as_number(*v, key(k)) : def;
  }
  std::int64_t integer(std::string_view k, std::int64_t def) {
    const ojson* v = find(k);
    return v ? as_integer(*v, key(k)) : def;
  }
  std::uint64_t seed(std::string_view k, std::uint64_t def) {
    const ojson* v = find(k);
    return v ? as_seed(*v, key(k)) : def;
  }
  bool boolean(std::string_view k, bool def) {
    const ojson* v = find(k);
    if (!v) return def;
    if (!v->is_boolean()) throw ConfigError(key(k), "expected true or false");
    return v->get<bool>();
  }
  std::vector<std::string> strings(std::string_view k) {
    const ojson* v = find(k);
    return v ? as_strings(*v, key(k)) : std::vector<std::string>{};
  }

  void finish() const {
    for (const auto& item : j_.items()) {
      if (!seen_.count(item.key())) throw ConfigError(key(item.key()), "unknown key '" + item.key() + "'");
    }
  }

 private:
  const ojson& j_;
  std::string path_;
  std::set<std::string, std::less<>> seen_;
};

double level_of(Obj& o) {
  const double level = o.num("level", 0.95);
  if (!(level > 0.0 && level < 1.0)) throw ConfigError(o.key("level"), "level must be in (0, 1)");
  return level;
}

CovarianceVariant covariance_of(Obj& o, CovarianceVariant def) {
  const auto text = o.opt_str("covariance");
  if (!text) return def;
  const auto v = parse_covariance_variant(*text);
  if (!v) throw ConfigError(o.key("covariance"), "unknown covariance variant '" + *text + "'");
  return *v;
}

void read_model_terms(Obj& o, ModelSpec& m) {
  m.weighted = o.boolean("weighted", false);
  m.covariates = o.strings("covariates");
  if (const ojson* v = o.find("interactions")) {
    const std::string key = o.key("interactions");
    if (!v->is_array()) throw ConfigError(key, "expected an array of term lists");
    for (std::size_t i = 0; i < v->size(); ++i) {
      auto terms = as_strings((*v)[i], index_key(key, i));
      if (terms.size() < 2) throw ConfigError(index_key(key, i), "an interaction needs at least two terms");
      m.interactions.push_back(std::move(terms));
    }
  }
}

void check_columns(const std::vector<std::string>& names, const Schema& s, const std::string& key) {
  for (std::size_t i = 0; i < names.size(); ++i) {
    const auto& n = names[i];
    if (n == kTreatmentTerm) continue;
    if (std::find(s.feature_columns.begin(), s.feature_columns.end(), n) == s.feature_columns.end())
      throw ConfigError(index_key(key, i), "'" + n + "' is not listed in schema.features");
  }
}

void check_model(const ModelSpec& m, const Schema& s, Obj& o) {
  check_columns(m.covariates, s, o.key("covariates"));
  for (std::size_t i = 0; i < m.interactions.size(); ++i)
    check_columns(m.interactions[i], s, index_key(o.key("interactions"), i));
  if (m.weighted && !s.weight_column) throw ConfigError(o.key("weighted"), "weighted fit needs schema.weight");
}

WlsBlock read_wls(Obj& o, const Schema& s) {
  WlsBlock b;
  read_model_terms(o, b.model);
  b.covariance = covariance_of(o, CovarianceVariant::hc1);
  b.level = level_of(o);
  check_model(b.model, s, o);
  if (is_cluster_variant(b.covariance) && !s.cluster_column)
    throw ConfigError(o.key("covariance"), "cluster-robust covariance needs schema.cluster");
  return b;
}

QuantileBlock read_quantile(Obj& o) {
  QuantileBlock b;
  if (const ojson* v = o.find("tau")) {
    const std::string key = o.key("tau");
    b.taus = v->is_array() ? as_numbers(*v, key) : std::vector<double>{as_number(*v, key)};
    if (b.taus.empty()) throw ConfigError(key, "need at least one tau");
    for (std::size_t i = 0; i < b.taus.size(); ++i)
      if (!(b.taus[i] > 0.0 && b.taus[i] < 1.0)) throw ConfigError(v->is_array() ? index_key(key, i) : key, "tau must be in (0, 1)");
  }
  const auto reps = o.integer("replicates", 1000);
  if (reps < 200) throw ConfigError(o.key("replicates"), "replicates must be >= 200");
  b.replicates = static_cast<int>(std::min<std::int64_t>(reps, std::numeric_limits<int>::max()));
  b.seed = o.seed("seed", 0);
  b.level = level_of(o);
  b.regression = o.boolean("regression", true);
  return b;
}

PriorSource read_prior(Obj& parent, const std::filesystem::path& base_dir) {
  Obj o(parent.require("prior"), parent.key("prior"));
  PriorSource p;
  if (auto h = o.opt_str("history")) {
    if (o.has("mean") || o.has("covariance"))
      throw ConfigError(o.key("history"), "give either history or mean/covariance, not both");
    p.history_text = *h;
    p.history = base_dir / *h;
  } else {
    p.mean = as_numbers(o.require("mean"), o.key("mean"));
    const ojson& cov = o.require("covariance");
    const std::string key = o.key("covariance");
    if (!cov.is_array() || cov.size() != p.mean.size())
      throw ConfigError(key, "covariance must be a " + std::to_string(p.mean.size()) + "x" +
                                 std::to_string(p.mean.size()) + " array");
    for (std::size_t i = 0; i < cov.size(); ++i) {
      auto row = as_numbers(cov[i], index_key(key, i));
      if (row.size() != p.mean.size()) throw ConfigError(index_key(key, i), "covariance row has the wrong length");
      p.covariance.push_back(std::move(row));
    }
  }
  o.finish();
  return p;
}

BayesBlock read_bayes(Obj& o, const Schema& s, const std::filesystem::path& base_dir) {
  BayesBlock b;
  b.model = read_wls(o, s);
  b.prior = read_prior(o, base_dir);
  const auto draws = o.integer("draws", 100000);
  if (draws < 10000) throw ConfigError(o.key("draws"), "draws must be >= 10000");
  b.draws = static_cast<std::size_t>(draws);
  b.seed = o.seed("seed", 0);
  b.higher_is_better = o.boolean("higher_is_better", true);
  return b;
}

DynamicBlock read_dynamic(Obj& o, const Schema& s) {
  DynamicBlock b;
  if (!s.cluster_column || !s.time_column)
    throw ConfigError(o.key("type"), "dynamic analysis needs schema.cluster and schema.time");
  if (auto text = o.opt_str("basis")) {
    const auto k = parse_time_basis(*text);
    if (!k) throw ConfigError(o.key("basis"), "unknown time basis '" + *text + "'");
    b.basis.kind = *k;
  }
  if (const ojson* v = o.find("knots")) {
    const std::string key = o.key("knots");
    if (!v->is_array()) throw ConfigError(key, "expected an array of periods");
    for (std::size_t i = 0; i < v->size(); ++i) b.basis.knots.push_back(as_integer((*v)[i], index_key(key, i)));
    if (b.basis.kind != TimeBasisKind::piecewise && !b.basis.knots.empty())
      throw ConfigError(key, "knots apply only to the piecewise basis");
  }
  if (b.basis.kind == TimeBasisKind::piecewise && b.basis.knots.empty())
    throw ConfigError(o.key("knots"), "piecewise basis needs at least one knot");
  b.covariates = o.strings("covariates");
  check_columns(b.covariates, s, o.key("covariates"));
  if (const ojson* v = o.find("at")) {
    b.at_covariates = as_numbers(*v, o.key("at"));
    if (b.at_covariates->size() != b.covariates.size())
      throw ConfigError(o.key("at"), "need one value per covariate");
  }
  b.covariance = covariance_of(o, CovarianceVariant::cr1);
  if (auto text = o.opt_str("cumulative")) {
    if (*text == "equal") {
      b.cumulative = CumulativeWeighting::equal;
    } else if (*text == "exposure") {
      b.cumulative = CumulativeWeighting::exposure;
    } else {
      throw ConfigError(o.key("cumulative"), "cumulative weighting must be 'equal' or 'exposure'");
    }
  }
  b.level = level_of(o);
  b.weighted = o.boolean("weighted", false);
  if (b.weighted && !s.weight_column) throw ConfigError(o.key("weighted"), "weighted fit needs schema.weight");
  if (const ojson* v = o.find("differences")) {
    const std::string key = o.key("differences");
    if (!v->is_array()) throw ConfigError(key, "expected an array of [t1, t2] pairs");
    for (std::size_t i = 0; i < v->size(); ++i) {
      const ojson& pair = (*v)[i];
      const std::string pk = index_key(key, i);
      if (!pair.is_array() || pair.size() != 2) throw ConfigError(pk, "expected [t1, t2]");
      const auto t1 = as_integer(pair[0], index_key(pk, 0));
      const auto t2 = as_integer(pair[1], index_key(pk, 1));
      if (t1 == t2) throw ConfigError(pk, "difference of daily effects needs two distinct periods");
      b.differences.emplace_back(t1, t2);
    }
  }
  return b;
}

Schema read_schema(Obj& parent) {
  Obj o(parent.require("schema"), "schema");
  Schema s;
  s.outcome_column = o.str("outcome");
  s.treatment_column = o.str("treatment");
  s.feature_columns = o.strings("features");
  s.weight_column = o.opt_str("weight");
  s.cluster_column = o.opt_str("cluster");
  s.time_column = o.opt_str("time");
  s.control_label = o.opt_str("control");
  o.finish();
  s.validate();
  return s;
}

ojson model_echo(const ModelSpec& m) {
  ojson j;
  j["weighted"] = m.weighted;
  j["covariates"] = m.covariates;
  j["interactions"] = m.interactions;
  return j;
}

ojson opt_string(const std::optional<std::string>& s) { return s ? ojson(*s) : ojson(nullptr); }

}  // namespace

ojson read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("", "cannot open config file '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return ojson::parse(ss.str());
  } catch (const ojson::parse_error& e) {
    throw ConfigError("", std::string("config is not valid JSON: ") + e.what());
  }
}

std::string_view analysis_type(const AnalysisBlock& b) noexcept {
  switch (b.options.index()) {
    case 0: return "wls";
    case 1: return "quantile";
    case 2: return "bayes";
    default: return "dynamic";
  }
}

AnalysisConfig parse_analysis_config(const ojson& j, const std::filesystem::path& base_dir) {
  Obj root(j, "");
  AnalysisConfig c;
  c.data_text = root.str("data");
  c.data_path = base_dir / c.data_text;
  c.schema = read_schema(root);
  const ojson& list = root.require("analyses");
  if (!list.is_array() || list.empty()) throw ConfigError("analyses", "need at least one analysis block");
  std::set<std::string> ids;
  for (std::size_t i = 0; i < list.size(); ++i) {
    Obj o(list[i], index_key("analyses", i));
    const std::string type = o.str("type");
    AnalysisBlock b;
    b.id = o.opt_str("id").value_or(type + "_" + std::to_string(i));
    if (!ids.insert(b.id).second) throw ConfigError(o.key("id"), "duplicate analysis id '" + b.id + "'");
    if (type == "wls") {
      b.options = read_wls(o, c.schema);
    } else if (type == "quantile") {
      b.options = read_quantile(o);
    } else if (type == "bayes") {
      b.options = read_bayes(o, c.schema, base_dir);
    } else if (type == "dynamic") {
      b.options = read_dynamic(o, c.schema);
    } else {
      throw ConfigError(o.key("type"), "unknown analysis type '" + type + "'");
    }
    o.finish();
    c.analyses.push_back(std::move(b));
  }
  root.finish();
  return c;
}

AnalysisConfig load_analysis_config(const std::filesystem::path& path) {
  return parse_analysis_config(read_json_file(path), path.parent_path());
}

ojson echo(const AnalysisConfig& c) {
  ojson j;
  j["data"] = c.data_text;
  ojson s;
  s["outcome"] = c.schema.outcome_column;
  s["treatment"] = c.schema.treatment_column;
  s["features"] = c.schema.feature_columns;
  s["weight"] = opt_string(c.schema.weight_column);
  s["cluster"] = opt_string(c.schema.cluster_column);
  s["time"] = opt_string(c.schema.time_column);
  s["control"] = opt_string(c.schema.control_label);
  j["schema"] = s;
  ojson list = ojson::array();
  for (const auto& b : c.analyses) {
    ojson a;
    a["type"] = std::string(analysis_type(b));
    a["id"] = b.id;
    if (const auto* w = std::get_if<WlsBlock>(&b.options)) {
      a.update(model_echo(w->model));
      a["covariance"] = std::string(to_string(w->covariance));
      a["level"] = w->level;
    } else if (const auto* q = std::get_if<QuantileBlock>(&b.options)) {
      a["tau"] = q->taus;
      a["replicates"] = q->replicates;
      a["seed"] = q->seed;
      a["level"] = q->level;
      a["regression"] = q->regression;
    } else if (const auto* by = std::get_if<BayesBlock>(&b.options)) {
      a.update(model_echo(by->model.model));
      a["covariance"] = std::string(to_string(by->model.covariance));
      a["level"] = by->model.level;
      ojson p;
      if (by->prior.history) {
        p["history"] = by->prior.history_text;
      } else {
        p["mean"] = by->prior.mean;
        p["covariance"] = by->prior.covariance;
      }
      a["prior"] = p;
      a["draws"] = by->draws;
      a["seed"] = by->seed;
      a["higher_is_better"] = by->higher_is_better;
    } else if (const auto* d = std::get_if<DynamicBlock>(&b.options)) {
      a["basis"] = std::string(to_string(d->basis.kind));
      a["knots"] = d->basis.knots;
      a["covariates"] = d->covariates;
      a["at"] = d->at_covariates ? ojson(*d->at_covariates) : ojson("sample_means");
      a["covariance"] = std::string(to_string(d->covariance));
      a["cumulative"] = d->cumulative == CumulativeWeighting::equal ? "equal" : "exposure";
      a["level"] = d->level;
      a["weighted"] = d->weighted;
      ojson diffs = ojson::array();
      for (const auto& [t1, t2] : d->differences) diffs.push_back({t1, t2});
      a["differences"] = diffs;
    }
    list.push_back(std::move(a));
  }
  j["analyses"] = list;
  return j;
}

SimConfig parse_sim_config(const ojson& j) {
  Obj o(j, "");
  SimConfig c;
  const auto accounts = o.integer("accounts", static_cast<std::int64_t>(c.accounts));
  if (accounts < 0) throw ConfigError("accounts", "accounts must be positive");
  c.accounts = static_cast<std::size_t>(accounts);
  c.arms = static_cast<int>(o.integer("arms", c.arms));
  if (const ojson* v = o.find("effects")) {
    c.effects = as_numbers(*v, "effects");
  } else {
    c.effects.assign(static_cast<std::size_t>(std::max(c.arms, 0)), 0.0);
  }
  c.baseline = o.num("baseline", c.baseline);
  if (auto text = o.opt_str("noise")) {
    const auto k = parse_noise_kind(*text);
    if (!k) throw ConfigError("noise", "unknown noise kind '" + *text + "'");
    c.noise = *k;
  }
  c.sigma = o.num("sigma", c.sigma);
  c.variance_power = o.num("variance_power", c.variance_power);
  c.zero_rate = o.num("zero_rate", c.zero_rate);
  c.weighted = o.boolean("weighted", c.weighted);
  c.max_weight = static_cast<int>(o.integer("max_weight", c.max_weight));
  c.covariates = static_cast<int>(o.integer("covariates", c.covariates));
  c.covariate_effect = o.num("covariate_effect", c.covariate_effect);
  if (const ojson* v = o.find("cardinality"); v && !v->is_null()) c.cardinality = as_number(*v, "cardinality");
  if (const ojson* v = o.find("panel"); v && !v->is_null()) {
    Obj p(*v, "panel");
    PanelConfig pc;
    pc.periods = static_cast<int>(p.integer("periods", pc.periods));
    if (auto text = p.opt_str("shape")) {
      const auto s = parse_effect_shape(*text);
      if (!s) throw ConfigError("panel.shape", "unknown effect shape '" + *text + "'");
      pc.shape = *s;
    }
    pc.slope = p.num("slope", pc.slope);
    pc.decay = p.num("decay", pc.decay);
    pc.rho = p.num("rho", pc.rho);
    if (auto text = p.opt_str("correlation")) {
      const auto k = parse_error_correlation(*text);
      if (!k) throw ConfigError("panel.correlation", "unknown correlation '" + *text + "'");
      pc.correlation = *k;
    }
    p.finish();
    c.panel = pc;
  }
  c.seed = o.seed("seed", c.seed);
  o.finish();
  c.validate();
  return c;
}

SimConfig load_sim_config(const std::filesystem::path& path) { return parse_sim_config(read_json_file(path)); }

ojson echo(const SimConfig& c) {
  ojson j;
  j["accounts"] = c.accounts;
  j["arms"] = c.arms;
  j["effects"] = c.effects;
  j["baseline"] = c.baseline;
  j["noise"] = std::string(to_string(c.noise));
  j["sigma"] = c.sigma;
  j["variance_power"] = c.variance_power;
  j["zero_rate"] = c.zero_rate;
  j["weighted"] = c.weighted;
  j["max_weight"] = c.max_weight;
  j["covariates"] = c.covariates;
  j["covariate_effect"] = c.covariate_effect;
  j["cardinality"] = c.cardinality ? ojson(*c.cardinality) : ojson(nullptr);
  if (c.panel) {
    ojson p;
    p["periods"] = c.panel->periods;
    p["shape"] = std::string(to_string(c.panel->shape));
    p["slope"] = c.panel->slope;
    p["decay"] = c.panel->decay;
    p["rho"] = c.panel->rho;
    p["correlation"] = std::string(to_string(c.panel->correlation));
    j["panel"] = p;
  } else {
    j["panel"] = nullptr;
  }
  j["seed"] = c.seed;
  j["generator"] = "philox4x32-10";
  return j;
}

}  // namespace xpm
