#include "xpm/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <sstream>

#include "xpm/error.hpp"
#include "xpm/linear.hpp"
#include "xpm/rng.hpp"

namespace xpm {

namespace {

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

template <class F>
double time_ms(F&& f) {
  const auto t0 = std::chrono::steady_clock::now();
  f();
  const auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count();
}

std::int64_t integer_field(const ojson& v, const std::string& key) {
  if (v.is_number_integer()) return v.get<std::int64_t>();
  if (v.is_number_float()) {
    const double d = v.get<double>();
    if (d == static_cast<double>(static_cast<std::int64_t>(d))) return static_cast<std::int64_t>(d);
  }
  throw ConfigError(key, "expected an integer");
}

}  // namespace

BenchConfig parse_bench_config(const ojson& j) {
  if (!j.is_object()) throw ConfigError("", "expected an object");
  BenchConfig c;
  for (const auto& item : j.items()) {
    const std::string& k = item.key();
    if (k != "runs" && k != "seed" && k != "cases") throw ConfigError(k, "unknown key '" + k + "'");
  }
  if (j.contains("runs")) c.runs = static_cast<int>(integer_field(j["runs"], "runs"));
  if (c.runs < 5) throw ConfigError("runs", "bench needs at least 5 runs");
  if (j.contains("seed")) {
    const auto s = integer_field(j["seed"], "seed");
    if (s < 0) throw ConfigError("seed", "expected a non-negative integer");
    c.seed = static_cast<std::uint64_t>(s);
  }
  if (!j.contains("cases")) throw ConfigError("cases", "missing required key 'cases'");
  const ojson& cases = j["cases"];
  if (!cases.is_array() || cases.empty()) throw ConfigError("cases", "need at least one bench case");
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const std::string base = "cases[" + std::to_string(i) + "]";
    const ojson& o = cases[i];
    if (!o.is_object()) throw ConfigError(base, "expected an object");
    for (const auto& item : o.items()) {
      const std::string& k = item.key();
      if (k != "name" && k != "rows" && k != "unique" && k != "covariates")
        throw ConfigError(base + "." + k, "unknown key '" + k + "'");
    }
    BenchCase bc;
    if (!o.contains("rows")) throw ConfigError(base + ".rows", "missing required key 'rows'");
    const auto rows = integer_field(o["rows"], base + ".rows");
    if (rows < 4) throw ConfigError(base + ".rows", "rows must be >= 4");
    bc.rows = static_cast<std::size_t>(rows);
    if (o.contains("unique") && !o["unique"].is_null()) {
      const auto u = integer_field(o["unique"], base + ".unique");
      if (u < 4 || u > rows) throw ConfigError(base + ".unique", "unique must be in [4, rows]");
      bc.unique = static_cast<std::size_t>(u);
    }
    if (o.contains("covariates")) {
      const auto q = integer_field(o["covariates"], base + ".covariates");
      if (q < 0 || q > 16) throw ConfigError(base + ".covariates", "covariates must be in [0, 16]");
      bc.covariates = static_cast<int>(q);
    }
    if (o.contains("name")) {
      if (!o["name"].is_string()) throw ConfigError(base + ".name", "expected a string");
      bc.name = o["name"].get<std::string>();
    } else {
      bc.name = std::to_string(bc.rows) + "x" + (bc.unique ? std::to_string(*bc.unique) : std::string("distinct"));
    }
    c.cases.push_back(std::move(bc));
  }
  return c;
}

Dataset bench_dataset(const BenchCase& c, std::uint64_t seed) {
  const std::size_t n = c.rows;
  const std::size_t u = c.unique.value_or(n);
  const auto q = static_cast<std::size_t>(c.covariates);
  CounterRng rng(seed, 0);
  std::vector<double> proto_y(u), proto_x(u * q);
  std::vector<int> proto_arm(u);
  for (std::size_t p = 0; p < u; ++p) {
    proto_arm[p] = static_cast<int>(p % 2);
    double signal = 0.0;
    for (std::size_t j = 0; j < q; ++j) {
      // Distinct first coordinate keeps prototypes distinct even when
      // outcomes collide.
      const double x = j == 0 ? static_cast<double>(p / 2) / static_cast<double>(u) : rng.normal();
      proto_x[p * q + j] = x;
      signal += 0.3 * x;
    }
    proto_y[p] = 1.0 + 0.5 * proto_arm[p] + signal + rng.normal();
  }
  Schema schema;
  schema.outcome_column = "y";
  schema.treatment_column = "arm";
  for (std::size_t j = 0; j < q; ++j) schema.feature_columns.push_back("x" + std::to_string(j + 1));
  DatasetColumns cols;
  cols.outcome.resize(n);
  cols.arm.resize(n);
  cols.weight.assign(n, 1.0);
  cols.features.resize(n * q);
  CounterRng pick(seed, 1);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t p = i < u ? i : static_cast<std::size_t>(pick.uniform_index(u));
    cols.outcome[i] = proto_y[p];
    cols.arm[i] = proto_arm[p];
    std::copy_n(proto_x.begin() + static_cast<std::ptrdiff_t>(p * q), q,
                cols.features.begin() + static_cast<std::ptrdiff_t>(i * q));
  }
  return Dataset(schema, {"control", "treatment"}, std::move(cols));
}

BenchRow run_bench_case(const BenchCase& c, int runs, std::uint64_t seed) {
  const Dataset ds = bench_dataset(c, seed);
  ModelSpec spec;
  spec.covariates = ds.schema().feature_columns;
  const Eigen::VectorXd y_raw = outcome_vector(ds);
  std::vector<double> raw, comp, squash;
  Eigen::VectorXd beta_raw, beta_comp;
  std::size_t unique_rows = 0;
  for (int r = 0; r < runs; ++r) {
    raw.push_back(time_ms([&] {
      const DesignMatrix d = build_design(ds, spec);
      beta_raw = fit_wls(d, y_raw).beta;
    }));
    std::optional<CompressedDataset> cd;
    squash.push_back(time_ms([&] { cd.emplace(compress(ds)); }));
    unique_rows = cd->size();
    comp.push_back(time_ms([&] {
      const DesignMatrix d = build_design(*cd, spec);
      beta_comp = fit_wls(d, outcome_vector(*cd)).beta;
    }));
  }
  BenchRow row;
  row.name = c.name;
  row.rows = c.rows;
  row.unique_rows = unique_rows;
  row.raw_ms = median(raw);
  row.compressed_ms = median(comp);
  row.compress_ms = median(squash);
  row.speedup = row.compressed_ms > 0.0 ? row.raw_ms / row.compressed_ms : 0.0;
  row.max_coefficient_gap = (beta_raw - beta_comp).cwiseAbs().maxCoeff();
  return row;
}

std::vector<BenchRow> run_bench(const BenchConfig& config, std::ostream* progress) {
  std::vector<BenchRow> out;
  for (std::size_t i = 0; i < config.cases.size(); ++i) {
    if (progress) *progress << "bench " << config.cases[i].name << " ..." << std::endl;
    out.push_back(run_bench_case(config.cases[i], config.runs, derive_seed(config.seed, i)));
  }
  return out;
}

std::string bench_table(const std::vector<BenchRow>& rows) {
  std::ostringstream os;
  char line[256];
  std::snprintf(line, sizeof line, "%-20s %12s %12s %12s %14s %12s %10s\n", "case", "rows", "unique", "raw_ms",
                "compressed_ms", "compress_ms", "speedup");
  os << line;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%-20s %12zu %12zu %12.3f %14.3f %12.3f %10.1f\n", r.name.c_str(), r.rows,
                  r.unique_rows, r.raw_ms, r.compressed_ms, r.compress_ms, r.speedup);
    os << line;
  }
  return os.str();
}

ojson to_json(const std::vector<BenchRow>& rows) {
  ojson out = ojson::array();
  for (const auto& r : rows) {
    ojson j;
    j["case"] = r.name;
    j["rows"] = r.rows;
    j["unique_rows"] = r.unique_rows;
    j["raw_ms"] = r.raw_ms;
    j["compressed_ms"] = r.compressed_ms;
    j["compress_ms"] = r.compress_ms;
    j["speedup"] = r.speedup;
    j["max_coefficient_gap"] = r.max_coefficient_gap;
    out.push_back(std::move(j));
  }
  return out;
}

}  // namespace xpm
