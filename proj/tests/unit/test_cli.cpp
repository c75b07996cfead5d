#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <string>

#include "doctest.h"
#include "json.hpp"
#include "support.hpp"
#include "xpm/bench.hpp"
#include "xpm/config.hpp"
#include "xpm/error.hpp"

using namespace testing;
namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

const fs::path kGolden = XPM_GOLDEN_DIR;

int run(const std::string& args) {
  const std::string cmd = std::string("\"") + XPM_CLI_PATH + "\" " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

int analyze(const fs::path& config, const fs::path& out, const std::string& extra = {}) {
  return run("analyze --config \"" + config.string() + "\" --out \"" + out.string() + "\" " + extra);
}

json read_json(const fs::path& p) { return json::parse(read_file(p)); }

// A small three-arm dataset plus a config skeleton pointing at it.
fs::path scaffold(const std::string& name, const json& analyses, const json& schema_extra = json::object()) {
  const auto dir = temp_dir("cli_" + name);
  std::string csv = "g,arm,w,x1,x2,y\n";
  xpm::CounterRng rng(1, 0);
  for (int i = 0; i < 300; ++i) {
    const int a = i % 3;
    const double x = rng.normal();
    csv += std::to_string(i % 30) + ",arm" + std::to_string(a) + "," + std::to_string(1 + i % 4) + "," +
           std::to_string(x) + "," + std::to_string(2 * x) + "," + std::to_string(0.5 * a + x + rng.normal()) + "\n";
  }
  write_file(dir / "data.csv", csv);
  json schema = {{"outcome", "y"}, {"treatment", "arm"}, {"features", {"x1", "x2"}}, {"weight", "w"},
                 {"cluster", "g"}, {"control", "arm0"}};
  for (auto& [k, v] : schema_extra.items()) schema[k] = v;
  const json config = {{"data", "data.csv"}, {"schema", schema}, {"analyses", analyses}};
  write_file(dir / "config.json", config.dump(2));
  return dir;
}

}  // namespace

TEST_CASE("configuration errors exit 2 and name the key") {
  const auto dir = scaffold("config", json::array({{{"type", "wls"}, {"covariance", "HC1"}, {"bogus", 1}}}));
  CHECK(analyze(dir / "config.json", dir / "out.json") == 2);
  const auto err = read_json(dir / "out.json");
  CHECK(err["error"]["kind"] == "config");
  CHECK(err["error"]["key"] == "analyses[0].bogus");
  CHECK(err["error"]["exit_code"] == 2);

  const auto tau = scaffold("tau", json::array({{{"type", "quantile"}, {"tau", {0.5, 1.5}}}}));
  CHECK(analyze(tau / "config.json", tau / "out.json") == 2);
  CHECK(read_json(tau / "out.json")["error"]["key"] == "analyses[0].tau[1]");

  const auto missing = scaffold("schema", json::array({{{"type", "wls"}}}), {{"outcome", 3}});
  CHECK(analyze(missing / "config.json", missing / "out.json") == 2);
  CHECK(read_json(missing / "out.json")["error"]["key"] == "schema.outcome");

  write_file(dir / "broken.json", "{\"data\": ");
  CHECK(analyze(dir / "broken.json", dir / "b.json") == 2);
  CHECK(run("analyze --config x.json") == 2);
  CHECK(run("frobnicate") == 2);
}

TEST_CASE("data errors exit 3") {
  const auto dir = scaffold("data", json::array({{{"type", "wls"}}}));
  fs::remove(dir / "data.csv");
  CHECK(analyze(dir / "config.json", dir / "out.json") == 3);
  CHECK(read_json(dir / "out.json")["error"]["kind"] == "data");

  const auto col = scaffold("column", json::array({{{"type", "wls"}}}), {{"features", {"x1", "nope"}}});
  CHECK(analyze(col / "config.json", col / "out.json") == 3);
}

TEST_CASE("estimation errors exit 4") {
  const auto dir = scaffold("estimation", json::array({{{"type", "wls"}, {"covariates", {"x1", "x2"}}}}));
  CHECK(analyze(dir / "config.json", dir / "out.json") == 4);
  const auto err = read_json(dir / "out.json");
  CHECK(err["error"]["kind"] == "estimation");
  CHECK(err["error"]["message"].get<std::string>().find("x2") != std::string::npos);
}

TEST_CASE("simulate writes data and truth deterministically") {
  const auto dir = temp_dir("cli_sim");
  write_file(dir / "sim.json", R"({"accounts": 50, "effects": [0, 2], "sigma": 0, "baseline": 1, "seed": 4})");
  REQUIRE(run("simulate --config \"" + (dir / "sim.json").string() + "\" --out \"" + (dir / "a").string() + "\"") == 0);
  REQUIRE(run("simulate --config \"" + (dir / "sim.json").string() + "\" --out \"" + (dir / "b").string() + "\"") == 0);
  CHECK(read_file(dir / "a" / "data.csv") == read_file(dir / "b" / "data.csv"));
  CHECK(read_file(dir / "a" / "truth.json") == read_file(dir / "b" / "truth.json"));
  const auto truth = read_json(dir / "a" / "truth.json");
  CHECK(truth["rows"] == 50);
  CHECK(truth["truth"]["effect"][1] == 2.0);
  CHECK(truth["config"]["generator"] == "philox4x32-10");
  xpm::Schema s;
  s.outcome_column = "y";
  s.treatment_column = "arm";
  auto [ds, report] = xpm::load_csv(dir / "a" / "data.csv", s);
  for (std::size_t i = 0; i < ds.size(); ++i) CHECK(ds.outcome(i) == (ds.arm(i) == 0 ? 1.0 : 3.0));

  write_file(dir / "bad.json", R"({"accounts": 50, "panel": {"rho": 1.5}})");
  CHECK(run("simulate --config \"" + (dir / "bad.json").string() + "\" --out \"" + (dir / "c").string() + "\"") == 2);
  write_file(dir / "unknown.json", R"({"acounts": 50})");
  CHECK(run("simulate --config \"" + (dir / "unknown.json").string() + "\" --out \"" + (dir / "c").string() + "\"") == 2);
}

TEST_CASE("simulate then analyze recovers the effect") {
  const auto dir = temp_dir("cli_roundtrip");
  write_file(dir / "sim.json",
             R"({"accounts": 4000, "effects": [0, 0.3], "noise": "heteroskedastic", "weighted": true, "seed": 21})");
  REQUIRE(run("simulate --config \"" + (dir / "sim.json").string() + "\" --out \"" + dir.string() + "\"") == 0);
  const json config = {
      {"data", "data.csv"},
      {"schema", {{"outcome", "y"}, {"treatment", "arm"}, {"weight", "w"}, {"control", "control"}}},
      {"analyses", json::array({{{"type", "wls"}, {"weighted", true}}})}};
  write_file(dir / "config.json", config.dump());
  REQUIRE(analyze(dir / "config.json", dir / "report.json") == 0);
  const auto report = read_json(dir / "report.json");
  const auto& e = report["analyses"][0]["results"]["effects"][0];
  const double truth = read_json(dir / "truth.json")["truth"]["mean_effect"][1];
  CHECK(e["label"] == "treatment[t1]");
  CHECK(e["ci_low"].get<double>() <= truth);
  CHECK(e["ci_high"].get<double>() >= truth);
  CHECK(report["analyses"][0]["id"] == "wls_0");
}

TEST_CASE("golden reports are reproduced byte for byte") {
  for (const auto* name : {"ab_weighted", "panel", "history_prior"}) {
    CAPTURE(name);
    const auto out = temp_dir(std::string("golden_") + name);
    REQUIRE(analyze(kGolden / name / "config.json", out / "a.json") == 0);
    REQUIRE(analyze(kGolden / name / "config.json", out / "b.json", "--parallel") == 0);
    const auto expected = read_file(kGolden / name / "expected.json");
    CHECK(read_file(out / "a.json") == expected);
    CHECK(read_file(out / "b.json") == expected);

    REQUIRE(run("simulate --config \"" + (kGolden / name / "sim.json").string() + "\" --out \"" + out.string() + "\"") ==
            0);
    CHECK(read_file(out / "data.csv") == read_file(kGolden / name / "data.csv"));
  }
}

TEST_CASE("timings are opt-in") {
  const auto out = temp_dir("timings");
  REQUIRE(analyze(kGolden / "history_prior" / "config.json", out / "t.json", "--timings") == 0);
  const auto r = read_json(out / "t.json");
  CHECK(r.contains("timings"));
  CHECK_FALSE(read_json(kGolden / "history_prior" / "expected.json").contains("timings"));
}

TEST_CASE("config echo fills every default") {
  const auto dir = scaffold("echo", json::array({{{"type", "wls"}},
                                                {{"type", "quantile"}},
                                                {{"type", "bayes"}, {"prior", {{"mean", {0, 0}}, {"covariance", {{1, 0}, {0, 1}}}}}}}));
  const auto config = xpm::load_analysis_config(dir / "config.json");
  const auto e = xpm::echo(config);
  CHECK(e["analyses"][0]["covariance"] == "HC1");
  CHECK(e["analyses"][0]["level"] == 0.95);
  CHECK(e["analyses"][0]["id"] == "wls_0");
  CHECK(e["analyses"][1]["tau"] == json::array({0.5}));
  CHECK(e["analyses"][1]["replicates"] == 1000);
  CHECK(e["analyses"][2]["draws"] == 100000);
  CHECK(e["schema"]["time"].is_null());
  // echo of the echo parses to the same thing
  auto again = e;
  again["data"] = "data.csv";
  CHECK(xpm::echo(xpm::parse_analysis_config(again, dir)) == e);
}

TEST_CASE("bench config parsing and a tiny run") {
  CHECK_THROWS_AS(xpm::parse_bench_config(json::parse(R"({"runs": 4, "cases": [{"rows": 100}]})")), xpm::ConfigError);
  CHECK_THROWS_AS(xpm::parse_bench_config(json::parse(R"({"cases": []})")), xpm::ConfigError);
  try {
    xpm::parse_bench_config(json::parse(R"({"cases": [{"rows": 100, "unique": 1000}]})"));
    FAIL("expected ConfigError");
  } catch (const xpm::ConfigError& e) {
    CHECK(e.key() == "cases[0].unique");
  }
  const auto dir = temp_dir("bench");
  write_file(dir / "bench.json", R"({"runs": 5, "cases": [{"name": "small", "rows": 20000, "unique": 50}]})");
  REQUIRE(run("bench --config \"" + (dir / "bench.json").string() + "\" --out \"" + (dir / "b.json").string() + "\"") ==
          0);
  const auto rows = read_json(dir / "b.json")["cases"];
  CHECK(rows[0]["case"] == "small");
  CHECK(rows[0]["unique_rows"] == 50);
  CHECK(rows[0]["max_coefficient_gap"].get<double>() < 1e-10);
}
