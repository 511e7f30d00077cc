
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "doctest.h"
#include "evograd/config.hpp"
#include "evograd/csv.hpp"
#include "evograd/runner.hpp"

using namespace evograd;
namespace fs = std::filesystem;

namespace {

std::vector<MetricRow> parse(const std::string& text) {
  std::istringstream is(text);
  return parse_metrics_csv(is);
}

std::string to_csv(const std::vector<MetricsRecord>& recs, bool with_time = false) {
  std::ostringstream os;
  CsvWriter w(os);
  w.write(recs, with_time);
  return os.str();
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "evograd_harness_tests";
  fs::create_directories(dir);
  return dir / name;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(EVOGRAD_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

ExperimentConfig small_traj() {
  RawOptions raw{{"experiment", {"one_d_traj"}}, {"k", {"2", "10"}}, {"seeds", {"0", "1"}}};
  return build_config(raw, false);
}

}  // namespace

TEST_CASE("csv header and float format") {
  CHECK(std::string(kCsvHeader) == "run_id,seed,step,metric_name,value");
  CHECK(format_double(0.1) == "0.10000000000000001");
  CHECK(format_double(1.0) == "1");
  CHECK(format_double(-2.5e-300) == "-2.5e-300");
}

TEST_CASE("records expand to long rows; time only on request") {
  MetricsRecord r;
  r.run_id = "x";
  r.seed = 3;
  r.step = 2;
  r.loss_train = 0.5;
  r.wall_ms = 1.25;
  r.add("f_val", 0.25);
  const auto rows = to_rows(r, false);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].metric == "loss_train");
  CHECK(rows[1].metric == "f_val");
  CHECK(to_rows(r, true).size() == 3);
  r.has_cost = true;
  CHECK(to_rows(r, false).size() == 6);
}

TEST_CASE("the header is written exactly once") {
  MetricsRecord r;
  r.run_id = "a";
  r.accuracy = 0.5;
  std::ostringstream os;
  CsvWriter w(os);
  w.write(std::vector{r}, false);
  w.write(std::vector{r}, false);
  CHECK(os.str() == "run_id,seed,step,metric_name,value\na,0,0,accuracy,0.5\na,0,0,accuracy,0.5\n");
}

TEST_CASE("summary of two seeds uses the population std") {
  const auto rows = parse(
      "run_id,seed,step,metric_name,value\n"
      "r,0,0,accuracy,0.5\n"
      "r,0,1,accuracy,0.8\n"
      "r,1,0,accuracy,0.6\n"
      "r,1,1,accuracy,0.9\n");
  const auto s = summarize(rows);
  CHECK(s["std_convention"] == "population");
  const auto& m = s["runs"]["r"]["metrics"]["accuracy"];
  CHECK(m["mean"].get<double>() == doctest::Approx(0.85));
  CHECK(m["std"].get<double>() == doctest::Approx(0.05));
  CHECK(m["n"] == 2);
  CHECK(s["runs"]["r"]["final_step"] == 1);
}

TEST_CASE("single-seed summary has zero std") {
  const auto s = summarize(parse("run_id,seed,step,metric_name,value\nr,4,0,loss_val,1.5\n"));
  CHECK(s["runs"]["r"]["metrics"]["loss_val"]["std"].get<double>() == 0.0);
}

TEST_CASE("empty and malformed input is rejected") {
  CHECK_THROWS_AS(parse(""), CsvError);
  CHECK_THROWS_AS(parse("run_id,seed,step,metric_name,value\n"), CsvError);
  CHECK_THROWS_AS(parse("bad,header\nr,0,0,a,1\n"), CsvError);
  try {
    parse("run_id,seed,step,metric_name,value\nr,0,0,a,1\nr,zero,0,a,1\n");
    FAIL("expected CsvError");
  } catch (const CsvError& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
  CHECK_THROWS_AS(parse("run_id,seed,step,metric_name,value\nr,0,0,a\n"), CsvError);
  CHECK_THROWS_AS(parse("run_id,seed,step,metric_name,value\nr,0,0,a,1x\n"), CsvError);
}

TEST_CASE("written csv parses back to the same values") {
  MetricsRecord r;
  r.run_id = "rt";
  r.seed = 1;
  r.step = 4;
  r.loss_val = 1.0 / 3.0;
  r.lambda = -2e-17;
  const auto rows = parse(to_csv({r}));
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].value == 1.0 / 3.0);
  CHECK(rows[1].value == -2e-17);
  CHECK(rows[1].step == 4);
}

TEST_CASE("config errors are reported together") {
  RawOptions raw{{"experiment", {"rotation"}}, {"method", {"oracle"}}, {"k", {"1"}}, {"tau", {"-1"}},
                 {"sigma", {"abc"}}};
  try {
    build_config(raw, false);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.problems().size() >= 4);
    const std::string all = e.what();
    CHECK(all.find("oracle") != std::string::npos);
    CHECK(all.find("tau") != std::string::npos);
    CHECK(all.find("sigma") != std::string::npos);
    CHECK(all.find("k:") != std::string::npos);
  }
}

TEST_CASE("oracle is accepted only for the 1-D experiments") {
  for (const char* e : {"one_d_grid", "one_d_traj"}) {
    RawOptions raw{{"experiment", {e}}, {"method", {"oracle"}}};
    if (std::string(e) == "one_d_grid") {
      CHECK_THROWS_AS(build_config(raw, false), ConfigError);
    } else {
      CHECK_NOTHROW(build_config(raw, false));
    }
  }
  for (const char* e : {"rotation", "reweight"}) {
    RawOptions raw{{"experiment", {e}}, {"method", {"oracle"}}};
    CHECK_THROWS_AS(build_config(raw, false), ConfigError);
  }
}

TEST_CASE("unknown keys and sweep-only fields are rejected") {
  CHECK_THROWS_AS(build_config({{"experiment", {"rotation"}}, {"colour", {"red"}}}, false), ConfigError);
  CHECK_THROWS_AS(build_config({{"experiment", {"rotation"}}, {"dimension", {"model_width"}}}, false), ConfigError);
  CHECK_THROWS_AS(build_config({{"experiment", {"scaling"}}}, false), ConfigError);
  CHECK_THROWS_AS(build_config({{"dimension", {"model_width"}}}, true), ConfigError);
  CHECK_NOTHROW(build_config({{"dimension", {"model_width"}}, {"grid", {"1", "2"}}}, true));
}

TEST_CASE("config files: comments, lists and overrides") {
  const auto path = scratch("cfg.txt");
  {
    std::ofstream os(path);
    os << "# grid run\nexperiment = one_d_grid\nk = 2, 10  # two sizes\n\nseeds=0,1,2\n";
  }
  auto raw = read_config_file(path.string());
  auto cfg = build_config(raw, false);
  CHECK(cfg.experiment == Experiment::one_d_grid);
  CHECK(cfg.k == std::vector<int>{2, 10});
  CHECK(cfg.seeds == std::vector<std::uint64_t>{0, 1, 2});
  raw["seeds"] = {"7"};
  CHECK(build_config(raw, false).seeds == std::vector<std::uint64_t>{7});
  CHECK_THROWS(read_config_file(scratch("missing.txt").string()));
}

TEST_CASE("identical configuration and seeds give byte-identical csv") {
  const auto cfg = small_traj();
  const std::string a = to_csv(run_experiment(cfg).records);
  const std::string b = to_csv(run_experiment(cfg).records);
  CHECK(a == b);
  auto par = cfg;
  par.jobs = 2;
  CHECK(to_csv(run_experiment(par).records) == a);
}

TEST_CASE("trajectory runs carry oracle and estimator rows") {
  const auto out = run_experiment(small_traj());
  std::set<std::string> ids;
  for (const auto& r : out.records) ids.insert(r.run_id);
  CHECK(ids.count("one_d_traj/evograd/k=2/start=0") == 1);
  CHECK(ids.count("one_d_traj/evograd/k=10/start=4") == 1);
  CHECK(ids.count("one_d_traj/oracle/start=0") == 1);
}

TEST_CASE("baseline runs have no lambda column") {
  auto cfg = build_config({{"experiment", {"rotation"}}, {"method", {"baseline-no-meta"}}, {"seeds", {"0"}},
                           {"epochs", {"1"}}, {"n", {"300"}}},
                          false);
  for (const auto& r : run_experiment(cfg).records) {
    CHECK_FALSE(r.lambda.has_value());
    CHECK_FALSE(r.hypergrad_norm.has_value());
  }
}

TEST_CASE("sweep records name both methods for model width") {
  auto cfg = build_config({{"dimension", {"model_width"}}, {"grid", {"1", "2"}}, {"steps", {"2"}}}, true);
  const auto pts = scaling_sweep(SweepDimension::model_width, cfg.grid, cfg, 0);
  REQUIRE(pts.size() == 2);
  REQUIRE(pts[0].t1t2.has_value());
  CHECK(pts[1].param_count > pts[0].param_count);
  std::set<std::string> ids;
  for (const auto& r : sweep_records(pts, 0)) ids.insert(r.run_id);
  CHECK(ids == std::set<std::string>{"scaling/model_width/evograd", "scaling/model_width/t1t2"});
}

TEST_CASE("population sweep keeps stored bytes flat and time rising") {
  auto cfg = build_config({{"dimension", {"population_k"}}, {"grid", {"2", "4", "8"}}}, true);
  const auto pts = scaling_sweep(SweepDimension::population_k, cfg.grid, cfg, 0);
  REQUIRE(pts.size() == 3);
  std::size_t lo = pts[0].evograd.stored_bytes, hi = lo;
  for (const auto& p : pts) {
    lo = std::min(lo, p.evograd.stored_bytes);
    hi = std::max(hi, p.evograd.stored_bytes);
    CHECK(p.evograd.backward_per_step == 2);
    CHECK(p.evograd.forward_per_step == p.k + 2);
  }
  CHECK(double(hi) / double(lo) < 1.10);
  CHECK(pts[0].evograd.median_step_ms < pts[1].evograd.median_step_ms);
  CHECK(pts[1].evograd.median_step_ms < pts[2].evograd.median_step_ms);
}

TEST_CASE("weight-network size barely moves the step time") {
  auto cfg = build_config({{"dimension", {"hyperparam_count"}}, {"grid", {"300", "3000", "30000"}}}, true);
  const auto pts = scaling_sweep(SweepDimension::hyperparam_count, cfg.grid, cfg, 0);
  REQUIRE(pts.size() == 3);
  CHECK(pts[0].hyperparam_count == 301);
  CHECK(pts[2].hyperparam_count == 30001);
  double lo = pts[0].evograd.median_step_ms, hi = lo;
  for (const auto& p : pts) {
    lo = std::min(lo, p.evograd.median_step_ms);
    hi = std::max(hi, p.evograd.median_step_ms);
  }
  MESSAGE("step ms spread " << (hi / lo - 1.0) * 100.0 << "%");
  CHECK(hi / lo < 1.20);
}

TEST_CASE("command line exit codes and outputs") {
  const auto out = scratch("cli.csv");
  fs::remove(out);
  CHECK(run_cli("run --experiment one_d_traj --k 2 --seeds 0,1 --out " + out.string()) == 0);
  REQUIRE(fs::exists(out));
  const std::string first = slurp(out);
  CHECK(first.rfind("run_id,seed,step,metric_name,value\n", 0) == 0);
  CHECK(fs::exists(scratch("cli.summary.json")));
  CHECK(run_cli("run --experiment one_d_traj --k 2 --seeds 0,1 --out " + out.string()) == 0);
  CHECK(slurp(out) == first);

  CHECK(run_cli("summarize " + out.string()) == 0);
  CHECK(run_cli("run --experiment rotation --method oracle") == 1);
  CHECK(run_cli("run --experiment one_d_traj --k 1 --tau -1") == 1);
  CHECK(run_cli("summarize " + scratch("missing.csv").string()) == 1);
  CHECK(run_cli("run --experiment one_d_traj --meta-lr 1e300 --seeds 0 --out " + scratch("div.csv").string()) == 2);
  CHECK(run_cli("") != 0);
}
