#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "regional/experiment.hpp"

using namespace regional;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("regional_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

ExperimentConfig small_solve() {
  ExperimentConfig c;
  c.points = 65;
  c.scope.kind = ScopeKind::constant;
  c.scope.value = 1.0;
  c.solver.seeds = {{SeedKind::talenti, 1.0, 0.0}, {SeedKind::gaussian, 1.0, 0.0}};
  return c;
}

}  // namespace

TEST(Config, DefaultsRoundTrip) {
  const ExperimentConfig c;
  EXPECT_EQ(c.experiment, "solve");
  EXPECT_EQ(c.points, 257);
  const auto back = config_from_json(to_json(c));
  EXPECT_EQ(config_hash(back), config_hash(c));
  EXPECT_EQ(config_hash(c).size(), 16u);
  ExperimentConfig d = c;
  d.lambda = 11.0;
  EXPECT_NE(config_hash(d), config_hash(c));
}

TEST(Config, ValidationNamesTheField) {
  try {
    validate(parse_config(R"({"params": {"q": 50}})"));
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_EQ(e.field(), "params.q");
  }
  try {
    parse_config(R"({"grid": {"extent": 8, "pointz": 3}})");
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_EQ(e.field(), "grid.pointz");
  }
  try {
    validate(parse_config(R"({"experiment": "nope"})"));
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_EQ(e.field(), "experiment");
  }
}

TEST(Config, ParseErrorsCarryPosition) {
  try {
    parse_config("{\n  \"params\": {\n    \"n\": ,\n  }\n}");
    FAIL();
  } catch (const ConfigParseError& e) {
    EXPECT_EQ(e.line(), 3u);
    EXPECT_GT(e.column(), 1u);
  }
}

TEST(Config, OutputDirectoryPrecedence) {
  ExperimentConfig c;
  ::setenv(kOutDirEnv, "from_env", 1);
  EXPECT_EQ(resolve_out_dir(std::nullopt, c), fs::path("from_env"));
  c.out_dir = "from_config";
  EXPECT_EQ(resolve_out_dir(std::nullopt, c), fs::path("from_config"));
  EXPECT_EQ(resolve_out_dir(std::string("from_cli"), c), fs::path("from_cli"));
  ::unsetenv(kOutDirEnv);
  c.out_dir.reset();
  EXPECT_EQ(resolve_out_dir(std::nullopt, c), fs::path(kDefaultOutDir));
}

TEST(Run, ArtifactsAreStampedAndReproducible) {
  const auto c = small_solve();
  const auto d1 = scratch("run1"), d2 = scratch("run2");
  RunOptions o1, o2;
  o1.out_dir = d1.string();
  o2.out_dir = d2.string();
  o2.threads = 2;
  const auto r1 = run_experiment(c, o1);
  const auto r2 = run_experiment(c, o2);
  ASSERT_EQ(r1.status, 0);
  ASSERT_EQ(r2.status, 0);
  const std::string hash = config_hash(c);
  for (const char* f : {"solution.csv", "plot.dat"}) {
    const auto text = slurp(d1 / f);
    EXPECT_EQ(text.rfind("# config_hash: " + hash + "\n", 0), 0u) << f;
    EXPECT_EQ(text, slurp(d2 / f)) << f;
  }
  EXPECT_EQ(slurp(d1 / "report.json"), slurp(d2 / "report.json"));
  const auto report = json::parse(slurp(d1 / "report.json"));
  EXPECT_EQ(report.begin().key(), "config_hash");
  EXPECT_EQ(report["config_hash"], hash);
  EXPECT_EQ(config_hash(config_from_json(report["config"])), hash);
  const auto manifest = json::parse(slurp(d1 / "manifest.json"));
  EXPECT_EQ(manifest["status"], "ok");
  EXPECT_FALSE(manifest["partial"].get<bool>());

  std::istringstream csv(slurp(d1 / "solution.csv"));
  std::string line;
  std::getline(csv, line);
  std::getline(csv, line);
  EXPECT_EQ(line, "x,u");
  int rows = 0;
  while (std::getline(csv, line)) ++rows;
  EXPECT_EQ(rows, c.points);
  EXPECT_FALSE(fs::exists(d1 / "solution.csv.tmp"));
}

TEST(Run, FailuresWriteErrorFile) {
  auto c = small_solve();
  c.q = 50.0;
  const auto dir = scratch("fail");
  RunOptions o;
  o.out_dir = dir.string();
  const auto r = run_experiment(c, o);
  EXPECT_EQ(r.status, 2);
  const auto err = json::parse(slurp(dir / "error.json"));
  EXPECT_EQ(err["error_type"], "validation");
  EXPECT_EQ(err["field"], "params.q");
  EXPECT_EQ(json::parse(slurp(dir / "manifest.json"))["status"], "failed");

  c = small_solve();
  c.solver.max_iters = 1;
  const auto r2 = run_experiment(c, o);
  EXPECT_EQ(r2.status, 3);
  EXPECT_EQ(json::parse(slurp(dir / "error.json"))["error_type"], "convergence");
}

TEST(Run, ConcentrationSchema) {
  ExperimentConfig c;
  c.experiment = "concentration";
  c.h_search.coarse = 41;
  c.h_search.quad.radial = 100;
  const auto dir = scratch("conc");
  RunOptions o;
  o.out_dir = dir.string();
  ASSERT_EQ(run_experiment(c, o).status, 0);
  std::istringstream csv(slurp(dir / "concentration.csv"));
  std::string line;
  std::getline(csv, line);
  std::getline(csv, line);
  EXPECT_EQ(line, "x,H");
  const auto report = json::parse(slurp(dir / "report.json"));
  EXPECT_NEAR(report["result"]["argmin"][0].get<double>(), 0.0, 1e-9);
}

TEST(Cli, EndToEnd) {
  const auto dir = scratch("cli");
  fs::create_directories(dir);
  const fs::path cfg = dir / "cfg.json";
  std::ofstream(cfg) << to_json(small_solve()).dump(2);
  const std::string out = (dir / "out").string();
  const std::string cmd = std::string(REGIONAL_CLI) + " --config " + cfg.string() + " --out " + out +
                          " --threads 2 limit > " + (dir / "stdout.txt").string();
  EXPECT_EQ(std::system(cmd.c_str()), 0);
  EXPECT_TRUE(fs::exists(fs::path(out) / "limit.csv"));
  const auto report = json::parse(slurp(fs::path(out) / "report.json"));
  EXPECT_EQ(report["experiment"], "limit");

  std::ofstream(dir / "broken.json") << "{\n \"params\": [\n";
  const std::string bad = std::string(REGIONAL_CLI) + " --config " + (dir / "broken.json").string() + " --out " +
                          (dir / "bad").string() + " solve 2> /dev/null";
  const int status = std::system(bad.c_str());
  EXPECT_EQ(WEXITSTATUS(status), 2);
  const auto err = json::parse(slurp(dir / "bad" / "error.json"));
  EXPECT_EQ(err["error_type"], "parse");
  EXPECT_EQ(err["line"], 3);
}
