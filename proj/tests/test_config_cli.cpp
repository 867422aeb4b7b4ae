#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "fednmap/config.hpp"
#include "fednmap/svg.hpp"

using namespace fednmap;
namespace fs = std::filesystem;

namespace {

nlohmann::json minimal_config() {
  return nlohmann::json::parse(R"({
    "problem": {"kind": "quadratic", "p": 5,
                "noise": {"kind": "gaussian", "sigma": 0.2}},
    "regularizer": {"kind": "elastic_net", "nu1": 0.01, "nu2": 0.02},
    "algorithm": "fednmap",
    "fed": {"n": 3, "Q": 2, "T": 6, "eta_a": 0.05, "eta_s": 1.0, "gamma": 0.5},
    "seed": 3
  })");
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path temp_dir(const char* name) {
  fs::path dir = fs::temp_directory_path() / name;
  fs::create_directories(dir);
  return dir;
}

const char* cli_path() { return std::getenv("FEDNMAP_CLI"); }

int run_cli(const std::string& args) {
  std::string cmd = std::string(cli_path()) + " " + args + " > /dev/null 2>&1";
  int rc = std::system(cmd.c_str());
  return WEXITSTATUS(rc);
}

}  // namespace

TEST_CASE("minimal config runs and yields T+1 rows") {
  LoadedConfig cfg = load_config_json(minimal_config());
  RunResult res = run(cfg.spec);
  CHECK(res.metrics.size() == 7);
  CHECK(res.metrics.back().algo == "fednmap");
}

TEST_CASE("unknown keys are errors that name the key") {
  nlohmann::json j = minimal_config();
  j["fed"]["etaa"] = 0.1;  // typo
  try {
    load_config_json(j);
    FAIL("expected a config error");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("fed.etaa") != std::string::npos);
  }
  nlohmann::json top = minimal_config();
  top["algoritm"] = "zhang";
  CHECK_THROWS_AS(load_config_json(top), ConfigError);
}

TEST_CASE("parse errors carry position info") {
  fs::path dir = temp_dir("fednmap_cfg_test");
  fs::path broken = dir / "broken.json";
  std::ofstream(broken) << "{ \"problem\": { } ";  // unterminated
  try {
    load_config_file(broken.string());
    FAIL("expected a parse error");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("line") != std::string::npos);
  }
}

TEST_CASE("overrides apply after file parse") {
  nlohmann::json j = minimal_config();
  apply_override(j, "fed.eta_a=0.25");
  apply_override(j, "algorithm=zhang");
  LoadedConfig cfg = load_config_json(j);
  CHECK(cfg.spec.fed.eta_a == 0.25);
  CHECK(cfg.spec.algo == AlgoKind::Zhang);
  // overrides can introduce unknown keys, which still error
  apply_override(j, "fed.bogus=1");
  CHECK_THROWS_AS(load_config_json(j), ConfigError);
  CHECK_THROWS_AS(apply_override(j, "no_equals_sign"), ConfigError);
}

TEST_CASE("regularizer table round trip") {
  auto j = nlohmann::json::parse(
      R"({"kind": "box", "lo": -1.0, "hi": 2.0})");
  Regularizer reg = regularizer_from_json(j);
  CHECK(reg.kind == RegKind::Box);
  CHECK(reg.lo == -1.0);
  CHECK(reg.hi == 2.0);
  auto bad = nlohmann::json::parse(R"({"kind": "box", "lo": 3.0, "hi": 2.0})");
  CHECK_THROWS_AS(regularizer_from_json(bad), ConfigError);
  auto unknown = nlohmann::json::parse(R"({"kind": "l1", "mu": 3.0})");
  CHECK_THROWS_AS(regularizer_from_json(unknown), ConfigError);
}

TEST_CASE("sweep grid defaults to the fed block") {
  LoadedConfig cfg = load_config_json(minimal_config());
  CHECK(cfg.sweep_ns == std::vector<int>{3});
  CHECK(cfg.sweep_qs == std::vector<int>{2});
  nlohmann::json j = minimal_config();
  j["sweep"] = {{"ns", {2, 4}}, {"Qs", {1, 2}}, {"seeds", {1, 2, 3}}};
  cfg = load_config_json(j);
  CHECK(cfg.sweep_ns == std::vector<int>({2, 4}));
  CHECK(cfg.sweep_seeds.size() == 3);
}

TEST_CASE("svg output is deterministic byte for byte") {
  std::vector<SvgSeries> series(2);
  series[0].label = "a";
  series[1].label = "b";
  for (int k = 0; k < 50; ++k) {
    series[0].xs.push_back(k);
    series[0].ys.push_back(std::exp(-0.1 * k));
    series[1].xs.push_back(k);
    series[1].ys.push_back(0.5 * std::exp(-0.05 * k));
  }
  std::string one = line_chart_svg("t", "x", "y", series, true);
  std::string two = line_chart_svg("t", "x", "y", series, true);
  CHECK(one == two);
  CHECK(one.find("<svg") == 0);
  CHECK(one.find("polyline") != std::string::npos);
}

TEST_CASE("cli end to end") {
  if (!cli_path()) {
    MESSAGE("FEDNMAP_CLI not set; skipping CLI subprocess checks");
    return;
  }
  fs::path dir = temp_dir("fednmap_cli_test");
  fs::path cfg = dir / "cfg.json";
  std::ofstream(cfg) << minimal_config().dump(2);

  SUBCASE("run writes metrics.csv and curves.svg, exit 0") {
    fs::path out = dir / "out_run";
    int rc = run_cli("run --config " + cfg.string() + " --out " +
                     out.string() + " --quiet");
    CHECK(rc == 0);
    std::string csv = slurp(out / "metrics.csv");
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 8);  // header + T+1
    CHECK(fs::exists(out / "curves.svg"));

    // byte-identical on repeat
    fs::path out2 = dir / "out_run2";
    run_cli("run --config " + cfg.string() + " --out " + out2.string() +
            " --quiet");
    CHECK(slurp(out2 / "metrics.csv") == csv);
    CHECK(slurp(out2 / "curves.svg") == slurp(out / "curves.svg"));
  }

  SUBCASE("overrides reach the run") {
    fs::path out = dir / "out_override";
    int rc = run_cli("run --config " + cfg.string() + " --out " +
                     out.string() + " --set fed.T=3 --quiet");
    CHECK(rc == 0);
    std::string csv = slurp(out / "metrics.csv");
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);
  }

  SUBCASE("config errors exit 2") {
    CHECK(run_cli("run --config " + cfg.string() +
                  " --set fed.etaa=1 --quiet") == 2);
    fs::path broken = dir / "broken.json";
    std::ofstream(broken) << "{ nope";
    CHECK(run_cli("run --config " + broken.string() + " --quiet") == 2);
  }

  SUBCASE("compare emits joined csv and overlay") {
    fs::path out = dir / "out_cmp";
    int rc = run_cli("compare --config " + cfg.string() + " --out " +
                     out.string() + " --quiet");
    CHECK(rc == 0);
    std::string csv = slurp(out / "compare.csv");
    CHECK(csv.find("fednmap") != std::string::npos);
    CHECK(csv.find("zhang") != std::string::npos);
    // elastic net: scaffold must stay out
    CHECK(csv.find("scaffold") == std::string::npos);
    CHECK(fs::exists(out / "compare.svg"));
  }

  SUBCASE("compare includes scaffold when phi = 0, with matching curves") {
    nlohmann::json j = minimal_config();
    j["regularizer"] = {{"kind", "zero"}};
    fs::path cfg0 = dir / "cfg_zero.json";
    std::ofstream(cfg0) << j.dump(2);
    fs::path out = dir / "out_cmp0";
    int rc = run_cli("compare --config " + cfg0.string() + " --out " +
                     out.string() + " --quiet");
    CHECK(rc == 0);
    std::string csv = slurp(out / "compare.csv");
    CHECK(csv.find("scaffold") != std::string::npos);
    // with phi = 0 and shared draw lanes, fednmap and scaffold trace the
    // same fnat_sq column; zhang does too (it degenerates the same way)
    auto fnat_of = [&](const std::string& algo) {
      std::vector<std::string> vals;
      std::istringstream lines(csv);
      std::string line;
      while (std::getline(lines, line)) {
        if (line.find("," + algo + ",") == std::string::npos) continue;
        int col = 0;
        std::size_t pos = 0;
        while (col < 8 && pos != std::string::npos) {
          pos = line.find(',', pos) + 1;
          ++col;
        }
        vals.push_back(line.substr(pos, line.find(',', pos) - pos));
      }
      return vals;
    };
    auto fed = fnat_of("fednmap");
    auto sca = fnat_of("scaffold");
    REQUIRE(fed.size() == sca.size());
    REQUIRE(!fed.empty());
    int diffs = 0;
    for (std::size_t k = 0; k < fed.size(); ++k) {
      double a = std::stod(fed[k]), b = std::stod(sca[k]);
      if (std::abs(a - b) > 1e-10 * (1.0 + std::abs(a))) ++diffs;
    }
    CHECK(diffs == 0);
  }

  SUBCASE("compare under heterogeneity + elastic net: distinct curves") {
    fs::path out = dir / "out_cmp_en";
    int rc = run_cli("compare --config " + cfg.string() + " --out " +
                     out.string() + " --set fed.T=12 --quiet");
    CHECK(rc == 0);
    std::string csv = slurp(out / "compare.csv");
    // pull the final row of each algorithm and make sure they moved apart
    auto last_fnat = [&](const std::string& algo) {
      std::istringstream lines(csv);
      std::string line, keep;
      while (std::getline(lines, line))
        if (line.find("," + algo + ",") != std::string::npos) keep = line;
      int col = 0;
      std::size_t pos = 0;
      while (col < 8) {
        pos = keep.find(',', pos) + 1;
        ++col;
      }
      return std::stod(keep.substr(pos));
    };
    CHECK(last_fnat("fednmap") != last_fnat("zhang"));
  }

  SUBCASE("sweep emits speedup.csv and cells.csv") {
    nlohmann::json j = minimal_config();
    j["sweep"] = {{"ns", {2, 3}}, {"Qs", {1, 2}}, {"seeds", {1, 2}}};
    fs::path cfgs = dir / "cfg_sweep.json";
    std::ofstream(cfgs) << j.dump(2);
    fs::path out = dir / "out_sweep";
    int rc = run_cli("sweep --config " + cfgs.string() + " --out " +
                     out.string() + " --quiet");
    CHECK(rc == 0);
    std::string csv = slurp(out / "speedup.csv");
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 9);  // header + 8 rows
    CHECK(slurp(out / "cells.csv").find("monotone_ok") != std::string::npos);
    CHECK(fs::exists(out / "speedup.svg"));

    // --seeds narrows the seed list
    fs::path out1 = dir / "out_sweep1";
    rc = run_cli("sweep --config " + cfgs.string() + " --out " +
                 out1.string() + " --seeds 7 --quiet");
    CHECK(rc == 0);
    std::string csv1 = slurp(out1 / "speedup.csv");
    CHECK(std::count(csv1.begin(), csv1.end(), '\n') == 5);  // header + 4
  }
}

TEST_CASE("problem factory re-partitions per client count") {
  auto j = nlohmann::json::parse(R"({
    "problem": {"kind": "logistic",
                "data": {"kind": "synthetic_images", "samples": 60,
                         "side": 3, "classes": 3, "seed": 1},
                "partition": {"kind": "dirichlet", "alpha": 0.5},
                "noise": {"kind": "minibatch", "batch_size": 2}},
    "algorithm": "fednmap",
    "fed": {"n": 4, "Q": 1, "T": 1}
  })");
  LoadedConfig cfg = load_config_json(j);
  auto p4 = cfg.spec.make_problem(4, 1);
  auto p2 = cfg.spec.make_problem(2, 1);
  CHECK(p4->num_clients() == 4);
  CHECK(p2->num_clients() == 2);
  int total4 = 0, total2 = 0;
  for (int i = 0; i < 4; ++i) total4 += p4->shard_size(i);
  for (int i = 0; i < 2; ++i) total2 += p2->shard_size(i);
  CHECK(total4 == 60);
  CHECK(total2 == 60);
  // a different seed draws a different dirichlet split
  auto p4b = cfg.spec.make_problem(4, 2);
  bool same = true;
  for (int i = 0; i < 4; ++i)
    if (p4->shard_size(i) != p4b->shard_size(i)) same = false;
  CHECK_FALSE(same);
}

TEST_CASE("small multiples svg renders one panel per group") {
  std::vector<SvgPanel> panels(2);
  panels[0].title = "Q=5";
  panels[1].title = "Q=20";
  for (auto& p : panels)
    p.series = {SvgSeries{"mean", {5, 20}, {1.0, 0.5}}};
  std::string svg = small_multiples_svg(panels, "n", "v", true);
  CHECK(svg.find("Q=5") != std::string::npos);
  CHECK(svg.find("Q=20") != std::string::npos);
  CHECK(svg == small_multiples_svg(panels, "n", "v", true));
}

TEST_CASE("cli is a thin shell over the library") {
  if (!cli_path() || !std::getenv("FEDNMAP_CONFIG_DIR")) {
    MESSAGE("CLI env not set; skipping");
    return;
  }
  fs::path cfg =
      fs::path(std::getenv("FEDNMAP_CONFIG_DIR")) / "quad_small.json";
  fs::path out = temp_dir("fednmap_thin_shell");
  REQUIRE(run_cli("run --config " + cfg.string() + " --out " + out.string() +
                  " --quiet") == 0);
  LoadedConfig loaded = load_config_file(cfg.string());
  std::string lib_csv = metrics_csv_string(run(loaded.spec).metrics);
  CHECK(slurp(out / "metrics.csv") == lib_csv);
}

TEST_CASE("cli exit codes: divergence flag and verify") {
  if (!cli_path()) {
    MESSAGE("FEDNMAP_CLI not set; skipping");
    return;
  }
  fs::path dir = temp_dir("fednmap_cli_codes");
  fs::path cfg = dir / "cfg.json";
  std::ofstream(cfg) << minimal_config().dump(2);
  // absurd stepsizes blow past the 1e12 guard -> exit 4
  fs::path out = dir / "out_div";
  int rc = run_cli("run --config " + cfg.string() + " --out " + out.string() +
                   " --set fed.eta_a=80 --set fed.eta_s=80 --set fed.T=60" +
                   " --quiet");
  CHECK(rc == 4);
  // the verification suite passes on defaults -> exit 0
  CHECK(run_cli("verify") == 0);
  // an injected correction fault must be caught and reported -> exit 3
  CHECK(run_cli("verify --inject-correction-fault") == 3);
}

TEST_CASE("cli runs the nn-style config") {
  if (!cli_path() || !std::getenv("FEDNMAP_CONFIG_DIR")) {
    MESSAGE("CLI env not set; skipping");
    return;
  }
  // The shipped nn config carries the small elastic net (nu1 0.001,
  // nu2 0.01), gamma 1, eta_a 0.5/Q, eta_s 1; trim rounds to keep the
  // smoke quick.
  fs::path cfg =
      fs::path(std::getenv("FEDNMAP_CONFIG_DIR")) / "nn_sorted.json";
  fs::path out = temp_dir("fednmap_nn_smoke");
  int rc = run_cli("run --config " + cfg.string() + " --out " + out.string() +
                   " --set fed.T=6 --set problem.l_probe_pairs=20 --quiet");
  CHECK(rc == 0);
  std::string csv = slurp(out / "metrics.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 8);
  CHECK(fs::exists(out / "curves.svg"));
}
