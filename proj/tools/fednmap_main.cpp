// Command line front end: run / sweep / compare / verify over a JSON config.
// Exit codes: 0 ok, 2 config error, 3 verification failure, 4 divergence.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "fednmap/config.hpp"
#include "fednmap/simulator.hpp"
#include "fednmap/svg.hpp"
#include "fednmap/verify.hpp"

namespace fs = std::filesystem;
using namespace fednmap;

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_dir = ".";
  std::vector<std::string> overrides;
  std::string seeds_csv;
  bool quiet = false;
  bool inject_correction_fault = false;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool config_required) {
  auto* c = cmd->add_option("--config", args.config_path, "Config file (JSON)");
  if (config_required) c->required();
  cmd->add_option("--out", args.out_dir, "Output directory");
  cmd->add_option("--set", args.overrides,
                  "Override config entries, dotted key=value (repeatable)");
  cmd->add_option("--seeds", args.seeds_csv,
                  "Comma-separated seed list (sweep/compare)");
  cmd->add_flag("--quiet", args.quiet, "Suppress progress output");
}

LoadedConfig load(const CommonArgs& args) {
  std::ifstream in(args.config_path);
  if (!in) throw ConfigError("cannot open config file " + args.config_path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(args.config_path + ": " + e.what());
  }
  for (const auto& kv : args.overrides) apply_override(j, kv);
  return load_config_json(j);
}

std::vector<std::uint64_t> parse_seeds(const std::string& csv) {
  std::vector<std::uint64_t> seeds;
  std::size_t pos = 0;
  while (pos < csv.size()) {
    auto comma = csv.find(',', pos);
    std::string tok = csv.substr(
        pos, comma == std::string::npos ? std::string::npos : comma - pos);
    if (!tok.empty()) seeds.push_back(std::stoull(tok));
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  if (seeds.empty()) throw ConfigError("--seeds produced an empty list");
  return seeds;
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
}

SvgSeries series_from(const std::vector<MetricsRecord>& recs,
                      const std::string& label, bool psi_gap) {
  SvgSeries s;
  s.label = label;
  for (const auto& r : recs) {
    s.xs.push_back(r.round);
    s.ys.push_back(psi_gap ? (r.psi_gap ? *r.psi_gap : 0.0) : r.fnat_sq);
  }
  return s;
}

int cmd_run(const CommonArgs& args) {
  LoadedConfig cfg = load(args);
  fs::create_directories(args.out_dir);
  RunResult res = run(cfg.spec);
  write_file(fs::path(args.out_dir) / "metrics.csv",
             metrics_csv_string(res.metrics));
  std::vector<SvgSeries> series;
  series.push_back(series_from(res.metrics, "fnat_sq", false));
  if (res.psi_star)
    series.push_back(series_from(res.metrics, "psi_gap", true));
  write_svg_file((fs::path(args.out_dir) / "curves.svg").string(),
                 line_chart_svg("convergence", "round", "value", series, true));
  if (res.draws.size() && cfg.spec.record_draws)
    res.draws.save((fs::path(args.out_dir) / "draws.fnmd").string());
  if (!args.quiet) {
    const auto& last = res.metrics.back();
    std::printf("%s: %d rounds, fnat_sq %.6g, psi %.6g%s\n",
                algo_name(cfg.spec.algo), last.round, last.fnat_sq, last.psi,
                res.diverged ? " [DIVERGED]" : "");
    int empty = 0;
    for (int i = 0; i < res.problem->num_clients(); ++i)
      if (res.problem->kind_name() != "quadratic" &&
          res.problem->shard_size(i) == 0)
        ++empty;
    if (empty)
      std::printf("note: %d of %d client shards are empty\n", empty,
                  res.problem->num_clients());
  }
  return res.diverged ? 4 : 0;
}

int cmd_compare(const CommonArgs& args) {
  LoadedConfig cfg = load(args);
  fs::create_directories(args.out_dir);
  std::vector<AlgoKind> algos = {AlgoKind::FedNmap, AlgoKind::Zhang};
  if (cfg.spec.reg.kind == RegKind::Zero) algos.push_back(AlgoKind::Scaffold);

  std::vector<MetricsRecord> joined;
  std::vector<SvgSeries> series;
  bool any_diverged = false;
  for (AlgoKind kind : algos) {
    RunSpec spec = cfg.spec;
    spec.algo = kind;  // shared seed, shared draw lanes
    RunResult res = run(spec);
    any_diverged = any_diverged || res.diverged;
    joined.insert(joined.end(), res.metrics.begin(), res.metrics.end());
    series.push_back(series_from(res.metrics, algo_name(kind), false));
    if (!args.quiet)
      std::printf("%-9s final fnat_sq %.6g%s\n", algo_name(kind),
                  res.metrics.back().fnat_sq,
                  res.diverged ? " [DIVERGED]" : "");
  }
  std::ostringstream csv;
  write_metrics_csv(csv, joined);
  write_file(fs::path(args.out_dir) / "compare.csv", csv.str());
  write_svg_file((fs::path(args.out_dir) / "compare.svg").string(),
                 line_chart_svg("fnat_sq by algorithm", "round", "fnat_sq",
                                series, true));
  return any_diverged ? 4 : 0;
}

int cmd_sweep(const CommonArgs& args) {
  LoadedConfig cfg = load(args);
  fs::create_directories(args.out_dir);
  std::vector<std::uint64_t> seeds = cfg.sweep_seeds;
  if (!args.seeds_csv.empty()) seeds = parse_seeds(args.seeds_csv);
  auto rows = sweep(cfg.spec, cfg.sweep_ns, cfg.sweep_qs, seeds);
  std::ostringstream csv;
  write_sweep_csv(csv, rows);
  write_file(fs::path(args.out_dir) / "speedup.csv", csv.str());

  // Per-cell aggregates plus a monotonicity indicator: a cell is marked ok
  // when its mean does not exceed any cell with strictly smaller n*Q.
  struct Cell {
    int n, Q;
    double mean = 0, se = 0;
    int count = 0;
  };
  std::vector<Cell> cells;
  for (int n : cfg.sweep_ns)
    for (int Q : cfg.sweep_qs) {
      Cell c{n, Q, 0, 0, 0};
      double sum = 0, sumsq = 0;
      for (const auto& r : rows)
        if (r.n == n && r.Q == Q) {
          sum += r.mean_fnat_sq;
          sumsq += r.mean_fnat_sq * r.mean_fnat_sq;
          ++c.count;
        }
      c.mean = sum / c.count;
      if (c.count > 1)
        c.se = std::sqrt((sumsq - sum * sum / c.count) /
                         (c.count - 1) / c.count);
      cells.push_back(c);
    }
  std::ostringstream cellcsv;
  cellcsv << "n,Q,nQ,seeds,mean_fnat_sq,std_err,monotone_ok\n";
  for (const auto& c : cells) {
    bool ok = true;
    for (const auto& o : cells)
      if (o.n * o.Q < c.n * c.Q && c.mean > o.mean) ok = false;
    char line[160];
    std::snprintf(line, sizeof(line), "%d,%d,%d,%d,%.17g,%.17g,%d\n", c.n,
                  c.Q, c.n * c.Q, c.count, c.mean, c.se, ok ? 1 : 0);
    cellcsv << line;
    if (!args.quiet)
      std::printf("n=%-4d Q=%-4d seeds=%d mean fnat_sq %.6g (se %.2g)%s\n",
                  c.n, c.Q, c.count, c.mean, c.se,
                  ok ? "" : "  [non-monotone]");
  }
  write_file(fs::path(args.out_dir) / "cells.csv", cellcsv.str());

  // Small multiples: one panel per Q, mean over seeds with a +/- 1 se band.
  std::vector<SvgPanel> panels;
  for (int Q : cfg.sweep_qs) {
    SvgPanel panel;
    panel.title = "Q=" + std::to_string(Q);
    SvgSeries mean{"mean", {}, {}}, lo{"-1se", {}, {}}, hi{"+1se", {}, {}};
    for (const auto& c : cells)
      if (c.Q == Q) {
        mean.xs.push_back(c.n);
        mean.ys.push_back(c.mean);
        lo.xs.push_back(c.n);
        lo.ys.push_back(c.mean - c.se);
        hi.xs.push_back(c.n);
        hi.ys.push_back(c.mean + c.se);
      }
    panel.series = {mean, lo, hi};
    panels.push_back(std::move(panel));
  }
  write_svg_file((fs::path(args.out_dir) / "speedup.svg").string(),
                 small_multiples_svg(panels, "clients n", "mean fnat_sq",
                                     true));
  return 0;
}

int cmd_verify(const CommonArgs& args) {
  VerifyOptions opts;
  opts.mutate_correction_sign = args.inject_correction_fault;
  if (!args.config_path.empty()) {
    LoadedConfig cfg = load(args);
    opts.seed = cfg.spec.seed;
  }
  auto checks = run_verification(opts);
  std::printf("%-24s %-6s %-14s %-14s %s\n", "check", "result", "stat",
              "threshold", "detail");
  for (const auto& c : checks) {
    std::printf("%-24s %-6s %-14.6g %-14.6g %s\n", c.name.c_str(),
                c.pass ? "PASS" : "FAIL", c.stat, c.threshold,
                c.note.c_str());
  }
  return all_pass(checks) ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Composite federated learning simulator"};
  app.require_subcommand(1);

  CommonArgs run_args, sweep_args, compare_args, verify_args;
  auto* c_run = app.add_subcommand("run", "Run one algorithm on one spec");
  add_common(c_run, run_args, true);
  auto* c_sweep =
      app.add_subcommand("sweep", "Run the n x Q x seed grid of a spec");
  add_common(c_sweep, sweep_args, true);
  auto* c_compare = app.add_subcommand(
      "compare", "Run fednmap + zhang (+ scaffold when phi=0), shared seeds");
  add_common(c_compare, compare_args, true);
  auto* c_verify =
      app.add_subcommand("verify", "Run the algebraic-invariant suite");
  add_common(c_verify, verify_args, false);
  c_verify
      ->add_flag("--inject-correction-fault",
                 verify_args.inject_correction_fault,
                 "Flip the correction update's aggregate sign (the suite "
                 "must then fail)")
      ->group("");

  CLI11_PARSE(app, argc, argv);

  try {
    if (c_run->parsed()) return cmd_run(run_args);
    if (c_sweep->parsed()) return cmd_sweep(sweep_args);
    if (c_compare->parsed()) return cmd_compare(compare_args);
    if (c_verify->parsed()) return cmd_verify(verify_args);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
