#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <tuple>
#include <vector>

#include "fednmap/algorithms.hpp"
#include "fednmap/maps.hpp"
#include "fednmap/problem.hpp"

namespace fednmap {

/// Stochastic gradient draws keyed (round, client, local step).
/// File format: magic "FNMD", version u32, then per record
/// u32 t, u32 i, u32 l, u64 count, count f64 values, all little-endian.
class DrawLog {
 public:
  void put(int t, int i, int l, Vec g);
  const Vec* find(int t, int i, int l) const;
  std::size_t size() const { return draws_.size(); }
  bool empty() const { return draws_.empty(); }

  void save(const std::string& path) const;
  static DrawLog load(const std::string& path);

  const std::map<std::tuple<int, int, int>, Vec>& entries() const {
    return draws_;
  }
  Vec& at(int t, int i, int l);

 private:
  std::map<std::tuple<int, int, int>, Vec> draws_;
};

struct MetricsRecord {
  int round = 0;
  std::string algo;
  int n = 0;
  int Q = 0;
  std::uint64_t seed = 0;
  double gamma = 0, eta_a = 0, eta_s = 0;
  double fnat_sq = 0, fnor_sq = 0, psi = 0;
  std::optional<double> psi_gap;
  double lyapunov = 0, train_loss = 0;
  std::optional<double> test_acc;
  std::size_t uplink_bytes = 0;
  std::optional<std::int64_t> wall_ns;
};

std::string metrics_csv_header();
void write_metrics_csv(std::ostream& out,
                       const std::vector<MetricsRecord>& records);
std::string metrics_csv_string(const std::vector<MetricsRecord>& records);

enum class ScheduleKind { Manual, Theorem1, Theorem2 };

struct InitSpec {
  enum class Kind { Zeros, Gaussian };
  Kind kind = Kind::Zeros;
  double scale = 0.1;
};

using ProblemFactory =
    std::function<std::shared_ptr<const Problem>(int n, std::uint64_t seed)>;

/// Everything that determines a trajectory. Equal specs give bit-identical
/// metrics (wall_ns stays empty unless timing is opted in, so the CSV itself
/// is reproducible).
struct RunSpec {
  ProblemFactory make_problem;
  Regularizer reg;
  AlgoKind algo = AlgoKind::FedNmap;
  FedConfig fed;  // manual parameters; schedules overwrite stepsizes/gamma
  // Hold eta_a * Q constant across sweeps (eta_a = value / Q), the usual
  // local-stepsize convention when varying Q.
  std::optional<double> eta_a_times_q;
  ScheduleKind schedule = ScheduleKind::Manual;
  std::optional<double> schedule_mu;  // theorem2; defaults to 2*nu2
  std::optional<double> schedule_delta_psi;  // theorem1; default auto
  std::uint64_t seed = 0;
  InitSpec init;
  int metrics_every = 1;
  bool record_draws = false;
  bool keep_trace = false;  // retain per-round RoundTrace (identity tests)
  int workers = 1;
  bool timing = false;       // fill wall_ns (breaks byte reproducibility)
  std::optional<double> psi_star;  // known optimum
  // Solve for psi* when the instance certifies a unique minimizer
  // (quadratic problem + regularizer with nu2 > 0 strong convexity).
  bool auto_psi_star = true;
  std::shared_ptr<const Dataset> eval;  // optional test set
};

struct RunResult {
  std::vector<MetricsRecord> metrics;
  bool diverged = false;
  int diverged_round = -1;
  DrawLog draws;               // populated when record_draws
  std::vector<RoundTrace> trace;  // populated when keep_trace
  FedConfig resolved_fed;      // after schedule application
  std::optional<double> psi_star;
  std::shared_ptr<const Problem> problem;
  Vec z0;
  Vec final_z;
  Vec final_x;
};

/// Executes T rounds. Metrics are computed from exact gradients (never the
/// noisy draws) every metrics_every rounds, plus the final round; metric
/// evaluation consumes no RNG, so the trajectory is independent of the
/// metrics stride.
RunResult run(const RunSpec& spec);

/// Re-executes the trajectory from recorded draws; bit-identical when the
/// draw schedule matches, draw-schedule-mismatch error otherwise.
RunResult replay(const RunSpec& spec, const DrawLog& draws);

struct SweepRow {
  int n = 0;
  int Q = 0;
  std::uint64_t seed = 0;
  double mean_fnat_sq = 0;  // mean over rounds 0..T-1 (the averaged criterion)
  double final_fnat_sq = 0;
  double final_psi = 0;
  std::optional<double> final_psi_gap;
  bool diverged = false;
};

/// Runs the base spec over the (n, Q, seed) grid; the problem (and with it
/// any data partition) is re-drawn per (n, seed) through the factory.
std::vector<SweepRow> sweep(const RunSpec& base, const std::vector<int>& ns,
                            const std::vector<int>& Qs,
                            const std::vector<std::uint64_t>& seeds);

std::string sweep_csv_header();
void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows);

/// Lane tag for the z0 initialization stream (kept clear of client lanes).
inline constexpr std::uint64_t kInitLane = 0xffffffffULL;

/// Build z0 from the spec (dimension p, stream (seed, kInitLane)).
Vec initial_point(const InitSpec& init, int p, std::uint64_t seed);

}  // namespace fednmap
