#include "fednmap/simulator.hpp"

#include <chrono>
#include <cinttypes>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <mutex>
#include <sstream>
#include <stdexcept>

namespace fednmap {

// ---------------------------------------------------------------------------
// DrawLog

void DrawLog::put(int t, int i, int l, Vec g) {
  draws_[{t, i, l}] = std::move(g);
}

const Vec* DrawLog::find(int t, int i, int l) const {
  auto it = draws_.find({t, i, l});
  return it == draws_.end() ? nullptr : &it->second;
}

Vec& DrawLog::at(int t, int i, int l) {
  auto it = draws_.find({t, i, l});
  if (it == draws_.end())
    throw std::out_of_range("no draw recorded for that (t,i,l)");
  return it->second;
}

namespace {

constexpr char kDrawMagic[4] = {'F', 'N', 'M', 'D'};
constexpr std::uint32_t kDrawVersion = 1;

template <typename T>
void write_le(std::ostream& out, T v) {
  // Host is little-endian on every supported target.
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_le(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw std::runtime_error("truncated draw-record file");
  return v;
}

}  // namespace

void DrawLog::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(kDrawMagic, 4);
  write_le<std::uint32_t>(out, kDrawVersion);
  write_le<std::uint64_t>(out, draws_.size());
  for (const auto& [key, g] : draws_) {
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(std::get<0>(key)));
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(std::get<1>(key)));
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(std::get<2>(key)));
    write_le<std::uint64_t>(out, static_cast<std::uint64_t>(g.size()));
    out.write(reinterpret_cast<const char*>(g.data()),
              static_cast<std::streamsize>(g.size() * sizeof(double)));
  }
}

DrawLog DrawLog::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kDrawMagic, 4) != 0)
    throw std::runtime_error(path + ": not a draw-record file");
  auto version = read_le<std::uint32_t>(in);
  if (version != kDrawVersion)
    throw std::runtime_error(path + ": unsupported draw-record version");
  auto count = read_le<std::uint64_t>(in);
  DrawLog log;
  for (std::uint64_t k = 0; k < count; ++k) {
    int t = static_cast<int>(read_le<std::uint32_t>(in));
    int i = static_cast<int>(read_le<std::uint32_t>(in));
    int l = static_cast<int>(read_le<std::uint32_t>(in));
    auto len = read_le<std::uint64_t>(in);
    Vec g(static_cast<Eigen::Index>(len));
    in.read(reinterpret_cast<char*>(g.data()),
            static_cast<std::streamsize>(len * sizeof(double)));
    if (!in) throw std::runtime_error(path + ": truncated draw data");
    log.put(t, i, l, std::move(g));
  }
  return log;
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fmt_opt(const std::optional<double>& v) {
  return v ? fmt_double(*v) : std::string{};
}

}  // namespace

std::string metrics_csv_header() {
  return "round,algo,n,Q,seed,gamma,eta_a,eta_s,fnat_sq,fnor_sq,psi,psi_gap,"
         "lyapunov,train_loss,test_acc,uplink_bytes,wall_ns";
}

void write_metrics_csv(std::ostream& out,
                       const std::vector<MetricsRecord>& records) {
  out << metrics_csv_header() << "\n";
  for (const auto& r : records) {
    out << r.round << ',' << r.algo << ',' << r.n << ',' << r.Q << ','
        << r.seed << ',' << fmt_double(r.gamma) << ',' << fmt_double(r.eta_a)
        << ',' << fmt_double(r.eta_s) << ',' << fmt_double(r.fnat_sq) << ','
        << fmt_double(r.fnor_sq) << ',' << fmt_double(r.psi) << ','
        << fmt_opt(r.psi_gap) << ',' << fmt_double(r.lyapunov) << ','
        << fmt_double(r.train_loss) << ',' << fmt_opt(r.test_acc) << ','
        << r.uplink_bytes << ','
        << (r.wall_ns ? std::to_string(*r.wall_ns) : std::string{}) << "\n";
  }
}

std::string metrics_csv_string(const std::vector<MetricsRecord>& records) {
  std::ostringstream ss;
  write_metrics_csv(ss, records);
  return ss.str();
}

std::string sweep_csv_header() {
  return "n,Q,seed,mean_fnat_sq,final_fnat_sq,final_psi,final_psi_gap,"
         "diverged";
}

void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
  out << sweep_csv_header() << "\n";
  for (const auto& r : rows) {
    out << r.n << ',' << r.Q << ',' << r.seed << ','
        << fmt_double(r.mean_fnat_sq) << ',' << fmt_double(r.final_fnat_sq)
        << ',' << fmt_double(r.final_psi) << ',' << fmt_opt(r.final_psi_gap)
        << ',' << (r.diverged ? 1 : 0) << "\n";
  }
}

// ---------------------------------------------------------------------------
// run / replay

Vec initial_point(const InitSpec& init, int p, std::uint64_t seed) {
  if (init.kind == InitSpec::Kind::Zeros) return Vec::Zero(p);
  RngStream rng(seed, kInitLane);
  Vec z0(p);
  for (int j = 0; j < p; ++j) z0[j] = init.scale * rng.next_gaussian();
  return z0;
}

namespace {

constexpr double kDivergenceGuard = 1e12;

// Resolved parameters shared by the run body.
struct Resolved {
  FedConfig fed;
  std::optional<double> psi_star;
};

Resolved resolve(const RunSpec& spec, const Problem& prob) {
  Resolved r;
  FedConfig manual = spec.fed;
  if (spec.eta_a_times_q) manual.eta_a = *spec.eta_a_times_q / manual.Q;
  switch (spec.schedule) {
    case ScheduleKind::Manual:
      r.fed = FedConfig::create(manual.n, manual.Q, manual.T, manual.eta_a,
                                manual.eta_s, manual.gamma, spec.reg);
      break;
    case ScheduleKind::Theorem1: {
      // The schedule's own gamma, needed for delta_psi's x0 = prox(z0).
      double gamma_t1 = 1.0 / (5.0 * (spec.reg.rho + prob.l_bound()));
      double sigma = 0.0;
      if (prob.noise().kind == NoiseKind::AdditiveGaussian) {
        sigma = prob.noise().sigma;
      } else {
        // No closed form for minibatch noise; use the empirical estimate at
        // the initial point and treat it as such.
        Vec x0 = prox(spec.reg, gamma_t1,
                      initial_point(spec.init, prob.dim(), spec.seed));
        sigma = std::sqrt(prob.estimate_sigma_sq(x0, 64, spec.seed ^ 0x5157));
      }
      double delta_psi;
      if (spec.schedule_delta_psi) {
        delta_psi = *spec.schedule_delta_psi;
      } else {
        Vec z0 = initial_point(spec.init, prob.dim(), spec.seed);
        SolveResult ref = reference_solve(prob, spec.reg, gamma_t1,
                                          Vec::Zero(prob.dim()), 1e-11);
        Vec x0 = prox(spec.reg, gamma_t1, z0);
        auto phi = phi_value(spec.reg, x0);
        delta_psi =
            prob.average_loss(x0) + (phi ? *phi : 0.0) - ref.psi_star;
        if (!(delta_psi > 0)) delta_psi = 1.0;  // already optimal; keep sane
      }
      Theorem1Params p = theorem1_params(prob.l_bound(), spec.reg.rho, sigma,
                                         manual.T, manual.n, manual.Q,
                                         delta_psi);
      r.fed = FedConfig::create(manual.n, manual.Q, manual.T, p.eta_a, p.eta_s,
                                p.gamma, spec.reg);
      break;
    }
    case ScheduleKind::Theorem2: {
      double mu;
      if (spec.schedule_mu) {
        mu = *spec.schedule_mu;
      } else if (spec.reg.nu2 > 0) {
        mu = 2.0 * spec.reg.nu2;  // strong-convexity lower bound
      } else {
        throw std::invalid_argument(
            "theorem2 schedule needs mu (no nu2 to derive it from)");
      }
      Theorem2Params p = theorem2_params(prob.l_bound(), spec.reg.rho, mu,
                                         manual.n, manual.Q, manual.T,
                                         manual.eta_s);
      r.fed = FedConfig::create(manual.n, manual.Q, manual.T, p.eta_a, p.eta_s,
                                p.gamma, spec.reg);
      break;
    }
  }
  if (spec.psi_star) {
    r.psi_star = spec.psi_star;
  } else if (spec.auto_psi_star && prob.kind_name() == "quadratic" &&
             spec.reg.nu2 > 0) {
    // PSD quadratic + nu2 ||x||^2 is strongly convex: the reference solver's
    // fixed point certifies psi*.
    SolveResult ref = reference_solve(prob, spec.reg, r.fed.gamma,
                                      Vec::Zero(prob.dim()), 1e-11);
    if (ref.converged) r.psi_star = ref.psi_star;
  }
  return r;
}

MetricsRecord make_record(const RunSpec& spec, const Problem& prob,
                          const FedConfig& fed,
                          const std::optional<double>& psi_star, int t,
                          const Vec& z, const Vec& x,
                          std::size_t uplink_bytes,
                          std::optional<std::int64_t> wall_ns) {
  MetricsRecord r;
  r.round = t;
  r.algo = algo_name(spec.algo);
  r.n = fed.n;
  r.Q = fed.Q;
  r.seed = spec.seed;
  r.gamma = fed.gamma;
  r.eta_a = fed.eta_a;
  r.eta_s = fed.eta_s;
  NormalMapResult nm = normal_map(prob, spec.reg, fed.gamma, z);
  r.fnor_sq = nm.fnor.squaredNorm();
  r.fnat_sq = natural_map(prob, spec.reg, fed.gamma, x).squaredNorm();
  r.train_loss = prob.average_loss(x);
  auto phi = phi_value(spec.reg, x);
  r.psi = r.train_loss + (phi ? *phi : 0.0);
  if (psi_star) r.psi_gap = r.psi - *psi_star;
  auto phi_at_prox = phi_value(spec.reg, nm.x);
  r.lyapunov = prob.average_loss(nm.x) + (phi_at_prox ? *phi_at_prox : 0.0) +
               0.5 * fed.gamma *
                   c0_constant(fed.gamma, spec.reg.rho, prob.l_bound()) *
                   r.fnor_sq;
  if (spec.eval) r.test_acc = prob.accuracy(*spec.eval, x);
  r.uplink_bytes = uplink_bytes;
  r.wall_ns = wall_ns;
  return r;
}

RunResult run_impl(const RunSpec& spec, const DrawLog* replay_draws) {
  if (!spec.make_problem)
    throw std::invalid_argument("run spec has no problem factory");
  if (spec.metrics_every < 1)
    throw std::invalid_argument("metrics_every must be >= 1");
  RunResult out;
  out.problem = spec.make_problem(spec.fed.n, spec.seed);
  const Problem& prob = *out.problem;
  Resolved res = resolve(spec, prob);
  out.resolved_fed = res.fed;
  out.psi_star = res.psi_star;
  out.z0 = initial_point(spec.init, prob.dim(), spec.seed);

  auto algo = make_algorithm(spec.algo, spec.reg, res.fed);
  algo->init(out.z0);

  std::mutex record_mutex;
  GradOracle oracle;
  if (replay_draws) {
    oracle = [&, replay_draws](int i, int t, int l, const Vec& x) -> Vec {
      (void)x;
      const Vec* g = replay_draws->find(t, i, l);
      if (!g)
        throw std::runtime_error("draw-schedule mismatch: no draw for (t=" +
                                 std::to_string(t) + ",i=" + std::to_string(i) +
                                 ",l=" + std::to_string(l) + ")");
      return *g;
    };
  } else {
    oracle = [&](int i, int t, int l, const Vec& x) -> Vec {
      RngStream rng(spec.seed, static_cast<std::uint64_t>(i),
                    static_cast<std::uint64_t>(t),
                    static_cast<std::uint64_t>(l));
      Vec g = prob.stochastic_gradient(i, x, rng);
      if (spec.record_draws) {
        std::lock_guard<std::mutex> lock(record_mutex);
        out.draws.put(t, i, l, g);
      }
      return g;
    };
  }

  const auto t_start = std::chrono::steady_clock::now();
  auto now_ns = [&]() -> std::optional<std::int64_t> {
    if (!spec.timing) return std::nullopt;
    return std::chrono::duration_cast<std::chrono::nanoseconds>(
               std::chrono::steady_clock::now() - t_start)
        .count();
  };

  auto emit = [&](int t, std::size_t uplink_bytes) {
    out.metrics.push_back(make_record(spec, prob, res.fed, res.psi_star, t,
                                      algo->z(), algo->x(), uplink_bytes,
                                      now_ns()));
  };

  emit(0, 0);
  for (int t = 0; t < res.fed.T; ++t) {
    RoundTrace trace;
    algo->round(oracle, spec.workers, spec.keep_trace ? &trace : nullptr);
    if (spec.keep_trace) out.trace.push_back(std::move(trace));
    int done = t + 1;
    bool final_round = done == res.fed.T;
    if (algo->z().norm() > kDivergenceGuard) {
      out.diverged = true;
      out.diverged_round = done;
      emit(done, algo->round_uplink_bytes());
      break;
    }
    if (done % spec.metrics_every == 0 || final_round)
      emit(done, algo->round_uplink_bytes());
  }
  out.final_z = algo->z();
  out.final_x = algo->x();
  return out;
}

}  // namespace

RunResult run(const RunSpec& spec) { return run_impl(spec, nullptr); }

RunResult replay(const RunSpec& spec, const DrawLog& draws) {
  return run_impl(spec, &draws);
}

std::vector<SweepRow> sweep(const RunSpec& base, const std::vector<int>& ns,
                            const std::vector<int>& Qs,
                            const std::vector<std::uint64_t>& seeds) {
  if (ns.empty() || Qs.empty() || seeds.empty())
    throw std::invalid_argument("sweep needs nonempty n, Q, seed lists");
  std::vector<SweepRow> rows;
  for (int n : ns) {
    for (int Q : Qs) {
      for (std::uint64_t seed : seeds) {
        RunSpec spec = base;
        spec.fed.n = n;
        spec.fed.Q = Q;
        spec.seed = seed;
        spec.metrics_every = 1;
        spec.record_draws = false;
        spec.keep_trace = false;
        RunResult res = run(spec);
        SweepRow row;
        row.n = n;
        row.Q = Q;
        row.seed = seed;
        row.diverged = res.diverged;
        double acc = 0.0;
        int count = 0;
        for (const auto& m : res.metrics) {
          if (m.round < res.resolved_fed.T) {  // rounds 0..T-1
            acc += m.fnat_sq;
            ++count;
          }
        }
        row.mean_fnat_sq = count ? acc / count : 0.0;
        const auto& last = res.metrics.back();
        row.final_fnat_sq = last.fnat_sq;
        row.final_psi = last.psi;
        row.final_psi_gap = last.psi_gap;
        rows.push_back(row);
      }
    }
  }
  return rows;
}

}  // namespace fednmap
