#include "fednmap/verify.hpp"

#include <cmath>
#include <limits>

#include "fednmap/algorithms.hpp"
#include "fednmap/maps.hpp"
#include "fednmap/problem.hpp"
#include "fednmap/simulator.hpp"

namespace fednmap {

double prox_oracle_1d(const Regularizer& reg, double gamma, double v) {
  auto h = [&](double y) {
    return phi_value_scalar(reg, y) + (y - v) * (y - v) / (2.0 * gamma);
  };
  double lo, hi;
  if (reg.kind == RegKind::Box) {
    lo = reg.lo;
    hi = reg.hi;
    if (lo == hi) return lo;
  } else {
    // The minimizer of a convex phi plus the quadratic pull lies between 0
    // and v; pad the bracket a little.
    lo = std::min(0.0, v) - 0.5;
    hi = std::max(0.0, v) + 0.5;
  }
  const int grid = 2000;
  int best = 0;
  double best_val = std::numeric_limits<double>::infinity();
  for (int k = 0; k <= grid; ++k) {
    double y = lo + (hi - lo) * k / grid;
    double val = h(y);
    if (val < best_val) {
      best_val = val;
      best = k;
    }
  }
  double a = lo + (hi - lo) * std::max(best - 1, 0) / grid;
  double b = lo + (hi - lo) * std::min(best + 1, grid) / grid;
  const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - gr * (b - a);
  double d = a + gr * (b - a);
  double hc = h(c), hd = h(d);
  while (b - a > 1e-12) {
    if (hc < hd) {
      b = d;
      d = c;
      hd = hc;
      c = b - gr * (b - a);
      hc = h(c);
    } else {
      a = c;
      c = d;
      hc = hd;
      d = a + gr * (b - a);
      hd = h(d);
    }
  }
  return 0.5 * (a + b);
}

namespace {

struct TraceRun {
  std::vector<RoundTrace> traces;
  DrawLog draws;
  std::vector<Vec> x_after;  // x_{t+1} after each server step
};

// Drives a FedAlgorithm directly (rather than through run()) so the
// verification harness can inject the correction-sign fault.
TraceRun traced_run(AlgoKind kind, const Problem& prob, const Regularizer& reg,
                    const FedConfig& cfg, std::uint64_t seed,
                    bool mutate_correction) {
  auto algo = make_algorithm(kind, reg, cfg);
  if (mutate_correction) set_correction_sign_for_fault_injection(*algo, -1.0);
  algo->init(Vec::Zero(prob.dim()));
  TraceRun out;
  GradOracle oracle = [&](int i, int t, int l, const Vec& x) {
    RngStream rng(seed, static_cast<std::uint64_t>(i),
                  static_cast<std::uint64_t>(t), static_cast<std::uint64_t>(l));
    Vec g = prob.stochastic_gradient(i, x, rng);
    out.draws.put(t, i, l, g);
    return g;
  };
  for (int t = 0; t < cfg.T; ++t) {
    RoundTrace tr;
    algo->round(oracle, 1, &tr);
    out.traces.push_back(std::move(tr));
    out.x_after.push_back(algo->x());
  }
  return out;
}

double tracking_identity_stat(const TraceRun& run, const FedConfig& cfg) {
  double worst = 0.0;
  for (const auto& tr : run.traces) {
    const int n = static_cast<int>(tr.y.size());
    Vec mean_y = Vec::Zero(tr.z.size());
    for (const Vec& y : tr.y) mean_y += y;
    mean_y /= n;
    Vec rhs = Vec::Zero(tr.z.size());
    Vec anchor = (tr.z - tr.x) / cfg.gamma;
    for (int l = 0; l < cfg.Q; ++l) {
      Vec mean_g = Vec::Zero(tr.z.size());
      for (int i = 0; i < n; ++i) mean_g += *run.draws.find(tr.t, i, l);
      rhs += mean_g / n + anchor;
    }
    rhs /= cfg.Q;
    worst = std::max(worst, (mean_y - rhs).norm());
  }
  return worst;
}

double zero_mean_corrections_stat(const TraceRun& run) {
  double worst = 0.0;
  for (const auto& tr : run.traces) {
    Vec mean_c = Vec::Zero(tr.z.size());
    for (const Vec& c : tr.c) mean_c += c;
    mean_c /= static_cast<double>(tr.c.size());
    worst = std::max(worst, mean_c.norm());
  }
  return worst;
}

}  // namespace

std::vector<VerifyCheck> run_verification(const VerifyOptions& opts) {
  std::vector<VerifyCheck> checks;

  // --- tracking identity and zero-mean corrections on a noisy quadratic
  {
    auto prob = make_composite_quadratic(5, 10, 1.0, opts.seed);
    prob->set_noise(NoiseModel::gaussian(0.5));
    Regularizer reg = Regularizer::elastic_net(0.01, 0.05);
    FedConfig cfg = FedConfig::create(5, 4, 30, 0.05, 1.0, 0.5, reg);
    TraceRun tr = traced_run(AlgoKind::FedNmap, *prob, reg, cfg, opts.seed,
                             opts.mutate_correction_sign);
    VerifyCheck tracking;
    tracking.name = "tracking_identity";
    tracking.threshold = 1e-12;
    tracking.stat = tracking_identity_stat(tr, cfg);
    tracking.pass = tracking.stat <= tracking.threshold;
    tracking.note = "max_t ||mean y - mean stochastic normal map||";
    checks.push_back(tracking);

    VerifyCheck zero_mean;
    zero_mean.name = "zero_mean_corrections";
    zero_mean.threshold = 1e-12;
    zero_mean.stat = zero_mean_corrections_stat(tr);
    zero_mean.pass = zero_mean.stat <= zero_mean.threshold;
    zero_mean.note = "max_t ||mean_i c_{i,t}||";
    checks.push_back(zero_mean);
  }

  // --- sandwich inequality on random composite quadratics
  {
    VerifyCheck c;
    c.name = "sandwich_inequality";
    c.threshold = 0.0;  // violations
    int violations = 0;
    double worst = 0.0;
    for (int pi = 0; pi < 5; ++pi) {
      auto prob = make_composite_quadratic(3, 8, 1.0, opts.seed + pi);
      Regularizer reg = (pi % 2 == 0)
                            ? Regularizer::l1(0.05)
                            : Regularizer::elastic_net(0.05, 0.1);
      double gamma = 0.2 + 0.3 * pi;
      RngStream rng(opts.seed, 77, pi);
      for (int k = 0; k < 200; ++k) {
        Vec z(8);
        for (int j = 0; j < 8; ++j) z[j] = 2.0 * rng.next_gaussian();
        NormalMapResult nm = normal_map(*prob, reg, gamma, z);
        double lhs = (1.0 - gamma * reg.rho) *
                     natural_map(*prob, reg, gamma, nm.x).norm();
        double mid =
            min_norm_subgradient(reg, nm.x, prob->average_gradient(nm.x))
                .norm();
        double rhs = nm.fnor.norm();
        if (lhs > mid + 1e-10) {
          ++violations;
          worst = std::max(worst, lhs - mid);
        }
        if (mid > rhs + 1e-10) {
          ++violations;
          worst = std::max(worst, mid - rhs);
        }
      }
    }
    c.stat = violations;
    c.pass = violations == 0;
    c.note = "violations out of 2000 ordered pairs (worst gap " +
             std::to_string(worst) + ")";
    checks.push_back(c);
  }

  // --- SCAFFOLD equivalence at phi == 0
  {
    VerifyCheck c;
    c.name = "scaffold_equivalence";
    c.threshold = 1e-10;
    auto prob = make_composite_quadratic(8, 10, 1.0, opts.seed + 11);
    prob->set_noise(NoiseModel::gaussian(0.5));
    Regularizer reg = Regularizer::zero();
    FedConfig cfg = FedConfig::create(8, 5, 50, 0.05, 1.0, 1.0, reg);
    TraceRun fed =
        traced_run(AlgoKind::FedNmap, *prob, reg, cfg, opts.seed, false);
    TraceRun sca =
        traced_run(AlgoKind::Scaffold, *prob, reg, cfg, opts.seed, false);
    double worst = 0.0;
    for (std::size_t t = 0; t < fed.x_after.size(); ++t)
      worst = std::max(worst, (fed.x_after[t] - sca.x_after[t]).norm());
    c.stat = worst;
    c.pass = worst <= c.threshold;
    c.note = "max_t ||x_t(fednmap) - x_t(scaffold)|| over 50 rounds";
    checks.push_back(c);
  }

  // --- closed-form prox against the brute-force oracle
  {
    VerifyCheck c;
    c.name = "prox_oracle";
    c.threshold = 1e-6;
    RngStream rng(opts.seed, 99);
    double worst = 0.0;
    for (int k = 0; k < 10000; ++k) {
      Regularizer reg;
      switch (k % 4) {
        case 0: reg = Regularizer::zero(); break;
        case 1: reg = Regularizer::l1(rng.next_double()); break;
        case 2:
          reg = Regularizer::elastic_net(rng.next_double(),
                                         rng.next_double());
          break;
        case 3: {
          double a = 2.0 * rng.next_gaussian();
          double b = a + 2.0 * rng.next_double();
          reg = Regularizer::box(a, b);
          break;
        }
      }
      double gamma = 0.1 + 2.9 * rng.next_double();
      double v = 2.0 * rng.next_gaussian();
      double closed = prox_scalar(reg, gamma, v);
      double oracle = prox_oracle_1d(reg, gamma, v);
      worst = std::max(worst, std::abs(closed - oracle));
    }
    c.stat = worst;
    c.pass = worst <= c.threshold;
    c.note = "max |closed-form - grid/golden-section| over 10^4 instances";
    checks.push_back(c);
  }

  // --- unbiasedness of the stochastic normal-map direction
  {
    VerifyCheck c;
    c.name = "unbiasedness";
    c.threshold = 4.0;  // standard errors
    double worst = 0.0;
    const int draws = 100000;
    for (int pair = 0; pair < 6; ++pair) {
      auto prob = make_composite_quadratic(3, 6, 1.0, opts.seed + 100 + pair);
      prob->set_noise(NoiseModel::gaussian(1.0));
      Regularizer reg = Regularizer::elastic_net(0.01, 0.02);
      double gamma = 0.5;
      RngStream zr(opts.seed, 123, pair);
      Vec z(6);
      for (int j = 0; j < 6; ++j) z[j] = 2.0 * zr.next_gaussian();
      NormalMapResult nm = normal_map(*prob, reg, gamma, z);
      Vec sum = Vec::Zero(6), sumsq = Vec::Zero(6);
      for (int k = 0; k < draws; ++k) {
        Vec dir = (z - nm.x) / gamma;
        Vec g = Vec::Zero(6);
        for (int i = 0; i < 3; ++i) {
          RngStream rng(opts.seed ^ (0xabc0ULL + pair), i,
                        static_cast<std::uint64_t>(k));
          g += prob->stochastic_gradient(i, nm.x, rng);
        }
        dir += g / 3.0;
        sum += dir;
        sumsq += dir.cwiseProduct(dir);
      }
      for (int j = 0; j < 6; ++j) {
        double mean = sum[j] / draws;
        double var =
            (sumsq[j] - sum[j] * sum[j] / draws) / (draws - 1);
        double se = std::sqrt(std::max(var, 1e-300) / draws);
        worst = std::max(worst, std::abs(mean - nm.fnor[j]) / se);
      }
    }
    c.stat = worst;
    c.pass = worst <= c.threshold;
    c.note = "max |MC mean - F_nor| in standard errors, 6 pairs x 1e5 draws";
    checks.push_back(c);
  }

  return checks;
}

bool all_pass(const std::vector<VerifyCheck>& checks) {
  for (const auto& c : checks)
    if (!c.pass) return false;
  return true;
}

}  // namespace fednmap
