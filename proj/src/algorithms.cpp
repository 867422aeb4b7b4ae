#include "fednmap/algorithms.hpp"

#include <cmath>
#include <functional>
#include <stdexcept>
#include <thread>

namespace fednmap {

FedConfig FedConfig::create(int n, int Q, int T, double eta_a, double eta_s,
                            double gamma, const Regularizer& reg) {
  if (n < 1) throw std::invalid_argument("need n >= 1 clients");
  if (Q < 1) throw std::invalid_argument("need Q >= 1 local steps");
  if (T < 0) throw std::invalid_argument("need T >= 0 rounds");
  if (!(eta_a > 0) || !(eta_s > 0))
    throw std::invalid_argument("stepsizes must be positive");
  check_gamma(reg, gamma);
  FedConfig cfg;
  cfg.n = n;
  cfg.Q = Q;
  cfg.T = T;
  cfg.eta_a = eta_a;
  cfg.eta_s = eta_s;
  cfg.gamma = gamma;
  cfg.eta_hat = eta_a * eta_s * static_cast<double>(Q);
  return cfg;
}

Vec correction_update(const Vec& c_prev, const Vec& y_prev,
                      const Vec& y_bar_prev, int t) {
  if (t == 0) return Vec::Zero(c_prev.size());
  if (c_prev.size() != y_prev.size() || c_prev.size() != y_bar_prev.size())
    throw std::invalid_argument("correction_update: dimension mismatch");
  return c_prev - y_prev + y_bar_prev;
}

ClientRoundResult fednmap_client_round(const Regularizer& reg,
                                       const FedConfig& cfg, int client,
                                       const Vec& z_t, const Vec& y_bar_prev,
                                       int t, const Vec& c_prev,
                                       const Vec& y_prev,
                                       const GradOracle& oracle) {
  ClientRoundResult out;
  out.c = correction_update(c_prev, y_prev, y_bar_prev, t);
  Vec x_t = prox(reg, cfg.gamma, z_t);
  // The (z_t - x_t)/gamma term is frozen at the round anchor for all Q steps.
  Vec anchor = (z_t - x_t) / cfg.gamma;
  Vec z_local = z_t;
  for (int l = 0; l < cfg.Q; ++l) {
    Vec x_local = prox(reg, cfg.gamma, z_local);
    Vec g = oracle(client, t, l, x_local);
    z_local -= cfg.eta_a * (g + anchor + out.c);
  }
  out.uplink.y = (z_t - z_local) / (cfg.eta_a * cfg.Q);
  return out;
}

void fednmap_server_step(const Regularizer& reg, const FedConfig& cfg,
                         FedNmapServer& server,
                         const std::vector<UplinkMessage>& uplinks) {
  if (static_cast<int>(uplinks.size()) != cfg.n)
    throw std::invalid_argument("server expects one uplink per client");
  Vec sum = Vec::Zero(server.z.size());
  for (const auto& m : uplinks) sum += m.y;  // fixed ascending-client order
  server.z -= (cfg.Q * cfg.eta_s * cfg.eta_a / cfg.n) * sum;
  server.x = prox(reg, cfg.gamma, server.z);
  server.y_bar_prev = sum / cfg.n;
  server.round += 1;
}

ClientRoundResult zhang_client_round(const Regularizer& reg,
                                     const FedConfig& cfg, int client,
                                     const Vec& x_t, const Vec& y_bar_prev,
                                     int t, const Vec& c_prev,
                                     const Vec& y_prev,
                                     const GradOracle& oracle) {
  ClientRoundResult out;
  out.c = correction_update(c_prev, y_prev, y_bar_prev, t);
  Vec z_local = x_t;
  Vec x_local = x_t;
  for (int l = 0; l < cfg.Q; ++l) {
    Vec g = oracle(client, t, l, x_local);
    z_local -= cfg.eta_a * (g + out.c);
    // Growing prox parameter (l+1) eta_a, including the final step.
    x_local = prox(reg, (l + 1) * cfg.eta_a, z_local);
  }
  out.uplink.y = (x_t - z_local) / (cfg.eta_a * cfg.Q);
  return out;
}

void zhang_server_step(const Regularizer& reg, const FedConfig& cfg,
                       ZhangServer& server,
                       const std::vector<UplinkMessage>& uplinks) {
  if (static_cast<int>(uplinks.size()) != cfg.n)
    throw std::invalid_argument("server expects one uplink per client");
  Vec sum = Vec::Zero(server.x.size());
  for (const auto& m : uplinks) sum += m.y;
  server.z = server.x - (cfg.Q * cfg.eta_s * cfg.eta_a / cfg.n) * sum;
  server.x = prox(reg, cfg.eta_hat, server.z);
  server.y_bar_prev = sum / cfg.n;
  server.round += 1;
}

ScaffoldRoundResult scaffold_client_round(const FedConfig& cfg, int client,
                                          const Vec& x_t, const Vec& c_t,
                                          int t, const Vec& c_prev,
                                          const GradOracle& oracle) {
  ScaffoldRoundResult out;
  Vec x_local = x_t;
  Vec gsum = Vec::Zero(x_t.size());
  for (int l = 0; l < cfg.Q; ++l) {
    Vec g = oracle(client, t, l, x_local);
    gsum += g;
    x_local -= cfg.eta_a * (g - c_prev + c_t);
  }
  out.c_new = gsum / cfg.Q;
  out.uplink.y = (x_t - x_local) / (cfg.eta_a * cfg.Q);
  out.uplink.c_delta = out.c_new - c_prev;
  return out;
}

void scaffold_server_step(const FedConfig& cfg, ScaffoldServer& server,
                          const std::vector<ScaffoldUplink>& uplinks) {
  if (static_cast<int>(uplinks.size()) != cfg.n)
    throw std::invalid_argument("server expects one uplink per client");
  Vec ysum = Vec::Zero(server.x.size());
  Vec csum = Vec::Zero(server.x.size());
  for (const auto& m : uplinks) {
    ysum += m.y;
    csum += m.c_delta;
  }
  server.x -= (cfg.Q * cfg.eta_s * cfg.eta_a / cfg.n) * ysum;
  server.c += csum / cfg.n;
  server.round += 1;
}

const char* algo_name(AlgoKind k) {
  switch (k) {
    case AlgoKind::FedNmap: return "fednmap";
    case AlgoKind::Zhang: return "zhang";
    case AlgoKind::Scaffold: return "scaffold";
  }
  return "?";
}

AlgoKind algo_from_name(const std::string& name) {
  if (name == "fednmap") return AlgoKind::FedNmap;
  if (name == "zhang") return AlgoKind::Zhang;
  if (name == "scaffold") return AlgoKind::Scaffold;
  throw std::invalid_argument("unknown algorithm '" + name + "'");
}

namespace {

void parallel_for(int count, int workers, const std::function<void(int)>& fn) {
  workers = std::min(workers, count);
  if (workers <= 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (int i = w; i < count; i += workers) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

class FedNmapAlgo final : public FedAlgorithm {
 public:
  FedNmapAlgo(const Regularizer& reg, const FedConfig& cfg)
      : reg_(reg), cfg_(cfg) {}

  void init(const Vec& z0) override {
    server_.z = z0;
    server_.x = prox(reg_, cfg_.gamma, z0);
    server_.y_bar_prev = Vec::Zero(z0.size());
    server_.round = 0;
    clients_.assign(cfg_.n, FedNmapClient{Vec::Zero(z0.size()),
                                          Vec::Zero(z0.size())});
  }

  void round(const GradOracle& oracle, int workers,
             RoundTrace* trace) override {
    const int t = server_.round;
    // Fault injection (verification harness): flip the aggregate term's
    // sign inside the correction update.
    Vec y_bar = correction_sign_ * server_.y_bar_prev;
    std::vector<ClientRoundResult> results(cfg_.n);
    parallel_for(cfg_.n, workers, [&](int i) {
      results[i] = fednmap_client_round(reg_, cfg_, i, server_.z, y_bar, t,
                                        clients_[i].c, clients_[i].y_prev,
                                        oracle);
    });
    if (trace) {
      trace->t = t;
      trace->z = server_.z;
      trace->x = server_.x;
      trace->y.clear();
      trace->c.clear();
      for (const auto& r : results) {
        trace->y.push_back(r.uplink.y);
        trace->c.push_back(r.c);
      }
    }
    std::vector<UplinkMessage> uplinks(cfg_.n);
    last_uplink_bytes_ = 0;
    for (int i = 0; i < cfg_.n; ++i) {
      uplinks[i] = std::move(results[i].uplink);
      last_uplink_bytes_ += uplinks[i].byte_count();
      clients_[i].c = std::move(results[i].c);
      clients_[i].y_prev = uplinks[i].y;
    }
    fednmap_server_step(reg_, cfg_, server_, uplinks);
  }

  const Vec& z() const override { return server_.z; }
  const Vec& x() const override { return server_.x; }
  int round_index() const override { return server_.round; }
  std::size_t round_uplink_bytes() const override { return last_uplink_bytes_; }
  AlgoKind kind() const override { return AlgoKind::FedNmap; }

  void set_correction_sign(double s) { correction_sign_ = s; }

 private:
  Regularizer reg_;
  FedConfig cfg_;
  FedNmapServer server_;
  std::vector<FedNmapClient> clients_;
  std::size_t last_uplink_bytes_ = 0;
  double correction_sign_ = 1.0;
};

class ZhangAlgo final : public FedAlgorithm {
 public:
  ZhangAlgo(const Regularizer& reg, const FedConfig& cfg)
      : reg_(reg), cfg_(cfg) {}

  void init(const Vec& z0) override {
    server_.z = z0;
    server_.x = prox(reg_, cfg_.eta_hat, z0);
    server_.y_bar_prev = Vec::Zero(z0.size());
    server_.round = 0;
    clients_.assign(cfg_.n,
                    ZhangClient{Vec::Zero(z0.size()), Vec::Zero(z0.size())});
  }

  void round(const GradOracle& oracle, int workers,
             RoundTrace* trace) override {
    const int t = server_.round;
    std::vector<ClientRoundResult> results(cfg_.n);
    parallel_for(cfg_.n, workers, [&](int i) {
      results[i] = zhang_client_round(reg_, cfg_, i, server_.x,
                                      server_.y_bar_prev, t, clients_[i].c,
                                      clients_[i].y_prev, oracle);
    });
    if (trace) {
      trace->t = t;
      trace->z = server_.z;
      trace->x = server_.x;
      trace->y.clear();
      trace->c.clear();
      for (const auto& r : results) {
        trace->y.push_back(r.uplink.y);
        trace->c.push_back(r.c);
      }
    }
    std::vector<UplinkMessage> uplinks(cfg_.n);
    last_uplink_bytes_ = 0;
    for (int i = 0; i < cfg_.n; ++i) {
      uplinks[i] = std::move(results[i].uplink);
      last_uplink_bytes_ += uplinks[i].byte_count();
      clients_[i].c = std::move(results[i].c);
      clients_[i].y_prev = uplinks[i].y;
    }
    zhang_server_step(reg_, cfg_, server_, uplinks);
  }

  const Vec& z() const override { return server_.z; }
  const Vec& x() const override { return server_.x; }
  int round_index() const override { return server_.round; }
  std::size_t round_uplink_bytes() const override { return last_uplink_bytes_; }
  AlgoKind kind() const override { return AlgoKind::Zhang; }

 private:
  Regularizer reg_;
  FedConfig cfg_;
  ZhangServer server_;
  std::vector<ZhangClient> clients_;
  std::size_t last_uplink_bytes_ = 0;
};

class ScaffoldAlgo final : public FedAlgorithm {
 public:
  ScaffoldAlgo(const Regularizer& reg, const FedConfig& cfg) : cfg_(cfg) {
    if (reg.kind != RegKind::Zero)
      throw std::invalid_argument("scaffold handles smooth problems only");
  }

  void init(const Vec& z0) override {
    server_.x = z0;
    server_.c = Vec::Zero(z0.size());
    server_.round = 0;
    clients_.assign(cfg_.n, ScaffoldClient{Vec::Zero(z0.size())});
  }

  void round(const GradOracle& oracle, int workers,
             RoundTrace* trace) override {
    const int t = server_.round;
    std::vector<ScaffoldRoundResult> results(cfg_.n);
    parallel_for(cfg_.n, workers, [&](int i) {
      results[i] = scaffold_client_round(cfg_, i, server_.x, server_.c, t,
                                         clients_[i].c, oracle);
    });
    if (trace) {
      trace->t = t;
      trace->z = server_.x;
      trace->x = server_.x;
      trace->server_c = server_.c;
      trace->y.clear();
      trace->c.clear();
      for (const auto& r : results) {
        trace->y.push_back(r.uplink.y);
        trace->c.push_back(r.c_new);
      }
    }
    std::vector<ScaffoldUplink> uplinks(cfg_.n);
    last_uplink_bytes_ = 0;
    for (int i = 0; i < cfg_.n; ++i) {
      uplinks[i] = std::move(results[i].uplink);
      last_uplink_bytes_ += uplinks[i].byte_count();
      clients_[i].c = std::move(results[i].c_new);
    }
    scaffold_server_step(cfg_, server_, uplinks);
  }

  const Vec& z() const override { return server_.x; }
  const Vec& x() const override { return server_.x; }
  int round_index() const override { return server_.round; }
  std::size_t round_uplink_bytes() const override { return last_uplink_bytes_; }
  AlgoKind kind() const override { return AlgoKind::Scaffold; }

 private:
  FedConfig cfg_;
  ScaffoldServer server_;
  std::vector<ScaffoldClient> clients_;
  std::size_t last_uplink_bytes_ = 0;
};

}  // namespace

std::unique_ptr<FedAlgorithm> make_algorithm(AlgoKind kind,
                                             const Regularizer& reg,
                                             const FedConfig& cfg) {
  switch (kind) {
    case AlgoKind::FedNmap:
      return std::make_unique<FedNmapAlgo>(reg, cfg);
    case AlgoKind::Zhang:
      return std::make_unique<ZhangAlgo>(reg, cfg);
    case AlgoKind::Scaffold:
      return std::make_unique<ScaffoldAlgo>(reg, cfg);
  }
  throw std::invalid_argument("unknown algorithm kind");
}

void set_correction_sign_for_fault_injection(FedAlgorithm& algo, double sign) {
  auto* fn = dynamic_cast<FedNmapAlgo*>(&algo);
  if (!fn)
    throw std::invalid_argument(
        "fault injection is only wired into the fednmap rounds");
  fn->set_correction_sign(sign);
}

Theorem1Params theorem1_params(double l, double rho, double sigma, int T,
                               int n, int Q, double delta_psi,
                               double eta_s_cap) {
  if (!(l + rho > 0) || T < 1 || n < 1 || Q < 1 || !(delta_psi > 0))
    throw std::invalid_argument("theorem1_params: inputs must be positive");
  Theorem1Params p;
  p.gamma = 1.0 / (5.0 * (rho + l));
  const double lg = std::sqrt(l * l + 1.0 / (p.gamma * p.gamma));
  const double one_m_gr = 1.0 - p.gamma * rho;
  if (sigma == 0.0) {
    // The stated eta_hat divides by sigma; fall back to the premise bound
    // with a single-round window.
    p.sigma_zero_fallback = true;
    p.m = 1;
    p.eta_hat = one_m_gr / (100.0 * lg);
    p.eta_a = one_m_gr / (100.0 * Q * lg);
  } else {
    double s2 = sigma * sigma;
    p.eta_hat =
        1.0 / (320.0 * std::sqrt(s2 * T * (rho + l) / (n * Q * delta_psi)));
    p.m = static_cast<int>(std::ceil(
        std::sqrt(s2 * T / (9.0 * (l + rho) * delta_psi * n * Q))));
    p.m = std::max(p.m, 1);
    double quart =
        std::pow(s2 * T * std::pow(static_cast<double>(Q), 3.0) *
                     std::pow(l + rho, 3.0) / (n * delta_psi),
                 0.25);
    double root = std::sqrt((l + rho) * T * Q * s2 / delta_psi);
    p.eta_a = 1.0 / (380.0 * quart + 240.0 * root);
  }
  double eta_a_premise = one_m_gr / (100.0 * Q * std::sqrt(p.m * lg * lg));
  p.eta_s = p.eta_hat / (p.eta_a * Q);
  if (p.eta_s > eta_s_cap) {
    // The paper fixes eta_hat and eta_a independently and leaves eta_s
    // implicit; lift eta_a to its premise bound before accepting a huge
    // server stepsize.
    p.eta_a = eta_a_premise;
    p.eta_s = p.eta_hat / (p.eta_a * Q);
    p.eta_s_capped = true;
  }
  double eta_hat_premise = one_m_gr / (100.0 * p.m * lg);
  const double slack = 1.0 + 1e-12;
  p.premise_ok = p.eta_hat <= eta_hat_premise * slack &&
                 p.eta_a <= eta_a_premise * slack;
  return p;
}

Theorem2Params theorem2_params(double l, double rho, double mu, int n, int Q,
                               int T, double eta_s) {
  if (!(mu > 0)) throw std::invalid_argument("theorem2_params: mu must be > 0");
  if (n < 1 || Q < 1 || T < 1 || !(eta_s > 0))
    throw std::invalid_argument("theorem2_params: inputs must be positive");
  Theorem2Params p;
  p.gamma = 1.0 / (5.0 * (mu + l + rho));
  double lognqt =
      std::log(static_cast<double>(n) * static_cast<double>(Q) * T);
  p.eta_a = lognqt / (120.0 * Q * (l + rho + mu) * T);
  p.degenerate = lognqt == 0.0;
  p.m = static_cast<int>(std::ceil(mu * T / (l + rho)));
  p.m = std::max(p.m, 1);
  p.eta_s = eta_s;
  p.eta_hat = p.eta_a * p.eta_s * Q;
  return p;
}

}  // namespace fednmap
