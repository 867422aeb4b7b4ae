#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "fednmap/regularizer.hpp"
#include "fednmap/types.hpp"

namespace fednmap {

/// Round-level parameters shared by all three methods.
struct FedConfig {
  int n = 1;          // clients (full participation)
  int Q = 1;          // local steps per round
  int T = 1;          // communication rounds
  double eta_a = 0.1; // local stepsize
  double eta_s = 1.0; // server stepsize
  double gamma = 1.0; // prox parameter
  double eta_hat = 0.0;  // eta_a * eta_s * Q, fixed at construction

  static FedConfig create(int n, int Q, int T, double eta_a, double eta_s,
                          double gamma, const Regularizer& reg);
};

/// Stochastic gradient supplier keyed by (client, round, local step).
/// The simulator backs this with lane-seeded live draws, a recording
/// wrapper, or a replay lookup.
using GradOracle =
    std::function<Vec(int client, int round, int step, const Vec& x)>;

/// c_{i,t}: zero at t=0, else c_prev - y_prev + y_bar_prev.
Vec correction_update(const Vec& c_prev, const Vec& y_prev,
                      const Vec& y_bar_prev, int t);

/// Single-vector uplink; the structural half-cost claim versus the
/// two-vector SCAFFOLD uplink is asserted on these types.
struct UplinkMessage {
  Vec y;
  std::size_t byte_count() const { return y.size() * sizeof(double); }
};

struct ScaffoldUplink {
  Vec y;        // (x_t - x_i^Q)/(eta_a Q)
  Vec c_delta;  // c_{i,t+1} - c_{i,t}
  std::size_t byte_count() const {
    return (y.size() + c_delta.size()) * sizeof(double);
  }
};

struct FedNmapServer {
  Vec z;
  Vec x;           // prox_{gamma phi}(z), maintained after every step
  Vec y_bar_prev;  // broadcast mean uplink of the previous round
  int round = 0;
};

struct FedNmapClient {
  Vec c;       // correction c_{i,t} in effect during the last round
  Vec y_prev;  // y_{i,t-1}
};

struct ClientRoundResult {
  UplinkMessage uplink;
  Vec c;  // the correction used this round (c_{i,t})
};

/// Q corrected normal-map local steps from z_t; returns
/// y_i = (z_t - z_i^Q)/(eta_a Q) and the refreshed correction. Gradient
/// access goes through the oracle so live, recorded, and replayed runs share
/// one code path.
ClientRoundResult fednmap_client_round(const Regularizer& reg,
                                       const FedConfig& cfg, int client,
                                       const Vec& z_t, const Vec& y_bar_prev,
                                       int t, const Vec& c_prev,
                                       const Vec& y_prev,
                                       const GradOracle& oracle);

/// z <- z - (Q eta_s eta_a / n) sum_i y_i; x <- prox(z). Requires exactly n
/// uplinks (full participation).
void fednmap_server_step(const Regularizer& reg, const FedConfig& cfg,
                         FedNmapServer& server,
                         const std::vector<UplinkMessage>& uplinks);

// --- Zhang baseline (gradient-tracking with growing local prox) ------------

struct ZhangServer {
  Vec z;
  Vec x;           // prox_{eta_hat phi}(z)
  Vec y_bar_prev;
  int round = 0;
};

using ZhangClient = FedNmapClient;

/// Local steps z^{l+1} = z^l - eta_a (g + c_i) with the growing prox
/// x^{l+1} = prox_{(l+1) eta_a phi}(z^{l+1}), started from z^0 = x^0 = x_t.
ClientRoundResult zhang_client_round(const Regularizer& reg,
                                     const FedConfig& cfg, int client,
                                     const Vec& x_t, const Vec& y_bar_prev,
                                     int t, const Vec& c_prev,
                                     const Vec& y_prev,
                                     const GradOracle& oracle);

/// z <- x_t - (Q eta_s eta_a / n) sum y_i; x <- prox_{eta_hat phi}(z).
void zhang_server_step(const Regularizer& reg, const FedConfig& cfg,
                       ZhangServer& server,
                       const std::vector<UplinkMessage>& uplinks);

// --- SCAFFOLD baseline (smooth problems only) -------------------------------

struct ScaffoldServer {
  Vec x;
  Vec c;  // server control variate c_t
  int round = 0;
};

struct ScaffoldClient {
  Vec c;  // client control variate c_{i,t}
};

struct ScaffoldRoundResult {
  ScaffoldUplink uplink;
  Vec c_new;  // c_{i,t+1} = (1/Q) sum_l g
};

ScaffoldRoundResult scaffold_client_round(const FedConfig& cfg, int client,
                                          const Vec& x_t, const Vec& c_t,
                                          int t, const Vec& c_prev,
                                          const GradOracle& oracle);

void scaffold_server_step(const FedConfig& cfg, ScaffoldServer& server,
                          const std::vector<ScaffoldUplink>& uplinks);

// --- Unified per-round driver ------------------------------------------------

enum class AlgoKind { FedNmap, Zhang, Scaffold };

const char* algo_name(AlgoKind k);
AlgoKind algo_from_name(const std::string& name);

/// Captured state of one round, for the identity checks.
struct RoundTrace {
  int t = 0;
  Vec z;                // z_t before the server step
  Vec x;                // x_t before the server step
  std::vector<Vec> y;   // uplinks
  std::vector<Vec> c;   // corrections in effect during the round
  Vec server_c;         // scaffold only: the server control variate c_t
};

/// Owns server + client state for one run; `round` fans client updates out
/// to `workers` threads and aggregates in ascending client order so results
/// are bit-identical for any worker count.
class FedAlgorithm {
 public:
  virtual ~FedAlgorithm() = default;
  virtual void init(const Vec& z0) = 0;
  virtual void round(const GradOracle& oracle, int workers,
                     RoundTrace* trace) = 0;
  virtual const Vec& z() const = 0;
  virtual const Vec& x() const = 0;
  virtual int round_index() const = 0;
  virtual std::size_t round_uplink_bytes() const = 0;
  virtual AlgoKind kind() const = 0;
};

/// Scaffold requires phi == Zero and throws otherwise.
std::unique_ptr<FedAlgorithm> make_algorithm(AlgoKind kind,
                                             const Regularizer& reg,
                                             const FedConfig& cfg);

/// Fault-injection seam for the verification harness: negates the uplink
/// term in every correction update so the tracking identity must break.
void set_correction_sign_for_fault_injection(FedAlgorithm& algo, double sign);

// --- Theorem-prescribed schedules -------------------------------------------

struct Theorem1Params {
  double gamma = 0.0;
  double eta_hat = 0.0;
  double eta_a = 0.0;
  double eta_s = 0.0;
  int m = 1;                  // multistep window
  bool sigma_zero_fallback = false;
  bool premise_ok = true;     // stated bounds on eta_hat / eta_a
  bool eta_s_capped = false;  // eta_a was rescaled to keep eta_s <= cap
};

/// Nonconvex schedule: gamma = 1/(5(rho+L)), eta_hat and m from the stated
/// sqrt(sigma^2 T (rho+L) / (n Q delta_psi)) expressions. sigma = 0 falls
/// back to the deterministic premise bound with m = 1.
Theorem1Params theorem1_params(double l, double rho, double sigma, int T,
                               int n, int Q, double delta_psi,
                               double eta_s_cap = 1e3);

struct Theorem2Params {
  double gamma = 0.0;
  double eta_a = 0.0;
  double eta_s = 1.0;
  double eta_hat = 0.0;
  int m = 1;
  bool degenerate = false;  // log(nQT) = 0
};

/// PL schedule: gamma = 1/(5(mu+L+rho)), eta_a = log(nQT)/(120 Q (L+rho+mu) T),
/// m = ceil(mu T / (L+rho)).
Theorem2Params theorem2_params(double l, double rho, double mu, int n, int Q,
                               int T, double eta_s = 1.0);

}  // namespace fednmap
