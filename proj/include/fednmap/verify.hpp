#pragma once

#include <string>
#include <vector>

#include "fednmap/regularizer.hpp"

namespace fednmap {

struct VerifyCheck {
  std::string name;
  bool pass = false;
  double stat = 0.0;       // worst observed value
  double threshold = 0.0;  // what it had to stay under
  std::string note;
};

struct VerifyOptions {
  std::uint64_t seed = 20240907;
  // Fault-injection demo: flip the aggregate term's sign in the correction
  // update and watch the tracking identity break.
  bool mutate_correction_sign = false;
};

/// The runtime invariant suite behind `fednmap verify`: tracking identity,
/// zero-mean corrections, sandwich inequality, SCAFFOLD equivalence,
/// prox-versus-oracle agreement, and stochastic-gradient unbiasedness.
/// Deterministic given the seed.
std::vector<VerifyCheck> run_verification(const VerifyOptions& opts = {});

bool all_pass(const std::vector<VerifyCheck>& checks);

/// Brute-force 1-D prox: grid scan plus golden-section refinement of
/// phi(y) + (y-v)^2/(2 gamma). Independent of the closed forms; the oracle
/// side of the prox dual-route checks.
double prox_oracle_1d(const Regularizer& reg, double gamma, double v);

}  // namespace fednmap
