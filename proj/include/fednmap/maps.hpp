#pragma once

#include <optional>

#include "fednmap/problem.hpp"
#include "fednmap/regularizer.hpp"
#include "fednmap/types.hpp"

namespace fednmap {

struct NormalMapResult {
  Vec x;     // prox_{gamma phi}(z)
  Vec fnor;  // grad f(x) + (z - x)/gamma
};

/// Normal map with the exact client-average gradient.
NormalMapResult normal_map(const Problem& prob, const Regularizer& reg,
                           double gamma, const Vec& z);

/// Per-client normal map (grad f_i instead of grad f).
NormalMapResult normal_map_client(const Problem& prob, const Regularizer& reg,
                                  double gamma, int client, const Vec& z);

/// Prox-gradient residual (x - prox_{gamma phi}(x - gamma grad f(x)))/gamma;
/// the headline stationarity metric.
Vec natural_map(const Problem& prob, const Regularizer& reg, double gamma,
                const Vec& x);

/// (3 - 4 g r) / (2 (3 - 4 g r + 4 g^2 L^2)); lies in [4/9, 1/2) whenever
/// gamma <= 1/(5(rho + L)).
double c0_constant(double gamma, double rho, double l);

struct LyapunovResult {
  double value;         // psi(prox(z)) + gamma*C0/2 * ||F_nor(z)||^2
  double c0;
  bool gamma_in_range;  // gamma <= 1/(5(rho+L)); computed anyway when false
};

LyapunovResult lyapunov(const Problem& prob, const Regularizer& reg,
                        double gamma, const Vec& z);

struct SolveResult {
  Vec z;
  Vec x;
  double psi_star;  // psi at the returned x
  bool converged;
  int iters;
};

/// Deterministic normal-map iteration z <- z - eta F_nor(z) with
/// eta = min(gamma, 0.9/L); stops when ||F_nat(x)|| <= tol.
/// The psi_star estimate is certified only on PL / strongly convex
/// instances (unique minimizer); on nonconvex ones it is a stationary value.
SolveResult reference_solve(const Problem& prob, const Regularizer& reg,
                            double gamma, const Vec& z0, double tol = 1e-10,
                            int max_iter = 200000);

/// Independent route: plain proximal-gradient iteration
/// x <- prox_{eta phi}(x - eta grad f(x)), same stepsize rule. On convex
/// instances both routes must agree on psi_star.
SolveResult reference_solve_prox_gradient(const Problem& prob,
                                          const Regularizer& reg, double gamma,
                                          const Vec& x0, double tol = 1e-10,
                                          int max_iter = 200000);

struct StationaritySnapshot {
  double fnat_sq = 0.0;
  double fnor_sq = 0.0;
  // dist(0, d psi(x))^2 at x = prox(z); present for the separable built-ins.
  std::optional<double> subgrad_dist_sq;
  double psi_value = 0.0;
  double lyapunov = 0.0;
  double gamma = 0.0;
};

/// All stationarity measures at the paired (z, x = prox(z)).
StationaritySnapshot stationarity_snapshot(const Problem& prob,
                                           const Regularizer& reg,
                                           double gamma, const Vec& z);

}  // namespace fednmap
