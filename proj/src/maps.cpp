#include "fednmap/maps.hpp"

#include <cmath>
#include <stdexcept>

namespace fednmap {

NormalMapResult normal_map(const Problem& prob, const Regularizer& reg,
                           double gamma, const Vec& z) {
  check_gamma(reg, gamma);
  NormalMapResult r;
  r.x = prox(reg, gamma, z);
  r.fnor = prob.average_gradient(r.x) + (z - r.x) / gamma;
  return r;
}

NormalMapResult normal_map_client(const Problem& prob, const Regularizer& reg,
                                  double gamma, int client, const Vec& z) {
  check_gamma(reg, gamma);
  NormalMapResult r;
  r.x = prox(reg, gamma, z);
  r.fnor = prob.full_gradient(client, r.x) + (z - r.x) / gamma;
  return r;
}

Vec natural_map(const Problem& prob, const Regularizer& reg, double gamma,
                const Vec& x) {
  check_gamma(reg, gamma);
  Vec inner = x - gamma * prob.average_gradient(x);
  return (x - prox(reg, gamma, inner)) / gamma;
}

double c0_constant(double gamma, double rho, double l) {
  double a = 3.0 - 4.0 * gamma * rho;
  return a / (2.0 * (a + 4.0 * gamma * gamma * l * l));
}

LyapunovResult lyapunov(const Problem& prob, const Regularizer& reg,
                        double gamma, const Vec& z) {
  check_gamma(reg, gamma);
  NormalMapResult nm = normal_map(prob, reg, gamma, z);
  LyapunovResult out;
  out.c0 = c0_constant(gamma, reg.rho, prob.l_bound());
  out.gamma_in_range = gamma <= 1.0 / (5.0 * (reg.rho + prob.l_bound()));
  auto phi = phi_value(reg, nm.x);
  if (!phi)
    throw std::domain_error("lyapunov: prox output violates the box");
  double psi = prob.average_loss(nm.x) + *phi;
  out.value = psi + 0.5 * gamma * out.c0 * nm.fnor.squaredNorm();
  return out;
}

SolveResult reference_solve(const Problem& prob, const Regularizer& reg,
                            double gamma, const Vec& z0, double tol,
                            int max_iter) {
  check_gamma(reg, gamma);
  double eta = std::min(gamma, 0.9 / std::max(prob.l_bound(), 1e-12));
  SolveResult res;
  res.z = z0;
  res.x = prox(reg, gamma, res.z);
  res.converged = false;
  res.iters = 0;
  for (int k = 0; k < max_iter; ++k) {
    NormalMapResult nm = normal_map(prob, reg, gamma, res.z);
    res.x = nm.x;
    res.iters = k;
    if (natural_map(prob, reg, gamma, nm.x).norm() <= tol) {
      res.converged = true;
      break;
    }
    res.z -= eta * nm.fnor;
  }
  auto phi = phi_value(reg, res.x);
  res.psi_star = prob.average_loss(res.x) + (phi ? *phi : 0.0);
  return res;
}

SolveResult reference_solve_prox_gradient(const Problem& prob,
                                          const Regularizer& reg, double gamma,
                                          const Vec& x0, double tol,
                                          int max_iter) {
  check_gamma(reg, gamma);
  double eta = std::min(gamma, 0.9 / std::max(prob.l_bound(), 1e-12));
  SolveResult res;
  res.x = prox(reg, gamma, x0);
  res.converged = false;
  res.iters = 0;
  for (int k = 0; k < max_iter; ++k) {
    Vec next = prox(reg, eta, res.x - eta * prob.average_gradient(res.x));
    double residual = (res.x - next).norm() / eta;
    res.x = next;
    res.iters = k;
    if (residual <= tol) {
      res.converged = true;
      break;
    }
  }
  // Express the fixed point in z-space for parity with the normal-map route.
  res.z = res.x - gamma * prob.average_gradient(res.x);
  auto phi = phi_value(reg, res.x);
  res.psi_star = prob.average_loss(res.x) + (phi ? *phi : 0.0);
  return res;
}

StationaritySnapshot stationarity_snapshot(const Problem& prob,
                                           const Regularizer& reg,
                                           double gamma, const Vec& z) {
  StationaritySnapshot s;
  s.gamma = gamma;
  NormalMapResult nm = normal_map(prob, reg, gamma, z);
  s.fnor_sq = nm.fnor.squaredNorm();
  s.fnat_sq = natural_map(prob, reg, gamma, nm.x).squaredNorm();
  Vec grad = prob.average_gradient(nm.x);
  s.subgrad_dist_sq = min_norm_subgradient(reg, nm.x, grad).squaredNorm();
  auto phi = phi_value(reg, nm.x);
  s.psi_value = prob.average_loss(nm.x) + (phi ? *phi : 0.0);
  s.lyapunov = s.psi_value +
               0.5 * gamma * c0_constant(gamma, reg.rho, prob.l_bound()) *
                   s.fnor_sq;
  return s;
}

}  // namespace fednmap
