#pragma once

#include <optional>

#include "fednmap/types.hpp"

namespace fednmap {

enum class RegKind { Zero, L1, ElasticNet, Box };

/// Nonsmooth term phi with a closed-form proximal operator.
///
/// All built-in kinds are convex (rho = 0); rho is carried explicitly so the
/// gamma-validity check (gamma * rho < 1) is uniform and weakly convex kinds
/// can be added without touching call sites.
struct Regularizer {
  RegKind kind = RegKind::Zero;
  double nu1 = 0.0;  // l1 weight
  double nu2 = 0.0;  // squared-l2 weight (elastic net)
  double lo = 0.0;   // box lower bound
  double hi = 0.0;   // box upper bound
  double rho = 0.0;  // weak-convexity modulus
  // Slack when deciding box feasibility; absorbs prox round-off.
  double feas_tol = 1e-9;

  static Regularizer zero();
  static Regularizer l1(double nu);
  static Regularizer elastic_net(double nu1, double nu2);
  static Regularizer box(double lo, double hi);  // requires lo <= hi

  const char* kind_name() const;
};

/// Throws std::invalid_argument unless gamma > 0 and gamma * rho < 1
/// (outside that range the prox may be non-single-valued).
void check_gamma(const Regularizer& reg, double gamma);

/// prox_{gamma phi}(v), coordinatewise closed form.
/// Soft-threshold ties (|v_j| == gamma*nu1) map to 0.
Vec prox(const Regularizer& reg, double gamma, const Vec& v);

/// Scalar prox for one coordinate; shared by prox() and the 1-D oracles.
double prox_scalar(const Regularizer& reg, double gamma, double v);

/// phi(x); std::nullopt encodes +infinity (box violated beyond feas_tol).
/// An explicit marker rather than a floating infinity so that downstream
/// arithmetic cannot silently propagate it.
std::optional<double> phi_value(const Regularizer& reg, const Vec& x);

/// phi of a single coordinate (finite kinds only; box returns 0/infinity
/// handled by the vector overload).
double phi_value_scalar(const Regularizer& reg, double x);

/// Minimal-norm element of the composite subdifferential
/// grad_f + partial phi(x), computed coordinatewise for the separable
/// built-in kinds. Its norm equals dist(0, partial psi(x)).
/// For Box, x must be feasible (within feas_tol); throws std::domain_error
/// otherwise.
Vec min_norm_subgradient(const Regularizer& reg, const Vec& x,
                         const Vec& grad_f);

}  // namespace fednmap
