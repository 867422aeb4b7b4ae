#include "fednmap/regularizer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace fednmap {

Regularizer Regularizer::zero() { return Regularizer{}; }

Regularizer Regularizer::l1(double nu) {
  if (nu < 0) throw std::invalid_argument("l1 weight must be nonnegative");
  Regularizer r;
  r.kind = RegKind::L1;
  r.nu1 = nu;
  return r;
}

Regularizer Regularizer::elastic_net(double nu1, double nu2) {
  if (nu1 < 0 || nu2 < 0)
    throw std::invalid_argument("elastic net weights must be nonnegative");
  Regularizer r;
  r.kind = RegKind::ElasticNet;
  r.nu1 = nu1;
  r.nu2 = nu2;
  return r;
}

Regularizer Regularizer::box(double lo, double hi) {
  if (!(lo <= hi)) throw std::invalid_argument("box requires lo <= hi");
  Regularizer r;
  r.kind = RegKind::Box;
  r.lo = lo;
  r.hi = hi;
  return r;
}

const char* Regularizer::kind_name() const {
  switch (kind) {
    case RegKind::Zero: return "zero";
    case RegKind::L1: return "l1";
    case RegKind::ElasticNet: return "elastic_net";
    case RegKind::Box: return "box";
  }
  return "?";
}

void check_gamma(const Regularizer& reg, double gamma) {
  if (!(gamma > 0))
    throw std::invalid_argument("prox parameter gamma must be positive, got " +
                                std::to_string(gamma));
  if (!(gamma * reg.rho < 1.0))
    throw std::invalid_argument(
        "gamma * rho must be < 1 for a single-valued prox (gamma=" +
        std::to_string(gamma) + ", rho=" + std::to_string(reg.rho) + ")");
}

namespace {

double soft_threshold(double v, double t) {
  if (v > t) return v - t;
  if (v < -t) return v + t;
  return 0.0;
}

}  // namespace

double prox_scalar(const Regularizer& reg, double gamma, double v) {
  switch (reg.kind) {
    case RegKind::Zero:
      return v;
    case RegKind::L1:
      return soft_threshold(v, gamma * reg.nu1);
    case RegKind::ElasticNet:
      return soft_threshold(v, gamma * reg.nu1) / (1.0 + 2.0 * gamma * reg.nu2);
    case RegKind::Box:
      return std::clamp(v, reg.lo, reg.hi);
  }
  return v;
}

Vec prox(const Regularizer& reg, double gamma, const Vec& v) {
  check_gamma(reg, gamma);
  if (reg.kind == RegKind::Zero) return v;
  Vec out(v.size());
  for (Eigen::Index j = 0; j < v.size(); ++j)
    out[j] = prox_scalar(reg, gamma, v[j]);
  return out;
}

double phi_value_scalar(const Regularizer& reg, double x) {
  switch (reg.kind) {
    case RegKind::Zero: return 0.0;
    case RegKind::L1: return reg.nu1 * std::abs(x);
    case RegKind::ElasticNet: return reg.nu1 * std::abs(x) + reg.nu2 * x * x;
    case RegKind::Box: return 0.0;  // feasibility handled by the caller
  }
  return 0.0;
}

std::optional<double> phi_value(const Regularizer& reg, const Vec& x) {
  if (reg.kind == RegKind::Box) {
    for (Eigen::Index j = 0; j < x.size(); ++j)
      if (x[j] < reg.lo - reg.feas_tol || x[j] > reg.hi + reg.feas_tol)
        return std::nullopt;
    return 0.0;
  }
  double s = 0.0;
  for (Eigen::Index j = 0; j < x.size(); ++j)
    s += phi_value_scalar(reg, x[j]);
  return s;
}

Vec min_norm_subgradient(const Regularizer& reg, const Vec& x,
                         const Vec& grad_f) {
  if (x.size() != grad_f.size())
    throw std::invalid_argument("min_norm_subgradient: dimension mismatch");
  Vec r(x.size());
  switch (reg.kind) {
    case RegKind::Zero:
      r = grad_f;
      break;
    case RegKind::L1:
    case RegKind::ElasticNet: {
      // Smooth part of the j-th component: grad_f plus the differentiable
      // 2*nu2*x term; the l1 piece contributes the subdifferential box.
      const double nu1 = reg.nu1;
      const double nu2 = (reg.kind == RegKind::ElasticNet) ? reg.nu2 : 0.0;
      for (Eigen::Index j = 0; j < x.size(); ++j) {
        double d = grad_f[j] + 2.0 * nu2 * x[j];
        if (x[j] > 0)
          r[j] = d + nu1;
        else if (x[j] < 0)
          r[j] = d - nu1;
        else
          r[j] = d + std::clamp(-d, -nu1, nu1);
      }
      break;
    }
    case RegKind::Box: {
      for (Eigen::Index j = 0; j < x.size(); ++j) {
        if (x[j] < reg.lo - reg.feas_tol || x[j] > reg.hi + reg.feas_tol)
          throw std::domain_error(
              "min_norm_subgradient: point is outside the box");
        bool at_lo = x[j] <= reg.lo + reg.feas_tol;
        bool at_hi = x[j] >= reg.hi - reg.feas_tol;
        double g = grad_f[j];
        if (at_lo && at_hi)
          r[j] = 0.0;  // degenerate box, normal cone is all of R
        else if (at_lo)
          r[j] = std::min(g, 0.0);
        else if (at_hi)
          r[j] = std::max(g, 0.0);
        else
          r[j] = g;
      }
      break;
    }
  }
  return r;
}

}  // namespace fednmap
