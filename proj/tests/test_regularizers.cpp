#include <doctest.h>

#include <cmath>

#include "fednmap/regularizer.hpp"
#include "fednmap/rng.hpp"
#include "fednmap/verify.hpp"

using namespace fednmap;

namespace {

Vec vec(std::initializer_list<double> vals) {
  Vec v(static_cast<Eigen::Index>(vals.size()));
  Eigen::Index j = 0;
  for (double x : vals) v[j++] = x;
  return v;
}

Regularizer random_reg(RngStream& rng) {
  switch (rng.next_below(4)) {
    case 0: return Regularizer::zero();
    case 1: return Regularizer::l1(rng.next_double());
    case 2:
      return Regularizer::elastic_net(rng.next_double(), rng.next_double());
    default: {
      double a = rng.next_gaussian();
      return Regularizer::box(a, a + 1.5 * rng.next_double());
    }
  }
}

}  // namespace

TEST_CASE("prox closed forms on the worked examples") {
  // identity for phi = 0
  Vec v = vec({1.2, -0.3});
  Vec p = prox(Regularizer::zero(), 0.7, v);
  CHECK(p == v);

  // soft threshold
  p = prox(Regularizer::l1(0.5), 1.0, vec({1.2, -0.3, 0.0}));
  CHECK(p[0] == doctest::Approx(0.7).epsilon(1e-15));
  CHECK(p[1] == 0.0);
  CHECK(p[2] == 0.0);

  // elastic net with the small-regularizer values used by the nn runs
  Regularizer en = Regularizer::elastic_net(0.001, 0.01);
  p = prox(en, 1.0, vec({1.021}));
  CHECK(p[0] == doctest::Approx(1.0).epsilon(1e-12));
  // cross-checked against the independent 1-D minimization oracle
  CHECK(prox_oracle_1d(en, 1.0, 1.021) == doctest::Approx(1.0).epsilon(1e-6));

  // projection clamp
  p = prox(Regularizer::box(0.0, 1.0), 3.0, vec({1.5, -0.2, 0.4}));
  CHECK(p[0] == 1.0);
  CHECK(p[1] == 0.0);
  CHECK(p[2] == 0.4);
}

TEST_CASE("prox rejects invalid gamma") {
  CHECK_THROWS_AS(prox(Regularizer::l1(1.0), 0.0, vec({1.0})),
                  std::invalid_argument);
  CHECK_THROWS_AS(prox(Regularizer::l1(1.0), -2.0, vec({1.0})),
                  std::invalid_argument);
  Regularizer weak = Regularizer::l1(1.0);
  weak.rho = 0.5;
  CHECK_THROWS_AS(prox(weak, 2.0, vec({1.0})), std::invalid_argument);
  CHECK_NOTHROW(prox(weak, 1.9, vec({1.0})));
}

TEST_CASE("soft-threshold tie maps to zero") {
  // |v| exactly equal to gamma*nu1
  CHECK(prox_scalar(Regularizer::l1(0.5), 1.0, 0.5) == 0.0);
  CHECK(prox_scalar(Regularizer::l1(0.5), 1.0, -0.5) == 0.0);
}

TEST_CASE("degenerate kinds collapse onto each other") {
  RngStream rng(42);
  for (int k = 0; k < 200; ++k) {
    double gamma = 0.1 + 2.0 * rng.next_double();
    double v = 3.0 * rng.next_gaussian();
    double nu = rng.next_double();
    CHECK(prox_scalar(Regularizer::elastic_net(nu, 0.0), gamma, v) ==
          prox_scalar(Regularizer::l1(nu), gamma, v));
    CHECK(prox_scalar(Regularizer::l1(0.0), gamma, v) ==
          prox_scalar(Regularizer::zero(), gamma, v));
  }
}

TEST_CASE("box requires lo <= hi") {
  CHECK_THROWS_AS(Regularizer::box(1.0, 0.0), std::invalid_argument);
}

TEST_CASE("phi_value on the worked examples") {
  auto v = phi_value(Regularizer::elastic_net(0.001, 0.01), vec({1.0, -1.0}));
  REQUIRE(v.has_value());
  CHECK(*v == doctest::Approx(0.022).epsilon(1e-15));

  CHECK_FALSE(
      phi_value(Regularizer::box(0.0, 1.0), vec({0.5, 2.0})).has_value());
  auto z = phi_value(Regularizer::zero(), vec({5.0, -7.0, 0.1}));
  REQUIRE(z.has_value());
  CHECK(*z == 0.0);

  // feasibility tolerance absorbs prox round-off
  auto near =
      phi_value(Regularizer::box(0.0, 1.0), vec({1.0 + 1e-10, -1e-10}));
  CHECK(near.has_value());
}

TEST_CASE("min_norm_subgradient worked examples") {
  Regularizer l1 = Regularizer::l1(1.0);
  // interior of [-1, 1]: the residual vanishes
  Vec r = min_norm_subgradient(l1, vec({0.0}), vec({0.4}));
  CHECK(r.norm() == doctest::Approx(0.0));
  // clamped at nu: residual 1.5
  r = min_norm_subgradient(l1, vec({0.0}), vec({2.5}));
  CHECK(r.norm() == doctest::Approx(1.5).epsilon(1e-15));
  // sign fixed away from zero: 0.2 + 1 = 1.2
  r = min_norm_subgradient(l1, vec({3.0}), vec({0.2}));
  CHECK(r.norm() == doctest::Approx(1.2).epsilon(1e-15));
}

TEST_CASE("min_norm_subgradient box preconditions") {
  Regularizer box = Regularizer::box(0.0, 1.0);
  CHECK_THROWS_AS(min_norm_subgradient(box, vec({2.0}), vec({0.0})),
                  std::domain_error);
  // at the boundary only the inward directions survive
  Vec r = min_norm_subgradient(box, vec({0.0, 1.0, 0.5}),
                               vec({3.0, -2.0, 0.7}));
  CHECK(r[0] == 0.0);   // lower bound, positive gradient absorbed
  CHECK(r[1] == 0.0);   // upper bound, negative gradient absorbed
  CHECK(r[2] == 0.7);   // interior
  r = min_norm_subgradient(box, vec({0.0, 1.0}), vec({-3.0, 2.0}));
  CHECK(r[0] == -3.0);
  CHECK(r[1] == 2.0);
}

TEST_CASE("min_norm_subgradient equals a dense-grid brute force") {
  // Coordinatewise grid over the subdifferential box, p <= 5.
  RngStream rng(7);
  for (int trial = 0; trial < 60; ++trial) {
    double nu1 = rng.next_double();
    double nu2 = (trial % 2) ? rng.next_double() : 0.0;
    Regularizer reg = nu2 > 0 ? Regularizer::elastic_net(nu1, nu2)
                              : Regularizer::l1(nu1);
    int p = 1 + static_cast<int>(rng.next_below(5));
    Vec x(p), g(p);
    for (int j = 0; j < p; ++j) {
      // Mix exact zeros with nonzero coordinates.
      x[j] = (rng.next_below(2) == 0) ? 0.0 : rng.next_gaussian();
      g[j] = 2.0 * rng.next_gaussian();
    }
    Vec fast = min_norm_subgradient(reg, x, g);
    double brute_sq = 0.0;
    const int grid = 4000;
    for (int j = 0; j < p; ++j) {
      double d = g[j] + 2.0 * nu2 * x[j];
      double best = 1e300;
      if (x[j] != 0.0) {
        double s = nu1 * (x[j] > 0 ? 1.0 : -1.0);
        best = std::abs(d + s);
      } else {
        // dense grid over [-nu1, nu1], then a second grid around the best
        double lo = -nu1, hi = nu1;
        for (int stage = 0; stage < 2; ++stage) {
          int best_k = 0;
          for (int k = 0; k <= grid; ++k) {
            double s = lo + (hi - lo) * k / grid;
            double val = std::abs(d + s);
            if (val < best) {
              best = val;
              best_k = k;
            }
          }
          double step = (hi - lo) / grid;
          double c = lo + step * best_k;
          lo = std::max(-nu1, c - step);
          hi = std::min(nu1, c + step);
        }
      }
      brute_sq += best * best;
    }
    CHECK(std::abs(fast.norm() - std::sqrt(brute_sq)) <= 1e-6);
  }
}

TEST_CASE("prox optimality against random perturbations") {
  RngStream rng(11);
  for (int trial = 0; trial < 40; ++trial) {
    Regularizer reg = random_reg(rng);
    double gamma = 0.1 + 2.0 * rng.next_double();
    int p = 4;
    Vec v(p);
    for (int j = 0; j < p; ++j) v[j] = 3.0 * rng.next_gaussian();
    Vec y = prox(reg, gamma, v);
    auto objective = [&](const Vec& u) {
      auto ph = phi_value(reg, u);
      if (!ph) return 1e300;
      return *ph + (u - v).squaredNorm() / (2.0 * gamma);
    };
    double at_y = objective(y);
    for (int k = 0; k < 1000; ++k) {
      Vec u = y;
      for (int j = 0; j < p; ++j) u[j] += 0.3 * rng.next_gaussian();
      CHECK(at_y <= objective(u) + 1e-10);
    }
  }
}

TEST_CASE("prox nonexpansiveness (rho = 0 exact)") {
  RngStream rng(13);
  for (int trial = 0; trial < 50; ++trial) {
    Regularizer reg = random_reg(rng);
    double gamma = 0.1 + 2.0 * rng.next_double();
    Vec w(6), v(6);
    for (int j = 0; j < 6; ++j) {
      w[j] = 4.0 * rng.next_gaussian();
      v[j] = 4.0 * rng.next_gaussian();
    }
    double lhs = (prox(reg, gamma, w) - prox(reg, gamma, v)).norm();
    double rhs = (w - v).norm() / (1.0 - gamma * reg.rho);
    CHECK(lhs <= rhs * (1.0 + 1e-14) + 1e-14);
  }
}

TEST_CASE("second prox theorem: (v - prox(v))/gamma is a subgradient") {
  // Coordinatewise membership conditions for each kind.
  RngStream rng(17);
  for (int trial = 0; trial < 300; ++trial) {
    Regularizer reg = random_reg(rng);
    double gamma = 0.1 + 2.0 * rng.next_double();
    double v = 4.0 * rng.next_gaussian();
    double y = prox_scalar(reg, gamma, v);
    double s = (v - y) / gamma;
    constexpr double tol = 1e-12;
    switch (reg.kind) {
      case RegKind::Zero:
        CHECK(std::abs(s) <= tol);
        break;
      case RegKind::L1:
        if (y != 0.0)
          CHECK(std::abs(s - reg.nu1 * (y > 0 ? 1 : -1)) <= tol);
        else
          CHECK(std::abs(s) <= reg.nu1 + tol);
        break;
      case RegKind::ElasticNet: {
        double smooth = 2.0 * reg.nu2 * y;
        if (y != 0.0)
          CHECK(std::abs(s - smooth - reg.nu1 * (y > 0 ? 1 : -1)) <= tol);
        else
          CHECK(std::abs(s - smooth) <= reg.nu1 + tol);
        break;
      }
      case RegKind::Box:
        if (y > reg.lo + tol && y < reg.hi - tol)
          CHECK(std::abs(s) <= tol);
        else if (y <= reg.lo + tol && y < reg.hi - tol)
          CHECK(s <= tol);  // normal cone points outward at the lower face
        else if (y >= reg.hi - tol && y > reg.lo + tol)
          CHECK(s >= -tol);
        break;
    }
  }
}
