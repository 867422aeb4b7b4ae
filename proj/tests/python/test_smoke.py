"""Smoke tests for the python bindings: the main operations round-trip
through numpy and agree with the library's own invariants."""

import math

import numpy as np
import pytest

import fednmap


def test_prox_and_phi_value():
    en = fednmap.Regularizer.elastic_net(0.001, 0.01)
    v = np.array([1.021])
    out = fednmap.prox(en, 1.0, v)
    assert out[0] == pytest.approx(1.0, abs=1e-12)
    assert fednmap.phi_value(en, np.array([1.0, -1.0])) == pytest.approx(0.022)

    box = fednmap.Regularizer.box(0.0, 1.0)
    assert fednmap.phi_value(box, np.array([0.5, 2.0])) is None  # +infinity
    clipped = fednmap.prox(box, 3.0, np.array([1.5, -0.2, 0.4]))
    assert np.allclose(clipped, [1.0, 0.0, 0.4])


def test_min_norm_subgradient():
    l1 = fednmap.Regularizer.l1(1.0)
    r = fednmap.min_norm_subgradient(l1, np.zeros(1), np.array([2.5]))
    assert np.linalg.norm(r) == pytest.approx(1.5)


def test_quadratic_problem_and_maps():
    prob = fednmap.make_composite_quadratic(3, 6, 1.0, seed=7, sigma=0.5)
    assert prob.n == 3
    assert prob.p == 6
    assert prob.l_bound > 0
    x = np.ones(6)
    g = prob.average_gradient(x)
    assert g.shape == (6,)

    en = fednmap.Regularizer.elastic_net(0.01, 0.02)
    z = np.full(6, 0.3)
    px, fnor = fednmap.normal_map(prob, en, 0.5, z)
    fnat = fednmap.natural_map(prob, en, 0.5, px)
    # sandwich: ||F_nat(prox z)|| <= ||F_nor(z)|| for convex phi
    assert np.linalg.norm(fnat) <= np.linalg.norm(fnor) + 1e-10

    zs, xs, psi_star, converged = fednmap.reference_solve(prob, en, 0.5, np.zeros(6))
    assert converged
    assert np.linalg.norm(fednmap.natural_map(prob, en, 0.5, xs)) <= 1e-8


def test_stochastic_gradient_is_reproducible():
    prob = fednmap.make_composite_quadratic(2, 4, 1.0, seed=3, sigma=1.0)
    x = np.zeros(4)
    a = prob.stochastic_gradient(0, x, seed=5, round=2, step=1)
    b = prob.stochastic_gradient(0, x, seed=5, round=2, step=1)
    c = prob.stochastic_gradient(0, x, seed=5, round=2, step=2)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_run_quadratic_end_to_end():
    en = fednmap.Regularizer.elastic_net(0.01, 0.02)
    out = fednmap.run_quadratic(
        "fednmap", n=4, p=6, hetero=1.0, sigma=0.3, Q=3, T=10,
        eta_a=0.05, eta_s=1.0, gamma=0.5, reg=en, seed=1)
    assert not out["diverged"]
    rows = out["metrics"]
    assert len(rows) == 11
    assert rows[0]["round"] == 0
    assert rows[-1]["round"] == 10
    assert rows[-1]["fnat_sq"] < rows[0]["fnat_sq"]
    assert out["csv"].startswith("round,algo")
    # psi* is certified for the strongly convex elastic-net quadratic
    assert out["psi_star"] is not None
    assert rows[-1]["psi_gap"] >= -1e-8

    # determinism through the bindings
    again = fednmap.run_quadratic(
        "fednmap", n=4, p=6, hetero=1.0, sigma=0.3, Q=3, T=10,
        eta_a=0.05, eta_s=1.0, gamma=0.5, reg=en, seed=1)
    assert again["csv"] == out["csv"]


def test_scaffold_matches_fednmap_on_smooth_problems():
    zero = fednmap.Regularizer.zero()
    kwargs = dict(n=4, p=5, hetero=1.0, sigma=0.4, Q=3, T=20,
                  eta_a=0.05, eta_s=1.0, gamma=1.0, reg=zero, seed=9)
    fed = fednmap.run_quadratic("fednmap", **kwargs)
    sca = fednmap.run_quadratic("scaffold", **kwargs)
    assert np.linalg.norm(fed["final_x"] - sca["final_x"]) <= 1e-10


def test_theorem_schedules():
    p1 = fednmap.theorem1_params(1.0, 0.0, 1.0, 100, 10, 5, 1.0)
    assert p1["gamma"] == pytest.approx(0.2)
    assert p1["eta_hat"] == pytest.approx(1.0 / (320.0 * math.sqrt(2.0)))
    assert p1["m"] == 1

    p2 = fednmap.theorem2_params(1.0, 1.0, 1.0, 10, 5, 100)
    assert p2["eta_a"] == pytest.approx(math.log(5000.0) / 180000.0)
    assert fednmap.c0_constant(0.2, 0.0, 1.0) == pytest.approx(
        3.0 / (2.0 * (3.0 + 4.0 / 25.0)))


def test_partitioners():
    labels = np.array([1, 0, 1, 0, 2, 2], dtype=np.int32)
    feats = np.zeros((6, 2))
    shards = fednmap.partition_sorted_by_label(feats, labels, 3)
    assert sorted(i for s in shards for i in s) == list(range(6))
    for c, shard in enumerate(shards):
        assert all(labels[i] == c for i in shard)

    rng_labels = np.array([i % 4 for i in range(400)], dtype=np.int32)
    shards = fednmap.partition_dirichlet(
        np.zeros((400, 2)), rng_labels, 8, alpha=0.1, seed=1)
    assert sorted(i for s in shards for i in s) == list(range(400))
