import numpy as np
import pytest

from sheetflow import oracle
from sheetflow.curves import CoVectorVS, circle, flat_pair, zero_mean
from sheetflow.errors import ConstraintError, DomainError, TopologyError
from sheetflow.hodge import AreaSampler, DiscontinuousField, GlobalPart, StreamFunction, project_hodge, anchor
from sheetflow.metric import (cometric, horizontal_lift, isotropy_field, ntd_sum, shape_distance_shooting,
                              submersion_check, vs_metric)
from sheetflow.potential import MINUS, PLUS

from conftest import smooth_values


def density(rng, curve):
    return zero_mean(curve, smooth_values(rng, curve) * curve.weights)


def test_zero_velocity_has_zero_length(small_circle):
    c, ops = small_circle
    assert vs_metric(c, np.zeros(c.n_total), ops) == 0.0


def test_metric_is_quadratic(small_pair, rng):
    c, ops = small_pair
    xi = density(rng, c)
    m = vs_metric(c, xi, ops)
    assert m > 0
    assert vs_metric(c, -3.0 * xi, ops) == pytest.approx(9.0 * m, rel=1e-12)


def test_metric_rejects_net_flux(small_circle):
    c, ops = small_circle
    with pytest.raises(ConstraintError):
        vs_metric(c, c.weights, ops)


@pytest.mark.parametrize("k", [1, 3, 7])
def test_strip_metric_closed_form(flat64, k):
    c, ops = flat64
    xi = np.zeros(c.n_total)
    xi[:64] = np.cos(k * c.t) * c.weights[:64]
    assert vs_metric(c, xi, ops) == pytest.approx(oracle.strip_metric(k, (0.5, 0.5), (1.0, 0.0)), rel=1e-9)


def test_operator_and_energy_routes_agree(small_circle, rng):
    c, ops = small_circle
    xi = density(rng, c)
    a = vs_metric(c, xi, ops)
    b = vs_metric(c, xi, ops, route="energy", sampler=AreaSampler(c, 16))
    assert b == pytest.approx(a, rel=1e-6)


def test_lift_carries_the_velocity(small_pair, rng):
    c, ops = small_pair
    xi = density(rng, c)
    lift = horizontal_lift(c, xi, ops)
    assert np.allclose(anchor(lift).xi, xi, atol=1e-10)
    assert np.max(np.abs(lift.jump().normal_jump)) <= 1e-8


def test_submersion_with_tangent_fields(small_circle, rng):
    c, ops = small_circle
    xi = density(rng, c)
    tang = []
    for _ in range(2):
        w = DiscontinuousField(c, [GlobalPart(StreamFunction.random(rng, 2))], [GlobalPart(StreamFunction.random(rng, 2))])
        tang.append(isotropy_field(project_hodge(w, ops)[0], ops))
    rep = submersion_check(c, xi, ops, tang, AreaSampler(c, 16), tol_energy=1e-6)
    assert rep.passed, rep
    # a smooth global field has a normal component, so it is not orthogonal to the lift
    bad = DiscontinuousField.global_field(c, StreamFunction.random(rng, 2))
    assert not submersion_check(c, xi, ops, [bad], AreaSampler(c, 16), tol_energy=1e-6).passed


def test_cometric_of_constants_vanishes(small_pair):
    c, ops = small_pair
    xi, K = cometric(c, np.full(c.n_total, 2.5), ops)
    assert np.max(np.abs(xi.xi)) <= 1e-10
    assert abs(K) <= 1e-10


def test_cometric_duality_and_routes(small_circle, rng):
    c, ops = small_circle
    f = smooth_values(rng, c)
    xa, Ka = cometric(c, f, ops)
    xb, Kb = cometric(c, f, ops, route="ntd")
    assert np.allclose(xa.xi, xb.xi, atol=1e-8 * np.max(np.abs(xa.xi)))
    assert Kb == pytest.approx(Ka, rel=1e-8)
    assert vs_metric(c, xa.xi, ops) == pytest.approx(2 * Ka, rel=1e-8)


def test_metric_and_cometric_are_inverse(small_pair, rng):
    c, ops = small_pair
    xi = density(rng, c)
    f = ntd_sum(ops, xi / c.weights)
    back, _ = cometric(c, f, ops)
    assert np.allclose(back.xi, xi, atol=1e-8 * np.max(np.abs(xi)))


def test_cometric_ignores_constant_shift(small_circle, rng):
    c, ops = small_circle
    f = CoVectorVS(smooth_values(rng, c))
    a, Ka = cometric(c, f.f, ops)
    b, Kb = cometric(c, f.shifted(4.0).f, ops)
    assert np.allclose(a.xi, b.xi, atol=1e-11)
    assert Kb == pytest.approx(Ka, rel=1e-10)


def test_gram_matrix_on_modes_is_positive_definite(small_pair):
    c, ops = small_pair
    dirs = []
    for i in range(2):
        for k in range(1, 5):
            for fn in (np.cos, np.sin):
                d = np.zeros(c.n_total)
                d[c.loop_slice(i)] = fn(k * c.t)
                dirs.append(zero_mean(c, d * c.weights) / c.weights)
    Q = np.array(dirs).T
    F = np.array([ntd_sum(ops, Q[:, j]) for j in range(Q.shape[1])]).T
    G = Q.T @ (ops.weights[:, None] * F)
    assert np.allclose(G, G.T, atol=1e-10 * np.max(np.abs(G)))
    np.linalg.cholesky(0.5 * (G + G.T))


def test_shooting_between_identical_sheets():
    c = circle(0.2, n=64)
    res = shape_distance_shooting(c, c, n_modes=3, steps=2)
    assert res.distance == 0.0


def test_shooting_matches_metric_for_small_bump():
    a = 1e-3
    start = circle(0.2, n=64)
    target = circle(0.2, n=64, modes={2: a})
    res = shape_distance_shooting(start, target, n_modes=6, steps=4)
    xi = zero_mean(start, a * np.cos(2 * start.t) * start.weights)
    ref = np.sqrt(vs_metric(start, xi))
    assert res.distance == pytest.approx(ref, rel=0.05)


def test_shooting_rejects_unequal_areas():
    with pytest.raises(DomainError):
        shape_distance_shooting(circle(0.2, n=32), circle(0.21, n=32))
    with pytest.raises(DomainError):
        shape_distance_shooting(flat_pair(n=32), flat_pair(0.25, 0.8, n=32))


def test_shooting_rejects_topology_mismatch():
    with pytest.raises(TopologyError):
        shape_distance_shooting(circle(0.2, n=32), flat_pair(n=32))
