import numpy as np
from hypothesis import HealthCheck, given, settings, strategies as st

from sheetflow.curves import CoVectorVS, check_zero_sum, circle, displace, zero_mean
from sheetflow.geometry import green
from sheetflow.metric import cometric, vs_metric

coord = st.floats(0.0, 1.0, allow_nan=False, exclude_max=True)
point = st.tuples(coord, coord)
coef = st.floats(-1.0, 1.0, allow_nan=False)
fixture_ok = settings(max_examples=25, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])


def apart(p, q):
    d = np.subtract(p, q)
    d -= np.round(d)
    return np.hypot(*d) > 1e-3


def mode_sum(curve, cs):
    return sum(c * np.cos((k + 1) * curve.t + 0.3 * k) for k, c in enumerate(cs))


@settings(max_examples=200, deadline=None)
@given(point, point, st.integers(-2, 2), st.integers(-2, 2))
def test_green_symmetric_and_periodic(p, q, m, n):
    if not apart(p, q):
        return
    g = green(p, q)
    assert abs(g - green(q, p)) <= 1e-12
    assert abs(g - green((p[0] + m, p[1] + n), q)) <= 1e-11


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=64, max_size=64))
def test_zero_mean_removes_flux(vals):
    c = circle(0.2, n=64)
    xi = zero_mean(c, np.array(vals))
    check_zero_sum(xi)
    assert abs(xi.sum()) <= 1e-12 * max(1.0, np.abs(vals).max())


@fixture_ok
@given(st.lists(coef, min_size=4, max_size=4), st.floats(-100, 100, allow_nan=False))
def test_cometric_ignores_shifts(small_circle, cs, shift):
    c, ops = small_circle
    f = CoVectorVS(mode_sum(c, cs))
    a, Ka = cometric(c, f.f, ops)
    b, Kb = cometric(c, f.shifted(shift).f, ops)
    scale = max(np.max(np.abs(a.xi)), 1e-300)
    assert np.max(np.abs(a.xi - b.xi)) <= 1e-9 * max(scale, 1e-3)
    assert abs(Ka - Kb) <= 1e-9 * max(abs(Ka), 1e-6)


@fixture_ok
@given(st.lists(coef, min_size=4, max_size=4), st.lists(coef, min_size=4, max_size=4), st.floats(-3, 3))
def test_metric_nonnegative_and_quadratic(small_pair, ca, cb, s):
    c, ops = small_pair
    a = zero_mean(c, np.tile(mode_sum(c, ca)[: c.n], 2) * c.weights)
    b = zero_mean(c, np.concatenate([mode_sum(c, cb)[: c.n], -mode_sum(c, ca)[: c.n]]) * c.weights)
    ma, mb = vs_metric(c, a, ops), vs_metric(c, b, ops)
    assert ma >= -1e-14 and mb >= -1e-14
    assert abs(vs_metric(c, s * a, ops) - s * s * ma) <= 1e-10 * max(ma, 1e-12) * max(1, s * s)
    # parallelogram law for a quadratic form
    lhs = vs_metric(c, a + b, ops) + vs_metric(c, a - b, ops)
    assert abs(lhs - 2 * (ma + mb)) <= 1e-9 * max(ma + mb, 1e-12)


@settings(max_examples=20, deadline=None)
@given(st.integers(2, 6), st.floats(0.2, 1.0))
def test_area_change_is_second_order(k, amp):
    c = circle(0.2, n=128)
    offs = np.cos(k * c.t)
    changes = [displace(c, amp * e * offs).area - c.area for e in (2e-3, 1e-3)]
    # radial offset d on a circle changes the area by exactly the integral of d^2 / 2
    for e, dA in zip((2e-3, 1e-3), changes):
        assert abs(dA - np.pi * (amp * e) ** 2 / 2) <= 1e-12
    assert 3.99 <= changes[0] / changes[1] <= 4.01
