import math

import numpy as np
import pytest

from sheetflow.curves import (CONTRACTIBLE, LOOP_PAIR, CoVectorVS, TangentVS, arclength_spacing_deviation,
                              build_curve, circle, deform, displace, flat_pair, mean_free, resample,
                              spectral_derivative, transport_identity_check, upsample, zero_mean)
from sheetflow.errors import ConstraintError, SelfIntersectionError, TopologyError


def test_circle_area_and_length():
    c = circle(0.2, n=256)
    assert c.area == pytest.approx(math.pi * 0.04, abs=1e-10)
    assert c.length == pytest.approx(2 * math.pi * 0.2, abs=1e-12)
    assert np.allclose(c.curvature, 5.0)


def test_normal_points_out_of_the_disk():
    c = circle(0.2, n=64)
    radial = c.points - 0.5
    assert np.all(np.sum(radial * c.normals, axis=1) > 0)


def test_flat_pair_heights_and_normals():
    c = flat_pair(0.25, 0.75, n=64)
    assert c.strip_heights == pytest.approx((0.5, 0.5), abs=1e-14)
    assert np.allclose(c.normals[:64], [0, -1])
    assert np.allclose(c.normals[64:], [0, 1])


def test_mode_perturbations_keep_the_area():
    assert circle(0.2, n=128, modes={2: 0.01, 5: -0.003}).area == pytest.approx(math.pi * 0.04, abs=1e-12)
    assert flat_pair(0.2, 0.6, n=64, modes=[{1: 0.02}, {3: 0.01}]).strip_heights[0] == pytest.approx(0.4, abs=1e-14)


def test_figure_eight_is_rejected_with_location():
    t = 2 * math.pi * (np.arange(128) + 0.3) / 128
    pts = np.stack([0.5 + 0.2 * np.sin(t), 0.5 + 0.2 * np.sin(t) * np.cos(t)], axis=1)
    with pytest.raises(SelfIntersectionError) as err:
        build_curve(CONTRACTIBLE, [pts])
    assert np.allclose(err.value.location, [0.5, 0.5], atol=1e-2)


def test_topology_checks():
    c = circle(0.2, n=32)
    with pytest.raises(TopologyError):
        build_curve(LOOP_PAIR, [c.points])
    with pytest.raises(TopologyError):
        _ = c.strip_heights
    x = np.arange(32) / 32
    vertical = np.stack([np.full(32, 0.3), x], axis=1)
    with pytest.raises(TopologyError):
        build_curve(LOOP_PAIR, [vertical, vertical + (0.4, 0)])
    with pytest.raises(ValueError):
        circle(0.2, n=8)


def test_reversed_input_is_reoriented():
    c = circle(0.2, n=64)
    r = build_curve(CONTRACTIBLE, [c.points[::-1]])
    assert r.area == pytest.approx(c.area, abs=1e-14)


def test_zero_density_leaves_the_sheet_alone():
    c = circle(0.2, n=64, modes={3: 0.01})
    assert np.array_equal(deform(c, np.zeros(64), 0.1).points, c.points)


def test_circle_deformation_matches_radial_offset():
    c = circle(0.2, n=128)
    eps, dt = 0.3, 0.1
    xi = eps * np.cos(2 * c.t) * c.weights
    moved = deform(c, xi, dt)
    r = 0.2 + eps * dt * np.cos(2 * c.t)
    assert np.allclose(moved.points, 0.5 + r[:, None] * np.stack([np.cos(c.t), np.sin(c.t)], axis=1), atol=1e-14)
    # exact area of r(t) = r0 + d cos 2t is pi r0^2 + pi d^2 / 2
    assert moved.area == pytest.approx(math.pi * 0.04 + math.pi * (eps * dt) ** 2 / 2, abs=1e-14)


def test_area_change_is_second_order(rng):
    c = circle(0.2, n=128, modes={3: 0.01})
    xi = zero_mean(c, rng.normal(size=3) @ np.array([np.cos(k * c.t) for k in (1, 2, 4)]) * c.weights)
    changes = [abs(deform(c, xi, dt).area - c.area) for dt in (1e-2, 5e-3, 2.5e-3)]
    orders = np.log2(np.array(changes[:-1]) / np.array(changes[1:]))
    assert np.all(orders >= 1.9)


def test_loop_pair_flux_constraint():
    c = flat_pair(n=64)
    xi = np.zeros(128)
    xi[:64] = 0.1 * c.weights[:64]
    with pytest.raises(ConstraintError):
        deform(c, xi, 0.1)
    xi[64:] = -0.1 * c.weights[64:]
    moved = deform(c, xi, 0.1)
    assert np.allclose(moved.points[:, 1] - c.points[:, 1], -0.01)
    assert moved.strip_heights[0] == pytest.approx(0.5, abs=1e-14)


def test_collision_returns_previous_curve():
    c = flat_pair(0.45, 0.55, n=32)
    off = np.concatenate([-0.15 * (1 + np.cos(c.t)), np.zeros(32)])
    with pytest.raises(SelfIntersectionError) as err:
        displace(c, off)
    assert err.value.curve is c


def test_resample_round_trip_and_area():
    c = circle(0.2, n=64)
    up = resample(c, 256)
    assert up.area == pytest.approx(c.area, abs=1e-12)
    assert np.allclose(resample(up, 64).points, c.points, atol=1e-10)
    p = resample(circle(0.2, n=128, modes={2: 0.02, 3: 0.01}), 128)
    back = resample(resample(p, 200), 128)
    assert np.max(np.abs(back.points - p.points)) < 1e-10


def test_resample_equalizes_arclength():
    p = circle(0.2, n=128, modes={2: 0.02, 3: 0.01})
    assert arclength_spacing_deviation(p) > 1e-3
    assert arclength_spacing_deviation(resample(p, 128)) <= 1e-8
    pair = flat_pair(n=128, modes=[{1: 0.03}, {2: 0.01}])
    assert arclength_spacing_deviation(resample(pair, 128)) <= 1e-8


def test_resample_carries_marker_functions():
    c = circle(0.2, n=128, modes={2: 0.02})
    f = np.cos(c.t)
    new, g = resample(c, 128, f)
    # f is cos(t) in the old parameter, i.e. (x - 0.5) / r(t)
    r = np.hypot(*(new.points - 0.5).T)
    assert np.allclose(g, (new.points[:, 0] - 0.5) / r, atol=1e-10)
    with pytest.raises(ValueError):
        resample(c, 8)


def test_spectral_tools():
    t = 2 * math.pi * np.arange(32) / 32
    assert np.allclose(spectral_derivative(np.sin(3 * t)), 3 * np.cos(3 * t), atol=1e-12)
    assert np.allclose(upsample(np.sin(3 * t), 4), np.sin(3 * 2 * math.pi * np.arange(128) / 128), atol=1e-13)


def test_density_helpers(rng):
    c = flat_pair(n=32, modes=[{1: 0.05}, {}])
    xi = zero_mean(c, rng.normal(size=64))
    assert abs(xi.sum()) <= 1e-12
    assert abs(TangentVS.from_normal_velocity(c, rng.normal(size=64)).xi.sum()) <= 1e-12
    v = mean_free(c, rng.normal(size=64))
    assert abs(np.dot(c.weights, v)) <= 1e-14
    assert np.allclose(CoVectorVS(np.ones(3)).shifted(2.0).f, 3.0)


def test_transport_identity_constant_function():
    res = transport_identity_check(lambda t: circle(0.2, n=64), lambda t, p, s: np.full(len(p), 2.0), 0.0, 1e-3)
    assert res <= 1e-12


def test_transport_identity_growing_disk():
    fam = lambda t: circle(0.2 + 0.05 * t, n=128)
    ind = lambda t, p, s: np.full(len(p), 1.0 if s == 1 else 0.0)
    assert transport_identity_check(fam, ind, 0.3, 1e-3) <= 1e-6


def test_transport_identity_translating_pair_is_second_order():
    fam = lambda t: flat_pair(0.25 + 0.1 * math.sin(t), 0.75 + 0.1 * math.sin(t), n=64)
    g = lambda t, p, s: (p[:, 1] * (1 + t * t) if s == 1
                         else p[:, 0] + math.sin(t) * np.sin(2 * math.pi * p[:, 1]))
    r = [transport_identity_check(fam, g, 0.4, h) for h in (1e-2, 5e-3, 2.5e-3)]
    assert math.log2(r[0] / r[1]) >= 1.9 and math.log2(r[1] / r[2]) >= 1.9
