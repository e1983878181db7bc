import math

import numpy as np
import pytest

from sheetflow import oracle
from sheetflow.curves import circle, deform, flat_pair
from sheetflow.dynamics import SheetState
from sheetflow.errors import ConstraintError, TopologyError
from sheetflow.hodge import (AreaSampler, DiscontinuousField, GlobalPart, GradientPart, StreamFunction, anchor,
                             bracket_compensation, circulation_part, gradient_field, l2_inner, project_hodge,
                             taylor_shift, tangent_compatibility)
from sheetflow.metric import isotropy_field
from sheetflow.potential import MINUS, PLUS, LayerOperators, double_layer, neumann_extension, single_layer

from conftest import smooth_values, zero_flux_values


def two_sided(rng, curve, ops):
    parts = {}
    for s in (PLUS, MINUS):
        parts[s] = [GlobalPart(StreamFunction.random(rng, 2)),
                    GradientPart(neumann_extension(ops, s, zero_flux_values(rng, curve))[1])]
    return DiscontinuousField(curve, parts[PLUS], parts[MINUS])


class RadialSource:
    """u = x - c: divergence 2, used to trip the solenoidal check."""

    def __init__(self, center):
        self.center = np.asarray(center, float)

    def velocity(self, points):
        return np.atleast_2d(points) - self.center

    def trace(self, curve):
        return curve.points - self.center

    def jacobian_trace(self, curve):
        return np.tile(np.eye(2), (curve.n_total, 1, 1))


def test_stream_function_is_divergence_free(rng):
    S = StreamFunction.random(rng, 3)
    p = rng.random((20, 2))
    J = S.jacobian(p)
    assert np.max(np.abs(J[:, 0, 0] + J[:, 1, 1])) <= 1e-12
    h = 1e-6
    fd = (S.velocity(p + [h, 0]) - S.velocity(p - [h, 0])) / (2 * h)
    assert np.allclose(fd, J[:, :, 0], atol=1e-6)
    assert np.max(np.linalg.norm(J, axis=(1, 2), ord=2)) <= S.gradient_bound()


def test_field_parts_are_divergence_free(small_circle, rng):
    c, ops = small_circle
    w = two_sided(rng, c, ops)
    probes = {PLUS: np.array([[0.5, 0.5], [0.55, 0.45]]), MINUS: np.array([[0.05, 0.1], [0.9, 0.8]])}
    for s, p in probes.items():
        assert np.max(np.abs(w.divergence(s, p))) <= 1e-6


def test_anchor_of_tangent_fields_vanishes(small_circle, rng):
    c, ops = small_circle
    v, _ = project_hodge(two_sided(rng, c, ops), ops)
    t = isotropy_field(v, ops)
    assert np.max(np.abs(anchor(t).xi)) <= 1e-9
    up, um = t.traces()
    assert np.max(np.abs(np.sum(up * c.normals, axis=1))) <= 1e-8


def test_anchor_of_double_layer_gradient(small_circle, rng):
    c, ops = small_circle
    xi, exts = double_layer(c, smooth_values(rng, c), ops)
    assert np.allclose(anchor(gradient_field(exts)).xi, xi.xi, atol=1e-9)


def test_anchor_has_zero_mean(small_pair, rng):
    c, ops = small_pair
    for _ in range(5):
        assert abs(anchor(two_sided(rng, c, ops)).xi.sum()) <= 1e-12


def test_projection_of_normally_continuous_fields(small_pair, rng):
    c, ops = small_pair
    w = DiscontinuousField.global_field(c, StreamFunction.random(rng, 2))
    w = w + DiscontinuousField(c, [circulation_part(ops, PLUS, 0.7)], [circulation_part(ops, MINUS, -0.2)])
    v, (hp, hm) = project_hodge(w, ops)
    assert np.max(np.abs(hp.single)) <= 1e-8


def test_pure_gradient_input_projects_to_zero(small_circle, rng):
    c, ops = small_circle
    _, exts = single_layer(c, zero_flux_values(rng, c), ops)
    w = gradient_field(exts)
    v, _ = project_hodge(w, ops)
    smp = AreaSampler(c, 12)
    assert smp.norm2(v) <= 1e-16 * smp.norm2(w)


def test_projection_on_flat_pair_matches_strip_split(flat64):
    c, ops = flat64
    q = np.zeros(c.n_total)
    q[:64] = np.cos(2 * c.t)
    w = DiscontinuousField(c, [GradientPart(neumann_extension(ops, PLUS, q)[1])], [])
    v, (hp, hm) = project_hodge(w, ops)
    ref = oracle.strip_single_layer(2, c.strip_heights, (1.0, 0.0))
    g, _, _ = hp.boundary()
    e = np.cos(2 * c.t)
    for loop in range(2):
        amp = np.dot(g[c.loop_slice(loop)], e) / np.dot(e, e)
        assert amp == pytest.approx(ref[loop], abs=1e-7)


def test_projection_output_is_normally_continuous_and_keeps_anchor(small_pair, rng):
    c, ops = small_pair
    w = two_sided(rng, c, ops)
    v, _ = project_hodge(w, ops)
    assert np.max(np.abs(v.jump().normal_jump)) <= 1e-7
    v2, _ = project_hodge(v, ops)
    assert np.allclose(anchor(v2).xi, anchor(v).xi, atol=1e-12)


def test_projection_rejects_sources(small_circle):
    c, ops = small_circle
    w = DiscontinuousField(c, [RadialSource((0.5, 0.5))], [])
    with pytest.raises(ConstraintError, match="divergence"):
        project_hodge(w, ops)


def test_l2_inner_is_symmetric(small_circle, rng):
    c, ops = small_circle
    u, v = two_sided(rng, c, ops), two_sided(rng, c, ops)
    smp = AreaSampler(c, 12)
    assert l2_inner(u, v, smp) == pytest.approx(l2_inner(v, u, smp), rel=1e-14)
    assert smp.norm2(u.scaled(2.0)) == pytest.approx(4 * smp.norm2(u), rel=1e-14)


def test_circulation_part_needs_a_loop_pair(small_circle):
    c, ops = small_circle
    with pytest.raises(TopologyError):
        circulation_part(ops, PLUS, 1.0)


def test_taylor_shift_reproduces_a_harmonic_field(small_circle, rng):
    c, ops = small_circle
    _, ext = neumann_extension(ops, MINUS, zero_flux_values(rng, c))
    trace = GradientPart(ext).trace(c)
    delta = 2e-3 * c.normals
    _, ref = ext.evaluate(c.points + delta)
    assert np.max(np.abs(taylor_shift(c, trace, delta) - ref)) <= 1e-6 * np.max(np.abs(ref))


def _families(rng):
    S = StreamFunction.random(rng, 2)
    S2 = StreamFunction.random(rng, 2)

    def smooth(curve):
        return DiscontinuousField.global_field(curve, S)

    def tangent(curve):
        ops = LayerOperators(curve)
        w = DiscontinuousField(curve, [GlobalPart(S2)], [circulation_part(ops, MINUS, 0.4)])
        w = w + DiscontinuousField(curve, [circulation_part(ops, PLUS, -0.3)], [])
        v, _ = project_hodge(w, ops)
        return isotropy_field(v, ops)

    return smooth, tangent


def test_bracket_of_tangent_fields_has_no_normal_jump():
    rng = np.random.default_rng(7)
    _, tangent = _families(rng)
    c = flat_pair(0.3, 0.7, n=32)
    rep = bracket_compensation(tangent, tangent, c, 1e-2)
    assert rep.residual <= 1e-8
    assert np.max(np.abs(rep.u_along_v)) <= 1e-8


def test_bracket_smooth_with_tangent_is_second_order():
    rng = np.random.default_rng(8)
    smooth, tangent = _families(rng)
    c = flat_pair(0.3, 0.7, n=32)
    r = [bracket_compensation(smooth, tangent, c, e).residual for e in (1e-2, 5e-3, 2.5e-3)]
    assert math.log2(r[0] / r[1]) >= 1.9 and math.log2(r[1] / r[2]) >= 1.9


def test_tangent_compatibility_static_and_frozen():
    c = flat_pair(n=32)
    fld = SheetState(c, np.zeros(64), (1.0, 0.0)).field()
    rep = tangent_compatibility(fld, fld, fld, 1e-3)
    assert rep.absolute <= 1e-12 and rep.residual <= 1e-12
    cc = circle(0.2, n=64)
    s = SheetState(cc, 1e-2 * np.cos(2 * cc.t))
    fr = s.field()
    xi = s.velocity_density()[0].xi
    moved = [DiscontinuousField(deform(cc, xi, h), fr.parts[PLUS], fr.parts[MINUS]) for h in (-1e-3, 1e-3)]
    assert tangent_compatibility(moved[0], fr, moved[1], 1e-3).residual >= 0.1
