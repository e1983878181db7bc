"""Quick self-check batteries behind ``sheetflow verify``.

Each suite returns rows (check, value, tolerance).  They run at modest
resolution so that the whole set finishes in about a minute; the full-size
versions live in the test suite.
"""
import numpy as np

from . import oracle
from .curves import circle, flat_pair, zero_mean
from .dynamics import SheetState, force_gate, integrate_path, kelvin_check, recover_pressure, weak_residual
from .hodge import (AreaSampler, DiscontinuousField, GlobalPart, GradientPart, StreamFunction,
                    bracket_compensation, circulation_part, gradient_field, project_hodge, tangent_compatibility)
from .metric import cometric, horizontal_lift, vs_metric
from .potential import MINUS, PLUS, LayerOperators, double_layer, jump_traces, neumann_extension, single_layer


def _smooth(rng, curve, modes=6):
    t = curve.t
    vals = []
    for _ in range(curve.n_loops):
        vals.append(sum(rng.normal() / k * np.cos(k * t + rng.uniform(0, 6.3)) for k in range(1, modes + 1)))
    return np.concatenate(vals)


def potentials(rng, n=128):
    rows = []
    c = flat_pair(n=n)
    ops = LayerOperators(c)
    worst = 0.0
    for k in range(0, 9):
        ref = oracle.strip_dtn_block(k, 0.5)
        for side, Mref in ((PLUS, ref), (MINUS, ref)):
            M = ops.dtn_matrix(side)
            e = np.cos(k * c.t)
            basis = np.zeros((2 * n, 2))
            basis[:n, 0] = e
            basis[n:, 1] = e
            # loop 0 lies at the bottom of D+; nu points down there
            got = np.array([[np.dot(M[i * n:(i + 1) * n] @ basis[:, j], e) / np.dot(e, e) for j in range(2)]
                            for i in range(2)])
            worst = max(worst, float(np.max(np.abs(got - Mref)) / np.max(np.abs(Mref))))
    rows.append(("dtn_strip_blocks", worst, 1e-8))
    cc = circle(0.2, n=n, modes={3: 0.01})
    ops = LayerOperators(cc)
    f = zero_mean(cc, _smooth(rng, cc) * cc.weights) / cc.weights
    g, (ep, em) = single_layer(cc, f, ops)
    vp, vm, dp, dm = jump_traces(ep, em)
    rows.append(("single_layer_continuity", float(np.max(np.abs(vp - vm))), 1e-7))
    rows.append(("single_layer_jump", float(np.max(np.abs(dp - dm - f))), 1e-7))
    g = _smooth(rng, cc)
    xi, (hp, hm) = double_layer(cc, g, ops)
    vp, vm, dp, dm = jump_traces(hp, hm)
    rows.append(("double_layer_jump", float(np.max(np.abs(vp - vm - g))), 1e-7))
    rows.append(("double_layer_flux", float(np.max(np.abs(dp - dm))), 1e-7))
    return rows


def hodge(rng, n=64):
    c = circle(0.2, n=n, modes={3: 0.01})
    ops = LayerOperators(c)
    smp = AreaSampler(c, 12)
    worst_o = worst_i = 0.0
    for _ in range(3):
        parts = {}
        for s in (PLUS, MINUS):
            q = zero_mean(c, _smooth(rng, c) * c.weights) / c.weights
            parts[s] = [GlobalPart(StreamFunction.random(rng, 2)), GradientPart(neumann_extension(ops, s, q)[1])]
        w = DiscontinuousField(c, parts[PLUS], parts[MINUS])
        v, ex = project_hodge(w, ops)
        worst_o = max(worst_o, abs(smp.inner(v, gradient_field(ex))) / smp.norm2(w))
        _, ex2 = project_hodge(v, ops)
        worst_i = max(worst_i, float(np.max(np.abs(ex2[0].single))))
    return [("orthogonality", worst_o, 1e-8), ("idempotency", worst_i, 1e-9)]


def metric(rng, n=128):
    c = flat_pair(n=n)
    ops = LayerOperators(c)
    worst = 0.0
    for k in (1, 2, 4, 8, 16):
        xi = np.zeros(c.n_total)
        xi[:n] = np.cos(k * c.t) * c.weights[:n]
        ref = oracle.strip_metric(k, (0.5, 0.5), (1.0, 0.0))
        worst = max(worst, abs(vs_metric(c, xi, ops) / ref - 1))
    cc = circle(0.2, n=64, modes={3: 0.01})
    ops = LayerOperators(cc)
    xi = zero_mean(cc, _smooth(rng, cc) * cc.weights)
    m = vs_metric(cc, xi, ops)
    e = AreaSampler(cc, 16).norm2(horizontal_lift(cc, xi, ops))
    f = _smooth(rng, cc)
    x, K = cometric(cc, f, ops)
    return [("strip_metric", worst, 1e-7), ("lift_energy", abs(e / m - 1), 1e-6),
            ("cometric_duality", abs(vs_metric(cc, x.xi, ops) / (2 * K) - 1), 1e-7)]


def dynamics(rng, n=64):
    c = circle(0.2, n=n)
    s = SheetState(c, 1e-2 * np.cos(2 * c.t))
    gate = force_gate(s)
    path = integrate_path(s, 1e-3, 50)
    H0, H1 = path[0].energy(), path[-1].energy()
    p = flat_pair(n=n, modes=[{2: 0.01}, {3: 0.01}])
    g2 = force_gate(SheetState(p, 0.01 * np.tile(np.cos(p.t), 2), (1.0, 0.0)))
    steady = SheetState(flat_pair(n=n), np.zeros(2 * n), (1.0, 0.0))
    moved = integrate_path(steady, 1e-3, 20)[-1]
    return [("gate_circle", gate.relative_error, 1e-4), ("gate_pair", g2.relative_error, 1e-4),
            ("energy_drift", abs(H1 / H0 - 1), 1e-6),
            ("area_drift", abs(path[-1].curve.area - c.area), 1e-8),
            ("steady_displacement", float(np.max(np.abs(moved.curve.points - steady.curve.points))), 1e-9),
            ("pressure_continuity", recover_pressure(path[-1]).residual, 1e-5),
            ("max_curl", kelvin_check(path[-1]).max_curl, 1e-6)]


def weak(rng, n=64):
    c = circle(0.2, n=n)
    b, now, a = integrate_path(SheetState(c, 1e-2 * np.cos(2 * c.t)), 1e-3, 2)
    tests = [StreamFunction.random(rng, 4, decay=0.3) for _ in range(3)]
    r = weak_residual(b, now, a, tests, 1e-3, n_radial=12)
    tc = tangent_compatibility(b.field(), now.field(), a.field(), 1e-3)
    return [("weak_residual", float(np.max(r)), 1e-5), ("tangent_compatibility", tc.residual, 1e-4)]


def bracket(rng, n=64):
    c = flat_pair(0.3, 0.7, n=n)
    S = StreamFunction.random(rng, 2)

    def U(curve):
        return DiscontinuousField.global_field(curve, S)

    def V(curve):
        ops = LayerOperators(curve)
        return DiscontinuousField(curve, [circulation_part(ops, PLUS, 0.8)], [circulation_part(ops, MINUS, -0.3)])

    res = [bracket_compensation(U, V, c, e).residual for e in (1e-2, 5e-3, 2.5e-3)]
    order = float(np.log2(res[1] / res[2]))
    return [("bracket_order", order, 2.0)]


SUITES = {"potentials": potentials, "hodge": hodge, "metric": metric, "dynamics": dynamics,
          "weak": weak, "bracket": bracket}
LOWER_BOUND = {"bracket_order"}


def run_suite(name, seed=0):
    rng = np.random.default_rng(seed)
    rows = []
    for check, value, tol in SUITES[name](rng):
        ok = value >= tol if check in LOWER_BOUND else value <= tol
        rows.append((name, check, float(value), tol, ok))
    return rows
