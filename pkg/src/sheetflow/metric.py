"""Kinetic-energy metric on sheets, its horizontal lift, cometric and shooting distance."""
from dataclasses import dataclass
import math

import numpy as np

from .curves import CONTRACTIBLE, check_zero_sum, TangentVS, zero_mean
from .errors import ConvergenceError, DomainError, SheetflowError, TopologyError
from .hodge import AreaSampler, DiscontinuousField, GradientPart, anchor
from .potential import MINUS, PLUS, LayerOperators, double_layer, nearest_points, neumann_extension


def _operators(curve, ops):
    if ops is None:
        return LayerOperators(curve)
    if ops.curve is not curve:
        raise ValueError("operators were assembled for a different sheet")
    return ops


def _flux(curve, xi):
    xi = np.asarray(xi, dtype=float)
    check_zero_sum(xi, "sheet velocity")
    return xi / curve.weights


def ntd_sum(ops, q):
    """(NtD+ + NtD-) applied to a zero-flux normal derivative (per arclength)."""
    gp, _ = ops.neumann_solve(PLUS, q)
    gm, _ = ops.neumann_solve(MINUS, -q)
    return gp - gm


def vs_metric(curve, xi, ops=None, route="operator", sampler=None):
    """Squared length of the sheet velocity xi (normal flux per marker).

    ``route='operator'`` pairs xi with the Neumann-to-Dirichlet sum; ``route='energy'``
    integrates |grad f|^2 of the two Neumann extensions over the two sides.
    """
    ops = _operators(curve, ops)
    q = _flux(curve, xi)
    if route == "operator":
        return float(np.dot(ops.weights * q, ntd_sum(ops, q)))
    if route == "energy":
        sampler = sampler or AreaSampler(curve)
        return sampler.norm2(horizontal_lift(curve, xi, ops))
    raise ValueError(f"unknown route {route!r}")


def horizontal_lift(curve, xi, ops=None):
    """Two-sided gradient field with normal flux xi and minimal kinetic energy."""
    ops = _operators(curve, ops)
    q = _flux(curve, xi)
    _, ep = neumann_extension(ops, PLUS, q)
    _, em = neumann_extension(ops, MINUS, -q)
    return DiscontinuousField(curve, [GradientPart(ep)], [GradientPart(em)])


def isotropy_field(w, ops=None):
    """Turn any DSVect field into one tangent to the sheet by removing its horizontal lift."""
    c = w.curve
    return w - horizontal_lift(c, anchor(w).xi, ops)


@dataclass
class SubmersionReport:
    energy_gap: float
    orthogonality: list
    passed: bool


def submersion_check(curve, xi, ops=None, tangent_fields=(), sampler=None, tol_energy=1e-7, tol_orth=1e-8):
    """Energy of the lift versus the metric, and orthogonality of the lift to fields tangent to the sheet."""
    ops = _operators(curve, ops)
    sampler = sampler or AreaSampler(curve)
    lift = horizontal_lift(curve, xi, ops)
    m = vs_metric(curve, xi, ops)
    e = sampler.norm2(lift)
    gap = abs(e - m) / max(m, 1e-300)
    orth = []
    for w in tangent_fields:
        ww = sampler.norm2(w)
        orth.append(abs(sampler.inner(lift, w)) / max(math.sqrt(e * ww), 1e-300))
    ok = gap <= tol_energy and all(o <= tol_orth for o in orth)
    return SubmersionReport(gap, orth, ok)


def cometric(curve, f, ops=None, route="double_layer"):
    """Sheet velocity xi and kinetic energy for the momentum f (potential jump, modulo constants)."""
    ops = _operators(curve, ops)
    f = np.asarray(f, dtype=float)
    if route == "double_layer":
        xi, _ = double_layer(curve, f, ops)
        xi = xi.xi
    elif route == "ntd":
        w = ops.weights
        n = len(w)
        N = ops.ntd_matrix(PLUS) + ops.ntd_matrix(MINUS)
        A = np.zeros((n + 1, n + 1))
        A[:n, :n] = N
        A[:n, n] = 1.0
        A[n, :n] = w
        q = np.linalg.solve(A, np.append(f, 0.0))[:n]
        xi = zero_mean(curve, q * w)
    else:
        raise ValueError(f"unknown route {route!r}")
    return TangentVS(xi), 0.5 * float(np.dot(f, xi))


# ---------------------------------------------------------------- shooting

@dataclass
class ShootingResult:
    distance: float
    momentum: np.ndarray
    path: list
    mismatch: float
    iterations: int


def _mode_basis(curve, n_modes):
    cols = []
    t = curve.t
    for i in range(curve.n_loops):
        for k in range(1, n_modes + 1):
            for fn in (np.cos, np.sin):
                v = np.zeros(curve.n_total)
                v[curve.loop_slice(i)] = fn(k * t)
                cols.append(v)
    if curve.n_loops == 2:
        v = np.zeros(curve.n_total)
        v[curve.loop_slice(0)] = 1.0
        cols.append(v)
    return np.array(cols).T


def _mismatch(curve, target):
    near = nearest_points(target, curve.points)
    return near.distance * near.side


def shape_distance_shooting(start, target, n_modes=6, steps=8, tol=1e-5, max_iter=12,
                            area_tol=1e-8, fd_step=1e-6):
    """Distance between two nearby sheets of equal area by single shooting.

    The unknowns are Fourier coefficients of the initial momentum; the residual is
    the signed distance of the shot sheet's markers from ``target``.  Iteration stops
    once the largest distance falls below ``tol`` times the initial one (or 1e-13).
    """
    from .dynamics import SheetState, integrate_path

    if start.topology != target.topology:
        raise TopologyError("sheets must share a topology")
    if start.topology == CONTRACTIBLE and abs(start.area - target.area) > area_tol:
        raise DomainError(f"areas differ by {abs(start.area - target.area):.2e}")
    if start.topology != CONTRACTIBLE:
        gap = np.max(np.abs(np.array(start.strip_heights) - np.array(target.strip_heights)))
        if gap > area_tol:
            raise DomainError(f"strip areas differ by {gap:.2e}")
    B = _mode_basis(start, n_modes)

    def shoot(c):
        state = SheetState(start, B @ c)
        return integrate_path(state, 1.0 / steps, steps)

    c = np.zeros(B.shape[1])
    path = shoot(c)
    r = _mismatch(path[-1].curve, target)
    best = (np.max(np.abs(r)), c, path)
    goal = max(tol * best[0], 1e-13)
    it = 0
    for it in range(1, max_iter + 1):
        if best[0] <= goal:
            break
        J = np.empty((len(r), len(c)))
        for j in range(len(c)):
            e = np.zeros_like(c)
            e[j] = fd_step
            J[:, j] = (_mismatch(shoot(c + e)[-1].curve, target) - r) / fd_step
        dc = np.linalg.lstsq(J, -r, rcond=None)[0]
        lam = 1.0
        while lam > 1e-3:
            trial = c + lam * dc
            try:
                tp = shoot(trial)
                tr = _mismatch(tp[-1].curve, target)
            except SheetflowError:
                lam *= 0.5
                continue
            if np.max(np.abs(tr)) < np.max(np.abs(r)):
                break
            lam *= 0.5
        else:
            break
        c, path, r = trial, tp, tr
        if np.max(np.abs(r)) < best[0]:
            best = (np.max(np.abs(r)), c, path)
    if best[0] > goal:
        raise ConvergenceError(f"shooting stalled at mismatch {best[0]:.2e}", best=best)
    mis, c, path = best
    energy = 2.0 * path[0].kinetic()
    return ShootingResult(math.sqrt(max(energy, 0.0)), B @ c, path, float(mis), it)
