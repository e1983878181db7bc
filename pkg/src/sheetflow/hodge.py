"""Two-sided divergence-free fields, their jumps, and the singular Hodge splitting.

A ``DiscontinuousField`` is a sum of constructive parts on each side of the sheet:
global stream-function fields, gradients of harmonic extensions, and circulation
fields.  Traces at the markers come from the parts themselves (jump relations for
layer potentials, closed forms for stream functions), and velocity gradients on
the sheet use that every part is curl- and divergence-free near the sheet.
"""
from dataclasses import dataclass
import math

import numpy as np

from .curves import LOOP_PAIR, TangentVS, deform, zero_mean
from .errors import ConstraintError, TopologyError
from .potential import (MINUS, PLUS, LayerOperators, ProbeOperator, neumann_extension,
                        nearest_points, side_sign, single_layer)
from .quadrature import domain_rule


# ---------------------------------------------------------------- parts

class StreamFunction:
    """Smooth field (d psi/dy, -d psi/dx) + mean on the whole torus.

    psi = sum_j a_j cos(2 pi k_j . x) + b_j sin(2 pi k_j . x)
    """

    def __init__(self, wavevectors, cos_coeffs, sin_coeffs, mean=(0.0, 0.0)):
        self.k = np.atleast_2d(np.asarray(wavevectors, dtype=float)).reshape(-1, 2)
        self.a = np.asarray(cos_coeffs, dtype=float).ravel()
        self.b = np.asarray(sin_coeffs, dtype=float).ravel()
        self.mean = np.asarray(mean, dtype=float)

    @classmethod
    def random(cls, rng, kmax=3, scale=1.0, decay=1.0, mean_scale=0.0):
        ks = [(i, j) for i in range(-kmax, kmax + 1) for j in range(0, kmax + 1)
              if (j > 0 or i > 0) and i * i + j * j <= kmax * kmax]
        ks = np.array(ks, dtype=float)
        amp = scale * np.exp(-decay * np.hypot(ks[:, 0], ks[:, 1])) / (2 * math.pi)
        return cls(ks, amp * rng.normal(size=len(ks)), amp * rng.normal(size=len(ks)),
                   mean_scale * rng.normal(size=2))

    def _phase(self, p):
        return 2 * math.pi * (np.atleast_2d(p) @ self.k.T)

    def psi(self, p):
        ph = self._phase(p)
        return np.cos(ph) @ self.a + np.sin(ph) @ self.b

    def velocity(self, p):
        ph = self._phase(p)
        d = -np.sin(ph) * self.a + np.cos(ph) * self.b  # d psi / d phase
        kx, ky = 2 * math.pi * self.k[:, 0], 2 * math.pi * self.k[:, 1]
        return np.stack([d @ ky, -(d @ kx)], axis=-1) + self.mean

    def jacobian(self, p):
        """du_i/dx_j at the points, shape (M, 2, 2)."""
        ph = self._phase(p)
        d2 = -np.cos(ph) * self.a - np.sin(ph) * self.b  # second derivative in phase
        kx, ky = 2 * math.pi * self.k[:, 0], 2 * math.pi * self.k[:, 1]
        J = np.empty((len(ph), 2, 2))
        J[:, 0, 0] = d2 @ (ky * kx)
        J[:, 0, 1] = d2 @ (ky * ky)
        J[:, 1, 0] = -(d2 @ (kx * kx))
        J[:, 1, 1] = -(d2 @ (kx * ky))
        return J

    def gradient_bound(self):
        """Upper bound of |grad u| over the torus."""
        kk = 4 * math.pi ** 2 * np.sum(self.k ** 2, axis=1)
        return float(np.sum(kk * np.hypot(self.a, self.b)))


def _sheet_jacobian(curve, trace):
    """Velocity gradient on the sheet for a curl- and divergence-free field from its trace."""
    ds = np.stack([curve.derivative(trace[:, 0]), curve.derivative(trace[:, 1])], axis=1)
    tau, nu = curve.tangents, curve.normals
    a = np.sum(nu * ds, axis=1)
    b = np.sum(tau * ds, axis=1)
    dn = a[:, None] * tau - b[:, None] * nu
    return ds[:, :, None] * tau[:, None, :] + dn[:, :, None] * nu[:, None, :]


class GlobalPart:
    """A stream-function field restricted to one side."""

    def __init__(self, stream):
        self.stream = stream

    def velocity(self, points):
        return self.stream.velocity(points)

    def velocity_batch(self, probe, points):
        return self.stream.velocity(points)

    def trace(self, curve):
        return self.stream.velocity(curve.points)

    def jacobian_trace(self, curve):
        return self.stream.jacobian(curve.points)

    def curve_of(self):
        return None


class GradientPart:
    """Gradient of a harmonic extension living on one side."""

    def __init__(self, ext):
        self.ext = ext

    def velocity(self, points):
        return self.ext.evaluate(points, check_side=False)[1]

    def velocity_batch(self, probe, points):
        return probe.extension(self.ext)[1]

    def trace(self, curve):
        return self.ext.boundary_gradient()

    def jacobian_trace(self, curve):
        return _sheet_jacobian(self.ext.curve, self.ext.boundary_gradient())

    def curve_of(self):
        return self.ext.curve


class CirculationPart:
    """theta * e_x + grad w: harmonic on one side, tangent to the sheet, period theta."""

    def __init__(self, theta, ext):
        self.theta = float(theta)
        self.ext = ext

    def _const(self):
        return np.array([self.theta, 0.0])

    def velocity(self, points):
        if self.ext is None:
            return np.broadcast_to(self._const(), np.atleast_2d(points).shape).copy()
        return self.ext.evaluate(points, check_side=False)[1] + self._const()

    def velocity_batch(self, probe, points):
        if self.ext is None:
            return np.broadcast_to(self._const(), np.atleast_2d(points).shape).copy()
        return probe.extension(self.ext)[1] + self._const()

    def trace(self, curve):
        if self.ext is None:
            return np.broadcast_to(self._const(), (curve.n_total, 2)).copy()
        return self.ext.boundary_gradient() + self._const()

    def jacobian_trace(self, curve):
        if self.ext is None:
            return np.zeros((curve.n_total, 2, 2))
        return _sheet_jacobian(self.ext.curve, self.trace(curve))

    def curve_of(self):
        return None if self.ext is None else self.ext.curve


def circulation_part(ops, side, theta):
    """Harmonic field on one side of a loop pair with period theta and no normal component."""
    curve = ops.curve
    if curve.topology != LOOP_PAIR:
        raise TopologyError("circulation classes exist only for loop pairs")
    s = side_sign(side)
    if theta == 0.0:
        return CirculationPart(0.0, None)
    # outward normal of the side is s * nu; cancel theta * e_x . n on the sheet
    data = -theta * s * curve.normals[:, 0]
    data = data - np.dot(ops.weights, data) / ops.weights.sum()
    _, ext = neumann_extension(ops, s, data)
    return CirculationPart(theta, ext)


# ---------------------------------------------------------------- fields

@dataclass
class JumpData:
    tangential_jump: np.ndarray
    normal_jump: np.ndarray


class DiscontinuousField:
    """Sum of weighted parts on each side of a sheet."""

    def __init__(self, curve, plus=(), minus=()):
        self.curve = curve
        self.parts = {PLUS: list(_weighted(plus)), MINUS: list(_weighted(minus))}

    @classmethod
    def global_field(cls, curve, stream):
        part = GlobalPart(stream)
        return cls(curve, [part], [part])

    def __add__(self, other):
        return DiscontinuousField(self.curve, self.parts[PLUS] + other.parts[PLUS],
                                  self.parts[MINUS] + other.parts[MINUS])

    def __sub__(self, other):
        return self + other.scaled(-1.0)

    def scaled(self, c):
        return DiscontinuousField(self.curve, [(c * a, p) for a, p in self.parts[PLUS]],
                                  [(c * a, p) for a, p in self.parts[MINUS]])

    def side_velocity(self, side, points):
        s = side_sign(side)
        p = np.atleast_2d(points)
        out = np.zeros((len(p), 2))
        for a, part in self.parts[s]:
            out += a * part.velocity(p)
        return out

    def velocity(self, points):
        p = np.atleast_2d(np.asarray(points, dtype=float))
        side = nearest_points(self.curve, p).side
        out = np.zeros((len(p), 2))
        for s in (PLUS, MINUS):
            idx = np.nonzero(side == s)[0]
            if idx.size:
                out[idx] = self.side_velocity(s, p[idx])
        return out

    def traces(self):
        c = self.curve
        return tuple(sum((a * part.trace(c) for a, part in self.parts[s]), np.zeros((c.n_total, 2)))
                     for s in (PLUS, MINUS))

    def jacobian_traces(self):
        c = self.curve
        return tuple(sum((a * part.jacobian_trace(c) for a, part in self.parts[s]),
                         np.zeros((c.n_total, 2, 2))) for s in (PLUS, MINUS))

    def jump(self):
        up, um = self.traces()
        d = up - um
        c = self.curve
        return JumpData(np.sum(d * c.tangents, axis=1), np.sum(d * c.normals, axis=1) * c.weights)

    def divergence(self, side, points, h=1e-4):
        """Central-difference divergence of one side's field at interior points."""
        p = np.atleast_2d(points)
        ex, ey = np.array([h, 0.0]), np.array([0.0, h])
        ux = self.side_velocity(side, p + ex)[:, 0] - self.side_velocity(side, p - ex)[:, 0]
        uy = self.side_velocity(side, p + ey)[:, 1] - self.side_velocity(side, p - ey)[:, 1]
        return (ux + uy) / (2 * h)


def _weighted(parts):
    for p in parts:
        if isinstance(p, tuple):
            yield p
        else:
            yield (1.0, p)


class AreaSampler:
    """Quadrature nodes of both sides plus cached probe operators for batch evaluation."""

    def __init__(self, curve, n_radial=24):
        self.curve = curve
        self.rules = {s: domain_rule(curve, s, n_radial=n_radial) for s in (PLUS, MINUS)}
        self._probes = {}

    def probe(self, side):
        if side not in self._probes:
            self._probes[side] = ProbeOperator(self.curve, self.rules[side][0])
        return self._probes[side]

    def sample(self, field, side):
        pts = self.rules[side][0]
        out = np.zeros((len(pts), 2))
        for a, part in field.parts[side]:
            if isinstance(part, GlobalPart):
                out += a * part.velocity(pts)
            else:
                out += a * part.velocity_batch(self.probe(side), pts)
        return out

    def inner(self, u, v):
        total = 0.0
        for s in (PLUS, MINUS):
            w = self.rules[s][1]
            total += float(np.dot(w, np.sum(self.sample(u, s) * self.sample(v, s), axis=1)))
        return total

    def norm2(self, u):
        return self.inner(u, u)

    def integrate(self, side, values):
        return float(np.dot(self.rules[side][1], values))


def l2_inner(u, v, sampler=None):
    sampler = sampler or AreaSampler(u.curve)
    return sampler.inner(u, v)


# ---------------------------------------------------------------- operations

def anchor(u):
    """Normal flux density (u . nu) ds induced on the sheet, with the flux removed."""
    up, um = u.traces()
    c = u.curve
    vn = 0.5 * np.sum((up + um) * c.normals, axis=1)
    return TangentVS.from_density(c, vn * c.weights)


def project_hodge(w, ops=None, flux_tol=1e-8):
    """Split w = v + grad h with v normally continuous and h continuous across the sheet.

    Returns (v, (ext+, ext-)) where ext are the two sides of h.
    """
    curve = w.curve
    ops = ops or LayerOperators(curve)
    up, um = w.traces()
    wt = ops.weights
    flux = [float(np.dot(wt, np.sum(t * curve.normals, axis=1))) for t in (up, um)]
    scale = max(1.0, float(np.dot(wt, np.hypot(up[:, 0], up[:, 1]) + np.hypot(um[:, 0], um[:, 1]))))
    if max(abs(flux[0]), abs(flux[1])) > flux_tol * scale:
        probes = _interior_probes(curve)
        worst = max(float(np.max(np.abs(w.divergence(s, probes[s])))) for s in (PLUS, MINUS) if len(probes[s]))
        raise ConstraintError(f"field is not divergence-free (net sheet flux {max(map(abs, flux)):.2e}, "
                              f"max probe divergence {worst:.2e})")
    f = np.sum((up - um) * curve.normals, axis=1)
    f = f - np.dot(wt, f) / wt.sum()
    _, (hp, hm) = single_layer(curve, f, ops)
    v = w - DiscontinuousField(curve, [GradientPart(hp)], [GradientPart(hm)])
    return v, (hp, hm)


def _interior_probes(curve, n=16, margin=0.05):
    rng = np.random.default_rng(0)
    p = rng.random((4 * n, 2))
    near = nearest_points(curve, p)
    ok = near.distance > margin
    return {s: p[ok & (near.side == s)][:n] for s in (PLUS, MINUS)}


def gradient_field(exts):
    hp, hm = exts
    return DiscontinuousField(hp.curve, [GradientPart(hp)], [GradientPart(hm)])


def taylor_shift(curve, trace, delta, order=4):
    """Move a curl- and divergence-free trace off the sheet by ``delta`` (N, 2).

    u_x - i u_y is analytic near the sheet, so its complex derivatives follow from
    tangential derivatives of the trace and the Taylor series needs no normal data.
    """
    w = trace[:, 0] - 1j * trace[:, 1]
    tau = curve.tangents[:, 0] + 1j * curve.tangents[:, 1]
    dz = delta[:, 0] + 1j * delta[:, 1]
    out = w.copy()
    term = w
    power = np.ones_like(dz)
    for k in range(1, order + 1):
        term = (curve.derivative(term.real) + 1j * curve.derivative(term.imag)) / tau
        power = power * dz / k
        out = out + term * power
    return np.stack([out.real, -out.imag], axis=1)


def side_traces_at(field, targets, order=4):
    """Each side's field continued from its sheet trace to ``targets`` near the markers."""
    c = field.curve
    targets = np.asarray(targets, dtype=float)
    d = targets - c.points
    out = []
    for s in (PLUS, MINUS):
        total = np.zeros((c.n_total, 2))
        harmonic = np.zeros((c.n_total, 2))
        for a, part in field.parts[s]:
            if isinstance(part, GlobalPart):
                total += a * part.velocity(targets)
            else:
                harmonic += a * part.trace(c)
        out.append(total + taylor_shift(c, harmonic, d, order))
    return out


def eulerian_traces(field, targets):
    """Side traces of ``field`` moved from its own markers to ``targets``."""
    return side_traces_at(field, targets)


def bracket_compensation(U, V, curve, eps):
    """Normal jump of [U, V]^R + #U.V - #V.U on the sheet.

    ``U`` and ``V`` map a SheetCurve to a DiscontinuousField.  The derivative of a
    section along a sheet motion is a centered eps-difference of its traces moved
    back to the unperturbed markers.  Returns the max residual and the three terms.
    """
    u0, v0 = U(curve), V(curve)
    up, um = u0.traces()
    vp, vm = v0.traces()
    Jup, Jum = u0.jacobian_traces()
    Jvp, Jvm = v0.jacobian_traces()
    nu = curve.normals
    lie = [np.einsum("nij,nj->ni", Jv, u) - np.einsum("nij,nj->ni", Ju, v)
           for Ju, Jv, u, v in ((Jup, Jvp, up, vp), (Jum, Jvm, um, vm))]
    lie_jump = np.sum((lie[0] - lie[1]) * nu, axis=1)

    def along(section, xi):
        fwd = eulerian_traces(section(deform(curve, xi, eps)), curve.points)
        bwd = eulerian_traces(section(deform(curve, xi, -eps)), curve.points)
        d = [(a - b) / (2 * eps) for a, b in zip(fwd, bwd)]
        return np.sum((d[0] - d[1]) * nu, axis=1)

    uv = along(V, anchor(u0).xi)
    vu = along(U, anchor(v0).xi)
    total = lie_jump + uv - vu
    scale = max(np.max(np.abs(lie_jump)), np.max(np.abs(uv)), np.max(np.abs(vu)), 1e-300)
    return BracketReport(float(np.max(np.abs(total))), float(np.max(np.abs(total)) / scale),
                         lie_jump, uv, vu)


@dataclass
class BracketReport:
    residual: float
    relative: float
    lie_jump: np.ndarray
    u_along_v: np.ndarray
    v_along_u: np.ndarray


@dataclass
class CompatibilityReport:
    residual: float
    absolute: float
    lhs: np.ndarray
    rhs: np.ndarray


def tangent_compatibility(before, now, after, h):
    """Check that the normal jump of the time derivative equals the Lie derivative term.

    Each argument is a DiscontinuousField sampled at t0 - h, t0, t0 + h with the
    same markers.  Returns the residual normalized by the size of the two sides.
    """
    curve = now.curve
    nu = curve.normals
    q = np.sum((after.curve.points - before.curve.points) * nu, axis=1) / (2 * h)
    fp, fm = eulerian_traces(after, curve.points)
    bp, bm = eulerian_traces(before, curve.points)
    lhs = np.sum(((fp - bp) - (fm - bm)) * nu, axis=1) / (2 * h)
    up, um = now.traces()
    slip = np.sum((up - um) * curve.tangents, axis=1)
    rhs = curve.derivative(q * slip)
    absolute = float(np.max(np.abs(lhs - rhs)))
    scale = max(float(np.max(np.abs(lhs))), float(np.max(np.abs(rhs))))
    return CompatibilityReport(absolute / scale if scale > 0 else 0.0, absolute, lhs, rhs)


def zero_flux(curve, xi):
    return zero_mean(curve, xi)
