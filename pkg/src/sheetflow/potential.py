"""Layer operators, Dirichlet/Neumann maps and harmonic extensions on the two sides of a sheet.

Conventions: ``nu`` is the outward normal of D+.  Densities passed to S, K, K' are
values per unit arclength; the weights ``w`` turn them into marker masses.

    S[s](x)  = int G(x, y) s(y) ds
    D[m](x)  = int d_nu(y) G(x, y) m(y) ds          D[m]+ = K m + m/2,  D[m]- = K m - m/2
    d_nu S+  = K' s - s/2,  d_nu S- = K' s + s/2
    T m      = d_nu D[m]   (continuous across the sheet)

Because Lap G = delta - 1, Green's identity on D+ reads u = D[u] - S[d_nu u] + mean(u).
"""
from dataclasses import dataclass, field
from functools import lru_cache
import math
import warnings

import numpy as np
import scipy.linalg as sla

from . import _kernels
from .curves import TangentVS, upsample, spectral_derivative, wavenumbers
from .errors import ConditioningError, ConstraintError, DomainError
from .geometry import DEFAULT_TABLE, periodic_displacement

PLUS, MINUS = 1, -1
MAX_CONDITION = 1e13
FLUX_TOL = 1e-9
NEAR_SPACING = 6.0       # fine spacing must be below distance / NEAR_SPACING
MAX_UPSAMPLE = 512


def side_sign(side):
    if side in (1, "plus", "+", "D+"):
        return PLUS
    if side in (-1, "minus", "-", "D-"):
        return MINUS
    raise ValueError(f"unknown side {side!r}")


@lru_cache(maxsize=8)
def _kress_weights(n):
    """Quadrature weights for int log(4 sin^2((t - s)/2)) phi(s) ds, as a circulant matrix,
    together with the log(4 sin^2) kernel itself (diagonal set to 0)."""
    t = 2 * math.pi * np.arange(n) / n
    m = np.arange(1, n // 2)
    row = -(4 * math.pi / n) * (np.cos(np.outer(t, m)) / m).sum(axis=1)
    row -= (4 * math.pi / n ** 2) * np.cos((n // 2) * t)
    idx = (np.arange(n)[:, None] - np.arange(n)[None, :]) % n
    r = row[idx]
    logsin = np.log(4 * np.sin(0.5 * t[idx]) ** 2 + np.eye(n))
    r.setflags(write=False)
    logsin.setflags(write=False)
    return r, logsin


@lru_cache(maxsize=8)
def _diff_matrix(n):
    d = spectral_derivative(np.eye(n))
    d.setflags(write=False)
    return d


class LayerOperators:
    """Dense Nystrom discretization of S, K, K' and T on a fixed sheet."""

    def __init__(self, curve, table=DEFAULT_TABLE):
        self.curve = curve
        self.table = table
        n, nt = curve.n, curve.n_total
        pts = curve.points
        w = curve.weights
        G, Gx, Gy = _kernels.kernel_matrix(pts, pts, skip_diag=True)
        nu = curve.normals
        kress, logsin = _kress_weights(n)
        r0 = _kernels.smooth_part_at_origin()
        S = G * w[None, :]
        for i in range(curve.n_loops):
            sl = curve.loop_slice(i)
            sp = curve.speed[sl]
            blk = (G[sl, sl] - logsin / (4 * math.pi)) * w[None, sl]
            blk[np.diag_indices(n)] = (r0 + np.log(sp) / (2 * math.pi)) * w[sl]
            S[sl, sl] = blk + kress * sp[None, :] / (4 * math.pi)
        diag = curve.curvature / (4 * math.pi) * w
        K = -(nu[None, :, 0] * Gx + nu[None, :, 1] * Gy) * w[None, :]
        Kp = (nu[:, 0, None] * Gx + nu[:, 1, None] * Gy) * w[None, :]
        K[np.diag_indices(nt)] = diag
        Kp[np.diag_indices(nt)] = diag
        self.S, self.K, self.Kp = S, K, Kp
        self.weights = w
        Dt = _diff_matrix(n)
        Ds = np.zeros((nt, nt))
        for i in range(curve.n_loops):
            sl = curve.loop_slice(i)
            Ds[sl, sl] = Dt / curve.speed[sl, None]
        self.Ds = Ds
        sg = curve.sign
        tau = curve.tangents
        T1 = (sg[:, None] * sg[None, :]) * (tau @ tau.T) * w[None, :]
        self.T = T1 + sg[:, None] * (Ds @ (S @ (sg[:, None] * Ds)))
        self.resolution_warning = _under_resolved(curve)
        if self.resolution_warning:
            warnings.warn("sheet is under-resolved for the kernel quadrature", RuntimeWarning)
        self._cache = {}

    @property
    def n(self):
        return self.curve.n_total

    def area(self, side):
        return self.curve.side_areas()[side_sign(side)]

    # -- Dirichlet-to-Neumann (first kind, Green representation)
    def _border_first(self):
        if "first" not in self._cache:
            n = self.n
            A = np.zeros((n + 1, n + 1))
            A[:n, :n] = self.S
            A[:n, n] = -1.0
            A[n, :n] = self.weights
            self._cache["first"] = _factor(A)
        return self._cache["first"]

    def dirichlet_solve(self, side, g):
        """Outward normal derivative (of D+ or D-) and mean value of the harmonic extension of g."""
        s = side_sign(side)
        g = np.asarray(g, dtype=float)
        rhs = self.K @ g - s * 0.5 * g
        if s == MINUS:
            rhs = -rhs
        sol = sla.lu_solve(self._border_first(), np.append(rhs, 0.0) if g.ndim == 1
                           else np.vstack([rhs, np.zeros((1,) + g.shape[1:])]))
        return sol[:self.n], sol[self.n]

    def dtn_matrix(self, side):
        key = ("dtn", side_sign(side))
        if key not in self._cache:
            q, _ = self.dirichlet_solve(side, np.eye(self.n))
            self._cache[key] = q
        return self._cache[key]

    # -- Neumann-to-Dirichlet (second kind)
    def _border_second(self, side):
        key = ("second", side_sign(side))
        if key not in self._cache:
            n = self.n
            s = side_sign(side)
            A = np.zeros((n + 1, n + 1))
            A[:n, :n] = s * (self.K - s * 0.5 * np.eye(n))
            A[:n, n] = 1.0
            A[n, :n] = self.weights
            self._cache[key] = _factor(A)
        return self._cache[key]

    def neumann_solve(self, side, q):
        """Boundary values (zero arclength mean) and mean of the Neumann extension with outward data q."""
        q = np.asarray(q, dtype=float)
        _check_flux(self.weights, q)
        rhs = self.S @ q
        sol = sla.lu_solve(self._border_second(side), np.append(rhs, 0.0) if q.ndim == 1
                           else np.vstack([rhs, np.zeros((1,) + q.shape[1:])]))
        return sol[:self.n], sol[self.n]

    def ntd_matrix(self, side):
        key = ("ntd", side_sign(side))
        if key not in self._cache:
            n = self.n
            w = self.weights
            P = np.eye(n) - np.outer(np.ones(n), w) / w.sum()
            g, _ = self.neumann_solve(side, P)
            self._cache[key] = g
        return self._cache[key]


def _factor(A):
    cond = np.linalg.cond(A)
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise ConditioningError(f"boundary system is ill-conditioned (cond = {cond:.2e})", condition=cond)
    return sla.lu_factor(A)


def _check_flux(w, q):
    flux = w @ q
    scale = np.abs(w) @ np.abs(q) + 1e-300
    if np.any(np.abs(flux) > FLUX_TOL * np.maximum(scale, 1.0)):
        raise ConstraintError("Neumann data must have zero flux")


def _under_resolved(curve, floor=1e-10):
    """True when the marker coordinates carry spectral energy near the grid cutoff."""
    k = np.abs(wavenumbers(curve.n))
    for p in curve._periodic:
        c = np.abs(np.fft.fft(p, axis=0)) / curve.n
        if c[k >= curve.n // 3].max() > floor:
            return True
    return False


def build_operators(curve, table=DEFAULT_TABLE):
    return LayerOperators(curve, table)


# ---------------------------------------------------------------- boundary maps

@dataclass
class DtNOperator:
    side: int
    matrix: np.ndarray
    weights: np.ndarray

    def __call__(self, g):
        return self.matrix @ np.asarray(g, dtype=float)

    def symmetric_form(self):
        """Weighted matrix W DtN; symmetric for the exact operator."""
        return self.weights[:, None] * self.matrix


@dataclass
class NtDOperator:
    side: int
    ops: "LayerOperators" = field(repr=False)

    @property
    def matrix(self):
        return self.ops.ntd_matrix(self.side)

    def __call__(self, q):
        q = np.asarray(q, dtype=float)
        _check_flux(self.ops.weights, q)
        return self.ops.neumann_solve(self.side, q)[0]


def _ops(curve, ops):
    if ops is None:
        return LayerOperators(curve)
    if ops.curve is not curve:
        raise ValueError("operators were built for a different sheet")
    return ops


def dtn(curve, side, ops=None):
    ops = _ops(curve, ops)
    s = side_sign(side)
    return DtNOperator(s, ops.dtn_matrix(s), ops.weights)


def ntd(curve, side, ops=None):
    ops = _ops(curve, ops)
    return NtDOperator(side_sign(side), ops)


# ---------------------------------------------------------------- harmonic extensions

@dataclass
class HarmonicExtension:
    """u(x) = const + S[single](x) + D[double](x), restricted to one side of the sheet."""
    curve: object
    side: int
    single: np.ndarray
    double: np.ndarray
    const: float = 0.0
    ops: object = field(default=None, repr=False, compare=False)

    def boundary(self):
        """Trace from this side by the jump relations: (value, d_tau, d_nu) at markers."""
        ops = self.ops
        if ops is None:
            raise ValueError("boundary traces need the layer operators")
        s = self.side
        val = ops.S @ self.single + ops.K @ self.double + 0.5 * s * self.double + self.const
        dnu = ops.Kp @ self.single - 0.5 * s * self.single + ops.T @ self.double
        return val, ops.Ds @ val, dnu

    def boundary_gradient(self):
        """Trace of the gradient from this side as (N, 2) vectors."""
        _, dt, dn = self.boundary()
        c = self.curve
        return dt[:, None] * c.tangents + dn[:, None] * c.normals

    def evaluate(self, points, check_side=True):
        """Value and gradient at points (shape (2,) or (M, 2)) strictly inside this side."""
        p = np.atleast_2d(np.asarray(points, dtype=float))
        near = nearest_points(self.curve, p)
        if check_side:
            wrong = near.side != self.side
            if np.any(wrong):
                bad = p[np.argmax(wrong)]
                raise DomainError(f"point {tuple(np.mod(bad, 1.0))} is not in D{'+' if self.side > 0 else '-'}")
        val, grad = layer_eval(self.curve, p, self.single, self.double, near.distance)
        val = val + self.const
        if np.ndim(points) == 1:
            return float(val[0]), grad[0]
        return val, grad

    def __call__(self, points):
        return self.evaluate(points)[0]

    def probe_trace(self, delta=None, order=4):
        """Boundary value and outward (nu) derivative extrapolated from off-sheet probes.

        Probes sit at distances m * delta (m = 1..order) inside this side along the
        normal; values and normal derivatives are matched by a Hermite polynomial.
        """
        c = self.curve
        delta = _probe_spacing(c, delta)
        into = -self.side  # moving into D+ means moving against nu
        vals, ders = [], []
        for m in range(1, order + 1):
            pts = c.points + into * m * delta * c.normals
            v, g = layer_eval(c, pts, self.single, self.double, np.full(len(pts), m * delta))
            vals.append(v + self.const)
            ders.append(into * np.sum(g * c.normals, axis=1))
        return _hermite_trace(delta, vals, ders, into)


def _probe_spacing(curve, delta):
    return 0.25 * float(curve.weights.max()) if delta is None else delta


def _hermite_trace(delta, vals, ders, into):
    order = len(vals)
    d = delta * np.arange(1, order + 1)
    deg = 2 * order
    A = np.zeros((deg, deg))
    for m in range(order):
        A[2 * m] = d[m] ** np.arange(deg)
        A[2 * m + 1, 1:] = np.arange(1, deg) * d[m] ** np.arange(deg - 1)
    rhs = np.empty((deg, len(vals[0])))
    rhs[0::2] = np.array(vals)
    rhs[1::2] = np.array(ders)
    coef = np.linalg.solve(A, rhs)
    return coef[0], into * coef[1]


class TraceProbe:
    """Probe traces of many extensions on one side of a fixed sheet.

    Same answer as ``HarmonicExtension.probe_trace``; the near-field matrices are
    assembled once, so each further extension costs a few matrix-vector products.
    """

    def __init__(self, curve, side, delta=None, order=4):
        self.curve = curve
        self.side = side_sign(side)
        self.delta = _probe_spacing(curve, delta)
        self.into = -self.side
        self.rings = []
        for m in range(1, order + 1):
            pts = curve.points + self.into * m * self.delta * curve.normals
            self.rings.append(ProbeOperator(curve, pts, np.full(len(pts), m * self.delta)))

    def __call__(self, ext):
        if ext.side != self.side:
            raise DomainError("extension lives on the other side")
        nrm = self.curve.normals
        vals, ders = [], []
        for ring in self.rings:
            v, g = ring.extension(ext)
            vals.append(v)
            ders.append(self.into * np.sum(g * nrm, axis=1))
        return _hermite_trace(self.delta, vals, ders, self.into)


@dataclass
class NearInfo:
    loop: np.ndarray
    param: np.ndarray
    foot: np.ndarray
    distance: np.ndarray
    side: np.ndarray


def nearest_points(curve, points, newton_steps=6):
    """Closest sheet point to each target (periodic metric) and the side the target lies on."""
    p = np.atleast_2d(np.asarray(points, dtype=float))
    m = len(p)
    loops = np.empty(m, dtype=int)
    params = np.empty(m)
    feet = np.empty((m, 2))
    dist = np.empty(m)
    side = np.empty(m, dtype=int)
    chunk = max(1, 2 ** 22 // curve.n_total)
    for lo in range(0, m, chunk):
        hi = min(m, lo + chunk)
        d = periodic_displacement(p[lo:hi, None, :] - curve.points[None, :, :])
        r2 = np.sum(d * d, axis=2)
        j = np.argmin(r2, axis=1)
        loops[lo:hi] = curve.loop_index[j]
        params[lo:hi] = curve.t[j % curve.n]
    for i in range(curve.n_loops):
        idx = np.nonzero(loops == i)[0]
        if idx.size == 0:
            continue
        t = params[idx].copy()
        for _ in range(newton_steps):
            x = curve.evaluate(i, t)
            dx = curve.evaluate(i, t, order=1)
            ddx = curve.evaluate(i, t, order=2)
            r = periodic_displacement(x - p[idx])
            g1 = np.sum(r * dx, axis=1)
            g2 = np.sum(dx * dx, axis=1) + np.sum(r * ddx, axis=1)
            step = np.where(g2 > 0, g1 / np.where(g2 > 0, g2, 1.0), 0.0)
            h = 2 * math.pi / curve.n
            t = t - np.clip(step, -h, h)
        x = curve.evaluate(i, t)
        dx = curve.evaluate(i, t, order=1)
        r = periodic_displacement(p[idx] - x)
        sp = np.hypot(dx[:, 0], dx[:, 1])
        nrm = curve.signs[i] * np.stack([dx[:, 1], -dx[:, 0]], axis=1) / sp[:, None]
        params[idx] = t
        feet[idx] = x
        dist[idx] = np.hypot(r[:, 0], r[:, 1])
        side[idx] = np.where(np.sum(r * nrm, axis=1) > 0, MINUS, PLUS)
    return NearInfo(loops, params, feet, dist, side)


def layer_eval(curve, points, single, double, distance):
    """Sum of layer potentials with densities upsampled as needed for near targets."""
    p = np.atleast_2d(np.asarray(points, dtype=float))
    h = float(curve.weights.max())
    need = NEAR_SPACING * h / np.maximum(distance, 1e-300)
    factor = np.ones(len(p), dtype=int)
    f = 1
    while f < MAX_UPSAMPLE:
        f *= 2
        factor[need > f / 2] = f
    val = np.zeros(len(p))
    grad = np.zeros((len(p), 2))
    single = np.asarray(single, dtype=float)
    double = np.asarray(double, dtype=float)
    for f in np.unique(factor):
        idx = np.nonzero(factor == f)[0]
        src, nrm, wts, sd, dd = _fine_sources(curve, single, double, int(f))
        v, gx, gy = _kernels.layer_sum(p[idx], src, nrm, sd * wts, dd * wts, grad=True)
        val[idx] = v
        grad[idx, 0] = gx
        grad[idx, 1] = gy
    return val, grad


def _fine_sources(curve, single, double, factor):
    if factor == 1:
        return curve.points, curve.normals, curve.weights, single, double
    pts, nrm, wts, sd, dd = [], [], [], [], []
    m = curve.n * factor
    tt = 2 * math.pi * np.arange(m) / m
    for i in range(curve.n_loops):
        sl = curve.loop_slice(i)
        x = curve.evaluate(i, tt) if factor > 1 else curve.loops[i]
        d1 = upsample(curve.d1[sl], factor)
        sp = np.hypot(d1[:, 0], d1[:, 1])
        pts.append(x)
        nrm.append(curve.signs[i] * np.stack([d1[:, 1], -d1[:, 0]], axis=1) / sp[:, None])
        wts.append(sp * (2 * math.pi / m))
        sd.append(upsample(single[sl], factor))
        dd.append(upsample(double[sl], factor))
    return (np.vstack(pts), np.vstack(nrm), np.concatenate(wts), np.concatenate(sd), np.concatenate(dd))


def side_extension(ops, side, g, q=None, const=None):
    """Harmonic extension into one side from its Dirichlet data (Neumann data solved if absent)."""
    s = side_sign(side)
    if q is None:
        q, const = ops.dirichlet_solve(s, g)
    elif const is None:
        raise ValueError("const is required together with q")
    if s == PLUS:
        return HarmonicExtension(ops.curve, s, -np.asarray(q, float), np.asarray(g, float).copy(), const, ops)
    return HarmonicExtension(ops.curve, s, -np.asarray(q, float), -np.asarray(g, float), const, ops)


def neumann_extension(ops, side, q):
    """Harmonic extension into one side with outward normal derivative q (zero flux)."""
    g, const = ops.neumann_solve(side, q)
    return g, side_extension(ops, side, g, q, const)


def dirichlet_extension(ops, side, g):
    return side_extension(ops, side, g)


# ---------------------------------------------------------------- layer potentials

def _arclength_mean(w, v):
    return float(np.dot(w, v) / w.sum())


def single_layer(curve, f, ops=None):
    """Potential continuous across the sheet whose normal derivative jumps by f.

    Returns the boundary values g (zero arclength mean) and the extensions (ext+, ext-).
    """
    ops = _ops(curve, ops)
    f = np.asarray(f, dtype=float)
    _check_flux(ops.weights, f)
    sigma = -f
    g = ops.S @ sigma
    c = -_arclength_mean(ops.weights, g)
    exts = tuple(HarmonicExtension(curve, s, sigma, np.zeros_like(sigma), c, ops) for s in (PLUS, MINUS))
    return g + c, exts


def double_layer(curve, g, ops=None, route="direct"):
    """Two-sided harmonic function jumping by g across the sheet with continuous normal derivative.

    Returns the common normal flux density xi = (d_nu h) ds as a TangentVS and the
    extensions (ext+, ext-).  ``route='reduction'`` builds it from the Dirichlet
    extension of D+ minus a single layer instead of the direct double layer.
    """
    ops = _ops(curve, ops)
    g = np.asarray(g, dtype=float)
    w = ops.weights
    if route == "direct":
        dn = ops.T @ g
        zero = np.zeros_like(g)
        exts = (HarmonicExtension(curve, PLUS, zero, g.copy(), 0.0, ops),
                HarmonicExtension(curve, MINUS, zero, g.copy(), 0.0, ops))
    elif route == "reduction":
        q, c = ops.dirichlet_solve(PLUS, g)
        sigma = -q
        dn = q - (ops.Kp @ sigma - 0.5 * sigma)
        # h+ = E+ g - s,  h- = -s, with s = S[sigma]
        exts = (HarmonicExtension(curve, PLUS, -q - sigma, g.copy(), c, ops),
                HarmonicExtension(curve, MINUS, -sigma, np.zeros_like(g), 0.0, ops))
    else:
        raise ValueError(f"unknown route {route!r}")
    return TangentVS.from_density(curve, dn * w), exts


def jump_traces(ext_plus, ext_minus, **kw):
    """Probe traces on both sides: (value+, value-, d_nu+, d_nu-)."""
    vp, dp = ext_plus.probe_trace(**kw)
    vm, dm = ext_minus.probe_trace(**kw)
    return vp, vm, dp, dm


# ---------------------------------------------------------------- batched probes

class ProbeOperator:
    """Linear maps from marker densities to layer-potential values and gradients at fixed points.

    Useful when many densities are evaluated at the same points (area quadrature,
    probe batteries).  Near points use upsampled sources exactly like ``layer_eval``.
    """

    def __init__(self, curve, points, distance=None):
        p = np.atleast_2d(np.asarray(points, dtype=float))
        self.curve = curve
        self.points = p
        if distance is None:
            distance = nearest_points(curve, p).distance
        h = float(curve.weights.max())
        need = NEAR_SPACING * h / np.maximum(distance, 1e-300)
        factor = np.ones(len(p), dtype=int)
        f = 1
        while f < MAX_UPSAMPLE:
            f *= 2
            factor[need > f / 2] = f
        nt = curve.n_total
        self.mats = np.zeros((6, len(p), nt))
        for f in np.unique(factor):
            idx = np.nonzero(factor == f)[0]
            src, nrm, wts, up = _fine_geometry(curve, int(f))
            chunk = max(1, 2 ** 21 // len(src))
            for lo in range(0, idx.size, chunk):
                sel = idx[lo:lo + chunk]
                d = p[sel, None, :] - src[None, :, :]
                g, gx, gy, hxx, hxy, hyy = (a.reshape(d.shape[:2]) for a in
                                            _kernels.kernel_pairs(d[..., 0], d[..., 1], hess=True))
                dn = -(gx * nrm[None, :, 0] + gy * nrm[None, :, 1])
                hx = -(hxx * nrm[None, :, 0] + hxy * nrm[None, :, 1])
                hy = -(hxy * nrm[None, :, 0] + hyy * nrm[None, :, 1])
                for k, a in enumerate((g, gx, gy, dn, hx, hy)):
                    self.mats[k, sel] = (a * wts[None, :]) @ up

    def apply(self, single=None, double=None, const=0.0):
        nt = self.curve.n_total
        single = np.zeros(nt) if single is None else np.asarray(single, float)
        double = np.zeros(nt) if double is None else np.asarray(double, float)
        m = self.mats
        val = m[0] @ single + m[3] @ double + const
        grad = np.stack([m[1] @ single + m[4] @ double, m[2] @ single + m[5] @ double], axis=-1)
        return val, grad

    def extension(self, ext):
        return self.apply(ext.single, ext.double, ext.const)


def _fine_geometry(curve, factor):
    """Fine source nodes, normals, weights and the (fine x coarse) upsampling matrix."""
    n = curve.n
    if factor == 1:
        return curve.points, curve.normals, curve.weights, np.eye(curve.n_total)
    m = n * factor
    tt = 2 * math.pi * np.arange(m) / m
    up1 = upsample(np.eye(n), factor)
    pts, nrm, wts = [], [], []
    U = np.zeros((m * curve.n_loops, curve.n_total))
    for i in range(curve.n_loops):
        sl = curve.loop_slice(i)
        d1 = upsample(curve.d1[sl], factor)
        sp = np.hypot(d1[:, 0], d1[:, 1])
        pts.append(curve.evaluate(i, tt))
        nrm.append(curve.signs[i] * np.stack([d1[:, 1], -d1[:, 0]], axis=1) / sp[:, None])
        wts.append(sp * (2 * math.pi / m))
        U[i * m:(i + 1) * m, sl] = up1
    return np.vstack(pts), np.vstack(nrm), np.concatenate(wts), U
