"""Discrete vortex sheets on the torus and vectors tangent/cotangent to the sheet space.

A sheet is stored as lifted marker loops: coordinates are continuous along each loop
(so spectral differentiation applies) and the loop closes up to an integer winding
vector.  ``SheetCurve.markers`` returns the coordinates reduced to [0, 1).
"""
from dataclasses import dataclass
import math

import numpy as np

from . import _kernels
from .errors import ConstraintError, DomainError, SelfIntersectionError, TopologyError
from .geometry import periodic_displacement

CONTRACTIBLE = "contractible"
LOOP_PAIR = "looppair"
TOPOLOGIES = (CONTRACTIBLE, LOOP_PAIR)
MIN_MARKERS = 16
ZERO_MEAN_TOL = 1e-10


# ---------------------------------------------------------------- periodic spectral tools

def wavenumbers(n):
    return np.fft.fftfreq(n, 1.0 / n)


def spectral_derivative(values, order=1):
    """Derivative in the loop parameter t in [0, 2 pi) of samples at t_j = 2 pi j / n."""
    v = np.asarray(values, dtype=float)
    n = v.shape[0]
    k = wavenumbers(n)
    if n % 2 == 0 and order % 2 == 1:
        k = k.copy()
        k[n // 2] = 0.0
    c = np.fft.fft(v, axis=0)
    mult = (1j * k) ** order
    if v.ndim > 1:
        mult = mult[:, None]
    return np.real(np.fft.ifft(c * mult, axis=0))


def trig_eval(values, tau, order=0):
    """Evaluate the trigonometric interpolant of periodic samples (or a derivative) at ``tau``."""
    v = np.asarray(values, dtype=float)
    n = v.shape[0]
    tau = np.atleast_1d(np.asarray(tau, dtype=float))
    c = np.fft.fft(v, axis=0) / n
    k = wavenumbers(n)
    if n % 2 == 0:
        half = n // 2
        c = c.copy()
        # split the Nyquist coefficient symmetrically so the interpolant is real
        if v.ndim > 1:
            c = np.concatenate([c, c[half:half + 1]], axis=0)
            c[half] *= 0.5
            c[-1] *= 0.5
        else:
            c = np.concatenate([c, c[half:half + 1]])
            c[half] *= 0.5
            c[-1] *= 0.5
        k = np.concatenate([k, [float(half)]])
        k[half] = -float(half)
    phase = np.exp(1j * np.outer(tau, k)) * (1j * k) ** order
    return np.real(phase @ c)


def upsample(values, factor):
    """Band-limited upsampling of periodic samples by an integer factor."""
    v = np.asarray(values, dtype=float)
    n = v.shape[0]
    if factor == 1:
        return v.copy()
    m = n * factor
    c = np.fft.fft(v, axis=0)
    shape = (m,) + v.shape[1:]
    out = np.zeros(shape, dtype=complex)
    half = n // 2
    out[:half] = c[:half]
    out[m - half + (n % 2 == 0):] = c[half + (n % 2 == 0):] if n % 2 == 0 else c[half + 1:]
    if n % 2 == 0:
        out[half] = 0.5 * c[half]
        out[m - half] = 0.5 * c[half]
    else:
        out[half] = c[half]
    return np.real(np.fft.ifft(out, axis=0)) * factor


# ---------------------------------------------------------------- sheet curve

class SheetCurve:
    """Immutable marker representation of a vortex sheet.

    ``loops`` are lifted (N, 2) arrays.  D+ is the disk for a contractible loop and the
    strip between loop 0 (below) and loop 1 (above) for a loop pair.  The normal ``nu``
    points out of D+.
    """

    def __init__(self, topology, loops, validate=True):
        if topology not in TOPOLOGIES:
            raise TopologyError(f"unknown topology {topology!r}")
        loops = [np.array(l, dtype=float) for l in loops]
        n = loops[0].shape[0]
        if any(l.shape != (n, 2) for l in loops):
            raise ValueError("all loops need the same marker count and shape (N, 2)")
        if n < MIN_MARKERS:
            raise ValueError(f"need at least {MIN_MARKERS} markers per loop, got {n}")
        if topology == CONTRACTIBLE and len(loops) != 1:
            raise TopologyError("a contractible sheet has exactly one loop")
        if topology == LOOP_PAIR and len(loops) != 2:
            raise TopologyError("a loop pair has exactly two loops")
        self.topology = topology
        self.n = n
        windings = []
        for i, l in enumerate(loops):
            loops[i], w = _unwrap(l)
            windings.append(w)
        if topology == CONTRACTIBLE:
            if windings[0] != (0, 0):
                raise TopologyError("contractible loop has nonzero winding")
            if _signed_area(loops[0]) < 0:
                loops[0] = _reverse(loops[0], (0, 0))
            self.windings = ((0, 0),)
            self.signs = (1.0,)
        else:
            for i in range(2):
                w = windings[i]
                if w == (-1, 0):
                    loops[i] = _reverse(loops[i], w)
                    windings[i] = (1, 0)
                elif w != (1, 0):
                    raise TopologyError(f"loop {i} winds {w}; loop pairs must wind once horizontally")
            # choose the lift of loop 1 above loop 0 by less than one period
            y0, y1 = loops[0][:, 1].mean(), loops[1][:, 1].mean()
            loops[1] = loops[1] + (0.0, -math.floor(y1 - y0))
            if loops[1][:, 1].mean() - y0 <= 0:
                loops[1] = loops[1] + (0.0, 1.0)
            self.windings = ((1, 0), (1, 0))
            self.signs = (1.0, -1.0)
        self.loops = tuple(loops)
        for l in self.loops:
            l.setflags(write=False)
        self._build_caches()
        if validate:
            self.check_simple()

    # -- caches
    def _build_caches(self):
        n = self.n
        t = 2 * math.pi * np.arange(n) / n
        d1, d2, per = [], [], []
        for l, w in zip(self.loops, self.windings):
            lin = np.outer(t, w) / (2 * math.pi)
            p = l - lin
            per.append(p)
            d1.append(spectral_derivative(p) + np.asarray(w, float) / (2 * math.pi))
            d2.append(spectral_derivative(p, 2))
        self._periodic = per
        self.t = t
        self.d1 = np.vstack(d1)
        self.d2 = np.vstack(d2)
        self.points = np.vstack(self.loops)
        self.speed = np.hypot(self.d1[:, 0], self.d1[:, 1])
        if np.any(self.speed <= 1e-12):
            raise DomainError("arclength density must be strictly positive")
        self.tangents = self.d1 / self.speed[:, None]
        sgn = np.repeat(np.asarray(self.signs), n)
        self.sign = sgn
        self.normals = sgn[:, None] * np.stack([self.tangents[:, 1], -self.tangents[:, 0]], axis=1)
        self.weights = self.speed * (2 * math.pi / n)
        # curvature with respect to nu: positive for a circle with outward normal
        self.curvature = -np.sum(self.normals * self.d2, axis=1) / self.speed ** 2
        self.loop_index = np.repeat(np.arange(len(self.loops)), n)
        for a in (self.d1, self.d2, self.points, self.speed, self.tangents, self.normals,
                  self.weights, self.curvature):
            a.setflags(write=False)

    @property
    def n_loops(self):
        return len(self.loops)

    @property
    def n_total(self):
        return self.n * len(self.loops)

    @property
    def markers(self):
        return np.mod(self.points, 1.0)

    def loop_slice(self, i):
        return slice(i * self.n, (i + 1) * self.n)

    def split(self, values):
        v = np.asarray(values)
        return [v[self.loop_slice(i)] for i in range(self.n_loops)]

    @property
    def length(self):
        return float(self.weights.sum())

    @property
    def area(self):
        """Area of D+."""
        if self.topology == CONTRACTIBLE:
            l, d = self.loops[0], self.d1
            return float(0.5 * np.sum(l[:, 0] * d[:, 1] - l[:, 1] * d[:, 0]) * 2 * math.pi / self.n)
        under = [float(np.sum(l[:, 1] * self.d1[self.loop_slice(i), 0]) * 2 * math.pi / self.n)
                 for i, l in enumerate(self.loops)]
        return under[1] - under[0]

    @property
    def strip_heights(self):
        if self.topology != LOOP_PAIR:
            raise TopologyError("strip heights exist only for loop pairs")
        a = self.area
        return a, 1.0 - a

    def side_areas(self):
        a = self.area
        return {1: a, -1: 1.0 - a}

    # -- spectral evaluation
    def evaluate(self, loop, tau, order=0):
        """Point (or t-derivative) of loop ``loop`` at parameters ``tau``."""
        tau = np.atleast_1d(np.asarray(tau, dtype=float))
        w = np.asarray(self.windings[loop], float)
        val = trig_eval(self._periodic[loop], tau, order)
        if order == 0:
            val = val + np.outer(tau, w) / (2 * math.pi)
        elif order == 1:
            val = val + w / (2 * math.pi)
        return val

    def derivative(self, values, order=1):
        """Arclength derivative of marker values, loop by loop."""
        out = np.empty(self.n_total)
        for i in range(self.n_loops):
            s = self.loop_slice(i)
            d = np.asarray(values[s], dtype=float)
            for _ in range(order):
                d = spectral_derivative(d) / self.speed[s]
            out[s] = d
        return out

    def polyline(self, i, factor=1):
        """Closed polyline of loop i (first point repeated after the winding shift)."""
        l = self.loops[i] if factor == 1 else self.fine_points(factor)[self.n * factor * i:self.n * factor * (i + 1)]
        return np.vstack([l, l[:1] + self.windings[i]])

    def fine_points(self, factor):
        return np.vstack([upsample(p, factor) + np.outer(2 * math.pi * np.arange(self.n * factor) / (self.n * factor),
                                                         np.asarray(w, float)) / (2 * math.pi)
                          for p, w in zip(self._periodic, self.windings)])

    def check_simple(self):
        """Raise SelfIntersectionError if any polyline segments cross, periodic images included."""
        polys = [self.polyline(i) for i in range(self.n_loops)]
        shifts = [(a, b) for a in (-1, 0, 1) for b in (-1, 0, 1)]
        for i, P in enumerate(polys):
            for j, Q in enumerate(polys):
                if j < i:
                    continue
                for s in shifts:
                    same = i == j and s == (0, 0)
                    a, b = _kernels.first_crossing(P, Q, same, s)
                    if a >= 0:
                        loc = _intersection(P[a], P[a + 1], Q[b] + s, Q[b + 1] + s)
                        raise SelfIntersectionError(
                            f"sheet crosses itself near {tuple(float(v) for v in np.round(np.mod(loc, 1.0), 6))}",
                            location=np.mod(loc, 1.0))

    def with_points(self, points, validate=True):
        pts = np.asarray(points, dtype=float)
        return SheetCurve(self.topology, [pts[self.loop_slice(i)] for i in range(self.n_loops)], validate)

    def __repr__(self):
        return f"SheetCurve({self.topology}, loops={self.n_loops}, N={self.n})"


def _unwrap(l):
    d = periodic_displacement(np.diff(l, axis=0))
    lifted = np.vstack([l[:1], l[:1] + np.cumsum(d, axis=0)])
    close = lifted[-1] + periodic_displacement(l[0] - l[-1]) - lifted[0]
    w = tuple(int(round(c)) for c in close)
    return lifted, w


def _reverse(l, w):
    return _unwrap(np.vstack([l[:1], l[:0:-1]]))[0]


def _signed_area(l):
    x, y = l[:, 0], l[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _intersection(a, b, c, d):
    r, s = b - a, d - c
    den = r[0] * s[1] - r[1] * s[0]
    u = ((c[0] - a[0]) * s[1] - (c[1] - a[1]) * s[0]) / den
    return a + u * r


# ---------------------------------------------------------------- tangent and cotangent vectors

@dataclass
class TangentVS:
    """Normal flux density (v . nu) ds per marker; sums to zero."""
    xi: np.ndarray

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.xi, dtype=dtype)

    @classmethod
    def from_density(cls, curve, xi, remove_mean=True):
        xi = np.asarray(xi, dtype=float)
        return cls(zero_mean(curve, xi) if remove_mean else xi.copy())

    @classmethod
    def from_normal_velocity(cls, curve, vn):
        return cls.from_density(curve, np.asarray(vn, float) * curve.weights)


@dataclass
class CoVectorVS:
    """Momentum: potential jump per marker, defined modulo one global constant."""
    f: np.ndarray

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.f, dtype=dtype)

    def shifted(self, c):
        return CoVectorVS(np.asarray(self.f, float) + c)


def zero_mean(curve, xi):
    """Remove the flux of a density by subtracting a constant normal velocity."""
    xi = np.asarray(xi, dtype=float)
    w = curve.weights
    return xi - w * (xi.sum() / w.sum())


def mean_free(curve, values):
    """Subtract the arclength mean of marker values."""
    v = np.asarray(values, dtype=float)
    w = curve.weights
    return v - np.dot(w, v) / w.sum()


def check_zero_sum(xi, what="tangent vector"):
    xi = np.asarray(xi, dtype=float)
    scale = max(1.0, float(np.sum(np.abs(xi))))
    if abs(float(xi.sum())) > ZERO_MEAN_TOL * scale:
        raise ConstraintError(f"{what} must have zero total flux (sum = {xi.sum():.3e})")


# ---------------------------------------------------------------- construction

def build_curve(topology, shape, validate=True):
    """Build a SheetCurve from a shape description.

    ``shape`` is either a marker list (one (N, 2) array per loop) or a dict:

    * ``{"kind": "circle", "center": (x, y), "radius": r, "n": N, "modes": {k: a}}``
      radial Fourier perturbation r(t) = sqrt(r^2 + 2 r sum a_k cos(k t)) (exactly area preserving for k >= 1)
    * ``{"kind": "fourier", "center": ..., "radius": ..., "n": N, "cos": {k: a}, "sin": {k: b}}``
      plain radial descriptors r(t) = r + sum a_k cos kt + b_k sin kt
    * ``{"kind": "pair", "heights": (y0, y1), "n": N, "modes": [{k: a}, {k: a}], "phase": [...]}``
      two graphs y = y_i + sum a_k sin(2 pi k x + phase)
    """
    if isinstance(shape, dict) and "markers" not in shape:
        loops = _loops_from_shape(topology, shape)
    else:
        m = shape["markers"] if isinstance(shape, dict) else shape
        loops = [np.asarray(l, dtype=float) for l in m]
    return SheetCurve(topology, loops, validate=validate)


def _loops_from_shape(topology, shape):
    kind = shape.get("kind")
    n = int(shape.get("n", 256))
    t = 2 * math.pi * np.arange(n) / n
    if kind in ("circle", "fourier"):
        if topology != CONTRACTIBLE:
            raise TopologyError(f"{kind} shapes are contractible")
        cx, cy = shape.get("center", (0.5, 0.5))
        r0 = float(shape.get("radius", 0.2))
        if kind == "circle":
            sq = np.full(n, r0 * r0)
            for k, a in dict(shape.get("modes", {})).items():
                sq += 2 * r0 * a * np.cos(int(k) * t)
            if np.any(sq <= 0):
                raise DomainError("perturbation too large for the radius")
            r = np.sqrt(sq)
        else:
            r = np.full(n, r0)
            for k, a in dict(shape.get("cos", {})).items():
                r += a * np.cos(int(k) * t)
            for k, b in dict(shape.get("sin", {})).items():
                r += b * np.sin(int(k) * t)
        return [np.stack([cx + r * np.cos(t), cy + r * np.sin(t)], axis=1)]
    if kind == "pair":
        if topology != LOOP_PAIR:
            raise TopologyError("pair shapes need the loop-pair topology")
        ys = shape.get("heights", (0.25, 0.75))
        modes = shape.get("modes", [{}, {}])
        phases = shape.get("phase", [0.0, 0.0])
        x = np.arange(n) / n
        loops = []
        for i in range(2):
            y = np.full(n, float(ys[i]))
            for k, a in dict(modes[i]).items():
                y += a * np.sin(2 * math.pi * int(k) * x + phases[i])
            loops.append(np.stack([x, y], axis=1))
        return loops
    raise ValueError(f"unknown shape kind {kind!r}")


def circle(radius=0.2, center=(0.5, 0.5), n=256, modes=None):
    return build_curve(CONTRACTIBLE, {"kind": "circle", "center": center, "radius": radius,
                                      "n": n, "modes": modes or {}})


def flat_pair(y0=0.25, y1=0.75, n=256, modes=None, phases=(0.0, 0.0)):
    return build_curve(LOOP_PAIR, {"kind": "pair", "heights": (y0, y1), "n": n,
                                   "modes": modes or [{}, {}], "phase": list(phases)})


# ---------------------------------------------------------------- motion and resampling

def deform(curve, xi, dt, validate=True):
    """Move each marker along nu by (xi / ds) * dt."""
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (curve.n_total,):
        raise ValueError("density has the wrong length")
    check_zero_sum(xi)
    return displace(curve, xi / curve.weights * dt, validate)


def displace(curve, normal_offset, validate=True):
    """Move markers by ``normal_offset * nu`` (no flux constraint)."""
    pts = curve.points + np.asarray(normal_offset, float)[:, None] * curve.normals
    try:
        return curve.with_points(pts, validate)
    except SelfIntersectionError as err:
        raise SelfIntersectionError(str(err), location=err.location, curve=curve) from None


def arclength_parameters(curve, loop, n_new, tol=1e-14, max_iter=50):
    """Parameters tau_j with s(tau_j) = L j / n_new on one loop."""
    speed = curve.speed[curve.loop_slice(loop)]
    n = curve.n
    c = np.fft.fft(speed) / n
    k = wavenumbers(n)
    if n % 2 == 0:
        c = c.copy()
        c[n // 2] = 0.0
    total = 2 * math.pi * c[0].real
    nz = k != 0
    ck, kk = c[nz], k[nz]

    def s_of(tau):
        e = np.exp(1j * np.outer(tau, kk))
        return c[0].real * tau + np.real((e - 1.0) @ (ck / (1j * kk)))

    def ds_of(tau):
        return np.real(np.exp(1j * np.outer(tau, k)) @ c)

    target = total * np.arange(n_new) / n_new
    tau = 2 * math.pi * np.arange(n_new) / n_new
    for _ in range(max_iter):
        step = (s_of(tau) - target) / ds_of(tau)
        tau = tau - step
        if np.max(np.abs(step)) < tol:
            break
    return tau


def resample(curve, n_new, f=None):
    """Redistribute markers to uniform arclength with ``n_new`` markers per loop.

    Marker functions ``f`` (e.g. momentum) are carried along by spectral interpolation
    in the old parameter.  Returns the curve, or (curve, f) when ``f`` is given.
    """
    if n_new < MIN_MARKERS:
        raise ValueError(f"resampling below {MIN_MARKERS} markers is not allowed")
    loops, fs = [], []
    for i in range(curve.n_loops):
        tau = arclength_parameters(curve, i, n_new)
        loops.append(curve.evaluate(i, tau))
        if f is not None:
            fs.append(trig_eval(np.asarray(f, float)[curve.loop_slice(i)], tau))
    new = SheetCurve(curve.topology, loops)
    if f is None:
        return new
    return new, np.concatenate(fs)


def arclength_spacing_deviation(curve):
    """Max relative deviation of exact arclength gaps between consecutive markers."""
    worst = 0.0
    for i in range(curve.n_loops):
        nodes, wts = np.polynomial.legendre.leggauss(24)
        h = 2 * math.pi / curve.n
        seg = np.zeros(curve.n)
        for x, w in zip(nodes, wts):
            tau = curve.t + 0.5 * h * (x + 1)
            seg += 0.5 * h * w * np.hypot(*curve.evaluate(i, tau, order=1).T)
        mean = seg.mean()
        worst = max(worst, float(np.max(np.abs(seg - mean)) / mean))
    return worst


def transport_identity_check(family, values, t0, h, n_radial=24):
    """Residual of the transport identity for a moving sheet and a two-sided function.

    ``family(t)`` returns the sheet at time t (markers in correspondence) and
    ``values(t, points, side)`` the function on side +1 / -1 at lifted points.
    Returns |d/dt int f - int d_t f - int_sheet [f] V ds| by centered differences.
    """
    from .quadrature import domain_rule

    def total(t, curve):
        out = 0.0
        for side in (1, -1):
            pts, wts = domain_rule(curve, side, n_radial=n_radial)
            out += float(np.dot(wts, values(t, pts, side)))
        return out

    before, now, after = family(t0 - h), family(t0), family(t0 + h)
    lhs = (total(t0 + h, after) - total(t0 - h, before)) / (2 * h)
    local = 0.0
    for side in (1, -1):
        pts, wts = domain_rule(now, side, n_radial=n_radial)
        local += float(np.dot(wts, values(t0 + h, pts, side) - values(t0 - h, pts, side))) / (2 * h)
    vel = np.sum((after.points - before.points) * now.normals, axis=1) / (2 * h)
    jump = values(t0, now.points, 1) - values(t0, now.points, -1)
    flux = float(np.dot(now.weights, jump * vel))
    return abs(lhs - local - flux)
