"""Area quadrature rules for the two sides of a sheet.

The regions are parametrized over [0, 1] x [0, 2 pi):

* contractible D+: rays from the centroid to the loop,
* contractible D-: from the loop out to the unit cell centered at the centroid,
* loop pair: straight segments joining corresponding markers of the two loops.

Gauss-Legendre runs across, trapezoid runs along the loop (except on D- of a
contractible sheet, where the cell corners break periodic smoothness and each
corner-free arc gets its own Gauss-Legendre rule).
"""
import math

import numpy as np
from scipy.optimize import brentq

from .curves import CONTRACTIBLE
from .errors import DomainError

N_RADIAL = 24


def centroid(curve):
    l, d = curve.loops[0], curve.d1
    x, y = l[:, 0], l[:, 1]
    cross = x * d[:, 1] - y * d[:, 0]
    a = 0.5 * cross.sum()
    return np.array([np.sum(x * cross) / (3 * a), np.sum(y * cross) / (3 * a)])


def domain_rule(curve, side, n_radial=N_RADIAL, angular_factor=1):
    """Nodes (lifted coordinates) and weights integrating over D+ (side=1) or D- (side=-1)."""
    if side not in (1, -1):
        raise ValueError("side must be +1 or -1")
    gx, gw = np.polynomial.legendre.leggauss(n_radial)
    rho = 0.5 * (gx + 1.0)
    rw = 0.5 * gw
    m = curve.n * angular_factor
    tau = 2 * math.pi * np.arange(m) / m
    if curve.topology == CONTRACTIBLE:
        c = centroid(curve)
        if side == 1:
            x = curve.evaluate(0, tau)
            dx = curve.evaluate(0, tau, order=1)
            r = x - c
            jac_t = r[:, 0] * dx[:, 1] - r[:, 1] * dx[:, 0]
            _require_positive(jac_t)
            pts = c + rho[:, None, None] * r[None, :, :]
            wts = rw[:, None] * rho[:, None] * jac_t[None, :] * (2 * math.pi / m)
            return pts.reshape(-1, 2), wts.ravel()
        return _outer_rule(curve, c, rho, rw, m)
    lo = curve.evaluate(0, tau)
    hi = curve.evaluate(1, tau)
    dlo = curve.evaluate(0, tau, order=1)
    dhi = curve.evaluate(1, tau, order=1)
    if side == -1:
        lo, hi, dlo, dhi = hi, lo + (0.0, 1.0), dhi, dlo
    span = hi - lo
    xt = (1 - rho)[:, None, None] * dlo[None] + rho[:, None, None] * dhi[None]
    jac = xt[..., 0] * span[None, :, 1] - xt[..., 1] * span[None, :, 0]
    _require_positive(jac)
    pts = lo[None] + rho[:, None, None] * span[None]
    wts = rw[:, None] * jac * (2 * math.pi / m)
    return pts.reshape(-1, 2), wts.ravel()


def _require_positive(jac):
    if np.min(jac) <= 0:
        raise DomainError("region is not representable by the ruled parametrization")


def _outer_rule(curve, c, rho, rw, m):
    """D- of a contractible loop, swept from the loop to the cell boundary."""
    def direction(t):
        r = curve.evaluate(0, t)[0] - c
        return abs(r[0]) - abs(r[1])

    # corners of the cell correspond to |rx| = |ry|; locate them on a fine grid and refine
    fine = 8 * curve.n
    tf = 2 * math.pi * np.arange(fine + 1) / fine
    r = curve.evaluate(0, tf) - c
    if np.max(np.max(np.abs(r), axis=1)) >= 0.5:
        raise DomainError("loop leaves the unit cell around its centroid")
    s = np.abs(r[:, 0]) - np.abs(r[:, 1])
    cuts = []
    for i in range(fine):
        if s[i] == 0.0:
            cuts.append(tf[i])
        elif s[i] * s[i + 1] < 0:
            a, b = direction(tf[i]), direction(tf[i + 1])
            if a * b < 0:
                cuts.append(brentq(direction, tf[i], tf[i + 1], xtol=1e-15))
            else:  # sign change lost to rounding at an endpoint
                cuts.append(tf[i] if abs(a) < abs(b) else tf[i + 1])
    if not cuts:
        raise DomainError("loop does not surround its centroid")
    cuts = sorted(cuts)
    cuts.append(cuts[0] + 2 * math.pi)
    nodes, weights = [], []
    total_nodes = 2 * m
    for a, b in zip(cuts[:-1], cuts[1:]):
        k = max(16, int(math.ceil(total_nodes * (b - a) / (2 * math.pi))))
        gx, gw = np.polynomial.legendre.leggauss(k)
        nodes.append(0.5 * (a + b) + 0.5 * (b - a) * gx)
        weights.append(0.5 * (b - a) * gw)
    t = np.concatenate(nodes)
    tw = np.concatenate(weights)
    x = curve.evaluate(0, t)
    dx = curve.evaluate(0, t, order=1)
    r = x - c
    xface = np.abs(r[:, 0]) >= np.abs(r[:, 1])
    B = np.empty_like(x)
    dB = np.empty_like(x)
    for face, (i, j) in ((xface, (0, 1)), (~xface, (1, 0))):
        sg = np.sign(r[face, i])
        ratio = r[face, j] / r[face, i]
        dratio = (dx[face, j] * r[face, i] - r[face, j] * dx[face, i]) / r[face, i] ** 2
        B[face, i] = c[i] + 0.5 * sg
        B[face, j] = c[j] + 0.5 * sg * ratio
        dB[face, i] = 0.0
        dB[face, j] = 0.5 * sg * dratio
    span = B - x
    xt = (1 - rho)[:, None, None] * dx[None] + rho[:, None, None] * dB[None]
    # orientation: moving along t (ccw) and outward in rho gives a negative cross product
    jac = -(xt[..., 0] * span[None, :, 1] - xt[..., 1] * span[None, :, 0])
    _require_positive(jac)
    pts = x[None] + rho[:, None, None] * span[None]
    wts = rw[:, None] * jac * tw[None, :]
    return pts.reshape(-1, 2), wts.ravel()


def integrate(curve, side, values_at, **kw):
    pts, wts = domain_rule(curve, side, **kw)
    return float(np.dot(wts, values_at(pts)))
