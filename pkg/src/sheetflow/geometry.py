"""Flat unit torus: points, periodic displacement and the periodic Green function.

G satisfies Lap G = delta - 1 with zero mean, so G(r) ~ log|r| / (2 pi) near the
diagonal.  Three evaluations are provided:

* ``green`` / ``grad_green``: exponentially convergent row-product sum (production path),
* ``green_spectral``: Fourier modes along one axis with the other axis summed exactly,
* ``green_ewald``: Gaussian split into real-space exponential integrals and a damped
  reciprocal sum.
"""
from dataclasses import dataclass
import math

import numpy as np
from scipy.special import exp1

from . import _kernels
from .errors import DomainError

COINCIDENT_TOL = 1e-14


@dataclass(frozen=True)
class TorusPoint:
    x: float
    y: float

    def __post_init__(self):
        object.__setattr__(self, "x", float(self.x) % 1.0)
        object.__setattr__(self, "y", float(self.y) % 1.0)

    def __add__(self, other):
        ox, oy = _xy(other)
        return TorusPoint(self.x + ox, self.y + oy)

    def __sub__(self, other):
        """Periodic displacement with components in [-1/2, 1/2)."""
        ox, oy = _xy(other)
        return periodic_displacement(np.array([self.x - ox, self.y - oy]))

    def as_array(self):
        return np.array([self.x, self.y])


def _xy(p):
    if isinstance(p, TorusPoint):
        return p.x, p.y
    a = np.asarray(p, dtype=float)
    return float(a[0]), float(a[1])


def reduce(points):
    """Reduce coordinates to [0, 1)."""
    return np.mod(np.asarray(points, dtype=float), 1.0)


def periodic_displacement(d):
    d = np.asarray(d, dtype=float)
    return d - np.floor(d + 0.5)


@dataclass(frozen=True)
class GreenTable:
    """Parameters of the cross-check evaluations of G.

    ``mode_cutoff`` bounds the Fourier sums of the spectral and Ewald routes;
    ``ewald_eta`` is the Gaussian splitting parameter.  The production kernel
    does not depend on either.
    """
    mode_cutoff: int = 128
    ewald_eta: float = math.pi
    image_shells: int = 4

    def __post_init__(self):
        if self.mode_cutoff < 1:
            raise ValueError("mode_cutoff must be positive")
        if self.ewald_eta <= 0:
            raise ValueError("ewald_eta must be positive")

    def profile(self, m, y):
        """Fourier coefficient of mode m (along the first axis) as a function of the second."""
        return _mode_profile(m, periodic_displacement(y))


DEFAULT_TABLE = GreenTable()


def _check_apart(d):
    if np.any(np.hypot(d[..., 0], d[..., 1]) < COINCIDENT_TOL):
        raise DomainError("green function is singular at coincident points")


def _disp(p, q):
    return periodic_displacement(np.asarray(_xy(p)) - np.asarray(_xy(q)))


def green(p, q, table=DEFAULT_TABLE):
    d = _disp(p, q)
    _check_apart(d)
    return float(_kernels.kernel_pairs(d[0:1], d[1:2])[0, 0])


def grad_green(p, q, table=DEFAULT_TABLE):
    """Gradient of G(p, q) in p."""
    d = _disp(p, q)
    _check_apart(d)
    out = _kernels.kernel_pairs(d[0:1], d[1:2])
    return np.array([out[1, 0], out[2, 0]])


def hess_green(p, q, table=DEFAULT_TABLE):
    d = _disp(p, q)
    _check_apart(d)
    out = _kernels.kernel_pairs(d[0:1], d[1:2], hess=True)
    return np.array([[out[3, 0], out[4, 0]], [out[4, 0], out[5, 0]]])


def green_disp(d):
    """Vectorized G of displacement arrays of shape (..., 2)."""
    d = np.asarray(d, dtype=float)
    _check_apart(periodic_displacement(d))
    out = _kernels.kernel_pairs(d[..., 0], d[..., 1])
    return out[0].reshape(d.shape[:-1])


def grad_green_disp(d):
    d = np.asarray(d, dtype=float)
    _check_apart(periodic_displacement(d))
    out = _kernels.kernel_pairs(d[..., 0], d[..., 1])
    return np.stack([out[1], out[2]], axis=-1).reshape(d.shape)


def smooth_part_at_origin():
    return _kernels.smooth_part_at_origin()


# ---------------------------------------------------------------- cross-check routes

def _mode_profile(m, y):
    ay = np.abs(y)
    if m == 0:
        return -0.5 * (ay * ay - ay + 1.0 / 6.0)
    am = abs(m)
    # cosh(pi m (1 - 2|y|)) / sinh(pi m), written to avoid overflow
    num = np.exp(-2 * math.pi * am * ay) + np.exp(-2 * math.pi * am * (1.0 - ay))
    return -num / (1.0 - math.exp(-2 * math.pi * am)) / (4 * math.pi * am)


def green_spectral(d, table=DEFAULT_TABLE):
    """Fourier sum over ``mode_cutoff`` modes along the axis of the smaller displacement.

    The orthogonal direction is summed exactly, so the truncation error decays like
    exp(-2 pi K max(|dx|, |dy|)).
    """
    d = periodic_displacement(np.asarray(d, dtype=float))
    _check_apart(d)
    dx, dy = float(d[0]), float(d[1])
    if abs(dx) > abs(dy):
        dx, dy = dy, dx
    total = _mode_profile(0, dy)
    for m in range(1, table.mode_cutoff + 1):
        total += 2.0 * math.cos(2 * math.pi * m * dx) * _mode_profile(m, dy)
    return float(total)


def green_ewald(d, table=DEFAULT_TABLE):
    """Ewald split with parameter eta:

    G = -sum_{k != 0} exp(2 pi i k.r - pi^2 |k|^2 / eta) / (4 pi^2 |k|^2)
        - (1 / 4 pi) sum_n E1(eta |r + n|^2) + 1 / (4 eta)
    """
    d = periodic_displacement(np.asarray(d, dtype=float))
    _check_apart(d)
    eta = table.ewald_eta
    K = table.mode_cutoff
    kmax = min(K, int(math.ceil(math.sqrt(40.0 * eta) / math.pi)) + 1)
    k = np.arange(-kmax, kmax + 1)
    kx, ky = np.meshgrid(k, k, indexing="ij")
    k2 = (kx * kx + ky * ky).astype(float)
    k2[kmax, kmax] = np.inf
    phase = np.cos(2 * math.pi * (kx * d[0] + ky * d[1]))
    recip = -np.sum(phase * np.exp(-math.pi ** 2 * k2 / eta) / (4 * math.pi ** 2 * k2))
    s = table.image_shells
    n = np.arange(-s, s + 1)
    nx, ny = np.meshgrid(n, n, indexing="ij")
    r2 = (d[0] + nx) ** 2 + (d[1] + ny) ** 2
    real = -np.sum(exp1(eta * r2)) / (4 * math.pi)
    return float(recip + real + 1.0 / (4 * eta))


def log_sine_reference_mean():
    """Mean over the torus of log(sin^2(pi x) + sin^2(pi y)) / (4 pi).

    Inner integral in x is closed form; the outer one is Gauss-Legendre on [0, 1].
    """
    nodes, weights = np.polynomial.legendre.leggauss(64)
    y = 0.5 * (nodes + 1.0)
    a = np.sin(math.pi * y)
    inner = 2.0 * np.log((np.sqrt(1.0 + a * a) + a) / 2.0)
    return float(0.5 * np.dot(weights, inner) / (4 * math.pi))


def grid_mean(p, n=256, table=DEFAULT_TABLE):
    """Mean of G(p, .) by a regular n x n grid after removing a periodic log singularity.

    The subtracted function (1/4 pi) log(sin^2 + sin^2) has the same singularity and a
    known mean, so the remainder is smooth and the grid rule converges spectrally.
    """
    px, py = _xy(p)
    g = (np.arange(n) + 0.5) / n
    X, Y = np.meshgrid(g, g, indexing="ij")
    d = np.stack([X - px, Y - py], axis=-1)
    d = periodic_displacement(d)
    vals = green_disp(d)
    ref = np.log(np.sin(math.pi * d[..., 0]) ** 2 + np.sin(math.pi * d[..., 1]) ** 2) / (4 * math.pi)
    return float(np.mean(vals - ref) + log_sine_reference_mean())


def five_point_laplacian(p, q, h):
    px, py = _xy(p)
    c = green(p, q)
    s = (green((px + h, py), q) + green((px - h, py), q) + green((px, py + h), q)
         + green((px, py - h), q) - 4 * c)
    return s / (h * h)
