"""Closed-form and brute-force references.

Everything here is computed from separation of variables on flat strips or from
finite differences of a user-supplied functional; nothing touches the boundary
integral machinery.
"""
from dataclasses import dataclass
import math

import numpy as np

from .curves import check_zero_sum, deform as move_sheet
from .errors import ConstraintError, DomainError


# ---------------------------------------------------------------- flat strips

def strip_dtn_block(k, h):
    """2x2 Dirichlet-to-Neumann block of mode e^{2 pi i k x} on a strip of height h.

    Rows/columns are the two boundary lines; the output is the outward normal derivative.
    """
    if not 0.0 < h < 1.0:
        raise DomainError(f"strip height must lie in (0, 1), got {h}")
    k = abs(int(k))
    if k == 0:
        return np.array([[1.0, -1.0], [-1.0, 1.0]]) / h
    kk = 2 * math.pi * k
    a = kk / math.tanh(kk * h)
    b = -kk / math.sinh(kk * h)
    return np.array([[a, b], [b, a]])


def strip_ntd_block(k, h):
    """Inverse of the DtN block for k >= 1; for k = 0 the inverse on the balanced vector (1, -1)."""
    M = strip_dtn_block(k, h)
    if k == 0:
        v = np.array([1.0, -1.0]) / math.sqrt(2.0)
        return np.outer(v, v) * (h / 2.0)
    return np.linalg.inv(M)


def _blocks(k, heights):
    hp, hm = heights
    return strip_dtn_block(k, hp), strip_dtn_block(k, hm)


def strip_metric(k, heights, amplitudes):
    """Metric value of the flux xi = (a_0 cos(2 pi k x) ds on loop 0, a_1 cos(2 pi k x) ds on loop 1).

    For k = 0 the amplitudes must balance (a_0 + a_1 = 0).
    """
    a = np.asarray(amplitudes, dtype=float)
    hp, hm = heights
    if k == 0:
        if abs(a.sum()) > 1e-14 * max(1.0, np.abs(a).sum()):
            raise DomainError("constant flux must balance between the loops")
        return float(a @ (strip_ntd_block(0, hp) + strip_ntd_block(0, hm)) @ a)
    N = strip_ntd_block(k, hp) + strip_ntd_block(k, hm)
    return 0.5 * float(a @ N @ a)


def strip_single_layer(k, heights, f):
    """Boundary values (per loop amplitude) of the potential whose normal derivative jumps by f."""
    Mp, Mm = _blocks(k, heights)
    A = Mp + Mm
    if k == 0:
        return np.linalg.pinv(A) @ np.asarray(f, dtype=float)
    return np.linalg.solve(A, np.asarray(f, dtype=float))


def strip_double_layer(k, heights, g):
    """Common normal derivative (per loop amplitude) of the potential jumping by g.

    Returns (dnu, trace_plus, trace_minus).
    """
    Mp, Mm = _blocks(k, heights)
    g = np.asarray(g, dtype=float)
    A = Mp + Mm
    rhs = Mm @ g
    tp = np.linalg.pinv(A) @ rhs if k == 0 else np.linalg.solve(A, rhs)
    return Mp @ tp, tp, tp - g


def strip_potential(heights, theta):
    """Half the Dirichlet energy of constant unit-period fields on the two strips."""
    return 0.5 * (theta[0] ** 2 * heights[0] + theta[1] ** 2 * heights[1])


def strip_profile(k, h, top, bottom, y):
    """Harmonic e^{2 pi i k x} amplitude at height y in [0, h] with given boundary amplitudes."""
    y = np.asarray(y, dtype=float)
    if k == 0:
        return bottom + (top - bottom) * y / h
    kk = 2 * math.pi * abs(k)
    return (bottom * np.sinh(kk * (h - y)) + top * np.sinh(kk * y)) / math.sinh(kk * h)


def interface_frequencies(k, heights, velocities):
    """Linear frequencies of mode k for two interfaces separating uniform streams.

    Normal displacements z of both loops satisfy
    [(w - k U+)^2 N+ + (w - k U-)^2 N-] z = 0 with N = inverse DtN blocks and
    wavenumber 2 pi k.  Returns the four roots (complex when unstable).
    """
    if k < 1:
        raise DomainError("frequencies need k >= 1")
    kk = 2 * math.pi * k
    Np, Nm = strip_ntd_block(k, heights[0]), strip_ntd_block(k, heights[1])
    up, um = velocities
    A2 = Np + Nm
    A1 = -2 * kk * (up * Np + um * Nm)
    A0 = kk ** 2 * (up ** 2 * Np + um ** 2 * Nm)
    inv = np.linalg.inv(A2)
    comp = np.block([[np.zeros((2, 2)), np.eye(2)], [-inv @ A0, -inv @ A1]])
    return np.sort_complex(np.linalg.eigvals(comp))


@dataclass
class ReferenceFlow:
    k: int
    heights: tuple
    theta: tuple
    amplitude: float
    frequencies: np.ndarray
    metric: float
    potential: float

    def displacement(self, x, t, omega=None):
        """Normal displacement of loop 0 for a travelling wave started at amplitude ``amplitude``."""
        w = self.frequencies[0].real if omega is None else omega
        return self.amplitude * np.cos(2 * math.pi * self.k * np.asarray(x) - w * t)


def fourier_reference_flow(k, heights=(0.5, 0.5), theta=(0.0, 0.0), amplitude=0.0):
    """Closed-form data for a mode-k disturbance of a flat loop pair in uniform streams.

    ``metric`` is the value for a flux of ``amplitude * cos(2 pi k x) ds`` on loop 0,
    ``frequencies`` solve the interface dispersion relation and ``potential`` is the
    flat-configuration potential.
    """
    if not 0 < heights[0] < 1 or abs(heights[0] + heights[1] - 1.0) > 1e-12:
        raise DomainError("heights must be positive and sum to 1")
    freq = interface_frequencies(k, heights, theta) if k >= 1 else np.zeros(4, dtype=complex)
    metric = strip_metric(k, heights, (amplitude, 0.0)) if k >= 1 else 0.0
    return ReferenceFlow(k, tuple(heights), tuple(theta), amplitude, freq, metric,
                         strip_potential(heights, theta))


# ---------------------------------------------------------------- shape gradients

@dataclass
class ShapeGradient:
    values: np.ndarray
    error: np.ndarray
    order: np.ndarray


def shape_gradient_fd(energy, curve, directions, eps=(1e-2, 5e-3, 2.5e-3), deform=None):
    """Directional derivatives of ``energy(curve)`` along zero-flux normal densities.

    Central differences at each step in ``eps`` are Richardson-extrapolated (the
    error expansion is even in the step).  ``error`` is the last tableau correction
    and ``order`` the observed order of the raw central differences.
    """
    move = deform or move_sheet
    eps = np.asarray(eps, dtype=float)
    if np.any(np.abs(eps[1:] / eps[:-1] - 0.5) > 1e-12):
        raise ValueError("step sequence must halve")
    vals, errs, orders = [], [], []
    for d in directions:
        d = np.asarray(d, dtype=float)
        try:
            check_zero_sum(d, "shape direction")
        except ConstraintError as err:
            raise DomainError(f"direction changes the enclosed area: {err}") from None
        cd = np.array([(energy(move(curve, d, e)) - energy(move(curve, d, -e))) / (2 * e) for e in eps])
        table = [cd]
        for level in range(1, len(cd)):
            prev = table[-1]
            f = 4.0 ** level
            table.append((f * prev[1:] - prev[:-1]) / (f - 1))
        vals.append(table[-1][-1])
        errs.append(abs(table[-1][-1] - table[-2][-1]))
        if len(cd) >= 3 and abs(cd[1] - cd[2]) > 0 and abs(cd[0] - cd[1]) > 0:
            orders.append(math.log2(abs(cd[0] - cd[1]) / abs(cd[1] - cd[2])))
        else:
            orders.append(float("nan"))
    return ShapeGradient(np.array(vals), np.array(errs), np.array(orders))
