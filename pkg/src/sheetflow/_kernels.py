"""Hot loops for the periodic Laplace kernel.

Every kernel has a numba version and a numpy twin with identical arithmetic.
Set ``SHEETFLOW_NUMBA=0`` to force the numpy path; ``SHEETFLOW_THREADS`` caps
the numba thread pool (0 means the numba default).

The kernel is the zero-mean periodic Green function of the unit torus with
Laplacian ``delta - 1``, summed as a product over horizontal image rows:

    G(x, y) = -(y^2 - |y| + 1/6) / 2
              + 1/(2 pi) sum_j log|1 - exp(2 pi i x - 2 pi b_j)|

with ``b_j = |y| + j`` and ``b_j = j + 1 - |y|`` (j >= 0).  The nearest rows are
summed exactly; the rest have |w| < exp(-4 pi) and are summed as geometric series
of their first two Taylor terms (the cubic term is below 1e-16).
"""
import cmath
import math
import os

import numpy as np

PI = math.pi
TWO_PI = 2.0 * math.pi
LOG2 = math.log(2.0)
ROW_DECAY = math.exp(-TWO_PI)
TAIL_1 = 1.0 / (1.0 - ROW_DECAY)
TAIL_2 = 1.0 / (1.0 - ROW_DECAY ** 2)

try:
    import numba
    from numba import njit, prange
    # the bundled TBB is too old on some systems; workqueue is always available
    numba.config.THREADING_LAYER = "workqueue"
    HAS_NUMBA = True
    # prange only pays off with more than one core
    PARALLEL = (os.cpu_count() or 1) > 1
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAS_NUMBA = False


def use_numba():
    return HAS_NUMBA and os.environ.get("SHEETFLOW_NUMBA", "1") not in ("0", "false", "no")


def _apply_thread_cap():
    if not HAS_NUMBA:
        return
    cap = int(os.environ.get("SHEETFLOW_THREADS", "0") or 0)
    if cap > 0:
        numba.set_num_threads(min(cap, numba.config.NUMBA_NUM_THREADS))


_apply_thread_cap()


def smooth_part_at_origin():
    """Limit of G(r) - log(r)/(2 pi) as r -> 0."""
    rows = sum(math.log1p(-math.exp(-TWO_PI * j)) for j in range(1, 12))
    return -1.0 / 12.0 + math.log(TWO_PI) / TWO_PI + rows / PI


# ---------------------------------------------------------------- numba path

if HAS_NUMBA:

    @njit(cache=True, error_model="numpy")
    def _point_nb(dx, dy, hess):
        dx = dx - math.floor(dx + 0.5)
        dy = dy - math.floor(dy + 0.5)
        ay = abs(dy)
        sy = 1.0 if dy >= 0.0 else -1.0
        g = -0.5 * (ay * ay - ay + 1.0 / 6.0)
        gx = 0.0
        gy = -dy + 0.5 * sy
        hxx = 0.0
        hxy = 0.0
        hyy = -1.0
        # nearest row in closed form through zeta = exp(i pi z), stable as z -> 0
        cp = math.cos(PI * dx)
        sp = math.sin(PI * dx)
        ea = math.exp(-PI * ay)
        zeta = complex(cp * ea, sp * ea)
        izeta = complex(cp / ea, -sp / ea)
        s = (zeta - izeta) * -0.5j
        c = (zeta + izeta) * 0.5
        g += (LOG2 + math.log(abs(s)) - PI * ay) / TWO_PI
        W = 0.5j * c / s - 0.5
        gx += W.imag
        gy += sy * W.real
        if hess:
            V = W * (1.0 + W)
            hxx += TWO_PI * V.real
            hyy -= TWO_PI * V.real
            hxy -= TWO_PI * V.imag * sy
        e = complex(cp * cp - sp * sp, 2.0 * cp * sp)
        q = ea * ea
        up = e * q * ROW_DECAY
        down = e * ROW_DECAY / q
        prod = complex(1.0, 0.0)
        for k in range(3):
            if k == 0:
                w = up
                sgn = sy
            else:
                w = down
                sgn = -sy
                down = down * ROW_DECAY
            om = 1.0 - w
            prod = prod * om
            W = w / om
            gx += W.imag
            gy += sgn * W.real
            if hess:
                V = W * (1.0 + W)
                hxx += TWO_PI * V.real
                hyy -= TWO_PI * V.real
                hxy -= TWO_PI * V.imag * sgn
        # remaining rows have |w| < exp(-4 pi): sum w + w^2 / 2 as geometric series
        for k in range(2):
            if k == 0:
                w = up * ROW_DECAY
                sgn = sy
            else:
                w = down
                sgn = -sy
            s1 = w * TAIL_1
            s2 = w * w * TAIL_2
            g -= (s1 + 0.5 * s2).real / TWO_PI
            W = s1 + s2
            gx += W.imag
            gy += sgn * W.real
            if hess:
                V = s1 + 2.0 * s2
                hxx += TWO_PI * V.real
                hyy -= TWO_PI * V.real
                hxy -= TWO_PI * V.imag * sgn
        g += math.log(abs(prod)) / TWO_PI
        return g, gx, gy, hxx, hxy, hyy

    @njit(cache=True, parallel=PARALLEL, error_model="numpy")
    def _pairs_nb(dx, dy, hess):
        n = dx.size
        out = np.empty((6, n))
        fx = dx.ravel()
        fy = dy.ravel()
        for i in prange(n):
            r = _point_nb(fx[i], fy[i], hess)
            for k in range(6):
                out[k, i] = r[k]
        return out

    @njit(cache=True, parallel=PARALLEL, error_model="numpy")
    def _matrix_nb(tx, ty, sx, sy, skip_diag):
        m = tx.size
        n = sx.size
        G = np.zeros((m, n))
        Gx = np.zeros((m, n))
        Gy = np.zeros((m, n))
        for i in prange(m):
            for j in range(n):
                if skip_diag and i == j:
                    continue
                g, gx, gy, _, _, _ = _point_nb(tx[i] - sx[j], ty[i] - sy[j], False)
                G[i, j] = g
                Gx[i, j] = gx
                Gy[i, j] = gy
        return G, Gx, Gy

    @njit(cache=True, parallel=PARALLEL, error_model="numpy")
    def _layer_nb(tx, ty, sx, sy, nx, ny, sw, mw, grad):
        m = tx.size
        n = sx.size
        val = np.zeros(m)
        vx = np.zeros(m)
        vy = np.zeros(m)
        for i in prange(m):
            a = 0.0
            ax = 0.0
            ay = 0.0
            for j in range(n):
                g, gx, gy, hxx, hxy, hyy = _point_nb(tx[i] - sx[j], ty[i] - sy[j], grad)
                a += g * sw[j] - (nx[j] * gx + ny[j] * gy) * mw[j]
                if grad:
                    ax += gx * sw[j] - (hxx * nx[j] + hxy * ny[j]) * mw[j]
                    ay += gy * sw[j] - (hxy * nx[j] + hyy * ny[j]) * mw[j]
            val[i] = a
            vx[i] = ax
            vy[i] = ay
        return val, vx, vy


# ---------------------------------------------------------------- numpy path

def _pairs_np(dx, dy, hess):
    dx = np.asarray(dx, float).ravel()
    dy = np.asarray(dy, float).ravel()
    dx = dx - np.floor(dx + 0.5)
    dy = dy - np.floor(dy + 0.5)
    ay = np.abs(dy)
    sy = np.where(dy >= 0.0, 1.0, -1.0)
    g = -0.5 * (ay * ay - ay + 1.0 / 6.0)
    gx = np.zeros_like(dx)
    gy = -dy + 0.5 * sy
    hxx = np.zeros_like(dx)
    hxy = np.zeros_like(dx)
    hyy = -np.ones_like(dx)
    cp = np.cos(PI * dx)
    sp = np.sin(PI * dx)
    ea = np.exp(-PI * ay)
    zeta = (cp + 1j * sp) * ea
    izeta = (cp - 1j * sp) / ea
    s = (zeta - izeta) * -0.5j
    c = (zeta + izeta) * 0.5
    g += (LOG2 + np.log(np.abs(s)) - PI * ay) / TWO_PI
    W = 0.5j * c / s - 0.5
    gx += W.imag
    gy += sy * W.real
    if hess:
        V = W * (1.0 + W)
        hxx += TWO_PI * V.real
        hyy -= TWO_PI * V.real
        hxy -= TWO_PI * V.imag * sy
    e = (cp * cp - sp * sp) + 2j * cp * sp
    q = ea * ea
    up = e * q * ROW_DECAY
    down = e * ROW_DECAY / q
    prod = np.ones_like(e)
    for k in range(3):
        if k == 0:
            w = up
            sgn = sy
        else:
            w = down
            sgn = -sy
            down = down * ROW_DECAY
        om = 1.0 - w
        prod = prod * om
        W = w / om
        gx += W.imag
        gy += sgn * W.real
        if hess:
            V = W * (1.0 + W)
            hxx += TWO_PI * V.real
            hyy -= TWO_PI * V.real
            hxy -= TWO_PI * V.imag * sgn
    for k in range(2):
        if k == 0:
            w = up * ROW_DECAY
            sgn = sy
        else:
            w = down
            sgn = -sy
        s1 = w * TAIL_1
        s2 = w * w * TAIL_2
        g -= (s1 + 0.5 * s2).real / TWO_PI
        W = s1 + s2
        gx += W.imag
        gy += sgn * W.real
        if hess:
            V = s1 + 2.0 * s2
            hxx += TWO_PI * V.real
            hyy -= TWO_PI * V.real
            hxy -= TWO_PI * V.imag * sgn
    g += np.log(np.abs(prod)) / TWO_PI
    return np.stack([g, gx, gy, hxx, hxy, hyy])


def _matrix_np(tx, ty, sx, sy, skip_diag):
    m, n = tx.size, sx.size
    dx = tx[:, None] - sx[None, :]
    dy = ty[:, None] - sy[None, :]
    if skip_diag:
        idx = np.arange(min(m, n))
        dx[idx, idx] = 0.5
        dy[idx, idx] = 0.5
    out = _pairs_np(dx, dy, False)
    G, Gx, Gy = (out[k].reshape(m, n) for k in range(3))
    if skip_diag:
        for A in (G, Gx, Gy):
            A[idx, idx] = 0.0
    return G, Gx, Gy


def _layer_np(tx, ty, sx, sy, nx, ny, sw, mw, grad, chunk=256):
    m = tx.size
    val = np.zeros(m)
    vx = np.zeros(m)
    vy = np.zeros(m)
    for lo in range(0, m, chunk):
        hi = min(m, lo + chunk)
        dx = tx[lo:hi, None] - sx[None, :]
        dy = ty[lo:hi, None] - sy[None, :]
        g, gx, gy, hxx, hxy, hyy = (a.reshape(dx.shape) for a in _pairs_np(dx, dy, grad))
        val[lo:hi] = g @ sw - (gx * nx + gy * ny) @ mw
        if grad:
            vx[lo:hi] = gx @ sw - (hxx * nx + hxy * ny) @ mw
            vy[lo:hi] = gy @ sw - (hxy * nx + hyy * ny) @ mw
    return val, vx, vy


# ---------------------------------------------------------------- dispatch

def kernel_pairs(dx, dy, hess=False):
    """Return an array (6, n): G, dG/dx, dG/dy, and (if ``hess``) the Hessian entries."""
    dx = np.ascontiguousarray(dx, dtype=float).ravel()
    dy = np.ascontiguousarray(dy, dtype=float).ravel()
    if use_numba():
        return _pairs_nb(dx, dy, hess)
    return _pairs_np(dx, dy, hess)


def kernel_matrix(targets, sources, skip_diag=False):
    """G and its gradient for every (target, source) pair; rows are targets."""
    t = np.ascontiguousarray(targets, dtype=float)
    s = np.ascontiguousarray(sources, dtype=float)
    args = (t[:, 0].copy(), t[:, 1].copy(), s[:, 0].copy(), s[:, 1].copy(), skip_diag)
    if use_numba():
        return _matrix_nb(*args)
    return _matrix_np(*args)


def layer_sum(targets, sources, normals, single_w, double_w, grad=True):
    """Sum single- and double-layer contributions at off-surface targets.

    ``single_w`` and ``double_w`` are densities already multiplied by the
    quadrature weights.  Returns value and gradient components.
    """
    t = np.ascontiguousarray(targets, dtype=float).reshape(-1, 2)
    s = np.ascontiguousarray(sources, dtype=float)
    nrm = np.ascontiguousarray(normals, dtype=float)
    args = (t[:, 0].copy(), t[:, 1].copy(), s[:, 0].copy(), s[:, 1].copy(),
            nrm[:, 0].copy(), nrm[:, 1].copy(),
            np.ascontiguousarray(single_w, dtype=float), np.ascontiguousarray(double_w, dtype=float),
            grad)
    if use_numba():
        return _layer_nb(*args)
    return _layer_np(*args)


# ---------------------------------------------------------------- polygon crossings

if HAS_NUMBA:

    @njit(cache=True, error_model="numpy")
    def _crossing_nb(P, Q, same, sx, sy):
        n = P.shape[0] - 1
        m = Q.shape[0] - 1
        for i in range(n):
            ax, ay, bx, by = P[i, 0], P[i, 1], P[i + 1, 0], P[i + 1, 1]
            for j in range(m):
                if same:
                    dij = abs(i - j)
                    if dij <= 1 or dij == n - 1:
                        continue
                cx, cy = Q[j, 0] + sx, Q[j, 1] + sy
                dx, dy = Q[j + 1, 0] + sx, Q[j + 1, 1] + sy
                if max(ax, bx) < min(cx, dx) or max(cx, dx) < min(ax, bx):
                    continue
                if max(ay, by) < min(cy, dy) or max(cy, dy) < min(ay, by):
                    continue
                d1 = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
                d2 = (bx - ax) * (dy - ay) - (by - ay) * (dx - ax)
                d3 = (dx - cx) * (ay - cy) - (dy - cy) * (ax - cx)
                d4 = (dx - cx) * (by - cy) - (dy - cy) * (bx - cx)
                if d1 * d2 < 0.0 and d3 * d4 < 0.0:
                    return i, j
        return -1, -1


def _crossing_np(P, Q, same, sx, sy):
    a, b = P[:-1], P[1:]
    c, d = Q[:-1] + (sx, sy), Q[1:] + (sx, sy)
    A, B = a[:, None, :], b[:, None, :]
    C, D = c[None, :, :], d[None, :, :]

    def cross(o, p, q):
        return (p[..., 0] - o[..., 0]) * (q[..., 1] - o[..., 1]) - (p[..., 1] - o[..., 1]) * (q[..., 0] - o[..., 0])

    hit = (cross(A, B, C) * cross(A, B, D) < 0) & (cross(C, D, A) * cross(C, D, B) < 0)
    if same:
        n = len(a)
        i, j = np.indices(hit.shape)
        dij = np.abs(i - j)
        hit &= ~((dij <= 1) | (dij == n - 1))
    idx = np.argwhere(hit)
    if len(idx) == 0:
        return -1, -1
    return int(idx[0, 0]), int(idx[0, 1])


def first_crossing(P, Q, same, shift=(0.0, 0.0)):
    """First pair of crossing segments between closed polylines P and Q (rows repeat the start)."""
    P = np.ascontiguousarray(P, dtype=float)
    Q = np.ascontiguousarray(Q, dtype=float)
    if use_numba():
        return _crossing_nb(P, Q, same, float(shift[0]), float(shift[1]))
    return _crossing_np(P, Q, same, float(shift[0]), float(shift[1]))
