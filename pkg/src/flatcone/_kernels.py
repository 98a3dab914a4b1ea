"""Hot loops of the recurrence, with a numba and a pure-numpy implementation.

Both implementations compute the same quantity.  For a two-defect signature
``(phi1, phi2), (alpha_a, alpha_b)`` and each ordered split, the area of the
split sphere is

    A(beta) = a1(beta) + a2(beta) = K + R cos(beta - theta),

a single sinusoid on the beta interval.  Sub-level sets ``{A <= Y}`` are
therefore unions of at most two intervals with closed-form ends, and all
remaining integrals have smooth integrands handled by Gauss-Legendre rules.

``cut_integral`` returns, for every level ``Y``,

    mode 0:  int_{A <= Y} h(beta) d beta
    mode 1:  int_{A <= Y} h(beta) (Y - A) / (1 - qp (x0 + A)) d beta

with ``h = A / (1 - qc A)``.

Set ``FLATCONE_DISABLE_NUMBA=1`` to force the numpy path.
"""

from __future__ import annotations

import math
import os

import numpy as np

TWO_PI = 2.0 * math.pi

try:  # pragma: no cover - exercised implicitly
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False


def numba_enabled() -> bool:
    return HAVE_NUMBA and os.environ.get("FLATCONE_DISABLE_NUMBA", "0") in ("", "0")


def split_sinusoid(phi1: float, s_hat: float, s_tilde: float):
    """Interval and sinusoid coefficients ``(lo, hi, K, R, theta)`` of one split."""
    lo = max(0.0, phi1 - s_tilde)
    hi = min(phi1, s_hat)
    sh = math.sin(0.5 * s_hat)
    st = math.sin(0.5 * s_tilde)
    ch = math.cos(0.5 * s_hat)
    ct = math.cos(0.5 * s_tilde)
    gamma = phi1 - 0.5 * s_tilde
    P = 0.5 * ch / sh + 0.5 * math.cos(gamma) / st
    Q = 0.5 + 0.5 * math.sin(gamma) / st
    K = -0.5 * ch / sh - 0.5 * ct / st
    return lo, hi, K, math.hypot(P, Q), math.atan2(Q, P)


def split_area(beta, phi1: float, s_hat: float, s_tilde: float):
    """``A(beta)`` from the product formula ``1/q = sin(x/2) sin(y/2) / sin((x+y)/2)``."""
    beta = np.asarray(beta, dtype=float)
    a1 = np.sin(0.5 * beta) * np.sin(0.5 * (s_hat - beta)) / math.sin(0.5 * s_hat)
    a2 = np.sin(0.5 * (phi1 - beta)) * np.sin(0.5 * (s_tilde - phi1 + beta)) / math.sin(0.5 * s_tilde)
    return a1 + a2


# ---------------------------------------------------------------------------
# numpy implementation
# ---------------------------------------------------------------------------


def _cut_numpy(phi1, alpha_a, alpha_b, qc, Y, mode, x0, qp, t, w):
    Y = np.asarray(Y, dtype=float)
    out = np.zeros_like(Y)
    for sh_, st_ in ((alpha_a, alpha_b), (alpha_b, alpha_a)):
        lo, hi, K, R, th = split_sinusoid(phi1, sh_, st_)
        if hi <= lo:
            continue
        c = (Y - K) / R
        live = c >= -1.0
        if not np.any(live):
            continue
        Yl = Y[live]
        om = np.arccos(np.minimum(c[live], 1.0))
        j0 = np.floor((lo - th - om) / TWO_PI) - 1.0
        acc = np.zeros_like(Yl)
        for dj in range(4):
            base = th + TWO_PI * (j0 + dj)
            u = np.maximum(base + om, lo)
            v = np.minimum(base + TWO_PI - om, hi)
            ok = v > u
            if not np.any(ok):
                continue
            uu, vv, yy = u[ok], v[ok], Yl[ok]
            half = 0.5 * (vv - uu)
            beta = (0.5 * (uu + vv))[:, None] + half[:, None] * t[None, :]
            A = K + R * np.cos(beta - th)
            g = A / (1.0 - qc * A)
            if mode == 1:
                g = g * (yy[:, None] - A) / (1.0 - qp * (x0 + A))
            acc[ok] += half * (g @ w)
        out[live] += acc
    return out


def _batched_numpy(coef, x0, phi1c, aa, ab, qc, bt, P, mode, qp, t, w):
    total = np.zeros_like(P)
    for j in range(coef.size):
        Y = P - x0[j]
        if mode == 1:
            Yc = np.minimum(Y, bt[j])
            m = Yc > 0.0
            if not np.any(m):
                continue
            val = _cut_numpy(phi1c[j], aa[j], ab[j], qc[j], Yc[m], 1, x0[j], qp, t, w)
            clipped = Yc[m] < Y[m]
            ratio = np.where(clipped, (1.0 - qp * P[m]) / (1.0 - qp * (x0[j] + Yc[m])), 1.0)
            total[m] += coef[j] * val * ratio
        else:
            m = (Y > 0.0) & (Y < bt[j])
            if not np.any(m):
                continue
            total[m] += coef[j] * _cut_numpy(phi1c[j], aa[j], ab[j], qc[j], Y[m], 0, 0.0, 0.0, t, w)
    return total


# ---------------------------------------------------------------------------
# numba implementation
# ---------------------------------------------------------------------------

if HAVE_NUMBA:

    @njit(cache=True, nogil=True)
    def _split_sinusoid_nb(phi1, s_hat, s_tilde):
        lo = max(0.0, phi1 - s_tilde)
        hi = min(phi1, s_hat)
        sh = math.sin(0.5 * s_hat)
        st = math.sin(0.5 * s_tilde)
        ch = math.cos(0.5 * s_hat)
        ct = math.cos(0.5 * s_tilde)
        gamma = phi1 - 0.5 * s_tilde
        P = 0.5 * ch / sh + 0.5 * math.cos(gamma) / st
        Q = 0.5 + 0.5 * math.sin(gamma) / st
        K = -0.5 * ch / sh - 0.5 * ct / st
        return lo, hi, K, math.hypot(P, Q), math.atan2(Q, P)

    @njit(cache=True, nogil=True)
    def _cut_scalar_nb(phi1, alpha_a, alpha_b, qc, y, mode, x0, qp, t, w):
        total = 0.0
        for s in range(2):
            if s == 0:
                sh_, st_ = alpha_a, alpha_b
            else:
                sh_, st_ = alpha_b, alpha_a
            lo, hi, K, R, th = _split_sinusoid_nb(phi1, sh_, st_)
            if hi <= lo:
                continue
            c = (y - K) / R
            if c < -1.0:
                continue
            if c > 1.0:
                c = 1.0
            om = math.acos(c)
            j0 = math.floor((lo - th - om) / TWO_PI) - 1.0
            for dj in range(4):
                base = th + TWO_PI * (j0 + dj)
                u = max(base + om, lo)
                v = min(base + TWO_PI - om, hi)
                if v <= u:
                    continue
                half = 0.5 * (v - u)
                mid = 0.5 * (u + v)
                acc = 0.0
                for i in range(t.size):
                    A = K + R * math.cos(mid + half * t[i] - th)
                    g = A / (1.0 - qc * A)
                    if mode == 1:
                        g *= (y - A) / (1.0 - qp * (x0 + A))
                    acc += w[i] * g
                total += half * acc
        return total

    @njit(cache=True, nogil=True)
    def _cut_nb(phi1, alpha_a, alpha_b, qc, Y, mode, x0, qp, t, w):
        out = np.empty(Y.size)
        for k in range(Y.size):
            out[k] = _cut_scalar_nb(phi1, alpha_a, alpha_b, qc, Y[k], mode, x0, qp, t, w)
        return out

    @njit(cache=True, nogil=True)
    def _batched_nb(coef, x0, phi1c, aa, ab, qc, bt, P, mode, qp, t, w):
        total = np.zeros(P.size)
        for j in range(coef.size):
            for k in range(P.size):
                Y = P[k] - x0[j]
                if mode == 1:
                    Yc = min(Y, bt[j])
                    if Yc <= 0.0:
                        continue
                    val = _cut_scalar_nb(phi1c[j], aa[j], ab[j], qc[j], Yc, 1, x0[j], qp, t, w)
                    if Yc < Y:
                        val *= (1.0 - qp * P[k]) / (1.0 - qp * (x0[j] + Yc))
                    total[k] += coef[j] * val
                else:
                    if Y <= 0.0 or Y >= bt[j]:
                        continue
                    total[k] += coef[j] * _cut_scalar_nb(phi1c[j], aa[j], ab[j], qc[j], Y, 0, 0.0, 0.0, t, w)
        return total


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------


def cut_integral(phi1, alpha_a, alpha_b, qc, Y, mode=0, x0=0.0, qp=0.0, t=None, w=None, backend=None):
    """See module docstring; ``t, w`` is a Gauss-Legendre rule on [-1, 1]."""
    Y = np.ascontiguousarray(np.atleast_1d(np.asarray(Y, dtype=float)))
    if t is None:
        t, w = gauss_legendre(32)
    use_nb = numba_enabled() if backend is None else backend == "numba"
    if use_nb:
        return _cut_nb(float(phi1), float(alpha_a), float(alpha_b), float(qc), Y, int(mode), float(x0), float(qp), t, w)
    return _cut_numpy(phi1, alpha_a, alpha_b, qc, Y, mode, x0, qp, t, w)


def batched_cut(nodes: dict, P, mode: int, qp: float, t, w, backend=None):
    """Weighted sum of :func:`cut_integral` over many child nodes.

    ``nodes`` holds equal-length arrays ``coef, x0, phi1c, aa, ab, qc, bt``:
    node weight, shift of the atom partner, child angle and defects, child
    ``q`` and the child's support bound (``inf`` when unbounded).  Mode 1
    returns ``sum coef * (1 - qp P) * int_0^P (1 - qp s)**-2 m_j(s - x0) ds``,
    mode 0 returns ``sum coef * m_j(P - x0)``.
    """
    P = np.ascontiguousarray(np.atleast_1d(np.asarray(P, dtype=float)))
    args = [np.ascontiguousarray(nodes[k], dtype=float) for k in ("coef", "x0", "phi1c", "aa", "ab", "qc", "bt")]
    use_nb = numba_enabled() if backend is None else backend == "numba"
    if use_nb:
        return _batched_nb(*args, P, int(mode), float(qp), t, w)
    return _batched_numpy(*args, P, mode, qp, t, w)


_GL_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def gauss_legendre(n: int):
    if n not in _GL_CACHE:
        t, w = np.polynomial.legendre.leggauss(n)
        _GL_CACHE[n] = (np.ascontiguousarray(t), np.ascontiguousarray(w))
    return _GL_CACHE[n]


def tanh_rule(n: int):
    """Gauss-Legendre in ``u`` on ``[-U, U]`` mapped by ``s = tanh(u)``.

    Returns nodes ``s`` in (-1, 1) and weights for ``int_{-1}^{1} g(s) ds``.
    Nodes cluster doubly-exponentially at the ends, so integrable endpoint
    singularities of ``g`` are absorbed.
    """
    U = min(12.0, 2.5 + 0.9 * math.log(n))
    t, w = np.polynomial.legendre.leggauss(n)
    u = U * t
    s = np.tanh(u)
    ws = U * w / np.cosh(u) ** 2
    return s, ws
