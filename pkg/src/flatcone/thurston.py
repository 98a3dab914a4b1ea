"""Polygonal coordinates and the Hermitian area form.

Cut the sphere along paths from the last cone point to all the others; the
result develops onto a polygon whose vertices alternate between copies
``P_1 .. P_{n-1}`` of the last cone point and the remaining cone points.
With ``z_k = P_k - P_{n-1}`` the area is a Hermitian form in ``z``.

``hermitian_matrix`` builds the tridiagonal matrix with diagonal
``-(c_k + c_{k+1})/4`` and off-diagonal ``-(c_{k+1} -+ i)/4``,
``c_k = cot(alpha_k / 2)``.  That matrix represents the area in the
alternating coordinates ``w_k = (-1)**k z_k``; :func:`area_value` takes
plain vertex differences ``z`` and applies the sign flip, so it returns the
oriented area of a counterclockwise polygon.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BadDefectList, DimensionMismatch, NonPositiveArea

FOUR_PI = 4.0 * math.pi


@dataclass(frozen=True)
class AreaForm:
    defects: tuple[float, ...]
    matrix: np.ndarray

    @property
    def n(self) -> int:
        return len(self.defects)

    @property
    def dim(self) -> int:
        return self.n - 2

    def signs(self) -> np.ndarray:
        """Diagonal of the coordinate flip ``w = D z``."""
        return np.array([(-1.0) ** (k + 1) for k in range(self.dim)])


def _check_defects(defects) -> tuple[float, ...]:
    d = tuple(float(a) for a in defects)
    if len(d) < 3:
        raise BadDefectList(f"need at least 3 cone points, got {len(d)}")
    for i, a in enumerate(d):
        if not (0.0 < a < 2.0 * math.pi):
            raise BadDefectList(f"defect {i} = {a!r} is not in (0, 2*pi)")
    if abs(math.fsum(d) - FOUR_PI) > 1e-12:
        raise BadDefectList(f"defects sum to {math.fsum(d)!r}, expected 4*pi")
    return d


def hermitian_matrix(defects) -> AreaForm:
    d = _check_defects(defects)
    n = len(d)
    c = [1.0 / math.tan(0.5 * a) for a in d]
    m = n - 2
    H = np.zeros((m, m), dtype=complex)
    for k in range(m):
        H[k, k] = -(c[k] + c[k + 1]) / 4.0
        if k + 1 < m:
            H[k, k + 1] = -(c[k + 1] - 1j) / 4.0
            H[k + 1, k] = -(c[k + 1] + 1j) / 4.0
    H.setflags(write=False)
    return AreaForm(d, H)


def determinant(form: AreaForm) -> float:
    """``det H`` by the three-term recurrence for tridiagonal matrices."""
    H = form.matrix
    prev, cur = 1.0, H[0, 0].real
    for k in range(1, form.dim):
        off = abs(H[k - 1, k]) ** 2
        prev, cur = cur, H[k, k].real * cur - off * prev
    return cur


def determinant_formula(defects) -> float:
    d = _check_defects(defects)
    n = len(d)
    den = 4.0 ** (n - 2) * math.prod(math.sin(0.5 * a) for a in d[:-1])
    return (-1.0) ** (n - 1) * math.sin(0.5 * d[-1]) / den


def det_identity_check(defects, rtol: float = 1e-10):
    form = hermitian_matrix(defects)
    lhs = complex(determinant(form))
    rhs = complex(determinant_formula(form.defects))
    return lhs, rhs, abs(lhs - rhs) <= rtol * abs(rhs)


def area_value(form: AreaForm, z) -> float:
    """Area of the developed polygon with vertex differences ``z``."""
    z = np.asarray(z, dtype=complex).ravel()
    if z.size != form.dim:
        raise DimensionMismatch(f"expected {form.dim} coordinates, got {z.size}")
    w = form.signs() * z
    val = np.conj(w) @ form.matrix @ w
    return float(val.real)


def volume_density(form: AreaForm, y) -> float:
    """``|det H| / A(y, 1)**(n-2)`` on the affine chart ``z = (y, 1)``."""
    y = np.asarray(y, dtype=complex).ravel()
    if y.size != form.dim - 1:
        raise DimensionMismatch(f"expected {form.dim - 1} chart coordinates, got {y.size}")
    A = area_value(form, np.concatenate([y, [1.0]]))
    if not A > 0.0:
        raise NonPositiveArea(f"area {A!r} is not positive at this chart point")
    return abs(determinant(form)) / A ** (form.n - 2)


def signature_defects(phi1: float, phi2: float, alpha) -> tuple[float, ...]:
    """Full defect list of a signature: ``2 pi - phi`` for the two marked points, then ``alpha``."""
    d = (2.0 * math.pi - phi1, 2.0 * math.pi - phi2) + tuple(alpha)
    return _check_defects(d)
