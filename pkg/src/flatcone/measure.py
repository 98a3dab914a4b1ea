"""Finite nonnegative measures on the half-line ``[0, inf)``.

A :class:`Measure1D` is a list of atoms plus a sum of absolutely continuous
parts.  Three kinds of part are supported:

* :class:`PiecewiseDensity` -- piecewise-linear samples on a grid, with
  optional power-law singularity factors in the two end cells;
* :class:`PowerLawDensity` -- ``sum_k c_k x**p_k`` on an interval, used for
  exact tails such as ``1/a**2`` on ``[1, inf)``;
* :class:`MappedDensity` -- the exact pushforward of another part along a
  monotone map.  Masses, CDFs and moments are computed on the source side,
  so pushforwards conserve mass up to rounding.

All integrals are evaluated with Gauss-Legendre or Gauss-Jacobi rules whose
weights absorb the endpoint singularities.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.optimize import brentq
from scipy.special import roots_jacobi

from .errors import (
    DivergentMoment,
    InvalidMeasure,
    NonMonotoneBranch,
    NotNormalized,
    ZeroDerivativeInInterior,
)

FORMAT_VERSION = "flatcone.measure/1"
ZERO_MASS = 1e-15
NODES = 10


@lru_cache(maxsize=256)
def _jacobi_rule(a: float, b: float, n: int = NODES):
    """Nodes/weights on [-1, 1] for the weight ``(1-t)**a (1+t)**b``."""
    if a == 0.0 and b == 0.0:
        t, w = np.polynomial.legendre.leggauss(n)
    else:
        t, w = roots_jacobi(n, a, b)
    t.setflags(write=False)
    w.setflags(write=False)
    return t, w


# ---------------------------------------------------------------------------
# Parts
# ---------------------------------------------------------------------------


class _Part:
    """Interface shared by the continuous parts of a measure."""

    lo: float
    hi: float

    def mass(self) -> float:
        return float(self.cumulative(None, np.array([self.hi]))[0])

    def cdf(self, x) -> np.ndarray:
        return self.cumulative(None, x)

    def integrate(self, func) -> float:
        return float(self.cumulative(func, np.array([self.hi]))[0])

    def cumulative(self, func, xs) -> np.ndarray:  # pragma: no cover - interface
        raise NotImplementedError

    def evaluate(self, x) -> np.ndarray:  # pragma: no cover - interface
        raise NotImplementedError

    def moment(self, exponent: float) -> float:  # pragma: no cover - interface
        raise NotImplementedError

    def knots(self) -> np.ndarray:  # pragma: no cover - interface
        raise NotImplementedError

    def scaled(self, c: float) -> "_Part":  # pragma: no cover - interface
        raise NotImplementedError

    def to_dict(self) -> dict:  # pragma: no cover - interface
        raise NotImplementedError


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


class PiecewiseDensity(_Part):
    """Piecewise-linear density on ``[breakpoints[0], breakpoints[-1]]``.

    With ``left_exponent = s`` the first cell carries the extra factor
    ``((x - b0) / h0)**s``; ``right_exponent`` does the same at the right end.
    """

    def __init__(self, breakpoints, values, left_exponent=None, right_exponent=None):
        b = _frozen(breakpoints)
        v = _frozen(values)
        if b.ndim != 1 or b.shape != v.shape or b.size < 2:
            raise InvalidMeasure("breakpoints and values must be 1-d of equal length >= 2")
        if b[0] < 0.0 or not np.all(np.diff(b) > 0.0) or not np.all(np.isfinite(b)):
            raise InvalidMeasure("breakpoints must be finite, nonnegative and strictly increasing")
        if not np.all(np.isfinite(v)) or np.any(v < 0.0):
            raise InvalidMeasure("density values must be finite and nonnegative")
        for s in (left_exponent, right_exponent):
            if s is not None and not (-1.0 < s <= 0.0):
                raise InvalidMeasure(f"singularity exponent {s!r} outside (-1, 0]")
        self.breakpoints = b
        self.values = v
        self.left_exponent = None if not left_exponent else float(left_exponent)
        self.right_exponent = None if not right_exponent else float(right_exponent)
        self.lo = float(b[0])
        self.hi = float(b[-1])

    @property
    def ncells(self) -> int:
        return self.breakpoints.size - 1

    def _linear(self, x, cell):
        b, v = self.breakpoints, self.values
        h = b[cell + 1] - b[cell]
        t = (x - b[cell]) / h
        return v[cell] + (v[cell + 1] - v[cell]) * t

    def _factor(self, x, cell, skip_left=None, skip_right=None):
        """Explicit singular factors, except where absorbed into a quadrature weight."""
        b = self.breakpoints
        out = np.ones_like(x)
        if self.left_exponent is not None:
            m = cell == 0
            if skip_left is not None:
                m = m & ~skip_left
            if np.any(m):
                h0 = b[1] - b[0]
                d = np.maximum(x[m] - b[0], 0.0) / h0
                with np.errstate(divide="ignore"):
                    out[m] *= d ** self.left_exponent
        if self.right_exponent is not None:
            m = cell == self.ncells - 1
            if skip_right is not None:
                m = m & ~skip_right
            if np.any(m):
                hn = b[-1] - b[-2]
                d = np.maximum(b[-1] - x[m], 0.0) / hn
                with np.errstate(divide="ignore"):
                    out[m] *= d ** self.right_exponent
        return out

    def evaluate(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        flat = np.atleast_1d(x).ravel()
        out = np.zeros_like(flat)
        inside = (flat >= self.lo) & (flat <= self.hi)
        if np.any(inside):
            xi = flat[inside]
            cell = np.clip(np.searchsorted(self.breakpoints, xi, side="right") - 1, 0, self.ncells - 1)
            out[inside] = self._linear(xi, cell) * self._factor(xi, cell)
        return out.reshape(x.shape) if x.ndim else out[0]

    def _anchored(self, func, ends, cells, side, power):
        """Integrals from the singular end of a cell to ``ends``.

        ``side`` is ``"left"`` (integral over [b_cell, end]) or ``"right"``
        (integral over [end, b_cell+1]).  The singular factor of that side,
        and optionally ``x**power`` when the cell starts at zero, goes into
        the Gauss-Jacobi weight.
        """
        b = self.breakpoints
        out = np.zeros(ends.size)
        if ends.size == 0:
            return out
        if side == "left":
            u = b[cells]
            w = ends
            s = self.left_exponent if (self.left_exponent is not None) else 0.0
            s_eff = np.where(cells == 0, s, 0.0)
        else:
            u = ends
            w = b[cells + 1]
            s = self.right_exponent if (self.right_exponent is not None) else 0.0
            s_eff = np.where(cells == self.ncells - 1, s, 0.0)
        width = w - u
        ok = width > 0.0
        if not np.any(ok):
            return out
        # group by effective weight exponent (few distinct values)
        absorb_power = power if power is not None else 0.0
        at_zero = (u == 0.0) & (side == "left")
        for key in np.unique(np.stack([s_eff, at_zero.astype(float)], axis=1)[ok], axis=0):
            s_k, z_k = float(key[0]), bool(key[1])
            m = ok & (s_eff == s_k) & (at_zero == z_k)
            if not np.any(m):
                continue
            e_extra = absorb_power if z_k else 0.0
            lin_power = 0.0
            cm = cells[m]
            if z_k:
                v0 = self.values[cm]
                # density vanishing linearly at 0 can absorb one more power
                if s_k + e_extra <= -1.0:
                    if np.all(v0 == 0.0) and s_k + e_extra + 1.0 > -1.0:
                        lin_power = 1.0
                    else:
                        raise DivergentMoment(
                            f"moment with exponent {absorb_power!r} diverges at the origin"
                        )
            a_w = s_k + e_extra + lin_power
            if side == "left":
                t, wt = _jacobi_rule(0.0, a_w)
                x = u[m, None] + width[m, None] * (t[None, :] + 1.0) * 0.5
            else:
                t, wt = _jacobi_rule(a_w, 0.0)
                x = u[m, None] + width[m, None] * (t[None, :] + 1.0) * 0.5
            cc = np.broadcast_to(cm[:, None], x.shape)
            lin = self._linear(x, cc)
            if lin_power:
                lin = lin / x
            # explicit factor from the other side of a single-cell density
            other = np.ones_like(x)
            if side == "left" and self.right_exponent is not None:
                mm = cc == self.ncells - 1
                if np.any(mm):
                    hn = b[-1] - b[-2]
                    with np.errstate(divide="ignore"):
                        other[mm] = (np.maximum(b[-1] - x[mm], 0.0) / hn) ** self.right_exponent
            if side == "right" and self.left_exponent is not None:
                mm = cc == 0
                if np.any(mm):
                    h0 = b[1] - b[0]
                    with np.errstate(divide="ignore"):
                        other[mm] = (np.maximum(x[mm] - b[0], 0.0) / h0) ** self.left_exponent
            fx = func(x) if func is not None else 1.0
            if power is not None and not z_k:
                fx = fx * x**power
            integrand = lin * other * fx
            h_cell = b[cm + 1] - b[cm]
            half = width[m] * 0.5
            scale = half ** (1.0 + a_w) * h_cell ** (-s_k)
            out[m] = scale * (integrand @ wt)
        return out

    def cumulative(self, func, xs, power=None) -> np.ndarray:
        """``int_{lo}^{x} func(t) * t**power * density(t) dt`` for every ``x``."""
        xs = np.atleast_1d(np.asarray(xs, dtype=float))
        b = self.breakpoints
        xc = np.clip(xs, self.lo, self.hi)
        cells_all = np.arange(self.ncells)
        right_sided = np.zeros(self.ncells, dtype=bool)
        if self.right_exponent is not None and not (self.left_exponent is not None and self.ncells == 1):
            right_sided[-1] = True
        # full cell integrals
        full = np.empty(self.ncells)
        lm = ~right_sided
        full[lm] = self._anchored(func, b[1:][lm], cells_all[lm], "left", power)
        if np.any(right_sided):
            full[right_sided] = self._anchored(func, b[:-1][right_sided], cells_all[right_sided], "right", power)
        cum = np.concatenate([[0.0], np.cumsum(full)])
        cell = np.clip(np.searchsorted(b, xc, side="right") - 1, 0, self.ncells - 1)
        partial = np.zeros_like(xc)
        rs = right_sided[cell]
        if np.any(~rs):
            partial[~rs] = self._anchored(func, xc[~rs], cell[~rs], "left", power)
        if np.any(rs):
            partial[rs] = full[cell[rs]] - self._anchored(func, xc[rs], cell[rs], "right", power)
        return cum[cell] + partial

    def moment(self, exponent: float) -> float:
        if exponent == 0.0:
            return float(self.cumulative(None, [self.hi])[0])
        return float(self.cumulative(None, [self.hi], power=float(exponent))[0])

    def knots(self) -> np.ndarray:
        return self.breakpoints

    def scaled(self, c: float) -> "PiecewiseDensity":
        return PiecewiseDensity(self.breakpoints, self.values * c, self.left_exponent, self.right_exponent)

    def cell_masses(self) -> np.ndarray:
        return np.diff(self.cumulative(None, self.breakpoints))

    def to_dict(self) -> dict:
        return {
            "kind": "piecewise",
            "breakpoints": self.breakpoints.tolist(),
            "values": self.values.tolist(),
            "left_exponent": self.left_exponent,
            "right_exponent": self.right_exponent,
        }


def _power_antiderivative(x, p):
    x = np.asarray(x, dtype=float)
    if p == -1.0:
        with np.errstate(divide="ignore"):
            return np.log(x)
    with np.errstate(divide="ignore", over="ignore"):
        return x ** (p + 1.0) / (p + 1.0)


class PowerLawDensity(_Part):
    """Density ``sum_k coef_k * x**power_k`` on ``[lo, hi]`` (``hi`` may be inf)."""

    def __init__(self, lo, hi, terms):
        self.lo = float(lo)
        self.hi = float(hi)
        terms = [(float(c), float(p)) for c, p in terms if c != 0.0]
        if not terms:
            raise InvalidMeasure("power-law part needs at least one nonzero term")
        self.coefs = _frozen([c for c, _ in terms])
        self.powers = _frozen([p for _, p in terms])
        if not (0.0 <= self.lo < self.hi):
            raise InvalidMeasure(f"bad power-law interval [{lo!r}, {hi!r}]")
        if math.isinf(self.hi) and np.any(self.powers >= -1.0):
            raise InvalidMeasure("infinite power-law tail needs every power < -1")
        if self.lo == 0.0 and np.any(self.powers <= -1.0):
            raise InvalidMeasure("power-law head at the origin needs every power > -1")
        probe = self._probe_points()
        if np.any(self.evaluate(probe) < -1e-300):
            raise InvalidMeasure("power-law density is negative somewhere on its support")

    @property
    def terms(self):
        return list(zip(self.coefs.tolist(), self.powers.tolist()))

    def _probe_points(self):
        lo = self.lo if self.lo > 0 else (self.hi * 1e-6 if math.isfinite(self.hi) else 1e-6)
        hi = self.hi if math.isfinite(self.hi) else lo * 1e6
        return np.geomspace(lo, hi, 64)

    def evaluate(self, x):
        x = np.asarray(x, dtype=float)
        flat = np.atleast_1d(x).ravel()
        out = np.zeros_like(flat)
        inside = (flat >= self.lo) & (flat <= self.hi) & (flat > 0)
        xi = flat[inside]
        acc = np.zeros_like(xi)
        for c, p in zip(self.coefs, self.powers):
            acc += c * xi**p
        out[inside] = acc
        return out.reshape(x.shape) if x.ndim else out[0]

    def _closed(self, xs, shift=0.0):
        xs = np.clip(np.atleast_1d(np.asarray(xs, dtype=float)), self.lo, self.hi)
        out = np.zeros_like(xs)
        for c, p in zip(self.coefs, self.powers):
            q = p + shift
            if self.lo == 0.0 and q <= -1.0:
                raise DivergentMoment(f"power {q!r} not integrable at the origin")
            if math.isinf(self.hi) and q >= -1.0:
                raise DivergentMoment(f"power {q!r} not integrable at infinity")
            base = 0.0 if self.lo == 0.0 else _power_antiderivative(self.lo, q)
            top = _power_antiderivative(xs, q)
            top = np.where(np.isinf(xs), 0.0, top)
            out += c * (top - base)
        return out

    def cumulative(self, func, xs) -> np.ndarray:
        xs = np.atleast_1d(np.asarray(xs, dtype=float))
        if func is None:
            return self._closed(xs)
        xc = np.clip(xs, self.lo, self.hi)
        t, w = _jacobi_rule(0.0, 0.0)
        head = 0.0
        lo = self.lo
        if lo == 0.0:
            fin = xc[(xc > 0) & np.isfinite(xc)]
            start = (float(fin.min()) if fin.size else 1.0) * 2.0**-60
            for c, p in zip(self.coefs, self.powers):
                tj, wj = _jacobi_rule(0.0, float(p))
                node = start * (tj + 1.0) * 0.5
                head += c * (start * 0.5) ** (p + 1.0) * float(func(node) @ wj)
            lo = start
        finite = xc[np.isfinite(xc) & (xc > lo)]
        top = self.hi if math.isfinite(self.hi) else max(lo * 2.0**80, float(finite.max()) if finite.size else 0.0)
        octaves = math.log2(top / lo)
        edges = np.geomspace(lo, top, max(2, int(math.ceil(48 * octaves)) + 1))
        edges = np.union1d(edges, finite)
        u, v = edges[:-1], edges[1:]
        nodes = u[:, None] + (v - u)[:, None] * (t[None, :] + 1.0) * 0.5
        vals = func(nodes) * self.evaluate(nodes)
        cum = np.concatenate([[0.0], np.cumsum(((v - u) * 0.5) * (vals @ w))])
        at = np.where(np.isinf(xc), top, np.maximum(xc, lo))
        idx = np.clip(np.searchsorted(edges, at), 0, edges.size - 1)
        out = head + cum[idx]
        return np.where(xc <= lo, head if self.lo == 0.0 else 0.0, out)

    def moment(self, exponent: float) -> float:
        return float(self._closed(np.array([self.hi]), shift=float(exponent))[0])

    def knots(self) -> np.ndarray:
        return np.array([x for x in (self.lo, self.hi) if math.isfinite(x)])

    def scaled(self, c: float) -> "PowerLawDensity":
        return PowerLawDensity(self.lo, self.hi, [(a * c, p) for a, p in self.terms])

    def to_dict(self) -> dict:
        return {
            "kind": "power_law",
            "lo": self.lo,
            "hi": None if math.isinf(self.hi) else self.hi,
            "terms": [list(t) for t in self.terms],
        }


@dataclass(frozen=True)
class Branch:
    """A monotone map on ``[lo, hi]`` with its inverse and derivative.

    ``power = (c, k)`` marks the map ``x -> c * x**k``; such branches
    serialize and transform tails exactly.
    """

    lo: float
    hi: float
    forward: Callable
    inverse: Callable
    derivative: Callable
    power: tuple | None = None

    @classmethod
    def power_map(cls, c: float, k: float, lo: float = 0.0, hi: float = math.inf) -> "Branch":
        c = float(c)
        k = float(k)

        def fwd(x):
            with np.errstate(divide="ignore", over="ignore"):
                return c * np.asarray(x, dtype=float) ** k

        def inv(y):
            with np.errstate(divide="ignore", over="ignore"):
                return (np.asarray(y, dtype=float) / c) ** (1.0 / k)

        def der(x):
            with np.errstate(divide="ignore", over="ignore"):
                return c * k * np.asarray(x, dtype=float) ** (k - 1.0)

        return cls(lo, hi, fwd, inv, der, (c, k))

    def probe(self) -> np.ndarray:
        lo, hi = self.lo, self.hi
        if math.isinf(hi):
            base = lo if lo > 0 else 1.0
            pts = base * np.geomspace(1.0, 1e3, 17)
            if lo == 0:
                pts = np.concatenate([np.geomspace(1e-3, 1.0, 16)[:-1], pts])
            return pts[pts > lo]
        t = (np.arange(1, 64) / 64.0)
        return lo + (hi - lo) * t

    def increasing(self) -> bool:
        if self.power is not None:
            return self.power[0] * self.power[1] > 0
        return bool(np.all(np.asarray(self.derivative(self.probe())) > 0))

    def check(self) -> None:
        if not (self.lo < self.hi):
            raise NonMonotoneBranch(f"empty branch domain [{self.lo!r}, {self.hi!r}]")
        x = self.probe()
        d = np.asarray(self.derivative(x), dtype=float)
        if np.any(d == 0.0):
            raise ZeroDerivativeInInterior("branch derivative vanishes inside its domain")
        if not (np.all(d > 0) or np.all(d < 0)):
            raise NonMonotoneBranch("branch derivative changes sign inside its domain")
        y = np.asarray(self.forward(x), dtype=float)
        dy = np.diff(y)
        if not (np.all(dy > 0) or np.all(dy < 0)):
            raise NonMonotoneBranch("branch map is not monotone")


class MappedDensity(_Part):
    """Exact pushforward of ``base`` (restricted to the branch domain)."""

    def __init__(self, base: _Part, branch: Branch):
        self.base = base
        self.branch = branch
        self.x_lo = max(base.lo, branch.lo)
        self.x_hi = min(base.hi, branch.hi)
        if not self.x_lo < self.x_hi:
            raise InvalidMeasure("branch domain does not meet the support of the density")
        self.increasing = branch.increasing()
        y0 = float(branch.forward(np.array([self.x_lo]))[0])
        y1 = float(branch.forward(np.array([self.x_hi]))[0])
        self.lo, self.hi = (y0, y1) if self.increasing else (y1, y0)

    def _g(self, func):
        if func is None:
            return None
        fwd = self.branch.forward
        return lambda x: func(fwd(x))

    def _to_x(self, ys):
        ys = np.clip(np.atleast_1d(np.asarray(ys, dtype=float)), self.lo, self.hi)
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            xs = np.asarray(self.branch.inverse(ys), dtype=float)
        xs = np.where(ys <= self.lo, self.x_lo if self.increasing else self.x_hi, xs)
        xs = np.where(ys >= self.hi, self.x_hi if self.increasing else self.x_lo, xs)
        return np.clip(xs, self.x_lo, self.x_hi)

    def cumulative(self, func, ys) -> np.ndarray:
        g = self._g(func)
        xs = self._to_x(ys)
        ends = self.base.cumulative(g, np.array([self.x_lo, self.x_hi]))
        at = self.base.cumulative(g, xs)
        if self.increasing:
            return at - ends[0]
        return ends[1] - at

    def evaluate(self, y):
        y = np.asarray(y, dtype=float)
        flat = np.atleast_1d(y).ravel()
        out = np.zeros_like(flat)
        inside = (flat > self.lo) & (flat < self.hi)
        if np.any(inside):
            x = self._to_x(flat[inside])
            with np.errstate(divide="ignore"):
                out[inside] = self.base.evaluate(x) / np.abs(self.branch.derivative(x))
        return out.reshape(y.shape) if y.ndim else out[0]

    def moment(self, exponent: float) -> float:
        covers = self.x_lo <= self.base.lo and self.x_hi >= self.base.hi
        if self.branch.power is not None and covers:
            c, k = self.branch.power
            return c**exponent * self.base.moment(k * exponent)
        e = float(exponent)
        return float(self.cumulative(lambda y: y**e, np.array([self.hi]))[0])

    def knots(self) -> np.ndarray:
        kx = self.base.knots()
        kx = kx[(kx >= self.x_lo) & (kx <= self.x_hi)]
        kx = np.concatenate([[self.x_lo], kx, [self.x_hi]])
        with np.errstate(divide="ignore", over="ignore"):
            ky = np.asarray(self.branch.forward(kx), dtype=float)
        return np.unique(ky[np.isfinite(ky)])

    def scaled(self, c: float) -> "MappedDensity":
        return MappedDensity(self.base.scaled(c), self.branch)

    def to_dict(self) -> dict:
        if self.branch.power is None:
            return materialize(self).to_dict()
        c, k = self.branch.power
        return {
            "kind": "mapped_power",
            "scale": c,
            "power": k,
            "lo": self.branch.lo,
            "hi": None if math.isinf(self.branch.hi) else self.branch.hi,
            "base": self.base.to_dict(),
        }


def materialize(part: _Part, cells: int = 512) -> PiecewiseDensity:
    """Approximate any part by a plain piecewise-linear density (export only)."""
    lo = part.lo
    hi = part.hi if math.isfinite(part.hi) else max(part.knots()) * 100.0
    k = np.unique(np.concatenate([part.knots(), np.linspace(lo, hi, cells + 1)]))
    k = k[(k >= lo) & (k <= hi)]
    v = np.nan_to_num(part.evaluate(k), nan=0.0, posinf=0.0)
    return PiecewiseDensity(k, np.maximum(v, 0.0))


def part_from_dict(d: dict) -> _Part:
    kind = d.get("kind", "piecewise")
    if kind == "piecewise":
        return PiecewiseDensity(d["breakpoints"], d["values"], d.get("left_exponent"), d.get("right_exponent"))
    if kind == "power_law":
        hi = math.inf if d.get("hi") is None else d["hi"]
        return PowerLawDensity(d["lo"], hi, d["terms"])
    if kind == "mapped_power":
        hi = math.inf if d.get("hi") is None else d["hi"]
        branch = Branch.power_map(d["scale"], d["power"], d["lo"], hi)
        return MappedDensity(part_from_dict(d["base"]), branch)
    raise InvalidMeasure(f"unknown part kind {kind!r}")


# ---------------------------------------------------------------------------
# Measure1D
# ---------------------------------------------------------------------------


class Measure1D:
    """Atoms plus a sum of density parts; immutable after construction."""

    def __init__(self, atoms: Iterable[tuple[float, float]] = (), parts: Sequence[_Part] = ()):
        atoms = sorted((float(x), float(m)) for x, m in atoms)
        merged: list[list[float]] = []
        for x, m in atoms:
            if merged and merged[-1][0] == x:
                merged[-1][1] += m
            else:
                merged.append([x, m])
        pos = np.array([a[0] for a in merged], dtype=float)
        mass = np.array([a[1] for a in merged], dtype=float)
        if np.any(pos <= 0.0) or np.any(mass <= 0.0) or not np.all(np.isfinite(pos)):
            raise InvalidMeasure("atoms need positive finite positions and positive masses")
        pos.setflags(write=False)
        mass.setflags(write=False)
        self.atom_positions = pos
        self.atom_masses = mass
        self.parts = tuple(parts)

    @classmethod
    def atom(cls, position: float, mass: float = 1.0) -> "Measure1D":
        return cls([(position, mass)])

    @classmethod
    def empty(cls) -> "Measure1D":
        return cls()

    @classmethod
    def from_samples(cls, samples) -> "Measure1D":
        """Empirical probability measure of the given positive samples."""
        s = np.asarray(samples, dtype=float).ravel()
        if s.size == 0:
            return cls()
        u, counts = np.unique(s, return_counts=True)
        m = cls.__new__(cls)
        if np.any(u <= 0) or not np.all(np.isfinite(u)):
            raise InvalidMeasure("samples must be positive and finite")
        u.setflags(write=False)
        w = counts / s.size
        w.setflags(write=False)
        m.atom_positions = u
        m.atom_masses = w
        m.parts = ()
        return m

    @property
    def atoms(self) -> list[tuple[float, float]]:
        return list(zip(self.atom_positions.tolist(), self.atom_masses.tolist()))

    @property
    def density(self) -> PiecewiseDensity | None:
        """First piecewise-linear part, if any."""
        for p in self.parts:
            if isinstance(p, PiecewiseDensity):
                return p
        return None

    def has_density(self) -> bool:
        return bool(self.parts)

    def total_mass(self) -> float:
        m = float(np.sum(self.atom_masses))
        for p in self.parts:
            m += p.mass()
        return m

    def evaluate(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(np.atleast_1d(x), dtype=float)
        for p in self.parts:
            out = out + np.atleast_1d(p.evaluate(x))
        return out.reshape(x.shape) if x.ndim else float(out[0])

    def cdf(self, x, left: bool = False):
        """``mu([0, x])``, or ``mu([0, x))`` with ``left=True``."""
        x = np.asarray(x, dtype=float)
        flat = np.atleast_1d(x).ravel()
        side = "left" if left else "right"
        cm = np.concatenate([[0.0], np.cumsum(self.atom_masses)])
        out = cm[np.searchsorted(self.atom_positions, flat, side=side)]
        for p in self.parts:
            out = out + p.cdf(flat)
        return out.reshape(x.shape) if x.ndim else float(out[0])

    def integrate(self, func) -> float:
        """``int func dmu`` for a vectorized ``func``."""
        total = 0.0
        if self.atom_positions.size:
            total += float(np.sum(self.atom_masses * func(self.atom_positions)))
        for p in self.parts:
            total += p.integrate(func)
        return total

    def cumulative(self, func, xs) -> np.ndarray:
        """``int_{[0, x]} func dmu`` for each ``x``."""
        xs = np.atleast_1d(np.asarray(xs, dtype=float))
        out = np.zeros_like(xs)
        if self.atom_positions.size:
            contrib = self.atom_masses * (func(self.atom_positions) if func is not None else 1.0)
            cm = np.concatenate([[0.0], np.cumsum(contrib)])
            out += cm[np.searchsorted(self.atom_positions, xs, side="right")]
        for p in self.parts:
            out += p.cumulative(func, xs)
        return out

    def knots(self) -> np.ndarray:
        ks = [self.atom_positions] + [p.knots() for p in self.parts]
        return np.unique(np.concatenate(ks)) if ks else np.zeros(0)

    def support(self) -> tuple[float, float]:
        los = [p.lo for p in self.parts] + self.atom_positions.tolist()
        his = [p.hi for p in self.parts] + self.atom_positions.tolist()
        if not los:
            return (math.nan, math.nan)
        return (min(los), max(his))

    def scaled(self, c: float) -> "Measure1D":
        c = float(c)
        if c < 0:
            raise InvalidMeasure("negative scaling would create a signed measure")
        if c == 0:
            return Measure1D()
        return Measure1D([(x, m * c) for x, m in self.atoms], [p.scaled(c) for p in self.parts])

    def __add__(self, other: "Measure1D") -> "Measure1D":
        return Measure1D(self.atoms + other.atoms, self.parts + other.parts)

    def __mul__(self, c: float) -> "Measure1D":
        return self.scaled(c)

    __rmul__ = __mul__

    def normalized(self) -> "Measure1D":
        m = self.total_mass()
        if m < ZERO_MASS:
            raise InvalidMeasure("cannot normalize a zero measure")
        return self.scaled(1.0 / m)

    # --- serialization -----------------------------------------------------

    def to_dict(self, provenance: dict | None = None) -> dict:
        primary = self.density
        extra = [p.to_dict() for p in self.parts if p is not primary]
        d = {
            "format_version": FORMAT_VERSION,
            "atoms": [[x, m] for x, m in self.atoms],
            "breakpoints": primary.breakpoints.tolist() if primary is not None else [],
            "values": primary.values.tolist() if primary is not None else [],
            "left_exponent": primary.left_exponent if primary is not None else None,
            "right_exponent": primary.right_exponent if primary is not None else None,
        }
        if extra:
            d["extra_parts"] = extra
        if provenance is not None:
            d["provenance"] = provenance
        return d

    def to_json(self, provenance: dict | None = None) -> str:
        return json.dumps(self.to_dict(provenance), indent=1)

    @classmethod
    def from_dict(cls, d: dict) -> "Measure1D":
        if not str(d.get("format_version", "")).startswith("flatcone.measure/"):
            raise InvalidMeasure(f"unsupported format_version {d.get('format_version')!r}")
        parts: list[_Part] = []
        if d.get("breakpoints"):
            parts.append(PiecewiseDensity(d["breakpoints"], d["values"], d.get("left_exponent"), d.get("right_exponent")))
        parts.extend(part_from_dict(p) for p in d.get("extra_parts", []))
        return cls([tuple(a) for a in d.get("atoms", [])], parts)

    @classmethod
    def from_json(cls, text: str) -> "Measure1D":
        return cls.from_dict(json.loads(text))

    def grid(self, tail_points: int = 32) -> np.ndarray:
        """Sampling grid for tabular export: all knots, plus a geometric tail."""
        k = [p.knots() for p in self.parts]
        g = np.unique(np.concatenate(k)) if k else np.zeros(0)
        for p in self.parts:
            if math.isinf(p.hi):
                start = p.lo if p.lo > 0 else 1.0
                g = np.union1d(g, np.geomspace(start, start * 100.0, tail_points))
        return g

    def to_csv(self) -> str:
        """``a,f`` table of the density on its grid; atoms are never included."""
        g = self.grid()
        f = np.atleast_1d(self.evaluate(g)) if g.size else np.zeros(0)
        lines = ["a,f"]
        for a, v in zip(g, f):
            if np.isfinite(v):
                lines.append(f"{float(a)!r},{float(v)!r}")
        return "\n".join(lines) + "\n"

    def atoms_sidecar(self) -> dict:
        return {"format_version": FORMAT_VERSION, "atoms": [[x, m] for x, m in self.atoms]}


# ---------------------------------------------------------------------------
# Module-level operations
# ---------------------------------------------------------------------------


def total_mass(mu: Measure1D) -> float:
    return mu.total_mass()


def moment(mu: Measure1D, exponent: float) -> float:
    """``int a**exponent dmu``; raises :class:`DivergentMoment` if it diverges."""
    e = float(exponent)
    total = float(np.sum(mu.atom_masses * mu.atom_positions**e))
    for p in mu.parts:
        val = p.moment(e)
        if not math.isfinite(val):
            raise DivergentMoment(f"moment of order {e!r} diverges")
        total += val
    return total


def quantile(mu: Measure1D, p: float) -> float:
    """Smallest ``a`` with ``mu([0, a]) >= p * total_mass``."""
    if not (0.0 < p < 1.0):
        raise ValueError("p must lie in (0, 1)")
    total = mu.total_mass()
    if total < ZERO_MASS:
        raise InvalidMeasure("quantile of a zero measure")
    target = p * total
    knots = mu.knots()
    F = mu.cdf(knots)
    k = int(np.searchsorted(F, target, side="left"))
    if k < knots.size:
        x_k = float(knots[k])
        if mu.cdf(x_k, left=True) < target:
            return x_k  # an atom at x_k carries the crossing
        lo, hi = (float(knots[k - 1]) if k > 0 else 0.0), x_k
    else:
        lo = float(knots[-1])
        hi = 2.0 * lo
        while mu.cdf(hi) < target:
            lo, hi = hi, 2.0 * hi
            if hi > 1e300:
                raise InvalidMeasure("quantile bracket failed")
    g = lambda x: float(mu.cdf(x)) - target  # noqa: E731
    if g(lo) >= 0:
        return lo
    return float(brentq(g, lo, hi, xtol=1e-13, rtol=4 * np.finfo(float).eps, maxiter=400))


def pushforward(mu: Measure1D, branches: Sequence[Branch]) -> Measure1D:
    """Pushforward along a piecewise-monotone map given by its branches."""
    branches = sorted(branches, key=lambda b: b.lo)
    for b in branches:
        b.check()
    atoms = []
    for x, m in mu.atoms:
        for j, b in enumerate(branches):
            last = j == len(branches) - 1
            if b.lo <= x < b.hi or (last and x == b.hi):
                atoms.append((float(b.forward(np.array([x]))[0]), m))
                break
    parts: list[_Part] = []
    for part in mu.parts:
        for b in branches:
            if max(part.lo, b.lo) >= min(part.hi, b.hi):
                continue
            if isinstance(part, PowerLawDensity) and b.power is not None:
                parts.append(_power_law_image(part, b))
            else:
                parts.append(MappedDensity(part, b))
    return Measure1D(atoms, parts)


def _power_law_image(part: PowerLawDensity, b: Branch) -> PowerLawDensity:
    c, k = b.power
    lo, hi = max(part.lo, b.lo), min(part.hi, b.hi)
    with np.errstate(divide="ignore", over="ignore"):
        ends = sorted([float(c * lo**k) if lo > 0 else (0.0 if k > 0 else math.inf),
                       float(c * hi**k) if math.isfinite(hi) else (math.inf if k > 0 else 0.0)])
    terms = []
    for a, p in part.terms:
        # x = (y/c)**(1/k), dx/dy = x / (k y)
        new_p = (p + 1.0) / k - 1.0
        terms.append((a * c ** (-(p + 1.0) / k) / abs(k), new_p))
    return PowerLawDensity(ends[0], ends[1], terms)


LENGTH_BRANCH = Branch.power_map(1.0, -0.5)
AREA_BRANCH = Branch.power_map(1.0, -2.0)


def to_length_density(mu_area: Measure1D) -> Measure1D:
    """Change of variables ``l = a**(-1/2)``: ``rho(l) = 2 l**-3 f(l**-2)``."""
    return pushforward(mu_area, [LENGTH_BRANCH])


def from_length_density(mu_length: Measure1D) -> Measure1D:
    """Inverse of :func:`to_length_density`."""
    return pushforward(mu_length, [AREA_BRANCH])


def ks_distance(mu: Measure1D, nu: Measure1D) -> float:
    """Sup-distance between the CDFs of two probability measures."""
    for m in (mu, nu):
        if abs(m.total_mass() - 1.0) > 1e-9:
            raise NotNormalized(f"total mass {m.total_mass()!r} is not 1")
    pts = np.union1d(mu.knots(), nu.knots())
    if pts.size == 0:
        return 0.0
    d_right = np.abs(mu.cdf(pts) - nu.cdf(pts))
    d_left = np.abs(mu.cdf(pts, left=True) - nu.cdf(pts, left=True))
    return float(max(d_right.max(), d_left.max()))


def _march(lo, hi, focus, h0, r, hmin):
    pts = [lo]
    x = lo
    fi = 0
    while x < hi:
        while fi < len(focus) and focus[fi] <= x:
            fi += 1
        ahead = focus[fi] if fi < len(focus) else math.inf
        behind = focus[fi - 1] if fi > 0 else -math.inf
        d = min(x - behind, ahead - x)
        h = min(h0, max(hmin, r * d))
        nxt = x + h
        if ahead - nxt < hmin or nxt > ahead:
            nxt = ahead
        pts.append(min(nxt, hi))
        x = pts[-1]
    return pts


def graded_grid(lo: float, hi: float, cells: int, focus: Sequence[float] = (), ratio: float = 1.15,
                min_width: float | None = None) -> np.ndarray:
    """Grid on ``[lo, hi]`` whose cell widths grow by ``ratio`` away from ``focus``.

    Near a focus point the width is ``(ratio - 1) * distance`` (but at least
    ``min_width``); far away it saturates at a uniform width chosen so that
    the grid has about ``cells`` cells.
    """
    lo = float(lo)
    hi = float(hi)
    if not hi > lo:
        raise ValueError("empty grid interval")
    span = hi - lo
    if min_width is None:
        min_width = span * 1e-12
    r = ratio - 1.0
    focus = sorted({float(f) for f in focus if lo <= f <= hi} | {lo, hi})
    # the uniform width span/cells already overshoots the cell budget
    h_lo, h_hi = span / cells, span
    if len(_march(lo, hi, focus, h_lo, r, min_width)) - 1 <= cells:
        h_hi = h_lo
    for _ in range(40):
        if h_hi / h_lo < 1.01:
            break
        h0 = math.sqrt(h_lo * h_hi)
        pts = _march(lo, hi, focus, h0, r, min_width)
        if len(pts) - 1 > cells:
            h_lo = h0
        else:
            h_hi = h0
    pts = _march(lo, hi, focus, h_hi, r, min_width)
    g = np.array(pts)
    g[0], g[-1] = lo, hi
    return np.unique(g)
