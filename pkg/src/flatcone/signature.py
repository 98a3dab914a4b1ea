"""Angle data of a flat cone sphere with two distinguished points.

A signature is the pair of cone angles ``(phi1, phi2)`` at the distinguished
points together with the list ``alpha`` of angle defects at the remaining
cone points.  This module validates signatures, enumerates the ways a
sphere splits into two smaller ones, and evaluates the cotangent kernels
``q`` and ``kappa`` that drive the recurrence.
"""

from __future__ import annotations

import math
import sys
import re
from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import (
    BetaOutOfInterval,
    ConfigError,
    DefectOutOfRange,
    EmptyAlpha,
    GaussBonnetViolation,
    PoleAtMultipleOf2Pi,
)

TWO_PI = 2.0 * math.pi
GB_TOL = 1e-12
# Angles closer than this to a multiple of 2*pi are treated as poles of cot(x/2).
POLE_TOL = 1e-14


def _ascending_sum(values: Iterable[float]) -> float:
    total = 0.0
    for v in sorted(values, key=abs):
        total += v
    return total


@dataclass(frozen=True)
class AngleSignature:
    phi1: float
    phi2: float
    alpha: tuple[float, ...]

    @property
    def n(self) -> int:
        return len(self.alpha)

    @property
    def phi(self) -> tuple[float, float]:
        return (self.phi1, self.phi2)

    @property
    def sum_alpha(self) -> float:
        return _ascending_sum(self.alpha)

    @property
    def q(self) -> float:
        return q_factor(self.phi1, self.phi2)

    def swapped(self) -> "AngleSignature":
        return AngleSignature(self.phi2, self.phi1, self.alpha)

    def canonical_key(self, decimals: int = 10) -> tuple:
        """Hashable key that ignores the order of ``alpha``.

        The density is symmetric under permutations of the defects, so
        permuted signatures may share one memo entry.
        """
        return (
            round(self.phi1, decimals),
            round(self.phi2, decimals),
            tuple(sorted(round(a, decimals) for a in self.alpha)),
        )

    def to_dict(self) -> dict:
        return {"phi": [self.phi1, self.phi2], "alpha": list(self.alpha)}

    def __str__(self) -> str:
        alpha = ", ".join(f"{a:.6g}" for a in self.alpha)
        return f"(({self.phi1:.6g}, {self.phi2:.6g}), ({alpha}))"


@dataclass(frozen=True)
class Split:
    """Ordered bipartition of the defect indices into (hat, tilde)."""

    hat_indices: tuple[int, ...]
    tilde_indices: tuple[int, ...]

    @property
    def n_hat(self) -> int:
        return len(self.hat_indices)

    @property
    def n_tilde(self) -> int:
        return len(self.tilde_indices)

    def reversed(self) -> "Split":
        return Split(self.tilde_indices, self.hat_indices)

    def hat_alpha(self, sig: AngleSignature) -> tuple[float, ...]:
        return tuple(sig.alpha[i] for i in self.hat_indices)

    def tilde_alpha(self, sig: AngleSignature) -> tuple[float, ...]:
        return tuple(sig.alpha[i] for i in self.tilde_indices)


@dataclass(frozen=True)
class SubSignaturePair:
    hat: AngleSignature
    tilde: AngleSignature
    beta: float


def validate_signature(phi1: float, phi2: float, alpha: Sequence[float]) -> AngleSignature:
    alpha = tuple(float(a) for a in alpha)
    phi1 = float(phi1)
    phi2 = float(phi2)
    if not alpha:
        raise EmptyAlpha("alpha must contain at least one defect")
    for i, a in enumerate(alpha):
        if not (0.0 < a < TWO_PI) or not math.isfinite(a):
            raise DefectOutOfRange(f"alpha[{i}] = {a!r} is not in (0, 2*pi)")
    if not (phi1 > 0.0 and phi2 > 0.0) or not (math.isfinite(phi1) and math.isfinite(phi2)):
        raise DefectOutOfRange(f"distinguished angles must be positive, got ({phi1!r}, {phi2!r})")
    lhs = phi1 + phi2
    rhs = _ascending_sum(alpha)
    if abs(lhs - rhs) > GB_TOL:
        raise GaussBonnetViolation(
            f"phi1 + phi2 = {lhs!r} differs from sum(alpha) = {rhs!r} by {abs(lhs - rhs):.3g}"
        )
    return AngleSignature(phi1, phi2, alpha)


EPS = sys.float_info.epsilon


def _cot_half(x: float) -> float:
    s = math.sin(0.5 * x)
    if abs(s) < POLE_TOL or abs(math.remainder(x, TWO_PI)) < POLE_TOL:
        raise PoleAtMultipleOf2Pi(f"cot({x!r}/2) has a pole")
    return math.cos(0.5 * x) / s


def q_factor(phi1: float, phi2: float) -> float:
    """``cot(phi1/2) + cot(phi2/2)``; the base-case atom sits at ``1/q``.

    Rounding residue (e.g. ``cot(pi/2) ~ 6e-17``) is snapped to zero so that
    ``phi1 + phi2 = 2 pi`` keeps an unbounded support.
    """
    c1, c2 = _cot_half(phi1), _cot_half(phi2)
    q = c1 + c2
    if abs(q) <= 8.0 * EPS * (1.0 + abs(c1) + abs(c2)):
        return 0.0
    return q


def enumerate_splits(sig: AngleSignature) -> list[Split]:
    """All ``2**n - 2`` ordered splits, ordered by the bitmask of the hat part."""
    n = sig.n
    out = []
    for mask in range(1, (1 << n) - 1):
        hat = tuple(i for i in range(n) if mask >> i & 1)
        tilde = tuple(i for i in range(n) if not mask >> i & 1)
        out.append(Split(hat, tilde))
    return out


def beta_interval(sig: AngleSignature, split: Split) -> tuple[float, float]:
    s_hat = _ascending_sum(split.hat_alpha(sig))
    s_tilde = _ascending_sum(split.tilde_alpha(sig))
    return (max(0.0, sig.phi1 - s_tilde), min(sig.phi1, s_hat))


def sub_signatures(sig: AngleSignature, split: Split, beta: float) -> SubSignaturePair:
    lo, hi = beta_interval(sig, split)
    if not (lo < beta < hi):
        raise BetaOutOfInterval(f"beta = {beta!r} outside ({lo!r}, {hi!r})")
    a_hat = split.hat_alpha(sig)
    a_tilde = split.tilde_alpha(sig)
    s_hat = _ascending_sum(a_hat)
    s_tilde = _ascending_sum(a_tilde)
    hat = AngleSignature(beta, s_hat - beta, a_hat)
    tilde = AngleSignature(sig.phi1 - beta, s_tilde - sig.phi1 + beta, a_tilde)
    for child in (hat, tilde):
        if child.phi1 <= 0.0 or child.phi2 <= 0.0:
            raise BetaOutOfInterval(f"beta = {beta!r} gives a non-positive sub-angle")
    return SubSignaturePair(hat, tilde, float(beta))


def kappa(sig: AngleSignature, split: Split, beta: float) -> float:
    pair = sub_signatures(sig, split, beta)
    return pair.hat.q + pair.tilde.q


_PI_FRACTION = re.compile(r"^\s*(?:(\d+)\s*\*?\s*)?pi\s*(?:/\s*(\d+))?\s*$", re.IGNORECASE)


def parse_angle(text: str | float) -> float:
    """Parse ``"6pi/5"``, ``"pi/2"``, ``"pi"`` or a plain decimal number."""
    if isinstance(text, (int, float)):
        return float(text)
    m = _PI_FRACTION.match(text)
    if m:
        num = int(m.group(1)) if m.group(1) else 1
        den = int(m.group(2)) if m.group(2) else 1
        if den == 0:
            raise ConfigError(f"zero denominator in {text!r}")
        return num * math.pi / den
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"cannot parse angle {text!r}") from None


def parse_angle_list(text: str | Sequence) -> list[float]:
    if isinstance(text, str):
        parts = [p for p in text.split(",") if p.strip()]
    else:
        parts = list(text)
    return [parse_angle(p) for p in parts]


def signature_from_text(phi: str | Sequence, alpha: str | Sequence) -> AngleSignature:
    phis = parse_angle_list(phi)
    if len(phis) != 2:
        raise ConfigError(f"expected two distinguished angles, got {len(phis)}")
    return validate_signature(phis[0], phis[1], parse_angle_list(alpha))
