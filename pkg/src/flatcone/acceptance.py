"""Reference battery: published values and internal consistency checks.

Each check returns a :class:`CheckResult`.  The battery is shared by the
test-suite and the ``selftest`` command.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .geometry import (
    DoubledPolygon,
    doubled_distance,
    doubled_triangle_area,
    polyhedron_distance,
    regular_tetrahedron,
    sample_torus_quotient,
    square_pyramid,
)
from .measure import Measure1D, ks_distance
from .recurrence import (
    ANCHOR,
    DEFAULT_CONFIG,
    SolverConfig,
    anchor_density,
    base_density,
    calibrate,
    density,
    length_stats,
    source_term,
    upper_support,
    volume,
    weak_form_residual,
)
from .signature import validate_signature
from .thurston import det_identity_check

PI = math.pi
FIVE_CONES = validate_signature(6 * PI / 5, 6 * PI / 5, [4 * PI / 5] * 3)


@dataclass
class CheckResult:
    key: str
    name: str
    expected: str
    actual: str
    tolerance: str
    passed: bool
    seconds: float = 0.0

    def line(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        return (f"[{flag}] {self.key} {self.name}: expected {self.expected}, got {self.actual} "
                f"(tol {self.tolerance}, {self.seconds:.2f}s)")


def bump(center: float, width: float):
    """Smooth bump ``exp(-1/(1-u**2))`` on ``|a - center| < width`` and its derivative."""

    def g(a):
        u = (np.asarray(a, dtype=float) - center) / width
        out = np.zeros_like(u)
        m = np.abs(u) < 1
        out[m] = np.exp(-1.0 / (1.0 - u[m] ** 2))
        return out

    def gp(a):
        u = (np.asarray(a, dtype=float) - center) / width
        out = np.zeros_like(u)
        m = np.abs(u) < 1
        um = u[m]
        out[m] = np.exp(-1.0 / (1.0 - um**2)) * (-2.0 * um / (1.0 - um**2) ** 2) / width
        return out

    return g, gp


BUMP_BATTERY = [(0.35, 0.2), (0.6, 0.25), (0.9, 0.3), (1.4, 0.4), (2.2, 0.6)]


def residual_battery(sig, config: SolverConfig) -> float:
    f = density(sig, config)
    S = source_term(sig, config)
    worst = 0.0
    for c, w in BUMP_BATTERY:
        g, gp = bump(c, w)
        worst = max(worst, weak_form_residual(sig, f, S, g, gp))
    return worst


def _timed(fn: Callable[[], CheckResult]) -> CheckResult:
    t0 = time.perf_counter()
    r = fn()
    r.seconds = time.perf_counter() - t0
    return r


def check_closed_form(config: SolverConfig = DEFAULT_CONFIG) -> CheckResult:
    t0 = time.perf_counter()
    f = density(ANCHOR, config)
    elapsed = time.perf_counter() - t0
    a = np.linspace(0.05, 5.0, 20001)
    ref = anchor_density(a)
    err = float(np.max(np.abs(f.evaluate(a) - ref) / ref))
    ok = err < 1e-3 and elapsed < 10.0
    return CheckResult("C1", "closed-form density", "rel Linf < 1e-3, < 10 s",
                       f"{err:.3g} in {elapsed:.2f}s", "1e-3", ok)


def check_volume(config: SolverConfig = DEFAULT_CONFIG) -> CheckResult:
    v = volume(ANCHOR, config)
    rel = abs(v - PI / 2) / (PI / 2)
    return CheckResult("C2", "anchor volume", f"{PI / 2:.6f}", f"{v:.8f}", "1e-4 rel", rel < 1e-4)


def check_anchor_lengths(config: SolverConfig = DEFAULT_CONFIG) -> CheckResult:
    mean, med = length_stats(ANCHOR, config)
    ok = abs(mean - 1.09) <= 0.03 and abs(med - 0.886) <= 0.01
    return CheckResult("C3", "four-point length stats", "mean 1.09, median 0.886",
                       f"mean {mean:.4f}, median {med:.4f}", "0.03 / 0.01", ok)


def check_five_cone_lengths(config: SolverConfig = DEFAULT_CONFIG) -> CheckResult:
    t0 = time.perf_counter()
    mean, med = length_stats(FIVE_CONES, config)
    elapsed = time.perf_counter() - t0
    ok = abs(mean - 0.71) <= 0.03 and abs(med - 0.76) <= 0.03 and elapsed < 600.0
    return CheckResult("C4", "five-cone length stats", "mean 0.71, median 0.76, < 600 s",
                       f"mean {mean:.4f}, median {med:.4f} in {elapsed:.1f}s", "0.03 / 0.03", ok)


def check_monte_carlo(config: SolverConfig = DEFAULT_CONFIG, n: int = 10**6, seed: int = 0,
                      workers: int = 8) -> CheckResult:
    t0 = time.perf_counter()
    batch = sample_torus_quotient(n, seed=seed, epsilon=0.01, workers=workers)
    f = density(ANCHOR, config).normalized()
    ks = ks_distance(Measure1D.from_samples(batch.a), f)
    elapsed = time.perf_counter() - t0
    ok = ks < 0.01 and elapsed < 120.0
    return CheckResult("C5", "torus-quotient Monte Carlo", "KS < 0.01, < 120 s",
                       f"KS {ks:.4f} (bias bound {batch.bias_bound():.4f}) in {elapsed:.1f}s", "0.01", ok)


PYRAMID_PAIRS = {"apex-base": (0, 1), "base-adjacent": (1, 2), "base-opposite": (1, 3)}
PYRAMID_PUBLISHED = (0.45, 0.64, 0.70)


def geometry_values() -> dict:
    sq = DoubledPolygon(np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]))
    pent = DoubledPolygon.regular(5)
    tet = regular_tetrahedron()
    pyr = square_pyramid()
    return {
        "square side": doubled_distance(sq, 0, 1),
        "square diagonal": doubled_distance(sq, 0, 2),
        "tetrahedron": max(polyhedron_distance(tet, i, j) for i in range(4) for j in range(i + 1, 4)),
        "pentagon side": doubled_distance(pent, 0, 1),
        "pentagon diagonal": doubled_distance(pent, 0, 2),
        **{f"pyramid {k}": polyhedron_distance(pyr, *ij) for k, ij in PYRAMID_PAIRS.items()},
    }


def check_geometry() -> CheckResult:
    v = geometry_values()
    fails = []
    targets = [
        ("square side", 1 / math.sqrt(2), 1e-6),
        ("square diagonal", 1.0, 1e-6),
        ("tetrahedron", 3 ** -0.25, 1e-4),
        ("pentagon side", 0.539, 1e-3),
        ("pentagon diagonal", 0.872, 1e-3),
    ]
    for name, ref, tol in targets:
        if abs(v[name] - ref) > tol:
            fails.append(name)
    pyr = sorted(v[f"pyramid {k}"] for k in PYRAMID_PAIRS)
    for got, ref in zip(pyr, sorted(PYRAMID_PUBLISHED)):
        if abs(got - ref) > 0.005:
            fails.append(f"pyramid {ref}")
    actual = ", ".join(f"{k} {x:.4f}" for k, x in v.items())
    return CheckResult("C6", "geometry spot values", "0.7071/1/0.7598/0.539/0.872/{0.45,0.64,0.70}",
                       actual + (f"; off: {fails}" if fails else ""), "1e-6..5e-3", not fails)


def _random_defects(rng, n):
    while True:
        x = rng.dirichlet(np.ones(n)) * 4 * PI
        if np.all(x < 2 * PI) and np.all(x > 1e-3):
            x[-1] = 4 * PI - math.fsum(x[:-1])
            if 0 < x[-1] < 2 * PI:
                return x


def check_determinant(seed: int = 7) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    ok = True
    for _ in range(50):
        n = int(rng.integers(3, 9))
        lhs, rhs, good = det_identity_check(_random_defects(rng, n))
        worst = max(worst, abs(lhs - rhs) / abs(rhs))
        ok &= good
    return CheckResult("C7", "determinant identity", "50 lists agree", f"max rel {worst:.2e}", "1e-10", ok)


def random_bounded_signatures(count: int = 20, seed: int = 11):
    """Signatures with ``phi1 + phi2 < 2 pi`` and one or two defects."""
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < count:
        n = 1 + len(out) % 2
        total = rng.uniform(0.6, 2 * PI - 0.6)
        alpha = [total] if n == 1 else list(rng.dirichlet([3.0, 3.0]) * total)
        if min(alpha) < 0.2:
            continue
        t = rng.uniform(0.2, 0.8)
        try:
            out.append(validate_signature(t * total, total - t * total, alpha))
        except Exception:  # rounding in the Gauss-Bonnet sum
            continue
    return out


def check_support_bound(config: SolverConfig = DEFAULT_CONFIG) -> CheckResult:
    worst = 0.0
    for sig in random_bounded_signatures():
        f = density(sig, config)
        b = upper_support(sig.phi1, sig.phi2)
        tot = f.total_mass()
        above = tot - float(f.cdf(b))
        worst = max(worst, above / tot)
    return CheckResult("C8", "support bound", "mass above 1/q < 1e-6", f"{worst:.2e}", "1e-6", worst < 1e-6)


def check_calibration(config: SolverConfig = DEFAULT_CONFIG) -> CheckResult:
    c0 = calibrate(config)
    sigs = [ANCHOR, FIVE_CONES] + [s for s in random_bounded_signatures()[:6] if s.n == 2]
    worst = max(residual_battery(s, config) for s in sigs)
    ok = abs(c0 - 0.25) < 1e-6 and worst < 1e-5
    return CheckResult("C9", "calibration and weak form", "c0 0.25, residual < 1e-5",
                       f"c0 {c0:.10f}, residual {worst:.2e}", "1e-6 / 1e-5", ok)


def check_base_case(seed: int = 5) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(100):
        total = rng.uniform(0.05, 2 * PI - 0.05)
        p1 = rng.uniform(0.02, 0.98) * total
        sig = validate_signature(p1, total - p1, [total])
        atom = base_density(sig).atom_positions[0]
        ref = doubled_triangle_area(sig.phi1, sig.phi2)
        worst = max(worst, abs(atom - ref) / ref)
    return CheckResult("C10", "base case vs doubled triangle", "relative agreement", f"{worst:.2e}", "1e-12",
                       worst < 1e-12)


CHECKS = [
    ("C1", check_closed_form, True),
    ("C2", check_volume, True),
    ("C3", check_anchor_lengths, True),
    ("C4", check_five_cone_lengths, False),
    ("C5", check_monte_carlo, False),
    ("C6", lambda config=None: check_geometry(), True),
    ("C7", lambda config=None: check_determinant(), True),
    ("C8", check_support_bound, True),
    ("C9", check_calibration, False),
    ("C10", lambda config=None: check_base_case(), True),
]


def run_all(config: SolverConfig = DEFAULT_CONFIG, quick: bool = False, workers: int = 8) -> list[CheckResult]:
    out = []
    for key, fn, fast in CHECKS:
        if quick and not fast:
            continue
        if key == "C5":
            out.append(_timed(lambda: check_monte_carlo(config, workers=workers)))
        else:
            out.append(_timed(lambda fn=fn: fn(config)))
    return out


def with_c0(config: SolverConfig, c0: float) -> SolverConfig:
    return replace(config, calibration_constant=c0)
