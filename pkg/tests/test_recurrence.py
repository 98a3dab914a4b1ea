import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flatcone.acceptance import FIVE_CONES, bump
from flatcone.errors import ArityLimitExceeded, CalibrationError, DefectOutOfRange
from flatcone.measure import Measure1D, PiecewiseDensity
from flatcone.recurrence import (
    ANCHOR,
    SolverConfig,
    _GridDefect,
    _ThreeDefect,
    anchor_density,
    base_density,
    calibrate,
    clear_memo,
    density,
    length_stats,
    solve_ode,
    source_term,
    operator_residual,
    upper_support,
    volume,
    weak_form_residual,
)
from flatcone.signature import validate_signature

PI = math.pi
HALF = validate_signature(PI / 2, PI / 2, [PI])


# --- base case and support -------------------------------------------------


@pytest.mark.parametrize(
    "phi,alpha,atom",
    [
        ((PI / 2, PI / 2), [PI], 0.5),
        ((2 * PI / 3, 2 * PI / 3), [4 * PI / 3], math.sqrt(3) / 2),
        ((PI / 3, 2 * PI / 3), [PI], math.sqrt(3) / 4),
    ],
)
def test_base_density_atom(phi, alpha, atom):
    mu = base_density(validate_signature(*phi, alpha))
    assert mu.atoms == [(pytest.approx(atom, rel=1e-14), 1.0)]


def test_upper_support():
    assert upper_support(PI, PI) == math.inf
    assert upper_support(PI / 2, PI / 2) == pytest.approx(0.5)
    assert upper_support(6 * PI / 5, 6 * PI / 5) == math.inf


def test_atomic_signature_pipeline():
    assert density(HALF).atoms == [(pytest.approx(0.5), 1.0)]
    assert volume(HALF) == 1.0
    assert length_stats(HALF) == pytest.approx((math.sqrt(2), math.sqrt(2)))
    S = source_term(HALF)
    assert S.measure.total_mass() == 0.0


def test_regime_and_arity_errors():
    with pytest.raises(DefectOutOfRange):
        density(validate_signature(2.2 * PI, 0.3 * PI, [1.25 * PI, 1.25 * PI]))
    with pytest.raises(ArityLimitExceeded):
        density(validate_signature(1.6 * PI, 1.6 * PI, [0.64 * PI] * 5))


# --- the ODE solver --------------------------------------------------------


def test_solve_ode_zero_source():
    assert solve_ode(0.0, 2, Measure1D()).total_mass() == 0.0


@settings(max_examples=30, deadline=None)
@given(st.floats(0.2, 5.0), st.floats(0.1, 10.0))
def test_atomic_source_gives_power_law(x, m):
    f = solve_ode(0.0, 2, Measure1D.atom(x, m))
    a = np.array([0.5 * x, 1.5 * x, 4.0 * x])
    assert f.evaluate(a) == pytest.approx([0.0, m / a[1] ** 2, m / a[2] ** 2], rel=1e-10)
    assert f.total_mass() == pytest.approx(m / x, rel=1e-9)


def test_solve_ode_matches_closed_form():
    S = source_term(ANCHOR)
    f = solve_ode(0.0, 2, S.measure)
    a = np.linspace(0.05, 4.0, 400)
    ref = anchor_density(a)
    assert np.max(np.abs(f.evaluate(a) - ref) / ref) < 1e-5


def test_solve_ode_matches_kernel_for_bounded_case():
    sig = validate_signature(0.8 * PI, 0.6 * PI, [0.5 * PI, 0.9 * PI])
    S = source_term(sig)
    f = solve_ode(sig.q, 2, S.measure)
    g = density(sig)
    a = np.linspace(0.05, 0.99 * upper_support(sig.phi1, sig.phi2), 200)
    assert np.max(np.abs(f.evaluate(a) - g.evaluate(a))) < 1e-5 * np.max(g.evaluate(a))


# --- densities -------------------------------------------------------------


def test_anchor_density_and_volume():
    f = density(ANCHOR)
    a = np.linspace(0.02, 6.0, 3000)
    assert np.max(np.abs(f.evaluate(a) / anchor_density(a) - 1)) < 1e-3
    assert volume(ANCHOR) == pytest.approx(PI / 2, rel=1e-4)


def test_anchor_grid_convergence():
    clear_memo()
    a = np.linspace(0.05, 3.0, 500)
    errs = []
    for cells in (512, 1024, 2048):
        f = density(ANCHOR, SolverConfig(grid_cells=cells))
        errs.append(np.max(np.abs(f.evaluate(a) - anchor_density(a))))
    assert errs[0] > errs[1] > errs[2]


def test_five_cone_regression():
    mean, med = length_stats(FIVE_CONES)
    assert volume(FIVE_CONES) == pytest.approx(0.986959, rel=1e-4)
    assert mean == pytest.approx(0.71, abs=0.03)
    assert med == pytest.approx(0.76, abs=0.03)


def test_three_defect_routes_agree():
    cfg = SolverConfig(beta_nodes=128, grid_cells=1024)
    a = np.linspace(0.3, 3.0, 50)
    grid = _GridDefect(FIVE_CONES, cfg).f(a)
    kern = _ThreeDefect(FIVE_CONES, cfg, False).f(a)
    assert np.max(np.abs(grid - kern)) < 1e-3 * np.max(kern)


def test_four_defect_smoke():
    sig = validate_signature(1.5 * PI, 1.5 * PI, [3 * PI / 4] * 4)
    f = density(sig, SolverConfig(beta_nodes=16, grid_cells=256))
    assert 0.4 < f.total_mass() < 0.55
    assert np.all(f.evaluate(np.linspace(0.1, 5, 20)) >= 0)


@pytest.mark.parametrize(
    "phi,alpha",
    [((1.1 * PI, 0.7 * PI), (0.5 * PI, 1.3 * PI)), ((1.3 * PI, 0.9 * PI), (0.5 * PI, 0.7 * PI, 1.0 * PI))],
)
def test_label_symmetry(phi, alpha):
    cfg = SolverConfig(beta_nodes=64, grid_cells=512)
    a = np.linspace(0.05, 3, 30)
    f = density(validate_signature(*phi, alpha), cfg).evaluate(a)
    g = density(validate_signature(phi[1], phi[0], alpha[::-1]), cfg).evaluate(a)
    assert np.max(np.abs(f - g)) <= 1e-12 * np.max(f)


@settings(max_examples=12, deadline=None)
@given(st.floats(0.15, 0.85), st.floats(0.25, 0.75), st.floats(0.8, 2 * PI - 0.8))
def test_bounded_mass_below_support(t, u, total):
    sig = validate_signature(t * total, (1 - t) * total, [u * total, (1 - u) * total])
    f = density(sig, SolverConfig(beta_nodes=64, grid_cells=512))
    b = upper_support(sig.phi1, sig.phi2)
    assert f.cdf(b) == pytest.approx(f.total_mass(), rel=1e-12)
    assert np.all(f.evaluate(np.linspace(0, b, 50)) >= 0)


def test_disk_cache_round_trip(tmp_path):
    clear_memo()
    sig = validate_signature(0.8 * PI, 0.6 * PI, [0.5 * PI, 0.9 * PI])
    f = density(sig, cache_dir=tmp_path)
    files = list(tmp_path.glob("*.json"))
    assert len(files) == 1
    clear_memo()
    g = density(sig, cache_dir=tmp_path)
    a = np.linspace(0.05, 0.5, 20)
    assert g.evaluate(a) == pytest.approx(f.evaluate(a), rel=1e-12)
    files[0].write_text("{broken")
    clear_memo()
    h = density(sig, cache_dir=tmp_path)
    assert h.total_mass() == pytest.approx(f.total_mass(), rel=1e-12)


def test_determinism():
    clear_memo()
    first = density(FIVE_CONES).to_json()
    clear_memo()
    assert density(FIVE_CONES).to_json() == first


# --- weak form and calibration --------------------------------------------


def test_anchor_weak_form():
    g, gp = bump(0.5, 0.3)
    assert weak_form_residual(ANCHOR, density(ANCHOR), source_term(ANCHOR), g, gp) < 1e-6


def test_weak_form_trivial():
    g, gp = bump(1.0, 0.5)
    assert weak_form_residual(ANCHOR, Measure1D(), None, g, gp) == 0.0


def test_uncalibrated_source_is_detected():
    g, gp = bump(0.5, 0.3)
    f = density(ANCHOR)
    S1 = source_term(ANCHOR, SolverConfig(calibration_constant=1.0))
    S_int = source_term(ANCHOR).integrate_S(g)
    r = weak_form_residual(ANCHOR, f, S1, g, gp)
    assert r == pytest.approx(3.0 * S_int, rel=1e-5)


@pytest.mark.parametrize("sig", [FIVE_CONES, validate_signature(0.8 * PI, 0.6 * PI, [0.5 * PI, 0.9 * PI])])
def test_weak_form_general(sig):
    f, S = density(sig), source_term(sig)
    for c, w in [(0.3, 0.15), (0.6, 0.2), (1.2, 0.4)]:
        g, gp = bump(c, w)
        assert weak_form_residual(sig, f, S, g, gp) < 1e-5


def test_operator_residual_diagnostics():
    assert operator_residual(ANCHOR, density(ANCHOR), source_term(ANCHOR)) > 1e-3
    with pytest.warns(RuntimeWarning):
        assert math.isnan(operator_residual(HALF, density(HALF), None))


def test_calibration():
    assert calibrate() == pytest.approx(0.25, abs=1e-6)
    with pytest.warns(RuntimeWarning):
        assert calibrate(SolverConfig(beta_nodes=16)) == pytest.approx(0.25, abs=1e-3)
    with pytest.raises(CalibrationError):
        calibrate(use_anchor=False)


def test_source_is_linear_in_c0():
    a = np.linspace(0.1, 0.9, 9)
    s1 = source_term(ANCHOR, SolverConfig(calibration_constant=1.0)).S(a)
    s4 = source_term(ANCHOR).S(a)
    assert s1 == pytest.approx(4 * s4, rel=1e-12)


def test_grid_piecewise_source():
    T = Measure1D(parts=[PiecewiseDensity([1.0, 2.0], [1.0, 1.0])])
    f = solve_ode(0.0, 2, T)
    # G(a) = a - 1 on [1, 2], then constant
    assert f.evaluate(np.array([1.5, 3.0])) == pytest.approx([0.5 / 2.25, 1.0 / 9.0], rel=1e-6)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        f.total_mass()
