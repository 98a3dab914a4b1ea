import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flatcone.errors import DivergentMoment, InvalidMeasure, NotNormalized
from flatcone.measure import (
    Branch,
    Measure1D,
    PiecewiseDensity,
    from_length_density,
    graded_grid,
    ks_distance,
    moment,
    pushforward,
    quantile,
    to_length_density,
    total_mass,
)
from flatcone.recurrence import ANCHOR, anchor_density, density

PI = math.pi


def uniform(lo, hi, mass=1.0):
    return Measure1D(parts=[PiecewiseDensity([lo, hi], [mass / (hi - lo)] * 2)])


def test_atom_basics():
    mu = Measure1D.atom(0.5)
    assert total_mass(mu) == 1.0
    assert moment(mu, -0.5) == pytest.approx(math.sqrt(2))
    assert quantile(mu, 0.5) == 0.5
    assert total_mass(Measure1D.empty()) == 0.0


def test_invalid_atoms():
    with pytest.raises(InvalidMeasure):
        Measure1D([(-1.0, 1.0)])
    with pytest.raises(InvalidMeasure):
        PiecewiseDensity([0, 1], [1, -1])


def test_closed_form_moments():
    f = density(ANCHOR)
    assert total_mass(f) == pytest.approx(PI / 2, abs=1e-6)
    assert moment(f, 0.0) == pytest.approx(PI / 2, abs=1e-6)
    assert moment(f, -0.5) / (PI / 2) == pytest.approx(1.09, abs=0.03)
    assert quantile(f.normalized(), 0.5) == pytest.approx(4 / PI, rel=1e-4)


def test_divergent_moment():
    with pytest.raises(DivergentMoment):
        moment(density(ANCHOR), 1.0)


def test_uniform_quantile():
    assert quantile(uniform(1.0, 3.0), 0.25) == pytest.approx(1.5)


def test_pushforward_atom_and_square():
    mu = pushforward(Measure1D.atom(0.5), [Branch.power_map(2.0, 1.0)])
    assert mu.atoms == [(1.0, 1.0)]
    sq = pushforward(uniform(0.0, 1.0), [Branch.power_map(1.0, 2.0, 0.0, 1.0)])
    a = np.linspace(0.05, 0.95, 7)
    assert sq.evaluate(a) == pytest.approx(0.5 / np.sqrt(a), rel=1e-9)


def test_two_branch_sine_against_samples():
    branches = [
        Branch(0.0, PI / 2, np.sin, np.arcsin, np.cos),
        Branch(PI / 2, PI, np.sin, lambda y: PI - np.arcsin(y), np.cos),
    ]
    mu = pushforward(uniform(0.0, PI, PI), branches)
    a = np.array([0.1, 0.4, 0.8])
    assert mu.evaluate(a) == pytest.approx(2 / np.sqrt(1 - a * a), rel=1e-9)
    rng = np.random.default_rng(1)
    emp = Measure1D.from_samples(np.sin(rng.uniform(0, PI, 10**6)))
    assert ks_distance(emp, mu.scaled(1 / PI)) < 3e-3


def test_length_transform():
    mu = to_length_density(Measure1D.atom(4.0))
    assert mu.atoms == [(0.5, 1.0)]
    rho = to_length_density(density(ANCHOR)).normalized()
    assert quantile(rho, 0.5) == pytest.approx(0.886, abs=1e-3)


def test_length_round_trip_cells():
    f = density(ANCHOR)
    back = from_length_density(to_length_density(f))
    edges = np.geomspace(0.01, 100.0, 60)
    assert np.max(np.abs(np.diff(back.cdf(edges)) - np.diff(f.cdf(edges)))) < 1e-9


def test_ks_basics():
    mu = uniform(1.0, 2.0)
    assert ks_distance(mu, mu) == 0.0
    assert ks_distance(Measure1D.atom(1.0), Measure1D.atom(2.0)) == 1.0
    with pytest.raises(NotNormalized):
        ks_distance(uniform(1.0, 2.0, 2.0), mu)


def test_serialization_round_trip():
    f = density(ANCHOR)
    g = Measure1D.from_json(f.to_json())
    a = np.geomspace(0.01, 50, 40)
    assert g.evaluate(a) == pytest.approx(f.evaluate(a), rel=1e-12)
    assert "," in f.to_csv().splitlines()[1]


@settings(max_examples=40, deadline=None)
@given(st.floats(0.1, 10.0), st.floats(0.1, 10.0))
def test_scaling_preserves_shape(c, x):
    mu = Measure1D([(x, 1.0)], [PiecewiseDensity([x, 2 * x], [1.0, 2.0])])
    assert total_mass(mu.scaled(c)) == pytest.approx(c * total_mass(mu))


@settings(max_examples=40, deadline=None)
@given(st.floats(0.0, 5.0), st.floats(0.01, 5.0), st.integers(2, 200))
def test_graded_grid_is_increasing(lo, span, cells):
    g = graded_grid(lo, lo + span, cells, focus=[lo + span / 3])
    assert g[0] == lo and g[-1] == pytest.approx(lo + span)
    assert np.all(np.diff(g) > 0)
