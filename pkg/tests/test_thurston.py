import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flatcone.errors import BadDefectList, DimensionMismatch, NonPositiveArea
from flatcone.geometry import developed_polygon, polygon_area
from flatcone.thurston import (
    area_value,
    det_identity_check,
    determinant,
    hermitian_matrix,
    signature_defects,
    volume_density,
)

PI = math.pi


def test_three_point_matrix():
    H = hermitian_matrix([4 * PI / 3] * 3).matrix
    assert H.shape == (1, 1)
    assert H[0, 0] == pytest.approx(1 / (2 * math.sqrt(3)))


def test_four_point_matrix():
    H = hermitian_matrix([PI] * 4).matrix
    assert np.allclose(H, [[0, 0.25j], [-0.25j, 0]], atol=1e-15)
    assert np.allclose(H, H.conj().T)


@pytest.mark.parametrize("defects,det", [([PI] * 4, -1 / 16), ([4 * PI / 3] * 3, 1 / (2 * math.sqrt(3)))])
def test_determinant_examples(defects, det):
    lhs, rhs, ok = det_identity_check(defects)
    assert ok
    assert lhs.real == pytest.approx(det)
    assert rhs.real == pytest.approx(det)


def random_defects(draw_fractions):
    x = np.asarray(draw_fractions, dtype=float)
    x = x / x.sum() * 4 * PI
    return x


@settings(max_examples=80, deadline=None)
@given(st.lists(st.floats(0.05, 1.0), min_size=4, max_size=8))
def test_determinant_identity_property(fr):
    d = random_defects(fr)
    if np.any(d >= 2 * PI - 1e-6):
        return
    d[-1] = 4 * PI - math.fsum(d[:-1])
    lhs, rhs, ok = det_identity_check(d)
    assert ok
    assert determinant(hermitian_matrix(d)) == pytest.approx(np.linalg.det(hermitian_matrix(d).matrix).real, rel=1e-9)


def test_area_values():
    form = hermitian_matrix([PI] * 4)
    assert area_value(form, [0, 0]) == 0.0
    assert area_value(form, [1, 1j]) == pytest.approx(0.5)
    with pytest.raises(DimensionMismatch):
        area_value(form, [1, 1, 1])


def test_area_matches_developed_polygon():
    d = [0.9 * PI, 1.2 * PI, 0.8 * PI, 1.1 * PI]
    form = hermitian_matrix(d)
    P = [1.0 + 0.3j, 0.2 + 1.1j, 0.0]
    z = [p - P[-1] for p in P[:-1]]
    loop = developed_polygon(d, P)
    assert area_value(form, z) == pytest.approx(polygon_area(loop), rel=1e-12)


def test_volume_density():
    form = hermitian_matrix([PI] * 4)
    # z = (-i, 1) is a unit multiple of (1, i)
    assert volume_density(form, [-1j]) == pytest.approx((1 / 16) / 0.5**2)
    with pytest.raises(NonPositiveArea):
        volume_density(form, [1j])


def test_torus_chart_density_is_flat_in_hyperbolic_measure():
    form = hermitian_matrix([PI] * 4)
    for tau in (1j, 0.3 + 1.7j, -0.4 + 0.95j):
        y = 1 / (1 + tau)
        val = volume_density(form, [y]) * abs(1 + tau) ** -4 * tau.imag**2
        assert val == pytest.approx(0.25, rel=1e-12)


def test_bad_defects():
    with pytest.raises(BadDefectList):
        hermitian_matrix([PI, PI])
    with pytest.raises(BadDefectList):
        hermitian_matrix([PI, PI, PI])
    with pytest.raises(BadDefectList):
        signature_defects(PI, PI, [2 * PI, 0.0])
