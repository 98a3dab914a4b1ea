import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flatcone.errors import MalformedSurface
from flatcone.geometry import (
    ConvexPolyhedron,
    DoubledPolygon,
    TorusQuotient,
    cone_defects,
    doubled_distance,
    doubled_triangle_area,
    equal_defect_pyramid_height,
    in_fundamental_domain,
    lattice_min_bruteforce,
    make_square_pyramid,
    polyhedron_distance,
    regular_tetrahedron,
    sample_torus_quotient,
    square_pyramid,
    torus_quotient_invariants,
    truncation_bias_bound,
)
from flatcone.measure import Measure1D, ks_distance
from flatcone.signature import q_factor

PI = math.pi
SQUARE = DoubledPolygon(np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]))


def test_cone_defects():
    assert cone_defects(SQUARE) == pytest.approx([PI] * 4)
    assert cone_defects(regular_tetrahedron()) == pytest.approx([PI] * 4)
    assert cone_defects(square_pyramid()) == pytest.approx([4 * PI / 5] * 5)


def test_doubled_polygons():
    assert doubled_distance(SQUARE, 0, 1) == pytest.approx(1 / math.sqrt(2))
    assert doubled_distance(SQUARE, 0, 2) == pytest.approx(1.0)
    pent = DoubledPolygon.regular(5)
    s = math.sqrt(2 * math.tan(PI / 5) / 5)
    assert doubled_distance(pent, 0, 1) == pytest.approx(s, rel=1e-12)
    assert doubled_distance(pent, 0, 2) == pytest.approx(s * (1 + math.sqrt(5)) / 2, rel=1e-12)


def test_nonconvex_polygon_rejected():
    with pytest.raises(MalformedSurface):
        DoubledPolygon(np.array([[0.0, 0.0], [2.0, 0.0], [0.5, 0.5], [0.0, 2.0]]))


def test_tetrahedron_all_pairs():
    tet = regular_tetrahedron()
    for i in range(4):
        for j in range(i + 1, 4):
            assert polyhedron_distance(tet, i, j) == pytest.approx(3**-0.25, rel=1e-10)


def test_equal_defect_pyramid_values():
    # recorded values of this construction; see the README for the comparison
    pyr = square_pyramid()
    assert polyhedron_distance(pyr, 0, 1) == pytest.approx(0.63986, abs=1e-4)
    assert polyhedron_distance(pyr, 1, 2) == pytest.approx(0.58103, abs=1e-4)
    assert polyhedron_distance(pyr, 1, 3) == pytest.approx(0.82160, abs=1e-4)


def test_base_adjacent_is_the_straight_edge():
    pyr = square_pyramid()
    v = pyr.vertices
    assert polyhedron_distance(pyr, 1, 2) == pytest.approx(np.linalg.norm(v[1] - v[2]), rel=1e-12)


def test_bundled_pyramid_matches_construction():
    built = make_square_pyramid(equal_defect_pyramid_height()).normalized()
    assert np.allclose(built.vertices, square_pyramid().vertices, atol=1e-12)


def test_flattened_pyramid_approaches_doubled_square():
    pyr = make_square_pyramid(1e-6)
    sq = DoubledPolygon(np.array([[1.0, 1.0], [-1.0, 1.0], [-1.0, -1.0], [1.0, -1.0]]))
    assert polyhedron_distance(pyr, 1, 2) == pytest.approx(doubled_distance(sq, 0, 1), rel=1e-5)
    assert polyhedron_distance(pyr, 1, 3) == pytest.approx(doubled_distance(sq, 0, 2), rel=1e-5)


@settings(max_examples=15, deadline=None)
@given(st.floats(0.3, 3.0))
def test_pyramid_triangle_inequality(h):
    pyr = make_square_pyramid(h)
    d = np.array([[polyhedron_distance(pyr, i, j) if i != j else 0.0 for j in range(5)] for i in range(5)])
    assert np.allclose(d, d.T, rtol=1e-10)
    for i in range(5):
        for j in range(5):
            for k in range(5):
                assert d[i, j] <= d[i, k] + d[k, j] + 1e-12


@settings(max_examples=10, deadline=None)
@given(st.floats(0.1, 10.0))
def test_scale_invariance(lam):
    tet = regular_tetrahedron()
    assert polyhedron_distance(tet.scaled(lam), 0, 1) == pytest.approx(polyhedron_distance(tet, 0, 1), rel=1e-10)


def test_malformed_surface(tmp_path):
    with pytest.raises(MalformedSurface):
        ConvexPolyhedron.from_dict({"vertices": [[0, 0, 0], [1, 0, 0], [0, 1, 0]], "faces": [[0, 1, 2]]})
    p = tmp_path / "open.json"
    d = regular_tetrahedron().to_dict()
    d["faces"] = d["faces"][:-1]
    p.write_text(json.dumps(d))
    with pytest.raises(MalformedSurface):
        ConvexPolyhedron.from_json(p)


def test_doubled_triangle_area():
    assert doubled_triangle_area(PI / 2, PI / 2) == pytest.approx(0.5)
    assert doubled_triangle_area(2 * PI / 3, 2 * PI / 3) == pytest.approx(math.sqrt(3) / 2)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.05, 0.95), st.floats(0.05, 2 * PI - 0.05))
def test_doubled_triangle_matches_base_atom(t, total):
    p1, p2 = t * total, (1 - t) * total
    assert doubled_triangle_area(p1, p2) == pytest.approx(1 / q_factor(p1, p2), rel=1e-12)


# --- torus quotient --------------------------------------------------------


def test_torus_invariants():
    assert torus_quotient_invariants(1j) == pytest.approx((0.5, 0.5, 2.0))
    assert torus_quotient_invariants(2j) == pytest.approx((0.5, 1.0, 4.0))
    tau = 0.3 + 1.7j
    assert torus_quotient_invariants(tau)[0] == pytest.approx(lattice_min_bruteforce(tau, 3))
    with pytest.raises(ValueError):
        TorusQuotient(0.1 + 0.2j)


@settings(max_examples=200, deadline=None)
@given(st.floats(-1.0, 1.0), st.floats(0.02, 5.0))
def test_lattice_min_matches_bruteforce(x, y):
    tau = complex(x, y)
    if not in_fundamental_domain(tau):
        return
    assert torus_quotient_invariants(tau)[0] == pytest.approx(lattice_min_bruteforce(tau), rel=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.floats(-1.0, 1.0), st.floats(0.05, 3.0), st.integers(-3, 3))
def test_gamma2_invariance(x, y, k):
    tau = complex(x, y)
    l1 = torus_quotient_invariants(tau)[0]
    assert torus_quotient_invariants(tau + 2 * k)[0] == pytest.approx(l1, rel=1e-12)


def test_sampler_determinism_and_bias():
    a = sample_torus_quotient(5000, seed=3, workers=2)
    b = sample_torus_quotient(5000, seed=3, workers=2)
    assert a.to_csv() == b.to_csv()
    assert a.to_csv().splitlines()[0] == "l,area,a"
    assert truncation_bias_bound(0.01) == pytest.approx(0.02 / PI)
    assert np.allclose(a.a, a.area / a.l**2)


def test_sampler_against_closed_form():
    from flatcone.recurrence import ANCHOR, density

    batch = sample_torus_quotient(200_000, seed=1)
    ks = ks_distance(Measure1D.from_samples(batch.a), density(ANCHOR).normalized())
    assert ks < 0.01
    assert np.median(batch.a**-0.5) == pytest.approx(0.886, abs=0.005)
