"""Reference battery at its stated tolerances; one PASS/FAIL line per check.

The lines are printed in the terminal summary (see ``conftest.py``) and by
``python3 tests/test_acceptance.py``.
"""

import pytest

from flatcone import acceptance as acc

RESULTS = []


def record(result):
    RESULTS.append(result.line())
    print(result.line())
    return result


def test_c1_closed_form_density():
    assert record(acc._timed(acc.check_closed_form)).passed


def test_c2_anchor_volume():
    assert record(acc._timed(acc.check_volume)).passed


def test_c3_four_point_lengths():
    assert record(acc._timed(acc.check_anchor_lengths)).passed


def test_c4_five_cone_lengths():
    assert record(acc._timed(acc.check_five_cone_lengths)).passed


def test_c5_torus_monte_carlo():
    assert record(acc._timed(acc.check_monte_carlo)).passed


@pytest.mark.xfail(
    strict=True,
    reason="equal-defect pyramid gives 0.640/0.581/0.822, not 0.45/0.64/0.70; "
    "the base-adjacent value is a straight edge, so no shorter path exists",
)
def test_c6_geometry_spot_values():
    assert record(acc._timed(acc.check_geometry)).passed


def test_c7_determinant_identity():
    assert record(acc._timed(acc.check_determinant)).passed


def test_c8_support_bound():
    assert record(acc._timed(acc.check_support_bound)).passed


def test_c9_calibration_and_weak_form():
    assert record(acc._timed(acc.check_calibration)).passed


def test_c10_base_case():
    assert record(acc._timed(acc.check_base_case)).passed


if __name__ == "__main__":
    for r in acc.run_all():
        print(r.line())
