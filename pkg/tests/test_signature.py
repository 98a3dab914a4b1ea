import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flatcone.errors import BetaOutOfInterval, ConfigError, DefectOutOfRange, EmptyAlpha, GaussBonnetViolation
from flatcone.signature import (
    Split,
    beta_interval,
    enumerate_splits,
    kappa,
    parse_angle,
    q_factor,
    signature_from_text,
    sub_signatures,
    validate_signature,
)

PI = math.pi


def test_valid_signatures():
    assert validate_signature(PI, PI, [PI, PI]).n == 2
    assert validate_signature(PI / 2, PI / 2, [PI]).n == 1


def test_gauss_bonnet_violation():
    with pytest.raises(GaussBonnetViolation):
        validate_signature(PI, PI, [PI, PI / 2])


@pytest.mark.parametrize("alpha", [[0.0, 2 * PI], [2 * PI, 0.0], [-1.0, 2 * PI + 1]])
def test_defect_range(alpha):
    with pytest.raises(DefectOutOfRange):
        validate_signature(PI, PI, alpha)


def test_empty_alpha():
    with pytest.raises(EmptyAlpha):
        validate_signature(PI, PI, [])


@pytest.mark.parametrize("phi,q", [((PI, PI), 0.0), ((PI / 2, PI / 2), 2.0), ((2 * PI / 3, 2 * PI / 3), 2 / math.sqrt(3))])
def test_q_factor(phi, q):
    assert q_factor(*phi) == pytest.approx(q, abs=1e-14)


def test_split_counts():
    assert enumerate_splits(validate_signature(PI / 2, PI / 2, [PI])) == []
    assert len(enumerate_splits(validate_signature(PI, PI, [PI, PI]))) == 2
    assert len(enumerate_splits(validate_signature(6 * PI / 5, 6 * PI / 5, [4 * PI / 5] * 3))) == 6


def test_beta_intervals():
    assert beta_interval(validate_signature(PI, PI, [PI, PI]), Split((0,), (1,))) == pytest.approx((0.0, PI))
    five = validate_signature(6 * PI / 5, 6 * PI / 5, [4 * PI / 5] * 3)
    assert beta_interval(five, Split((0,), (1, 2))) == pytest.approx((0.0, 4 * PI / 5))
    sig = validate_signature(3.9, 0.1, [2.0, 2.0])
    assert beta_interval(sig, Split((0,), (1,))) == pytest.approx((1.9, 2.0))


def test_sub_signatures():
    sig = validate_signature(PI, PI, [PI, PI])
    sp = Split((0,), (1,))
    p = sub_signatures(sig, sp, PI / 2)
    assert (p.hat.phi1, p.hat.phi2, *p.hat.alpha) == pytest.approx((PI / 2, PI / 2, PI))
    p = sub_signatures(sig, sp, PI / 4)
    assert (p.hat.phi1, p.hat.phi2) == pytest.approx((PI / 4, 3 * PI / 4))
    assert (p.tilde.phi1, p.tilde.phi2) == pytest.approx((3 * PI / 4, PI / 4))
    five = validate_signature(6 * PI / 5, 6 * PI / 5, [4 * PI / 5] * 3)
    p = sub_signatures(five, Split((0,), (1, 2)), 2 * PI / 5)
    assert (p.hat.phi1, p.hat.phi2) == pytest.approx((2 * PI / 5, 2 * PI / 5))
    assert (p.tilde.phi1, p.tilde.phi2) == pytest.approx((4 * PI / 5, 4 * PI / 5))
    assert len(p.tilde.alpha) == 2
    with pytest.raises(BetaOutOfInterval):
        sub_signatures(sig, sp, PI)


def test_kappa_identity():
    sig = validate_signature(PI, PI, [PI, PI])
    sp = Split((0,), (1,))
    assert kappa(sig, sp, PI / 2) == pytest.approx(4.0)
    for b in (0.1, 0.7, 1.3, 2.2, 3.0):
        assert kappa(sig, sp, b) == pytest.approx(4.0 / math.sin(b), rel=1e-12)
    vals = [kappa(sig, sp, b) for b in (1e-2, 1e-4, 1e-6)]
    assert vals[0] < vals[1] < vals[2]


def test_parse_angle():
    assert parse_angle("6pi/5") == pytest.approx(6 * PI / 5)
    assert parse_angle("pi") == pytest.approx(PI)
    assert parse_angle("0.5") == 0.5
    with pytest.raises(ConfigError):
        parse_angle("sin(pi)")
    with pytest.raises(ConfigError):
        signature_from_text("pi", "pi")


@settings(max_examples=60, deadline=None)
@given(st.floats(0.05, 0.95), st.floats(0.3, 2 * PI - 0.3))
def test_splits_of_two_defects_are_reversals(t, total):
    sig = validate_signature(t * total, (1 - t) * total, [total / 2, total / 2])
    s = enumerate_splits(sig)
    assert s[0].reversed() == s[1]
