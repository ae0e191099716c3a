import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from varexp.errors import DegenerateExponent, ExponentOrderViolation, UnsupportedDimension
from varexp.exponent import (ExponentField, SampleLattice, SpaceTimeBox, check_exponent_order,
                             conjugate, limit_exponents, log_holder_check, parabolic_star)


@pytest.mark.parametrize("p, expected", [(2.0, 2.0), (1.1, 11.0), (4.0, 4.0 / 3.0)])
def test_conjugate_examples(p, expected):
    assert conjugate(p) == pytest.approx(expected, rel=1e-13)


@pytest.mark.parametrize("p", [1.0, 0.5, -2.0])
def test_conjugate_rejects_small(p):
    with pytest.raises(DegenerateExponent):
        conjugate(p)


@given(st.floats(min_value=1.001, max_value=100.0))
def test_conjugate_involution(p):
    assert conjugate(conjugate(p)) == pytest.approx(p, rel=1e-12, abs=1e-12)
    assert abs(1 / p + 1 / conjugate(p) - 1) <= 1e-12


@pytest.mark.parametrize("p, d, expected", [(2, 2, 4.0), (2, 3, 10 / 3), (3, 2, 5.0)])
def test_parabolic_star_examples(p, d, expected):
    assert parabolic_star(p, d) == pytest.approx(expected, rel=1e-14)


def test_parabolic_star_rejects_dimension_one():
    with pytest.raises(UnsupportedDimension):
        parabolic_star(2.0, 1)


@given(st.floats(min_value=1.0, max_value=50.0), st.floats(min_value=0.0, max_value=5.0),
       st.integers(min_value=2, max_value=5))
def test_parabolic_star_monotone_and_gaining(p, dp, d):
    assert parabolic_star(p + dp, d) >= parabolic_star(p, d)
    assert parabolic_star(p, d) > p


@pytest.mark.parametrize("d", [2, 3, 4])
def test_parabolic_star_continuous_at_dimension(d):
    left = parabolic_star(d - 1e-12, d)
    assert left == pytest.approx(parabolic_star(d, d), abs=1e-10)
    assert parabolic_star(d, d) == d + 2


def test_limit_exponents_constant_and_affine():
    box = SpaceTimeBox()
    lat = box.lattice(5, 17)
    assert limit_exponents(ExponentField.constant(2.0), lat) == (2.0, 2.0)
    p = ExponentField(lambda t, x: 1.1 + 0.9 * x[..., 0], box, lat)
    lo, hi = limit_exponents(p, lat)
    assert lo == pytest.approx(1.1) and hi == pytest.approx(2.0)


def test_degenerate_exponent_rejected():
    with pytest.raises(DegenerateExponent):
        ExponentField(lambda t, x: 0.9 + x[..., 0])
    with pytest.raises(DegenerateExponent):
        ExponentField.constant(1.0)
    with pytest.raises(DegenerateExponent):
        ExponentField(lambda t, x: np.where(x[..., 0] > 0.5, np.nan, 2.0))


def test_exponent_invariants_on_lattice():
    p = ExponentField(lambda t, x: 1.5 + 0.3 * np.sin(3 * x[..., 0] + t) * x[..., 1])
    vals = p(p.lattice.t, p.lattice.x)
    assert np.all(vals >= p.p_minus) and np.all(vals <= p.p_plus) and p.p_minus > 1


def test_extension_clamps_to_box():
    p = ExponentField(lambda t, x: 1.5 + x[..., 0], time_independent=True)
    assert p.extended(0.0, [[3.0, 0.5]])[0] == pytest.approx(2.5)
    assert p.extended(-1.0, [[-3.0, 0.5]])[0] == pytest.approx(1.5)


def test_log_holder_constant_has_zero_modulus():
    rep = log_holder_check(ExponentField.constant(3.0), SpaceTimeBox().lattice(3, 6), 0.0)
    assert rep.local_constant == 0.0 and rep.max_violation == 0.0


def test_log_holder_affine_within_budget():
    lat = SpaceTimeBox().lattice(4, 12)
    rep = log_holder_check(ExponentField.affine(1.1, 0.9, 0.0), lat, 10.0)
    # brute-force oracle over the same pairs
    z = lat.points
    vals = 1.1 + 0.9 * z[:, 1]
    d = np.linalg.norm(z[:, None] - z[None], axis=-1)
    iu = np.triu_indices(len(z), 1)
    oracle = np.max(np.abs(vals[:, None] - vals[None])[iu] * np.log(math.e + 1 / d[iu]))
    assert rep.local_constant == pytest.approx(oracle, rel=1e-12)
    assert rep.max_violation == 0.0


def test_log_holder_detects_jump():
    h = 1e-6
    pts = np.array([[0.0, 0.5 - h / 2, 0.3], [0.0, 0.5 + h / 2, 0.3], [0.0, 0.1, 0.1]])
    p = ExponentField(lambda t, x: np.where(x[..., 0] < 0.5, 1.5, 2.0), lattice=SampleLattice(pts))
    rep = log_holder_check(p, SampleLattice(pts), budget_c1=1.0)
    assert rep.local_constant == pytest.approx(0.5 * math.log(math.e + 1 / h), rel=1e-9)
    assert rep.max_violation > 0


def test_exponent_order_check():
    check_exponent_order([2.0, 2.5], [3.0, 3.0], [2.0, 2.0])
    with pytest.raises(ExponentOrderViolation):
        check_exponent_order([2.0, 3.5], [3.0, 3.0])
    with pytest.raises(ExponentOrderViolation):
        check_exponent_order([1.9], [3.0], [2.0])


def test_star_field_matches_scalar_formula():
    p = ExponentField.affine(1.5, 1.0, 0.0)
    ps = p.star(2)
    x = np.array([[0.2, 0.1], [0.9, 0.4]])
    assert np.allclose(ps(0.0, x), parabolic_star(p(0.0, x), 2))
