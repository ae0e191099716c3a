import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad
from scipy.optimize import brentq

from varexp.errors import ExponentOrderViolation, FieldOverflow, RootFindFailure
from varexp.exponent import ExponentField
from varexp.spaces import (DiscreteField, embedding_check, gauss_box_quadrature, holder_check,
                           luxemburg_norm, modular)

from fieldgen import piecewise_field, random_affine


def one_plus_x1():
    # p = 1 + x1 touches 1 at the boundary; build without the p > 1 guard
    return ExponentField(lambda t, x: 1.0 + x[..., 0], require_above_one=False)


def const_field(c, n=24, rank="scalar"):
    pts, w = gauss_box_quadrature(n)
    shape = {"scalar": (), "vector": (2,), "sym_tensor": (2, 2)}[rank]
    return DiscreteField(np.full((len(w),) + shape, c, dtype=float), pts, w, rank)


def test_modular_of_ones_is_measure():
    f = const_field(1.0)
    assert modular(f, ExponentField.constant(2.0)).value == pytest.approx(1.0, abs=1e-13)
    assert modular(f, ExponentField.affine(1.3, 2.0, 0.5)).value == pytest.approx(1.0, abs=1e-13)
    pts, w = gauss_box_quadrature(8, lo=(0, 0), hi=(2.0, 3.0))
    g = DiscreteField(np.ones(len(w)), pts, w)
    assert modular(g, ExponentField.affine(1.3, 0.2, 0.1)).value == pytest.approx(6.0, rel=1e-13)


def test_modular_variable_exponent_oracle():
    oracle = quad(lambda s: 2.0 ** (1 + s), 0, 1)[0]
    assert oracle == pytest.approx(2 / math.log(2), rel=1e-12)
    val = modular(const_field(2.0), one_plus_x1()).value
    assert val == pytest.approx(oracle, rel=1e-12)


def test_modular_zero_only_for_zero_field():
    p = ExponentField.constant(1.7)
    assert modular(const_field(0.0), p).value == 0.0
    assert modular(const_field(1e-3), p).value > 0.0


def test_modular_overflow_guard():
    with pytest.raises(FieldOverflow):
        modular(const_field(1e301), ExponentField.constant(2.0))
    with pytest.raises(RootFindFailure):
        luxemburg_norm(const_field(np.inf), ExponentField.constant(2.0))


def test_luxemburg_trivial_cases():
    p = ExponentField.constant(3.0)
    assert luxemburg_norm(const_field(0.0), p) == 0.0
    pts, w = gauss_box_quadrature(6, hi=(2.0, 1.5))
    f = DiscreteField(np.full(len(w), 4.0), pts, w)
    assert luxemburg_norm(f, p) == pytest.approx(4.0 * 3.0 ** (1 / 3), rel=1e-11)


def test_luxemburg_variable_exponent_oracle():
    # independent oracle: adaptive 1D quadrature plus Brent root
    lam = brentq(lambda L: quad(lambda s: L ** (-(1 + s)), 0, 1, epsabs=1e-14)[0] - 1.0, 0.1, 10,
                 xtol=1e-15)
    assert luxemburg_norm(const_field(1.0), one_plus_x1()) == pytest.approx(lam, rel=1e-11)


def test_luxemburg_matches_classical_norm_for_constant_exponent():
    rng = np.random.default_rng(3)
    pts, w = gauss_box_quadrature(10)
    for p0 in (1.2, 2.0, 3.7):
        f = piecewise_field(rng, pts, w, "vector")
        classical = np.sum(w * np.linalg.norm(f.values, axis=1) ** p0) ** (1 / p0)
        assert luxemburg_norm(f, ExponentField.constant(p0)) == pytest.approx(classical, rel=1e-10)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(["scalar", "vector", "sym_tensor"]))
def test_luxemburg_properties(seed, rank):
    rng = np.random.default_rng(seed)
    pts, w = gauss_box_quadrature(8)
    p = random_affine(rng)
    f = piecewise_field(rng, pts, w, rank)
    g = piecewise_field(rng, pts, w, rank)
    nf = luxemburg_norm(f, p)
    for alpha in (-3.0, 0.5, 7.0):
        assert luxemburg_norm(alpha * f, p) == pytest.approx(abs(alpha) * nf, rel=1e-8)
    assert luxemburg_norm(f + g, p) <= nf + luxemburg_norm(g, p) + 1e-9
    rho = modular(f / nf, p).value
    assert 1 - 1e-9 <= rho <= 1.0
    # unit-ball equivalence
    if nf <= 1:
        assert modular(f, p).value <= 1 + 1e-9
    if modular(f, p).value <= 1:
        assert nf <= 1 + 1e-9


def test_holder_examples():
    p = ExponentField.constant(2.0)
    one = const_field(1.0)
    lhs, rhs, slack = holder_check(one, one, p)
    assert (lhs, rhs, slack) == pytest.approx((1.0, 2.0, 1.0), rel=1e-12)
    rng = np.random.default_rng(0)
    pts, w = gauss_box_quadrature(8)
    f = piecewise_field(rng, pts, w, "vector")
    lhs, rhs, slack = holder_check(f, f, p)
    n2 = np.sum(w * np.sum(f.values ** 2, axis=1))
    assert lhs == pytest.approx(n2, rel=1e-12) and slack == pytest.approx(n2, rel=1e-9)


def test_holder_random_sweep():
    rng = np.random.default_rng(11)
    pts, w = gauss_box_quadrature(8)
    worst = np.inf
    for _ in range(200):
        rank = rng.choice(["scalar", "vector", "sym_tensor"])
        g = piecewise_field(rng, pts, w, rank)
        f = piecewise_field(rng, pts, w, rank)
        worst = min(worst, holder_check(g, f, random_affine(rng)).slack)
    assert worst >= -1e-9


def test_embedding_examples_and_order_error():
    one = const_field(1.0)
    slack = embedding_check(one, ExponentField.constant(1.5), ExponentField.constant(2.0))
    assert slack == pytest.approx(3.0, rel=1e-12)
    p = ExponentField.affine(1.5, 1.0, 0.2)
    rng = np.random.default_rng(5)
    pts, w = gauss_box_quadrature(8)
    f = piecewise_field(rng, pts, w)
    assert embedding_check(f, p, p) == pytest.approx(3.0 * luxemburg_norm(f, p), rel=1e-12)
    with pytest.raises(ExponentOrderViolation):
        embedding_check(f, ExponentField.constant(3.0), p)


def test_field_validation():
    pts, w = gauss_box_quadrature(2)
    with pytest.raises(ValueError):
        DiscreteField(np.ones(3), pts, w)
    with pytest.raises(ValueError):
        DiscreteField(np.ones(4), pts, -w)
    bad = np.zeros((4, 2, 2))
    bad[:, 0, 1] = 1.0
    with pytest.raises(ValueError):
        DiscreteField(bad, pts, w, "sym_tensor")


def test_reduction_is_deterministic():
    rng = np.random.default_rng(9)
    pts, w = gauss_box_quadrature(10)
    f = piecewise_field(rng, pts, w, "vector")
    p = ExponentField.affine(1.4, 0.5, 0.3)
    assert modular(f, p).value == modular(f, p).value
    assert luxemburg_norm(f, p) == luxemburg_norm(f, p)
