import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bnnreach.core import Box, Interval, erf, erf_inv, interval_affine, make_rng

finite = st.floats(-50, 50, allow_nan=False)


def test_erf_examples():
    assert erf(0.0) == 0.0
    assert erf(1 / math.sqrt(2)) == pytest.approx(0.6826895, abs=1e-7)
    assert abs(erf(10.0) - 1.0) <= 1e-12
    assert erf(-10.0) == -1.0


def test_erf_rejects_nonfinite():
    with pytest.raises(ValueError):
        erf(float("nan"))


@given(finite)
def test_erf_odd(x):
    assert erf(-x) == -erf(x)


def test_erf_matches_math_to_1e12():
    for x in np.linspace(-6, 6, 2001):
        assert abs(erf(float(x)) - math.erf(float(x))) <= 1e-12


def test_erf_inv_examples():
    assert erf_inv(0.0) == 0.0
    assert erf_inv(0.99) == pytest.approx(1.82139, abs=1e-5)
    assert abs(erf(erf_inv(0.5)) - 0.5) <= 1e-10


@pytest.mark.parametrize("p", [1.0, -1.0, 1.5])
def test_erf_inv_domain(p):
    with pytest.raises(ValueError):
        erf_inv(p)


def test_erf_round_trip_grid():
    for p in np.linspace(-0.999, 0.999, 1000):
        assert abs(erf(erf_inv(float(p))) - p) <= 1e-10


def test_rng_contract():
    a = make_rng(3, 1, 2).standard_normal(5)
    b = make_rng(3, 1, 2).standard_normal(5)
    c = make_rng(3, 2, 1).standard_normal(5)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    with pytest.raises(ValueError):
        make_rng(-1)


def test_interval_rejects_inverted():
    with pytest.raises(ValueError):
        Interval(1.0, 0.0)


pairs = st.tuples(finite, finite).map(sorted)


@given(pairs, pairs)
def test_interval_mul_commutes_and_hulls_endpoints(a, b):
    x, y = Interval(*a), Interval(*b)
    p, q = x * y, y * x
    assert (p.lo, p.hi) == (q.lo, q.hi)
    prods = [a[0] * b[0], a[0] * b[1], a[1] * b[0], a[1] * b[1]]
    assert p.lo == min(prods) and p.hi == max(prods)


@given(pairs, pairs, st.floats(0, 1), st.floats(0, 1))
def test_interval_arith_contains_members(a, b, s, t):
    x, y = Interval(*a), Interval(*b)
    u = a[0] + s * (a[1] - a[0])
    v = b[0] + t * (b[1] - b[0])
    for res, val in ((x + y, u + v), (x - y, u - v), (x * y, u * v)):
        tol = 1e-9 * (1 + abs(val))
        assert res.lo - tol <= val <= res.hi + tol


def test_box_invariants():
    with pytest.raises(ValueError):
        Box([], [])
    with pytest.raises(ValueError):
        Box([1.0], [0.0])
    b = Box([0, 1], [2, 4])
    assert b.volume == 6.0
    assert b.dim == 2
    with pytest.raises(AttributeError):
        b.lo = np.zeros(2)


def test_interval_affine_examples():
    r = interval_affine([[0.5]], [[1.5]], Box([0.0], [0.0]), Box([1.0], [2.0]))
    assert np.allclose(r.lo, [0.5]) and np.allclose(r.hi, [3.0])
    I = np.eye(3)
    r = interval_affine(I, I, Box.point(np.zeros(3)), Box([-1, -1, -1], [2, 2, 2]))
    assert np.array_equal(r.lo, [-1, -1, -1]) and np.array_equal(r.hi, [2, 2, 2])


def test_interval_affine_shape_mismatch():
    with pytest.raises(ValueError):
        interval_affine(np.ones((2, 3)), np.ones((2, 3)), Box.point(np.zeros(2)), Box.point(np.zeros(2)))


def test_interval_affine_mc_containment():
    rng = np.random.default_rng(0)
    W_lo = rng.normal(size=(3, 3))
    W_hi = W_lo + rng.uniform(0, 0.5, size=(3, 3))
    b = Box(rng.normal(size=3), rng.normal(size=3) + 5)
    b = Box(np.minimum(b.lo, b.hi), np.maximum(b.lo, b.hi))
    x = Box([-1, 0, 0.5], [1, 0.3, 2])
    r = interval_affine(W_lo, W_hi, b, x)
    n = 10_000
    W = rng.uniform(W_lo, W_hi, size=(n, 3, 3))
    bb = rng.uniform(b.lo, b.hi, size=(n, 3))
    xx = rng.uniform(x.lo, x.hi, size=(n, 3))
    y = np.einsum("nij,nj->ni", W, xx) + bb
    assert np.all(y >= r.lo - 1e-12) and np.all(y <= r.hi + 1e-12)


@given(st.integers(0, 10_000))
def test_interval_affine_inclusion_monotone(seed):
    rng = np.random.default_rng(seed)
    W_lo = rng.normal(size=(2, 3))
    W_hi = W_lo + rng.uniform(0, 1, size=(2, 3))
    b = Box.point(rng.normal(size=2))
    outer_lo = rng.normal(size=3)
    outer_hi = outer_lo + rng.uniform(0, 2, 3)
    t = np.sort(rng.uniform(size=(2, 3)), axis=0)
    inner = Box(outer_lo + t[0] * (outer_hi - outer_lo), outer_lo + t[1] * (outer_hi - outer_lo))
    big = interval_affine(W_lo, W_hi, b, Box(outer_lo, outer_hi))
    small = interval_affine(W_lo, W_hi, b, inner)
    assert np.all(small.lo >= big.lo - 1e-12) and np.all(small.hi <= big.hi + 1e-12)
