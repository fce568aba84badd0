import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bnnreach.core import Box
from bnnreach.neural import MLPArchitecture, Network, forward, forward_batch
from bnnreach.propagation import ibp_bnn, ibp_policy, inflate

from conftest import random_arch, random_box


def test_ibp_policy_point_box():
    rng = np.random.default_rng(0)
    a = MLPArchitecture.build(3, [5], 2, "tanh")
    net = Network(a, rng.normal(size=a.n_params))
    x = rng.normal(size=3)
    r = ibp_policy(net, Box.point(x))
    assert np.allclose(r.lo, net(x), atol=1e-12) and np.allclose(r.hi, net(x), atol=1e-12)


def test_ibp_policy_identity():
    a = MLPArchitecture.build(2, [], 2)
    net = Network(a, np.concatenate([np.eye(2).reshape(-1), np.zeros(2)]))
    b = Box([-1.0, 0.5], [0.0, 2.0])
    assert ibp_policy(net, b) == b


def test_ibp_bnn_examples():
    # 1 -> 1 linear in x; the control column carries a zero weight
    a2 = MLPArchitecture.build(2, [], 1)
    r = ibp_bnn(a2, Box([0.5, 0.0, 0.0], [1.5, 0.0, 0.0]), Box([1.0], [2.0]), Box([0.0], [0.0]))
    assert np.allclose(r.lo, [0.5]) and np.allclose(r.hi, [3.0])
    rng = np.random.default_rng(1)
    a3 = MLPArchitecture.build(3, [4], 2)
    w = rng.normal(size=a3.n_params)
    x = rng.normal(size=2)
    u = rng.normal(size=1)
    r = ibp_bnn(a3, Box.point(w), Box.point(x), Box.point(u))
    assert np.allclose(r.lo, forward(a3, w, np.concatenate([x, u])), atol=1e-12)


def test_dimension_errors():
    a = MLPArchitecture.build(3, [4], 2)
    with pytest.raises(ValueError):
        ibp_bnn(a, Box.point(np.zeros(a.n_params - 1)), Box.point(np.zeros(2)), Box.point(np.zeros(1)))
    with pytest.raises(ValueError):
        ibp_bnn(a, Box.point(np.zeros(a.n_params)), Box.point(np.zeros(2)), Box.point(np.zeros(2)))
    with pytest.raises(ValueError):
        ibp_policy(Network(MLPArchitecture.build(2, [], 1), np.zeros(3)), Box.point(np.zeros(3)))


def test_inflate():
    b = Box([0.0], [1.0])
    assert inflate(b, 0.0) == b
    assert inflate(b, 0.25) == Box([-0.25], [1.25])
    c = Box([0.0, 0.0], [1.0, 2.0])
    assert inflate(c, 0.5).volume == pytest.approx(c.volume * (2.0 * 3.0) / (1.0 * 2.0))
    with pytest.raises(ValueError):
        inflate(b, -0.1)


def _closed_loop_case(rng):
    n, c = int(rng.integers(1, 4)), int(rng.integers(1, 3))
    parch = random_arch(rng, n, c)
    policy = Network(parch, rng.normal(size=parch.n_params))
    darch = random_arch(rng, n + c, n)
    w_lo, w_hi = random_box(rng, darch.n_params, scale=1.0, max_width=0.2)
    x_lo, x_hi = random_box(rng, n, scale=1.0, max_width=0.5)
    return policy, darch, Box(w_lo, w_hi), Box(x_lo, x_hi)


@given(st.integers(0, 100_000))
def test_composed_soundness(seed):
    rng = np.random.default_rng(seed)
    policy, darch, H, q = _closed_loop_case(rng)
    ub = ibp_policy(policy, q)
    out = ibp_bnn(darch, H, q, ub)
    m = 2000
    X = rng.uniform(q.lo, q.hi, size=(m, q.dim))
    W = rng.uniform(H.lo, H.hi, size=(m, H.dim))
    U = np.atleast_2d(policy(X))
    assert np.all(U >= ub.lo - 1e-9) and np.all(U <= ub.hi + 1e-9)
    Y = forward_batch(darch, W, np.concatenate([X, U], axis=1))
    assert np.all(Y >= out.lo - 1e-9) and np.all(Y <= out.hi + 1e-9)


@given(st.integers(0, 100_000))
def test_shrinking_inputs_never_enlarges(seed):
    rng = np.random.default_rng(seed)
    policy, darch, H, q = _closed_loop_case(rng)
    t = np.sort(rng.uniform(size=(2, q.dim)), axis=0)
    q2 = Box(q.lo + t[0] * q.width, q.lo + t[1] * q.width)
    s = np.sort(rng.uniform(size=(2, H.dim)), axis=0)
    H2 = Box(H.lo + s[0] * H.width, H.lo + s[1] * H.width)
    big = ibp_bnn(darch, H, q, ibp_policy(policy, q))
    small = ibp_bnn(darch, H2, q2, ibp_policy(policy, q2))
    assert np.all(small.lo >= big.lo - 1e-9) and np.all(small.hi <= big.hi + 1e-9)
