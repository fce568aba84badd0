import numpy as np
import pytest

from bnnreach.abstraction import Label, RegionSpec, build_partition
from bnnreach.certifier import CertConfig, certify
from bnnreach.core import Box
from bnnreach.oracle import QuadratureError, ValueOracle1D, bnn_kernel_1d, exact_value_oracle
from bnnreach.scenarios import chain_clamp, unit_region

SPEC = unit_region()


def shift_kernel(step, std):
    return lambda x: (np.asarray(x) + step, np.full(np.shape(x), std))


def test_horizon_zero_indicator():
    part = build_partition(SPEC, [10])
    vt = exact_value_oracle(shift_kernel(0.1, 0.05), part, 0)
    assert np.array_equal(vt.k0, (part.labels == int(Label.GOAL)).astype(float))


def _deterministic_reach(x, step, N):
    """Deterministic reach-avoid under x' = x + step, with its distance to every region boundary."""
    margin = np.inf
    for k in range(N + 1):
        margin = min(margin, abs(x - 0.8), abs(x - 0.0), abs(x - 1.0))
        if 0.8 <= x <= 1.0:
            return 1.0, margin
        if not 0.0 <= x < 0.8:
            return 0.0, margin
        x = x + step
    return 0.0, margin


def test_near_deterministic_kernel_matches_trajectory_reachability():
    std, step, N = 0.004, 0.15, 4
    oracle = ValueOracle1D(shift_kernel(step, std), SPEC, N, h_max=std)
    xs = np.linspace(0.0, 1.0, 401)
    V = oracle.value(0, xs)
    checked = 0
    for x, v in zip(xs, V):
        ref, margin = _deterministic_reach(float(x), step, N)
        if margin > 10 * std:
            checked += 1
            assert abs(v - ref) <= 1e-6
    assert checked > 150


def test_value_grows_with_remaining_horizon():
    part = build_partition(SPEC, [20])
    kern = shift_kernel(0.1, 0.1)
    oracle = ValueOracle1D(kern, SPEC, 6, h_max=0.05)
    # V_k has N - k steps left; fewer steps left can only lower the value
    for k in range(6):
        assert np.all(oracle.node_values[k] >= oracle.node_values[k + 1] - 1e-12)
    vt = exact_value_oracle(kern, part, 6)
    assert np.all(vt.values[:-1] >= vt.values[1:] - 1e-12)


def test_refinement_check_raises():
    part = build_partition(SPEC, [5])
    with pytest.raises(QuadratureError):
        exact_value_oracle(shift_kernel(0.1, 0.01), part, 3, h_max=0.5)


def test_rejects_multidimensional_specs():
    spec = RegionSpec(Box([0, 0], [1, 1]), Box([0.8, 0.8], [1, 1]))
    with pytest.raises(ValueError):
        ValueOracle1D(shift_kernel(0.1, 0.1), spec, 2, h_max=0.1)


def test_oracle_upper_bounds_certificate_on_clamp_chain():
    sc = chain_clamp(cells=20)
    cfg = CertConfig(n_s=5, rho_w=5e-6, eta=0.999, thresholds="adaptive")
    K = certify(sc.posterior, sc.policy, sc.partition, 4, cfg).k0
    V = exact_value_oracle(bnn_kernel_1d(sc.posterior, sc.policy), sc.partition, 4).k0
    assert np.all(K <= V + 1e-9)
