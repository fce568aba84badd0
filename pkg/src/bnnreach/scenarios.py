"""Hand-built near-deterministic systems on the unit interval.

Each posterior has stddev ``1e-6`` on every weight, so its closed loop is an
almost exact map plus Gaussian process noise.  These make the certified bound
comparable with deterministic reasoning and with the quadrature oracle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .abstraction import Partition, RegionSpec, build_partition
from .core import Box
from .neural import MLPArchitecture, Network
from .posterior import DiagGaussianPosterior

__all__ = [
    "Scenario",
    "unit_region",
    "sum_dynamics",
    "clamp_dynamics",
    "constant_policy",
    "affine_policy",
    "chain_tightness",
    "chain_clamp",
    "chain_wrong_sign",
]

TINY_STD = 1e-6
CLAMP_CEILING = 0.9

# 2 -> 2 -> 1 relu net on (x, u)
_ARCH = MLPArchitecture.build(2, [2], 1)


@dataclass(frozen=True)
class Scenario:
    posterior: DiagGaussianPosterior
    policy: Network
    partition: Partition
    horizon: int


def unit_region(goal_lo: float = 0.8) -> RegionSpec:
    return RegionSpec(Box([0.0], [1.0]), Box([goal_lo], [1.0]))


def sum_dynamics(sigma: float) -> DiagGaussianPosterior:
    """``x' = x + u`` written as ``relu(x + u) - relu(-x - u)``."""
    mean = np.array([1, 1, -1, -1, 0, 0, 1, -1, 0], dtype=float)
    return DiagGaussianPosterior(_ARCH, mean, np.full(_ARCH.n_params, TINY_STD), sigma)


def clamp_dynamics(sigma: float) -> DiagGaussianPosterior:
    """``x' = clip(x + u, 0, 0.9)`` as ``relu(x + u) - relu(x + u - 0.9)``.

    The ceiling sits below 1 so noise at the ceiling stays inside ``[0, 1]``.
    """
    mean = np.array([1, 1, 1, 1, 0, -CLAMP_CEILING, 1, -1, 0], dtype=float)
    return DiagGaussianPosterior(_ARCH, mean, np.full(_ARCH.n_params, TINY_STD), sigma)


def affine_policy(slope: float, offset: float) -> Network:
    return Network(MLPArchitecture.build(1, [], 1), np.array([slope, offset], dtype=float))


def constant_policy(u: float) -> Network:
    return affine_policy(0.0, u)


def chain_tightness(cells: int = 50, sigma: float = 0.005, horizon: int = 8) -> Scenario:
    """Sum dynamics with ``u = 0.45 - 0.5 x``: contracts towards the goal edge at 0.9."""
    return Scenario(sum_dynamics(sigma), affine_policy(-0.5, 0.45), build_partition(unit_region(), [cells]), horizon)


def chain_clamp(cells: int = 20, sigma: float = 0.01, horizon: int = 4, u: float = 0.3) -> Scenario:
    """Clamp dynamics under a constant push ``u``; ``u = 0.3`` reaches the goal from 0 in 3 steps."""
    return Scenario(clamp_dynamics(sigma), constant_policy(u), build_partition(unit_region(), [cells]), horizon)


def chain_wrong_sign(cells: int = 20, sigma: float = 0.01, horizon: int = 4) -> Scenario:
    """Clamp dynamics under a baseline that pushes away from the goal."""
    return chain_clamp(cells, sigma, horizon, u=-0.3)
