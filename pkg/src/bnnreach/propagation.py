"""Interval bound propagation through the policy and the Bayesian dynamics net.

Both activations in use (relu, tanh) are monotone, so a hidden layer maps an
interval to the interval between the images of its endpoints.
"""

from __future__ import annotations

import numpy as np

from .core import Box, affine_bounds
from .neural import MLPArchitecture, Network, unflatten

__all__ = ["ibp_policy", "ibp_bnn", "ibp_bounds", "inflate"]


def _activate(name: str, lo, hi):
    if name == "relu":
        return np.maximum(lo, 0.0), np.maximum(hi, 0.0)
    return np.tanh(lo), np.tanh(hi)


def ibp_bounds(arch: MLPArchitecture, w_lo, w_hi, x_lo, x_hi):
    """Array-level IBP.

    ``w_lo``/``w_hi`` are flat weight bounds with optional leading batch axes,
    ``x_lo``/``x_hi`` input bounds that broadcast against them.  Returns the
    output bounds with the broadcast batch shape.
    """
    w_lo = np.asarray(w_lo, dtype=float)
    w_hi = np.asarray(w_hi, dtype=float)
    lo = np.asarray(x_lo, dtype=float)
    hi = np.asarray(x_hi, dtype=float)
    if lo.shape[-1] != arch.n_in:
        raise ValueError(f"input box has {lo.shape[-1]} dims, network expects {arch.n_in}")
    layers_lo = unflatten(arch, w_lo)
    layers_hi = unflatten(arch, w_hi)
    n = len(layers_lo)
    for li in range(n):
        W_lo, b_lo = layers_lo[li]
        W_hi, b_hi = layers_hi[li]
        lo, hi = affine_bounds(W_lo, W_hi, b_lo, b_hi, lo, hi)
        if li < n - 1:
            lo, hi = _activate(arch.activations[li], lo, hi)
    return lo, hi


def ibp_policy(policy: Network, x_box: Box) -> Box:
    """Box containing ``policy(x)`` for every ``x`` in ``x_box``."""
    if x_box.dim != policy.arch.n_in:
        raise ValueError(f"state box has {x_box.dim} dims, policy expects {policy.arch.n_in}")
    lo, hi = ibp_bounds(policy.arch, policy.weights, policy.weights, x_box.lo, x_box.hi)
    return Box(lo, hi)


def ibp_bnn(arch: MLPArchitecture, weight_box: Box, x_box: Box, u_box: Box) -> Box:
    """Box containing ``f^w(x, u)`` for all ``w``, ``x``, ``u`` in their boxes."""
    if weight_box.dim != arch.n_params:
        raise ValueError(f"weight box has {weight_box.dim} dims, network has {arch.n_params} parameters")
    if x_box.dim + u_box.dim != arch.n_in:
        raise ValueError(f"state+control boxes have {x_box.dim + u_box.dim} dims, network expects {arch.n_in}")
    xu = x_box.concat(u_box)
    lo, hi = ibp_bounds(arch, weight_box.lo, weight_box.hi, xu.lo, xu.hi)
    return Box(lo, hi)


def inflate(box: Box, eps: float) -> Box:
    """Minkowski sum with the cube ``[-eps, eps]^n``."""
    if eps < 0.0:
        raise ValueError("eps must be non-negative")
    return Box(box.lo - eps, box.hi + eps)
