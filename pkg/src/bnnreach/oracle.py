"""Reference reach-avoid values for one-dimensional systems.

The value recursion

    V_N(x) = 1_G(x)
    V_k(x) = 1_G(x) + 1_S(x) * integral V_{k+1}(y) p(y | x) dy

is solved by a Nystrom scheme: composite Gauss-Legendre nodes on sub-intervals
that never straddle a region boundary, so each integrand piece is smooth.
Transitions are Gaussian, ``p(y | x) = N(y; mean(x), std(x)^2)``.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .abstraction import Label, Partition, RegionSpec
from .certifier import ValueTable
from .neural import Network, forward, gradient
from .posterior import DiagGaussianPosterior

__all__ = ["QuadratureError", "ValueOracle1D", "exact_value_oracle", "bnn_kernel_1d"]

Kernel1D = Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]]


class QuadratureError(RuntimeError):
    """The value recursion did not converge under grid refinement."""


def _breakpoints(spec: RegionSpec) -> np.ndarray:
    lo, hi = float(spec.bounds.lo[0]), float(spec.bounds.hi[0])
    pts = [lo, hi, float(spec.goal.lo[0]), float(spec.goal.hi[0])]
    for ob in spec.obstacles:
        for a, b in zip(ob.A[:, 0], ob.b):
            if a != 0.0:
                pts.append(b / a)
    pts = np.unique(np.clip(pts, lo, hi))
    return pts


class ValueOracle1D:
    def __init__(self, kernel: Kernel1D, spec: RegionSpec, N: int, h_max: float, order: int = 8):
        if spec.dim != 1:
            raise ValueError("the quadrature oracle only handles one-dimensional states")
        self.kernel = kernel
        self.spec = spec
        self.N = int(N)
        gx, gw = np.polynomial.legendre.leggauss(order)
        nodes, weights = [], []
        bps = _breakpoints(spec)
        for a, b in zip(bps[:-1], bps[1:]):
            m = max(1, int(np.ceil((b - a) / h_max)))
            edges = np.linspace(a, b, m + 1)
            for l, r in zip(edges[:-1], edges[1:]):
                nodes.append(0.5 * (r - l) * gx + 0.5 * (r + l))
                weights.append(0.5 * (r - l) * gw)
        self.nodes = np.concatenate(nodes)
        self.weights = np.concatenate(weights)
        self._goal = spec.in_goal(self.nodes[:, None]).astype(float)
        self._safe = spec.in_safe(self.nodes[:, None]).astype(float)
        M = self._transfer(self.nodes)
        V = np.zeros((self.N + 1, self.nodes.size))
        V[self.N] = self._goal
        for k in range(self.N - 1, -1, -1):
            V[k] = self._goal + self._safe * (M @ V[k + 1])
        self.node_values = V

    def _transfer(self, x: np.ndarray) -> np.ndarray:
        mean, std = self.kernel(np.asarray(x, dtype=float))
        mean = np.broadcast_to(mean, x.shape)
        std = np.broadcast_to(std, x.shape)
        z = (self.nodes[None, :] - mean[:, None]) / std[:, None]
        dens = np.exp(-0.5 * z * z) / (np.sqrt(2.0 * np.pi) * std[:, None])
        return dens * self.weights[None, :]

    def value(self, k: int, x) -> np.ndarray:
        """``V_k`` at arbitrary points."""
        return self.values(x)[k]

    def values(self, x, chunk: int = 2048) -> np.ndarray:
        """``V_0 .. V_N`` at arbitrary points, shape ``(N + 1, len(x))``."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        g = self.spec.in_goal(x[:, None]).astype(float)
        s = self.spec.in_safe(x[:, None]).astype(float)
        out = np.empty((self.N + 1, x.size))
        out[self.N] = g
        for a in range(0, x.size, chunk):
            sl = slice(a, a + chunk)
            M = self._transfer(x[sl])
            out[: self.N, sl] = g[sl] + s[sl] * (self.node_values[1:] @ M.T)
        return out


def _cell_points(lo: float, hi: float, m: int, last: bool) -> np.ndarray:
    pts = np.linspace(lo, hi, m + 1)
    if not last:
        pts[-1] = np.nextafter(hi, lo)
    return pts


def exact_value_oracle(
    kernel_1d: Kernel1D,
    partition: Partition,
    N: int,
    h_max: float | None = None,
    samples_per_cell: int = 200,
    tol: float = 1e-6,
) -> ValueTable:
    """Per-cell infimum of the true value function (sampled densely inside each cell).

    The solve is repeated on a grid twice as fine; disagreement above ``tol``
    at the nodes of the coarse solve raises :class:`QuadratureError`.
    """
    spec = partition.spec
    if h_max is None:
        probe = np.linspace(spec.bounds.lo[0], spec.bounds.hi[0], 257)
        h_max = float(np.min(kernel_1d(probe)[1]))
    coarse = ValueOracle1D(kernel_1d, spec, N, h_max)
    fine = ValueOracle1D(kernel_1d, spec, N, h_max / 2.0)
    diff = float(np.max(np.abs(fine.values(coarse.nodes) - coarse.node_values)))
    if diff > tol:
        raise QuadratureError(f"value recursion changed by {diff:.3g} under refinement (tol {tol:.1g})")

    n_cells = partition.cells_per_dim[0]
    pts = np.concatenate(
        [
            _cell_points(cell.box.lo[0], cell.box.hi[0], samples_per_cell, cell.id == n_cells - 1)
            for cell in partition.cells
        ]
    )
    V = fine.values(pts).reshape(N + 1, partition.n_cells, samples_per_cell + 1)
    return ValueTable(V.min(axis=2), partition.labels)


def bnn_kernel_1d(posterior: DiagGaussianPosterior, policy: Network) -> Kernel1D:
    """Gaussian transition of a 1-D closed loop.

    Mean is the network at the posterior mean; variance adds the process noise
    and a first-order (delta-method) weight contribution, which is negligible
    for the near-deterministic posteriors this is meant for.
    """
    if posterior.state_dim != 1:
        raise ValueError("bnn_kernel_1d needs a one-dimensional state")

    def kernel(x: np.ndarray):
        x = np.atleast_1d(x)
        u = forward(policy.arch, policy.weights, x[:, None])
        xu = np.concatenate([x[:, None], u], axis=1)
        mean = forward(posterior.arch, posterior.mean, xu)[:, 0]
        var = np.full(x.shape, posterior.likelihood_sigma**2)
        for i in range(x.size):
            dw, _ = gradient(posterior.arch, posterior.mean, xu[i], np.ones(1))
            var[i] += float(np.sum((dw * posterior.stddev) ** 2))
        return mean, np.sqrt(var)

    return kernel
