"""Strategies that maximise the certified bound.

``synthesize_grid`` runs the certification recursion but, in every Safe cell
and step, also tries each constant action of a finite grid and keeps whichever
gives the largest value.  The baseline policy is always candidate 0, evaluated
exactly as in :func:`certify`, so the result dominates it cell by cell.

``improve_policy`` tunes the policy weights directly by derivative-free ascent
on the mean certified value over Safe cells.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .abstraction import OUTSIDE, Label, Partition, locate_many
from .certifier import CellEvaluator, CertConfig, ValueTable, _initial_table, _map
from .core import Box, make_rng
from .neural import Network
from .posterior import DiagGaussianPosterior
from .propagation import ibp_policy

__all__ = [
    "ActionGrid",
    "SynthesizedStrategy",
    "synthesize_grid",
    "ImproveResult",
    "improve_policy",
    "policy_objective",
]

# stream key separating the ascent's direction draws from certification streams
_IMPROVE_STREAM = 7919


@dataclass(frozen=True)
class ActionGrid:
    """Finite set of constant control vectors, optionally checked against a control box."""

    candidates: np.ndarray
    control_box: Box | None = None

    def __post_init__(self) -> None:
        c = np.atleast_2d(np.asarray(self.candidates, dtype=float))
        if c.shape[0] == 0 or c.size == 0:
            raise ValueError("action grid must not be empty")
        if not np.all(np.isfinite(c)):
            raise ValueError("action grid contains non-finite values")
        if self.control_box is not None:
            if self.control_box.dim != c.shape[1]:
                raise ValueError("control box dimension does not match the actions")
            if not np.all(self.control_box.contains(c)):
                raise ValueError("every candidate action must lie in the control box")
        c.setflags(write=False)
        object.__setattr__(self, "candidates", c)

    @classmethod
    def uniform(cls, control_box: Box, per_dim: int) -> "ActionGrid":
        """Tensor grid with ``per_dim`` evenly spaced values per control coordinate."""
        if per_dim < 1:
            raise ValueError("per_dim must be >= 1")
        axes = [np.linspace(a, b, per_dim) if per_dim > 1 else np.array([(a + b) / 2]) for a, b in zip(control_box.lo, control_box.hi)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return cls(np.stack([m.reshape(-1) for m in mesh], axis=1), control_box)

    @property
    def control_dim(self) -> int:
        return self.candidates.shape[1]

    def __len__(self) -> int:
        return self.candidates.shape[0]


@dataclass
class SynthesizedStrategy:
    """Time- and cell-indexed action table with the baseline policy as fallback.

    ``use_baseline[k, q]`` means the baseline policy won (or the cell is not
    Safe); ``actions[k, q]`` then holds the policy output at the cell centre
    for reference only.  States outside the partition and steps ``k >= N``
    also fall back to the baseline.
    """

    actions: np.ndarray
    use_baseline: np.ndarray
    values: np.ndarray
    baseline: Network
    partition: Partition

    @property
    def horizon(self) -> int:
        return self.actions.shape[0]

    def act(self, k: int, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        U = np.atleast_2d(self.baseline(X))
        if k >= self.horizon:
            return U
        ids = locate_many(self.partition, X)
        inside = ids != OUTSIDE
        take = np.zeros(X.shape[0], dtype=bool)
        take[inside] = ~self.use_baseline[k, ids[inside]]
        U[take] = self.actions[k, ids[take]]
        return U

    def to_csv(self, path) -> None:
        c = self.actions.shape[2]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["k", "cell_id", "baseline"] + [f"u{i}" for i in range(c)] + ["K"])
            for k in range(self.horizon):
                for q in range(self.actions.shape[1]):
                    w.writerow(
                        [k, q, int(self.use_baseline[k, q])]
                        + [repr(float(v)) for v in self.actions[k, q]]
                        + [repr(float(self.values[k, q]))]
                    )

    @classmethod
    def from_csv(cls, path, baseline: Network, partition: Partition) -> "SynthesizedStrategy":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], rows[1:]
        if header[:3] != ["k", "cell_id", "baseline"] or header[-1] != "K":
            raise ValueError(f"{path}: not a strategy file")
        c = len(header) - 4
        if c != baseline.arch.n_out:
            raise ValueError(f"{path}: strategy has {c} control dims, baseline policy has {baseline.arch.n_out}")
        N = max(int(r[0]) for r in body) + 1 if body else 0
        n_q = partition.n_cells
        actions = np.zeros((N, n_q, c))
        use = np.ones((N, n_q), dtype=bool)
        values = np.zeros((N, n_q))
        for r in body:
            k, q = int(r[0]), int(r[1])
            if q >= n_q:
                raise ValueError(f"{path}: cell id {q} does not exist in the partition")
            use[k, q] = r[2] == "1"
            actions[k, q] = [float(v) for v in r[3:-1]]
            values[k, q] = float(r[-1])
        return cls(actions, use, values, baseline, partition)


def synthesize_grid(
    posterior: DiagGaussianPosterior,
    baseline_policy: Network,
    partition: Partition,
    N: int,
    grid: ActionGrid,
    cfg: CertConfig,
    threads: int = 1,
    progress: Callable[[int, float], None] | None = None,
) -> tuple[SynthesizedStrategy, ValueTable]:
    """Backward recursion with a maximum over the baseline and every grid action."""
    if N < 0:
        raise ValueError("horizon must be >= 0")
    n, c = posterior.state_dim, posterior.control_dim
    if partition.state_dim != n:
        raise ValueError(f"partition is {partition.state_dim}-D, dynamics state is {n}-D")
    if baseline_policy.arch.n_in != n or baseline_policy.arch.n_out != c:
        raise ValueError(f"policy maps {baseline_policy.arch.n_in} -> {baseline_policy.arch.n_out}, expected {n} -> {c}")
    if grid.control_dim != c:
        raise ValueError(f"action grid has {grid.control_dim} control dims, dynamics expect {c}")

    values = _initial_table(partition, N)
    centers = partition.centers
    ref = np.atleast_2d(baseline_policy(centers))
    actions = np.broadcast_to(ref, (N,) + ref.shape).copy()
    use = np.ones((N, partition.n_cells), dtype=bool)
    thresholds: dict = {}
    safe_cells = [cell for cell in partition.cells if cell.label == Label.SAFE]
    policy_boxes = {cell.id: ibp_policy(baseline_policy, cell.box) for cell in safe_cells}
    for k in range(N - 1, -1, -1):
        t0 = time.perf_counter()
        ev = CellEvaluator(posterior, partition, cfg, k, values[k + 1])

        def run(cell):
            W = ev.samples(cell.id)
            ub = policy_boxes[cell.id]
            best = ev.evaluate(cell, ub.lo, ub.hi, W)
            best_j = -1
            for j, u in enumerate(grid.candidates):
                res = ev.evaluate(cell, u, u, W)
                if res.value > best.value:
                    best, best_j = res, j
            return best, best_j

        for cell, (res, j) in zip(safe_cells, _map(run, safe_cells, threads)):
            values[k, cell.id] = res.value
            thresholds[(k, cell.id)] = res.thresholds
            if j >= 0:
                use[k, cell.id] = False
                actions[k, cell.id] = grid.candidates[j]
        if progress is not None:
            progress(k, time.perf_counter() - t0)
    table = ValueTable(values, partition.labels, thresholds)
    return SynthesizedStrategy(actions, use, values[:N].copy(), baseline_policy, partition), table


# ----------------------------------------------------------------------------
# policy fine-tuning


def policy_objective(posterior, policy: Network, partition: Partition, N: int, cfg: CertConfig, threads: int = 1) -> float:
    """Mean certified ``K_0`` over Safe cells (deterministic for a fixed ``cfg.seed``)."""
    from .certifier import certify

    return certify(posterior, policy, partition, N, cfg, threads=threads).safe_mean(0)


@dataclass
class ImproveResult:
    policy: Network
    objectives: list[float] = field(default_factory=list)
    accepted: int = 0
    evaluations: int = 0

    @property
    def initial(self) -> float:
        return self.objectives[0]

    @property
    def final(self) -> float:
        return self.objectives[-1]


def improve_policy(
    posterior: DiagGaussianPosterior,
    policy: Network,
    partition: Partition,
    N: int,
    cfg: CertConfig,
    steps: int,
    step_size: float,
    expansions: tuple[float, ...] = (1.0, 2.0, 4.0, 8.0),
    threads: int = 1,
) -> ImproveResult:
    """Random-direction ascent with accept-if-strictly-better.

    Each step draws a unit direction ``d`` and tries ``w + s*d`` and
    ``w - s*d`` for ``s = step_size * e`` over ``expansions`` in order,
    taking the first strict improvement.  The larger multipliers let the
    search leave flat regions of the piecewise-constant objective.
    ``objectives`` lists the starting value and then the value after every
    accepted step, so it is non-decreasing by construction.
    """
    if steps < 0:
        raise ValueError("steps must be >= 0")
    if not step_size > 0.0:
        raise ValueError("step_size must be positive")
    best = policy
    best_val = policy_objective(posterior, policy, partition, N, cfg, threads)
    out = ImproveResult(policy, [best_val], 0, 1)
    rng = make_rng(cfg.seed, _IMPROVE_STREAM)
    for _ in range(steps):
        d = rng.standard_normal(best.weights.size)
        d /= np.linalg.norm(d)
        moved = False
        for e in expansions:
            for sign in (1.0, -1.0):
                cand = best.with_weights(best.weights + sign * step_size * e * d)
                val = policy_objective(posterior, cand, partition, N, cfg, threads)
                out.evaluations += 1
                if val > best_val:
                    best, best_val, moved = cand, val, True
                    break
            if moved:
                break
        if moved:
            out.accepted += 1
            out.objectives.append(best_val)
    out.policy = best
    return out
