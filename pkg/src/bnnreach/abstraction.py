"""Reach-avoid geometry and the grid abstraction of the analysis domain.

Cells are half-open ``[lo, hi)`` along every discretized coordinate, except the
last cell of each axis which is closed, so every point of the domain has
exactly one cell.  Coordinates that are not discretized carry the global bound
interval in every cell.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import linprog

from .core import Box

__all__ = [
    "OUTSIDE",
    "Label",
    "Obstacle",
    "RegionSpec",
    "AbstractState",
    "Partition",
    "build_partition",
    "locate",
    "cells_intersecting",
]

OUTSIDE = -1


class Label(enum.IntEnum):
    UNSAFE = 0
    SAFE = 1
    GOAL = 2

    def __str__(self) -> str:
        return self.name.capitalize()


@dataclass(frozen=True)
class Obstacle:
    """Closed convex polygon ``{x : A @ x[dims] <= b}``."""

    A: np.ndarray
    b: np.ndarray
    dims: tuple[int, ...]

    def __post_init__(self) -> None:
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        b = np.asarray(self.b, dtype=float).reshape(-1)
        dims = tuple(int(d) for d in self.dims)
        if A.shape != (b.size, len(dims)):
            raise ValueError(f"obstacle has A {A.shape}, b {b.shape}, dims {dims}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "dims", dims)

    @classmethod
    def from_vertices(cls, vertices, dims=(0, 1)) -> "Obstacle":
        """Convex polygon from its vertices (2D, any orientation)."""
        V = np.asarray(vertices, dtype=float)
        c = V.mean(axis=0)
        order = np.argsort(np.arctan2(V[:, 1] - c[1], V[:, 0] - c[0]))
        V = V[order]
        rows, rhs = [], []
        for i in range(len(V)):
            p, q = V[i], V[(i + 1) % len(V)]
            normal = np.array([q[1] - p[1], p[0] - q[0]])
            rows.append(normal)
            rhs.append(normal @ p)
        return cls(np.array(rows), np.array(rhs), dims)

    def contains(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.all(X[:, list(self.dims)] @ self.A.T <= self.b, axis=1)

    def intersects_box(self, lo, hi) -> bool:
        """Does the closed box ``[lo, hi]`` (over ``dims``) meet the polygon?"""
        d = len(self.dims)
        res = linprog(
            np.zeros(d),
            A_ub=self.A,
            b_ub=self.b + 1e-12,
            bounds=list(zip(np.asarray(lo, dtype=float), np.asarray(hi, dtype=float))),
            method="highs",
        )
        return res.status == 0

    def to_dict(self) -> dict:
        return {"A": self.A.tolist(), "b": self.b.tolist(), "dims": list(self.dims)}


@dataclass(frozen=True)
class RegionSpec:
    """Analysis domain, goal box and obstacles.

    ``safe = bounds \\ (goal U obstacles)``; the goal is a full-dimensional box.
    """

    bounds: Box
    goal: Box
    obstacles: tuple[Obstacle, ...] = field(default=())

    def __post_init__(self) -> None:
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        if self.goal.dim != self.bounds.dim:
            raise ValueError("goal and bounds have different dimensions")
        if not self.goal.issubset(self.bounds):
            raise ValueError("goal must lie inside the analysis bounds")
        for ob in self.obstacles:
            if max(ob.dims) >= self.bounds.dim:
                raise ValueError(f"obstacle refers to coordinate {max(ob.dims)} of a {self.bounds.dim}-D state")

    @property
    def dim(self) -> int:
        return self.bounds.dim

    def in_bounds(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.all((X >= self.bounds.lo) & (X <= self.bounds.hi), axis=1)

    def in_goal(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.all((X >= self.goal.lo) & (X <= self.goal.hi), axis=1)

    def in_obstacle(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        hit = np.zeros(X.shape[0], dtype=bool)
        for ob in self.obstacles:
            hit |= ob.contains(X)
        return hit

    def in_safe(self, X) -> np.ndarray:
        return self.in_bounds(X) & ~self.in_goal(X) & ~self.in_obstacle(X)


@dataclass(frozen=True)
class AbstractState:
    id: int
    box: Box
    label: Label


@dataclass(frozen=True)
class Partition:
    spec: RegionSpec
    discretized_dims: tuple[int, ...]
    cells_per_dim: tuple[int, ...]
    cells: tuple[AbstractState, ...]
    edges: tuple[np.ndarray, ...]

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def grid_shape(self) -> tuple[int, ...]:
        return self.cells_per_dim

    @property
    def state_dim(self) -> int:
        return self.spec.dim

    @property
    def labels(self) -> np.ndarray:
        return np.array([int(c.label) for c in self.cells], dtype=int)

    @property
    def centers(self) -> np.ndarray:
        return np.array([c.box.center for c in self.cells])

    @property
    def cell_lo(self) -> np.ndarray:
        return np.array([c.box.lo for c in self.cells])

    @property
    def cell_hi(self) -> np.ndarray:
        return np.array([c.box.hi for c in self.cells])

    def ids_with(self, label: Label) -> np.ndarray:
        return np.flatnonzero(self.labels == int(label))

    def index_ranges(self, lo, hi):
        """Per discretized axis, the inclusive cell-index range met by ``[lo, hi]``.

        ``lo``/``hi`` are full-state bounds with optional leading batch axes.
        Returns ``(first, last, outside)`` where ``first``/``last`` have shape
        ``(..., n_disc)`` and ``outside`` flags boxes leaving the bounds in any
        coordinate.
        """
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        b = self.spec.bounds
        outside = np.any(lo < b.lo, axis=-1) | np.any(hi > b.hi, axis=-1)
        first = np.empty(lo.shape[:-1] + (len(self.discretized_dims),), dtype=int)
        last = np.empty_like(first)
        for a, (d, n) in enumerate(zip(self.discretized_dims, self.cells_per_dim)):
            e = self.edges[a]
            f = np.searchsorted(e, lo[..., d], side="right") - 1
            l = np.searchsorted(e, hi[..., d], side="right") - 1
            first[..., a] = np.clip(f, 0, n - 1)
            last[..., a] = np.clip(l, 0, n - 1)
        return first, last, outside

    def ids_in_ranges(self, first, last) -> np.ndarray:
        axes = [np.arange(f, l + 1) for f, l in zip(first, last)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.ravel_multi_index(tuple(m.reshape(-1) for m in mesh), self.cells_per_dim)


def _axis_edges(lo: float, hi: float, n: int) -> np.ndarray:
    e = np.linspace(lo, hi, n + 1)
    e[0], e[-1] = lo, hi
    return e


def _meets_goal(spec: RegionSpec, lo, hi, last_mask) -> bool:
    # half-open cell [lo, hi) (closed on axes where it is the last cell) vs closed goal
    g = spec.goal
    upper_ok = np.where(last_mask, g.lo <= hi, g.lo < hi)
    return bool(np.all(lo <= g.hi) and np.all(upper_ok))


def build_partition(spec: RegionSpec, cells_per_dim: Sequence[int], discretized_dims: Sequence[int] | None = None) -> Partition:
    """Uniform grid over ``spec.bounds`` with conservative cell labels."""
    n = spec.dim
    dims = tuple(range(n)) if discretized_dims is None else tuple(int(d) for d in discretized_dims)
    counts = tuple(int(c) for c in cells_per_dim)
    if len(dims) != len(counts):
        raise ValueError("cells_per_dim and discretized_dims have different lengths")
    if len(set(dims)) != len(dims) or any(not 0 <= d < n for d in dims):
        raise ValueError(f"invalid discretized dims {dims} for a {n}-D state")
    if any(c < 1 for c in counts):
        raise ValueError("cells_per_dim must be >= 1")
    widths = spec.bounds.width
    if np.any(widths <= 0.0):
        raise ValueError("analysis bounds have zero width in some coordinate")

    edges = tuple(_axis_edges(spec.bounds.lo[d], spec.bounds.hi[d], c) for d, c in zip(dims, counts))
    cells = []
    for cid, idx in enumerate(np.ndindex(*counts)):
        lo = spec.bounds.lo.copy()
        hi = spec.bounds.hi.copy()
        last = np.ones(n, dtype=bool)
        for a, (d, i) in enumerate(zip(dims, idx)):
            lo[d] = edges[a][i]
            hi[d] = edges[a][i + 1]
            last[d] = i == counts[a] - 1
        box = Box(lo, hi)
        if box.issubset(spec.goal):
            label = Label.GOAL
        elif _meets_goal(spec, lo, hi, last):
            label = Label.UNSAFE
        elif any(ob.intersects_box(lo[list(ob.dims)], hi[list(ob.dims)]) for ob in spec.obstacles):
            label = Label.UNSAFE
        else:
            label = Label.SAFE
        cells.append(AbstractState(cid, box, label))
    return Partition(spec, dims, counts, tuple(cells), edges)


def locate(p: Partition, x) -> int:
    """Cell id holding ``x``, or ``OUTSIDE``."""
    return int(locate_many(p, np.atleast_2d(np.asarray(x, dtype=float)))[0])


def locate_many(p: Partition, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    inside = p.spec.in_bounds(X)
    first, _, _ = p.index_ranges(X, X)
    ids = np.ravel_multi_index(tuple(first.T), p.cells_per_dim) if len(first) else np.zeros(0, dtype=int)
    return np.where(inside, ids, OUTSIDE)


def cells_intersecting(p: Partition, box: Box) -> tuple[np.ndarray, bool]:
    """Cells met by ``box`` (under the half-open convention) and an outside flag."""
    if box.dim != p.state_dim:
        raise ValueError(f"query box has {box.dim} dims, state has {p.state_dim}")
    first, last, outside = p.index_ranges(box.lo, box.hi)
    b = p.spec.bounds
    if np.any(box.hi < b.lo) or np.any(box.lo > b.hi):
        return np.zeros(0, dtype=int), True
    return p.ids_in_ranges(first, last), bool(outside)


class GridRangeQuery:
    """Batched min / max of a per-cell table over index rectangles.

    Uses one summed-area table per distinct value and a binary search, so a
    batch of ``B`` rectangles costs ``O(B * 2^d * log(#values))``.
    """

    def __init__(self, p: Partition, values):
        self.shape = p.cells_per_dim
        v = np.asarray(values, dtype=float).reshape(self.shape)
        self.levels = np.unique(v)
        d = len(self.shape)
        below = (v[None, ...] < self.levels.reshape((-1,) + (1,) * d)).astype(np.int64)
        above = (v[None, ...] > self.levels.reshape((-1,) + (1,) * d)).astype(np.int64)
        self._below = self._sat(below)
        self._above = self._sat(above)
        self._values = v

    @staticmethod
    def _sat(a):
        out = a
        for ax in range(1, a.ndim):
            out = np.cumsum(out, axis=ax)
        pad = [(0, 0)] + [(1, 0)] * (a.ndim - 1)
        return np.pad(out, pad)

    def _count(self, sat, level_idx, first, last):
        d = first.shape[-1]
        total = np.zeros(first.shape[:-1], dtype=np.int64)
        for corner in range(1 << d):
            idx = [level_idx]
            sign = 1
            for a in range(d):
                if corner >> a & 1:
                    idx.append(first[..., a])
                    sign = -sign
                else:
                    idx.append(last[..., a] + 1)
            total += sign * sat[tuple(idx)]
        return total

    def range_min(self, first, last) -> np.ndarray:
        first = np.asarray(first)
        last = np.asarray(last)
        lo_i = np.zeros(first.shape[:-1], dtype=int)
        hi_i = np.full(first.shape[:-1], len(self.levels) - 1, dtype=int)
        # largest level with no cell strictly below it
        while np.any(lo_i < hi_i):
            mid = (lo_i + hi_i + 1) // 2
            ok = self._count(self._below, mid, first, last) == 0
            lo_i = np.where(ok, mid, lo_i)
            hi_i = np.where(ok, hi_i, mid - 1)
        return self.levels[lo_i]

    def range_max(self, first, last) -> np.ndarray:
        first = np.asarray(first)
        last = np.asarray(last)
        lo_i = np.zeros(first.shape[:-1], dtype=int)
        hi_i = np.full(first.shape[:-1], len(self.levels) - 1, dtype=int)
        # smallest level with no cell strictly above it
        while np.any(lo_i < hi_i):
            mid = (lo_i + hi_i) // 2
            ok = self._count(self._above, mid, first, last) == 0
            hi_i = np.where(ok, mid, hi_i)
            lo_i = np.where(ok, lo_i, mid + 1)
        return self.levels[lo_i]
