"""Backward computation of certified reach-avoid lower bounds.

For every time step ``k`` (from ``N-1`` down to ``0``) and every Safe cell
``q``, weight boxes ``[w - rho_w, w + rho_w]`` around posterior samples are
pushed through the closed loop with interval arithmetic.  A box whose
noise-inflated image only meets cells with next-step value at least ``v`` is
kept at level ``v``; kept boxes are merged into a disjoint union and the cell
value is ``eta^n * sum(level * posterior mass)`` over that union.
"""

from __future__ import annotations

import csv
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .abstraction import OUTSIDE, AbstractState, GridRangeQuery, Label, Partition, cells_intersecting
from .core import Box, erf_inv, make_rng
from .neural import Network
from .posterior import DiagGaussianPosterior, box_mass, box_mass_bounds
from .propagation import ibp_bnn, ibp_bounds, ibp_policy, inflate

__all__ = [
    "CertConfig",
    "ValueTable",
    "WeightBoxUnion",
    "epsilon_from_eta",
    "insert_disjoint",
    "accept_box",
    "certify",
    "CellEvaluator",
]


def epsilon_from_eta(sigma: float, eta: float) -> float:
    """Noise radius with per-coordinate Gaussian mass ``eta``."""
    if not sigma > 0.0:
        raise ValueError("sigma must be positive")
    if not 0.0 < eta < 1.0:
        raise ValueError("eta must lie in (0, 1)")
    return math.sqrt(2.0 * sigma**2) * erf_inv(eta)


@dataclass(frozen=True)
class CertConfig:
    """Knobs of the certification pass.

    ``thresholds`` selects how probability thresholds are picked per cell:
    ``"heuristic"`` is the two-interval rule with ``v1`` the largest next-step
    value within ``rho_x`` of the cell; ``"adaptive"`` uses every distinct
    next-step value as a threshold; a tuple gives a fixed ladder of interior
    thresholds ``0 < v_1 < ... < v_{n_p - 1} <= 1``.

    ``max_fragments`` caps the size of each cell's weight-box union (see
    :class:`WeightBoxUnion`); ``None`` keeps every accepted box.
    """

    n_s: int = 100
    rho_w: float = 0.0
    rho_x: float = 0.0
    eta: float = 0.99
    n_p: int = 2
    thresholds: str | tuple[float, ...] = "heuristic"
    rho_w_relative: bool = False
    max_fragments: int | None = 512
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_s < 0:
            raise ValueError("n_s must be >= 0")
        if self.rho_w < 0.0 or self.rho_x < 0.0:
            raise ValueError("rho_w and rho_x must be >= 0")
        if not 0.0 < self.eta < 1.0:
            raise ValueError("eta must lie in (0, 1)")
        if self.seed < 0:
            raise ValueError("seed must be >= 0")
        if self.max_fragments is not None and self.max_fragments < 1:
            raise ValueError("max_fragments must be >= 1 or None")
        t = self.thresholds
        if isinstance(t, str):
            if t not in ("heuristic", "adaptive"):
                raise ValueError(f"unknown threshold mode {t!r}")
            if t == "heuristic" and self.n_p != 2:
                raise ValueError("the rho_x heuristic picks a single threshold (n_p = 2)")
        else:
            ladder = tuple(float(v) for v in t)
            object.__setattr__(self, "thresholds", ladder)
            if not ladder or any(not 0.0 < v <= 1.0 for v in ladder) or any(b <= a for a, b in zip(ladder, ladder[1:])):
                raise ValueError("threshold ladder must be strictly increasing within (0, 1]")
            if self.n_p != len(ladder) + 1:
                object.__setattr__(self, "n_p", len(ladder) + 1)

    def to_dict(self) -> dict:
        t = self.thresholds if isinstance(self.thresholds, str) else list(self.thresholds)
        return {
            "n_s": self.n_s,
            "rho_w": self.rho_w,
            "rho_x": self.rho_x,
            "eta": self.eta,
            "n_p": self.n_p,
            "thresholds": t,
            "rho_w_relative": self.rho_w_relative,
            "max_fragments": self.max_fragments,
            "seed": self.seed,
        }


@dataclass
class ValueTable:
    """``values[k, cell]`` holds the certified lower bound at step ``k``."""

    values: np.ndarray
    labels: np.ndarray
    thresholds: dict = field(default_factory=dict)

    @property
    def horizon(self) -> int:
        return self.values.shape[0] - 1

    @property
    def n_cells(self) -> int:
        return self.values.shape[1]

    @property
    def k0(self) -> np.ndarray:
        return self.values[0]

    def __getitem__(self, key):
        return self.values[key]

    def safe_mean(self, k: int = 0) -> float:
        safe = self.labels == int(Label.SAFE)
        return float(self.values[k, safe].mean()) if safe.any() else float("nan")

    def step_stats(self) -> list[dict]:
        safe = self.labels == int(Label.SAFE)
        out = []
        for k in range(self.horizon + 1):
            row = self.values[k, safe] if safe.any() else np.zeros(1)
            out.append({"k": k, "min": float(row.min()), "mean": float(row.mean()), "max": float(row.max())})
        return out

    def to_csv(self, path, partition: Partition) -> None:
        centers = partition.centers
        n = centers.shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["k", "cell_id"] + [f"c{i}" for i in range(n)] + ["label", "K"])
            for k in range(self.horizon + 1):
                for cid in range(self.n_cells):
                    w.writerow(
                        [k, cid]
                        + [repr(float(v)) for v in centers[cid]]
                        + [str(Label(int(self.labels[cid]))), repr(float(self.values[k, cid]))]
                    )

    @classmethod
    def from_csv(cls, path) -> "ValueTable":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], rows[1:]
        if header[:2] != ["k", "cell_id"] or header[-2:] != ["label", "K"]:
            raise ValueError(f"{path}: not a value-table file")
        ks = np.array([int(r[0]) for r in body])
        ids = np.array([int(r[1]) for r in body])
        N, n_q = ks.max(), ids.max() + 1
        values = np.zeros((N + 1, n_q))
        labels = np.zeros(n_q, dtype=int)
        names = {str(lab): int(lab) for lab in Label}
        for r, k, cid in zip(body, ks, ids):
            values[k, cid] = float(r[-1])
            labels[cid] = names[r[-2]]
        return cls(values, labels)


# ----------------------------------------------------------------------------
# disjoint unions of weight boxes


def _subtract(lo, hi, f_lo, f_hi):
    """Split each row of ``[lo, hi]`` minus the box ``[f_lo, f_hi]`` into boxes with disjoint interiors.

    Rows that do not overlap the fragment's interior come back unchanged.  For
    an overlapping row the pieces are, per dimension ``j``, the slabs below
    and above the fragment in ``j`` with the dimensions before ``j`` already
    clipped to the fragment.
    """
    lo = np.atleast_2d(lo)
    hi = np.atleast_2d(hi)
    hit = np.all(np.maximum(lo, f_lo) < np.minimum(hi, f_hi), axis=1)
    if not hit.any():
        return lo, hi
    L, H = lo[hit], hi[hit]
    m, d = L.shape
    cl = np.maximum(L, f_lo)
    ch = np.minimum(H, f_hi)
    before = np.tri(d, k=-1, dtype=bool)  # before[j, i]: i < j
    upto = np.tri(d, dtype=bool)  # upto[j, i]: i <= j
    eye = np.eye(d, dtype=bool)
    # below pieces: (m, d_j, d_i)
    b_lo = np.where(before, cl[:, None, :], L[:, None, :])
    b_hi = np.where(before, ch[:, None, :], H[:, None, :])
    b_hi = np.where(eye, f_lo[None, None, :], b_hi)
    b_ok = L < f_lo
    # above pieces
    a_lo = np.where(upto, cl[:, None, :], L[:, None, :])
    a_lo = np.where(eye, f_hi[None, None, :], a_lo)
    a_hi = np.where(before, ch[:, None, :], H[:, None, :])
    a_ok = H > f_hi
    p_lo = np.stack([b_lo, a_lo], axis=2).reshape(m * d * 2, d)
    p_hi = np.stack([b_hi, a_hi], axis=2).reshape(m * d * 2, d)
    ok = np.stack([b_ok, a_ok], axis=2).reshape(-1)
    return np.concatenate([lo[~hit], p_lo[ok]]), np.concatenate([hi[~hit], p_hi[ok]])


class WeightBoxUnion:
    """Union of weight-space boxes kept as fragments with disjoint interiors.

    Each fragment carries the level of the box it came from, so a single union
    can also hold the per-threshold sets used with several thresholds.

    Heavily overlapping boxes in many dimensions split into very many pieces.
    With ``max_fragments`` set, a box whose insertion would push the fragment
    count past the budget is left out entirely (``skipped`` counts these);
    the union then under-approximates the inserted set, which keeps any mass
    computed from it a lower bound.
    """

    def __init__(self, dim: int, max_fragments: int | None = None):
        self.dim = int(dim)
        self.max_fragments = max_fragments
        self.skipped = 0
        self._lo = np.empty((0, self.dim))
        self._hi = np.empty((0, self.dim))
        self._level = np.empty(0)

    def __len__(self) -> int:
        return self._lo.shape[0]

    @property
    def boxes(self) -> list[Box]:
        return [Box(a, b) for a, b in zip(self._lo, self._hi)]

    @property
    def levels(self) -> np.ndarray:
        return self._level.copy()

    @property
    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return self._lo, self._hi

    def copy(self) -> "WeightBoxUnion":
        out = WeightBoxUnion(self.dim, self.max_fragments)
        out.skipped = self.skipped
        out._lo = self._lo.copy()
        out._hi = self._hi.copy()
        out._level = self._level.copy()
        return out

    def add(self, box: Box, level: float = 1.0) -> int:
        """Insert the part of ``box`` not already covered.  Returns fragments added."""
        if box.dim != self.dim:
            raise ValueError(f"box has {box.dim} dims, union has {self.dim}")
        lo = np.array(box.lo)
        hi = np.array(box.hi)
        if np.any(lo >= hi):
            return 0
        room = None if self.max_fragments is None else self.max_fragments - len(self)
        if room is not None and room <= 0:
            self.skipped += 1
            return 0
        hits = np.flatnonzero(np.all(np.maximum(self._lo, lo) < np.minimum(self._hi, hi), axis=1))
        p_lo, p_hi = lo[None], hi[None]
        for f in hits:
            p_lo, p_hi = _subtract(p_lo, p_hi, self._lo[f], self._hi[f])
            keep = np.all(p_lo < p_hi, axis=1)
            p_lo, p_hi = p_lo[keep], p_hi[keep]
            if p_lo.shape[0] == 0:
                return 0
            if room is not None and p_lo.shape[0] > room:
                self.skipped += 1
                return 0
        self._lo = np.vstack([self._lo, p_lo])
        self._hi = np.vstack([self._hi, p_hi])
        self._level = np.concatenate([self._level, np.full(p_lo.shape[0], float(level))])
        return p_lo.shape[0]

    def masses(self, post: DiagGaussianPosterior) -> np.ndarray:
        if not len(self):
            return np.zeros(0)
        return box_mass_bounds(post, self._lo, self._hi)

    def total_mass(self, post: DiagGaussianPosterior) -> float:
        return math.fsum(self.masses(post))

    def weighted_mass(self, post: DiagGaussianPosterior) -> float:
        """Sum of ``level * mass`` over fragments."""
        if not len(self):
            return 0.0
        return math.fsum(self.levels * self.masses(post))

    def is_pairwise_disjoint(self) -> bool:
        lo, hi = self._lo, self._hi
        for i in range(len(self)):
            inter = np.all(np.maximum(lo[i], lo[i + 1 :]) < np.minimum(hi[i], hi[i + 1 :]), axis=1)
            if np.any(inter):
                return False
        return True


def insert_disjoint(u: WeightBoxUnion, new_box: Box, level: float = 1.0) -> WeightBoxUnion:
    """Functional insert: a new union covering ``u`` and ``new_box``."""
    out = u.copy()
    out.add(new_box, level)
    return out


# ----------------------------------------------------------------------------
# acceptance of a single weight box


def accept_box(
    q: AbstractState,
    hat_H: Box,
    policy: Network,
    posterior: DiagGaussianPosterior,
    K_next,
    v_lo: float,
    v_hi: float,
    eps: float,
    partition: Partition,
) -> bool:
    """Does every ``w`` in ``hat_H`` send all of ``q`` (plus noise) into cells valued in ``[v_lo, v_hi]``?"""
    if v_lo > v_hi:
        raise ValueError("v_lo must not exceed v_hi")
    u_box = ibp_policy(policy, q.box)
    X = inflate(ibp_bnn(posterior.arch, hat_H, q.box, u_box), eps)
    ids, outside = cells_intersecting(partition, X)
    if outside or ids.size == 0:
        return False
    vals = np.asarray(K_next, dtype=float)[ids]
    return bool(vals.min() >= v_lo and vals.max() <= v_hi)


# ----------------------------------------------------------------------------
# the backward pass


@dataclass
class CellResult:
    value: float
    thresholds: tuple[float, ...]
    accepted: int


class CellEvaluator:
    """Evaluates one backward step for single cells.

    Shared by certification (policy boxes) and synthesis (constant actions).
    Holds the next-step table and the range-query structure built from it.
    """

    def __init__(self, posterior: DiagGaussianPosterior, partition: Partition, cfg: CertConfig, k: int, K_next):
        self.post = posterior
        self.partition = partition
        self.cfg = cfg
        self.k = k
        self.K_next = np.asarray(K_next, dtype=float)
        self.query = GridRangeQuery(partition, self.K_next)
        self.eps = epsilon_from_eta(posterior.likelihood_sigma, cfg.eta)
        self.eta_n = cfg.eta ** partition.state_dim
        if cfg.rho_w_relative:
            self.margin = cfg.rho_w * posterior.stddev
        else:
            self.margin = np.full(posterior.n_params, cfg.rho_w)

    def samples(self, cell_id: int) -> np.ndarray:
        rng = make_rng(self.cfg.seed, self.k, cell_id)
        return self.post.mean + self.post.stddev * rng.standard_normal((self.cfg.n_s, self.post.n_params))

    def heuristic_threshold(self, cell: AbstractState) -> float:
        p = self.partition
        lo = np.maximum(cell.box.lo - self.cfg.rho_x, p.spec.bounds.lo)
        hi = np.minimum(cell.box.hi + self.cfg.rho_x, p.spec.bounds.hi)
        first, last, _ = p.index_ranges(lo, hi)
        return float(self.query.range_max(first[None], last[None])[0])

    def image_minimum(self, cell: AbstractState, W: np.ndarray, u_lo, u_hi) -> np.ndarray:
        """Smallest next-step value met by each weight box's inflated image (0 if it leaves the domain)."""
        if W.shape[0] == 0:
            return np.zeros(0)
        x_lo = np.concatenate([cell.box.lo, u_lo])
        x_hi = np.concatenate([cell.box.hi, u_hi])
        f_lo, f_hi = ibp_bounds(self.post.arch, W - self.margin, W + self.margin, x_lo, x_hi)
        f_lo = f_lo - self.eps
        f_hi = f_hi + self.eps
        first, last, outside = self.partition.index_ranges(f_lo, f_hi)
        m = self.query.range_min(first, last)
        return np.where(outside, 0.0, m)

    def levels(self, m: np.ndarray, v1: float | None) -> tuple[np.ndarray, tuple[float, ...]]:
        mode = self.cfg.thresholds
        if mode == "heuristic":
            return np.where(m >= v1, v1, 0.0), (0.0, v1, 1.0)
        if mode == "adaptive":
            ladder = np.unique(np.concatenate([[0.0], self.K_next, [1.0]]))
            return m, tuple(float(v) for v in ladder)
        ladder = np.concatenate([[0.0], np.asarray(mode, dtype=float)])
        idx = np.searchsorted(ladder, m, side="right") - 1
        return ladder[idx], tuple(float(v) for v in ladder) + (() if ladder[-1] == 1.0 else (1.0,))

    def evaluate(self, cell: AbstractState, u_lo, u_hi, W: np.ndarray | None = None) -> CellResult:
        if cell.label == Label.GOAL:
            return CellResult(1.0, (), 0)
        if cell.label == Label.UNSAFE:
            return CellResult(0.0, (), 0)
        v1 = None
        if self.cfg.thresholds == "heuristic":
            v1 = self.heuristic_threshold(cell)
            if v1 <= 0.0:
                return CellResult(0.0, (0.0, 0.0, 1.0), 0)
        if W is None:
            W = self.samples(cell.id)
        m = self.image_minimum(cell, W, np.asarray(u_lo, dtype=float), np.asarray(u_hi, dtype=float))
        lv, ladder = self.levels(m, v1)
        union = WeightBoxUnion(self.post.n_params, self.cfg.max_fragments)
        # higher levels first so every weight keeps the best level covering it
        order = np.argsort(-lv, kind="stable")
        accepted = 0
        for i in order:
            if lv[i] <= 0.0:
                break
            union.add(Box(W[i] - self.margin, W[i] + self.margin), lv[i])
            accepted += 1
        value = self.eta_n * union.weighted_mass(self.post)
        return CellResult(float(min(max(value, 0.0), 1.0)), ladder, accepted)


def _initial_table(partition: Partition, N: int) -> np.ndarray:
    labels = partition.labels
    values = np.zeros((N + 1, partition.n_cells))
    values[:, labels == int(Label.GOAL)] = 1.0
    return values


def _map(fn, items, threads: int):
    if threads <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


def certify(
    posterior: DiagGaussianPosterior,
    policy: Network,
    partition: Partition,
    N: int,
    cfg: CertConfig,
    threads: int = 1,
    progress: Callable[[int, float], None] | None = None,
) -> ValueTable:
    """Certified lower bounds ``K_k(q)`` for ``k = 0..N`` under ``policy``."""
    if N < 0:
        raise ValueError("horizon must be >= 0")
    n, c = posterior.state_dim, posterior.control_dim
    if partition.state_dim != n:
        raise ValueError(f"partition is {partition.state_dim}-D, dynamics state is {n}-D")
    if policy.arch.n_in != n or policy.arch.n_out != c:
        raise ValueError(f"policy maps {policy.arch.n_in} -> {policy.arch.n_out}, expected {n} -> {c}")

    values = _initial_table(partition, N)
    thresholds: dict = {}
    policy_boxes = {cell.id: ibp_policy(policy, cell.box) for cell in partition.cells if cell.label == Label.SAFE}
    safe_cells = [cell for cell in partition.cells if cell.label == Label.SAFE]
    for k in range(N - 1, -1, -1):
        t0 = time.perf_counter()
        ev = CellEvaluator(posterior, partition, cfg, k, values[k + 1])

        def run(cell):
            ub = policy_boxes[cell.id]
            return ev.evaluate(cell, ub.lo, ub.hi)

        results = _map(run, safe_cells, threads)
        for cell, res in zip(safe_cells, results):
            values[k, cell.id] = res.value
            thresholds[(k, cell.id)] = res.thresholds
        if progress is not None:
            progress(k, time.perf_counter() - t0)
    return ValueTable(values, partition.labels, thresholds)
