"""Scalar special functions, seeded random streams, interval and box arithmetic.

Everything downstream that claims an enclosure is built from the pieces here.
Arithmetic uses round-to-nearest floats (no directed rounding).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy import special

__all__ = [
    "erf",
    "erf_inv",
    "make_rng",
    "Interval",
    "Box",
    "affine_bounds",
    "interval_affine",
]

_ERF_SATURATION = 6.0


def erf(x: float) -> float:
    """Error function, saturating to +-1 beyond |x| > 6."""
    if not math.isfinite(x):
        raise ValueError(f"erf needs a finite argument, got {x!r}")
    if x > _ERF_SATURATION:
        return 1.0
    if x < -_ERF_SATURATION:
        return -1.0
    return math.erf(x)


def erf_inv(p: float) -> float:
    """Inverse error function on the open interval (-1, 1).

    The scipy value is polished with one Newton step against ``math.erf`` so the
    round trip ``erf(erf_inv(p)) == p`` holds to ~1e-15.
    """
    if not -1.0 < p < 1.0:
        raise ValueError(f"erf_inv is defined on (-1, 1), got {p!r}")
    if p == 0.0:
        return 0.0
    y = float(special.erfinv(p))
    deriv = 2.0 / math.sqrt(math.pi) * math.exp(-y * y)
    if deriv > 0.0:
        y -= (math.erf(y) - p) / deriv
    return y


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Independent generator for ``(seed, *stream)``.

    Identical keys give identical streams; distinct keys give statistically
    independent ones, so per-cell / per-step work can run in any order.
    """
    keys = [int(seed)] + [int(s) for s in stream]
    if any(k < 0 for k in keys):
        raise ValueError("seed and stream keys must be non-negative")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(keys)))


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self) -> None:
        if not self.lo <= self.hi:
            raise ValueError(f"inverted interval [{self.lo}, {self.hi}]")

    @classmethod
    def point(cls, x: float) -> "Interval":
        return cls(x, x)

    @property
    def width(self) -> float:
        return self.hi - self.lo

    @property
    def center(self) -> float:
        return 0.5 * (self.lo + self.hi)

    def contains(self, x: float) -> bool:
        return self.lo <= x <= self.hi

    def __add__(self, other: "Interval | float") -> "Interval":
        o = _as_interval(other)
        return Interval(self.lo + o.lo, self.hi + o.hi)

    __radd__ = __add__

    def __neg__(self) -> "Interval":
        return Interval(-self.hi, -self.lo)

    def __sub__(self, other: "Interval | float") -> "Interval":
        return self + (-_as_interval(other))

    def __rsub__(self, other: float) -> "Interval":
        return _as_interval(other) - self

    def __mul__(self, other: "Interval | float") -> "Interval":
        o = _as_interval(other)
        products = (self.lo * o.lo, self.lo * o.hi, self.hi * o.lo, self.hi * o.hi)
        return Interval(min(products), max(products))

    __rmul__ = __mul__


def _as_interval(v: "Interval | float") -> Interval:
    return v if isinstance(v, Interval) else Interval.point(float(v))


class Box:
    """Axis-aligned box stored as two float arrays.

    Immutable: the arrays are copied on construction and flagged read-only.
    """

    __slots__ = ("lo", "hi")

    def __init__(self, lo: Iterable[float], hi: Iterable[float]):
        lo_arr = np.array(lo, dtype=float).reshape(-1)
        hi_arr = np.array(hi, dtype=float).reshape(-1)
        if lo_arr.shape != hi_arr.shape:
            raise ValueError("box bounds have different lengths")
        if lo_arr.size == 0:
            raise ValueError("box needs at least one dimension")
        if np.any(np.isnan(lo_arr)) or np.any(np.isnan(hi_arr)):
            raise ValueError("box bounds contain NaN")
        if np.any(lo_arr > hi_arr):
            raise ValueError("inverted box bounds")
        lo_arr.setflags(write=False)
        hi_arr.setflags(write=False)
        object.__setattr__(self, "lo", lo_arr)
        object.__setattr__(self, "hi", hi_arr)

    def __setattr__(self, name, value):
        raise AttributeError("Box is immutable")

    @classmethod
    def from_intervals(cls, intervals: Sequence[Interval]) -> "Box":
        return cls([iv.lo for iv in intervals], [iv.hi for iv in intervals])

    @classmethod
    def point(cls, x: Iterable[float]) -> "Box":
        x = np.asarray(x, dtype=float)
        return cls(x, x)

    @classmethod
    def around(cls, center: Iterable[float], radius) -> "Box":
        c = np.asarray(center, dtype=float)
        r = np.broadcast_to(np.asarray(radius, dtype=float), c.shape)
        return cls(c - r, c + r)

    @property
    def dim(self) -> int:
        return self.lo.size

    @property
    def intervals(self) -> list[Interval]:
        return [Interval(float(a), float(b)) for a, b in zip(self.lo, self.hi)]

    def __getitem__(self, i: int) -> Interval:
        return Interval(float(self.lo[i]), float(self.hi[i]))

    def __len__(self) -> int:
        return self.dim

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    @property
    def width(self) -> np.ndarray:
        return self.hi - self.lo

    @property
    def volume(self) -> float:
        return float(np.prod(self.hi - self.lo))

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(self.lo <= x) and np.all(x <= self.hi))

    def issubset(self, other: "Box") -> bool:
        return bool(np.all(other.lo <= self.lo) and np.all(self.hi <= other.hi))

    def overlaps(self, other: "Box") -> bool:
        """True when the interiors intersect (positive-measure overlap)."""
        return bool(np.all(np.maximum(self.lo, other.lo) < np.minimum(self.hi, other.hi)))

    def intersection(self, other: "Box") -> "Box | None":
        lo = np.maximum(self.lo, other.lo)
        hi = np.minimum(self.hi, other.hi)
        if np.any(lo > hi):
            return None
        return Box(lo, hi)

    def sub(self, dims: Sequence[int]) -> "Box":
        idx = list(dims)
        return Box(self.lo[idx], self.hi[idx])

    def concat(self, other: "Box") -> "Box":
        return Box(np.concatenate([self.lo, other.lo]), np.concatenate([self.hi, other.hi]))

    def __eq__(self, other) -> bool:
        if not isinstance(other, Box):
            return NotImplemented
        return bool(np.array_equal(self.lo, other.lo) and np.array_equal(self.hi, other.hi))

    def __hash__(self) -> int:
        return hash((self.lo.tobytes(), self.hi.tobytes()))

    def __repr__(self) -> str:
        pairs = ", ".join(f"[{a:.6g}, {b:.6g}]" for a, b in zip(self.lo, self.hi))
        return f"Box({pairs})"


def affine_bounds(W_lo, W_hi, b_lo, b_hi, x_lo, x_hi):
    """Bounds of ``W @ x + b`` over interval ``W``, ``b`` and ``x``.

    Each entry product is enclosed by its four endpoint products, which is the
    exact hull of a product of two intervals.  Leading batch dimensions are
    broadcast: ``W_*`` has shape ``(..., out, in)``, ``x_*`` ``(..., in)`` and
    ``b_*`` ``(..., out)``.
    """
    W_lo = np.asarray(W_lo, dtype=float)
    W_hi = np.asarray(W_hi, dtype=float)
    x_lo = np.asarray(x_lo, dtype=float)[..., None, :]
    x_hi = np.asarray(x_hi, dtype=float)[..., None, :]
    if W_lo.shape[-1] != x_lo.shape[-1]:
        raise ValueError(f"shape mismatch: W has {W_lo.shape[-1]} columns, x has {x_lo.shape[-1]} entries")
    p1 = W_lo * x_lo
    p2 = W_lo * x_hi
    p3 = W_hi * x_lo
    p4 = W_hi * x_hi
    lo = np.minimum(np.minimum(p1, p2), np.minimum(p3, p4)).sum(axis=-1)
    hi = np.maximum(np.maximum(p1, p2), np.maximum(p3, p4)).sum(axis=-1)
    b_lo = np.asarray(b_lo, dtype=float)
    b_hi = np.asarray(b_hi, dtype=float)
    if b_lo.shape[-1] != lo.shape[-1]:
        raise ValueError(f"shape mismatch: bias has {b_lo.shape[-1]} entries, W has {lo.shape[-1]} rows")
    return lo + b_lo, hi + b_hi


def interval_affine(W_lo, W_hi, b_box: Box, x_box: Box) -> Box:
    """Enclosure of ``{W x + b}`` for ``W`` in the entrywise box ``[W_lo, W_hi]``."""
    W_lo = np.atleast_2d(np.asarray(W_lo, dtype=float))
    W_hi = np.atleast_2d(np.asarray(W_hi, dtype=float))
    if W_lo.shape != W_hi.shape:
        raise ValueError("W_lo and W_hi have different shapes")
    if np.any(W_lo > W_hi):
        raise ValueError("inverted weight bounds")
    if W_lo.shape[0] != b_box.dim:
        raise ValueError(f"shape mismatch: W has {W_lo.shape[0]} rows, bias box has {b_box.dim} dims")
    lo, hi = affine_bounds(W_lo, W_hi, b_box.lo, b_box.hi, x_box.lo, x_box.hi)
    return Box(lo, hi)
