"""Kolmogorov distance, grid-anchored local discrepancy and cell statistics.

Conventions
-----------
Intervals are half-open ``[a, b)`` except those ending at 1, which are
closed.  The reference grid is ``Y_k = k / n`` for ``k = 0 .. n-1``, each
Y_k being the double nearest to k/n.  It is never materialized: grid
counts come from exact integer arithmetic, so comparisons like
``Y_k <= x`` carry no rounding error.  A sample point lying exactly on a
dyadic boundary belongs to the interval on its right.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import NamedTuple

import numpy as np

from .distributions import DistributionModel, DomainError, Sample, cdf, cdf_left

__all__ = [
    "DenseIntervalReport",
    "DiscrepancyResult",
    "DyadicInterval",
    "GridSpec",
    "Sample",
    "dense_interval_stats",
    "exact_ceil_times",
    "exact_floor_times",
    "gap_at",
    "is_acceptable",
    "is_equalized",
    "kolmogorov_distance",
    "local_discrepancy_dY",
    "node_gaps",
]

MAX_LEVEL = 50


def exact_floor_times(x, n: int) -> np.ndarray:
    """Exact ``floor(x * n)`` for float x and integer n, as int64."""
    x = np.asarray(x, dtype=np.float64)
    flat = x.reshape(-1)
    prod = flat * n
    q = np.floor(prod)
    frac = prod - q
    q = q.astype(np.int64)
    for i in np.flatnonzero((frac < 1e-6) | (frac > 1 - 1e-6)):
        q[i] = math.floor(Fraction(float(flat[i])) * n)
    return q.reshape(x.shape)


def exact_ceil_times(x, n: int) -> np.ndarray:
    """Exact ``ceil(x * n)`` for float x and integer n, as int64."""
    return -exact_floor_times(-np.asarray(x, dtype=np.float64), n)


@dataclass(frozen=True)
class GridSpec:
    """The implicit grid ``Y_k = k / n``, k = 0 .. n-1.

    Y_k is the double nearest to the rational k/n, so a sample stored as
    ``k / n`` sits exactly on the grid.  Dyadic boundaries are compared
    against the rational value, which is equivalent while
    ``n * 2**level`` stays far below ``2**53``.
    """

    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("grid size must be at least 1")

    def _snap(self, x):
        # the one k, if any, whose double k/n equals x (grid spacing far exceeds an ulp)
        x = np.asarray(x, dtype=np.float64)
        k = np.clip(np.rint(x * self.n), 0, self.n - 1).astype(np.int64)
        return k, k / self.n == x

    def count_le(self, x) -> np.ndarray:
        """#{k : Y_k <= x}."""
        k, hit = self._snap(x)
        return np.where(hit, k + 1, np.clip(exact_floor_times(x, self.n) + 1, 0, self.n))

    def count_lt(self, x) -> np.ndarray:
        """#{k : Y_k < x}."""
        k, hit = self._snap(x)
        return np.where(hit, k, np.clip(exact_ceil_times(x, self.n), 0, self.n))

    def count_before(self, level: int, index) -> np.ndarray:
        """Grid points strictly left of the dyadic boundary ``index / 2**level``."""
        index = np.asarray(index, dtype=np.int64)
        _check_level(level, self.n)
        return (index * self.n + (1 << level) - 1) >> level

    def count_in(self, level: int, index) -> np.ndarray:
        """Grid points inside the dyadic interval(s) ``(level, index)``."""
        index = np.asarray(index, dtype=np.int64)
        hi = np.where(index == (1 << level) - 1, self.n, self.count_before(level, index + 1))
        return hi - self.count_before(level, index)


def _check_level(level: int, n: int) -> None:
    if level < 0 or level > MAX_LEVEL or level + n.bit_length() > 62:
        raise ValueError(f"dyadic level {level} is out of range for grid size {n}")


class DyadicInterval(NamedTuple):
    """``[index / 2**level, (index + 1) / 2**level)``, closed at 1 for the last index."""

    level: int
    index: int

    @property
    def left(self) -> float:
        return self.index / 2.0**self.level

    @property
    def right(self) -> float:
        return (self.index + 1) / 2.0**self.level

    @property
    def length(self) -> float:
        return 2.0**-self.level

    @property
    def midpoint(self) -> float:
        return (2 * self.index + 1) / 2.0 ** (self.level + 1)

    @property
    def closed_right(self) -> bool:
        return self.index == (1 << self.level) - 1

    def children(self) -> tuple[DyadicInterval, DyadicInterval]:
        return DyadicInterval(self.level + 1, 2 * self.index), DyadicInterval(self.level + 1, 2 * self.index + 1)

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        upper = (x <= self.right) if self.closed_right else (x < self.right)
        return (x >= self.left) & upper

    def validate(self) -> None:
        if not 0 <= self.level <= MAX_LEVEL or not 0 <= self.index < (1 << self.level):
            raise ValueError(f"invalid dyadic interval {tuple(self)}")

    def __str__(self) -> str:
        close = "]" if self.closed_right else ")"
        return f"[{self.left!r}, {self.right!r}{close}"


def node_of(values, level: int) -> np.ndarray:
    """Index of the level-`level` dyadic interval containing each value in [0, 1]."""
    # scaling by a power of two is exact
    idx = np.floor(np.asarray(values, dtype=np.float64) * 2.0**level).astype(np.int64)
    return np.minimum(idx, (1 << level) - 1)


def node_gaps(sv: np.ndarray, starts: np.ndarray, counts: np.ndarray, level: int, nodes: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Largest left-anchored count gap ``|#X - #Y|`` inside each dyadic node.

    `sv` holds the points of all listed nodes sorted ascending, so each
    node's points form the contiguous block ``sv[starts[b]:starts[b]+counts[b]]``.
    Returns an int64 array; divide by n for the local discrepancy.
    """
    before = grid.count_before(level, nodes)
    out = np.abs(counts - grid.count_in(level, nodes))
    if sv.size == 0:
        return out
    block = np.repeat(np.arange(nodes.size), counts)
    base = starts[block]
    gb = before[block]
    # evaluate at each point (closed J) and just left of it (open J)
    right = (np.searchsorted(sv, sv, side="right") - base) - (grid.count_le(sv) - gb)
    left = (np.searchsorted(sv, sv, side="left") - base) - (grid.count_lt(sv) - gb)
    g = np.maximum(np.abs(right), np.abs(left))
    nonempty = counts > 0
    peaks = np.maximum.reduceat(g, starts[nonempty])
    out[nonempty] = np.maximum(out[nonempty], peaks)
    return out


def local_discrepancy_dY(points, interval: DyadicInterval, grid: GridSpec) -> float:
    """``sup_J |#{X in J} - #{Y in J}| / n`` over J inside `interval` sharing its left endpoint."""
    interval = DyadicInterval(*interval)
    interval.validate()
    pts = np.sort(np.asarray(points, dtype=np.float64).reshape(-1))
    if pts.size and not np.all(interval.contains(pts)):
        raise DomainError(f"a point lies outside {interval}")
    gap = node_gaps(
        pts,
        np.array([0]),
        np.array([pts.size]),
        interval.level,
        np.array([interval.index]),
        grid,
    )
    return float(gap[0]) / grid.n


def is_acceptable(dY: float, m: float) -> bool:
    if not m > 0:
        raise ValueError("budget m must be positive")
    return bool(dY <= 1.0 / m)


def is_equalized(x_count: int, interval: DyadicInterval, grid: GridSpec) -> bool:
    interval = DyadicInterval(*interval)
    return int(x_count) == int(grid.count_in(interval.level, interval.index))


class DiscrepancyResult(NamedTuple):
    """Kolmogorov distance with its leftmost maximizing threshold.

    ``side == "left"`` means the supremum is the left limit at `witness`
    (the gap ``F(x-) - F_n(x-)``), ``"right"`` the value at `witness`.
    """

    value: float
    witness: float
    side: str


def kolmogorov_distance(sample, model: DistributionModel) -> DiscrepancyResult:
    """Exact ``sup_x |F_n(x) - F(x)|`` via the order statistics."""
    xs = np.sort(np.asarray(sample, dtype=np.float64).reshape(-1))
    n = xs.size
    if n == 0:
        raise ValueError("empty sample")
    f_hi = np.asarray(cdf(model, xs), dtype=np.float64)
    f_lo = np.asarray(cdf_left(model, xs), dtype=np.float64)
    upper = np.searchsorted(xs, xs, side="right") / n - f_hi
    lower = f_lo - np.searchsorted(xs, xs, side="left") / n
    i, j = int(np.argmax(upper)), int(np.argmax(lower))
    if lower[j] > upper[i] or (lower[j] == upper[i] and xs[j] < xs[i]):
        return DiscrepancyResult(float(lower[j]), float(xs[j]), "left")
    return DiscrepancyResult(float(upper[i]), float(xs[i]), "right")


def gap_at(sample, model: DistributionModel, x: float, side: str = "right") -> float:
    """``|F_n(x) - F(x)|`` (side="right") or the same gap for left limits."""
    xs = np.asarray(sample, dtype=np.float64)
    if side == "right":
        return abs(np.count_nonzero(xs <= x) / xs.size - cdf(model, x))
    return abs(np.count_nonzero(xs < x) / xs.size - cdf_left(model, x))


@dataclass(frozen=True, eq=False)
class DenseIntervalReport:
    """Cell counts for k equal cells of [0, 1] and the dense-cell move estimate.

    `lb_moves` is the lower-bound *estimate* ``(#dense) * 0.5 * sqrt(n/k)``,
    not the result of an optimization.
    """

    k: int
    nu: np.ndarray
    regular_flags: np.ndarray
    dense_flags: np.ndarray
    lb_moves: float

    @property
    def n(self) -> int:
        return int(self.nu.sum())

    @property
    def dense_fraction(self) -> float:
        return float(self.dense_flags.mean())


def dense_interval_stats(sample, k: int) -> DenseIntervalReport:
    x = np.asarray(sample, dtype=np.float64).reshape(-1)
    if k < 1:
        raise ValueError("k must be at least 1")
    if x.size and (x.min() < 0.0 or x.max() > 1.0):
        raise DomainError("cell statistics need values in [0, 1]")
    n = x.size
    cells = np.minimum(exact_floor_times(x, k), k - 1)
    nu = np.bincount(cells, minlength=k)
    mean, spread = n / k, math.sqrt(n / k)
    regular = nu <= mean + 0.5 * spread
    dense = nu > mean + spread
    return DenseIntervalReport(k, nu, regular, dense, float(np.count_nonzero(dense)) * 0.5 * spread)
