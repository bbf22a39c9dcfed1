"""Recursive dyadic equalization of a sample on [0, 1].

The engine walks the dyadic tree one level at a time.  At each level it
sorts the points of the active nodes, measures every node's local
discrepancy against the grid ``k / n``, and for each node it splits moves
randomly chosen points from the overfull half to random positions in the
other half until both halves hold as many points as grid points.

:func:`regularize_uniform` stops at acceptable nodes
(``d_Y(I) <= 1/m``); :func:`run_algorithm2` splits every node down to a
fixed depth and is used for analysis.  All randomness at a node is keyed
by ``(seed, level, index, observation id)``, so both walks make the same
choices wherever they reach the same node.
"""

from __future__ import annotations

import math
from collections.abc import Mapping
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from .discrepancy import DyadicInterval, GridSpec, node_gaps, node_of
from .distributions import (
    DistributionModel,
    DomainError,
    Sample,
    UniformizedSample,
    deuniformize,
    uniformize,
)
from .streams import keyed_uniform, make_rng

__all__ = [
    "MoveRecord",
    "NodeSnapshot",
    "RecursionTree",
    "RegularizerConfig",
    "RunReport",
    "equalize_halves",
    "regularize_general",
    "regularize_uniform",
    "run_algorithm2",
    "run_coupled",
    "verify_final_partition",
]

_DONOR_TAG = 0
_PLACE_TAG = 1
_MAX_REDRAWS = 64


@dataclass(frozen=True)
class RegularizerConfig:
    """Parameters of one regularization run.

    `max_level` defaults to ``ceil(log2(2m)) + 2``; reaching it with an
    unacceptable node is treated as an internal error.  `keep_positions`
    controls whether snapshots carry the point positions of each node.
    """

    m: float
    seed: int
    max_level: int | None = None
    even_n_policy: str = "holdout_last"
    early_accept: bool = True
    keep_positions: bool = True

    def __post_init__(self):
        if not self.m > 0 or not math.isfinite(self.m):
            raise DomainError("budget m must be a positive real")
        if self.even_n_policy != "holdout_last":
            raise ValueError(f"unknown even-n policy {self.even_n_policy!r}")

    @property
    def level_cap(self) -> int:
        if self.max_level is not None:
            return self.max_level
        return depth_bound(self.m) + 2


def depth_bound(m: float) -> int:
    """Deepest level the regularizer can reach with early acceptance: ``ceil(log2(2m))``."""
    return max(0, math.ceil(math.log2(2 * m)))


class MoveRecord(NamedTuple):
    observation_id: int
    old_value: float
    new_value: float
    node: DyadicInterval


@dataclass(frozen=True, eq=False)
class NodeSnapshot:
    """State of one dyadic node when it was processed, before its halves were equalized."""

    interval: DyadicInterval
    x_count: int
    dY: float
    acceptable: bool
    equalized: bool
    moved_point_ids: tuple[int, ...]
    m_of_I: int
    positions: np.ndarray | None = field(default=None, repr=False)
    point_ids: np.ndarray | None = field(default=None, repr=False)


def _ro(a, dtype=None) -> np.ndarray:
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class RecursionTree(Mapping):
    """Annotated recursion tree, stored column-wise; maps DyadicInterval -> NodeSnapshot.

    Row r describes node ``(level[r], index[r])``.  Moved point ids of row
    r are ``moved_ids[moved_ptr[r]:moved_ptr[r+1]]``; positions, when
    kept, are laid out the same way through `pos_ptr`.
    """

    n: int
    m: float
    level: np.ndarray
    index: np.ndarray
    x_count: np.ndarray
    gap: np.ndarray
    acceptable: np.ndarray
    equalized: np.ndarray
    m_of_I: np.ndarray
    moved_ptr: np.ndarray
    moved_ids: np.ndarray
    pos_ptr: np.ndarray | None = None
    pos_vals: np.ndarray | None = None
    pos_ids: np.ndarray | None = None

    @property
    def dY(self) -> np.ndarray:
        return self.gap / self.n

    @property
    def depth(self) -> int:
        return int(self.level.max()) if self.level.size else 0

    def _rows(self) -> dict:
        rows = self.__dict__.get("_row_cache")
        if rows is None:
            rows = {(int(l), int(i)): r for r, (l, i) in enumerate(zip(self.level, self.index))}
            object.__setattr__(self, "_row_cache", rows)
        return rows

    def row(self, node) -> int:
        return self._rows()[tuple(node)]

    def snapshot(self, r: int) -> NodeSnapshot:
        a, b = self.moved_ptr[r], self.moved_ptr[r + 1]
        pos = ids = None
        if self.pos_ptr is not None:
            p, q = self.pos_ptr[r], self.pos_ptr[r + 1]
            pos, ids = self.pos_vals[p:q], self.pos_ids[p:q]
        return NodeSnapshot(
            DyadicInterval(int(self.level[r]), int(self.index[r])),
            int(self.x_count[r]),
            float(self.gap[r]) / self.n,
            bool(self.acceptable[r]),
            bool(self.equalized[r]),
            tuple(int(i) for i in self.moved_ids[a:b]),
            int(self.m_of_I[r]),
            pos,
            ids,
        )

    def __getitem__(self, node) -> NodeSnapshot:
        return self.snapshot(self.row(node))

    def __iter__(self):
        return (DyadicInterval(int(l), int(i)) for l, i in zip(self.level, self.index))

    def __len__(self) -> int:
        return int(self.level.size)

    def __contains__(self, node) -> bool:
        return tuple(node) in self._rows()

    def leaves(self) -> list[DyadicInterval]:
        """Nodes without processed children, in left-to-right order."""
        rows = self._rows()
        out = [
            DyadicInterval(int(l), int(i))
            for l, i in zip(self.level, self.index)
            if (int(l) + 1, 2 * int(i)) not in rows
        ]
        return sorted(out, key=lambda iv: iv.left)

    def with_columns(self, **columns) -> RecursionTree:
        """Copy with some columns replaced (used to build negative controls)."""
        return replace(self, **{k: _ro(v) for k, v in columns.items()})


@dataclass(frozen=True, eq=False)
class RunReport:
    """Output of one regularizer run.

    `modified` is the full sample after regularization.  When n is even,
    `held_out` names the observation left untouched, `grid` has size
    ``n - 1`` and the recursion runs with ``m_effective = min(m, n - 1)``;
    otherwise `held_out` is None, ``grid.n == n`` and ``m_effective == m``.
    """

    modified: UniformizedSample
    moves: tuple[MoveRecord, ...]
    m1: int
    tree: RecursionTree
    leaf_set: list[DyadicInterval]
    grid: GridSpec
    m: float
    m_effective: float
    held_out: int | None = None

    @property
    def depth(self) -> int:
        return self.tree.depth

    @property
    def guarantee(self) -> float:
        """Deterministic bound on the Kolmogorov distance after the run."""
        n = len(self.modified)
        return 2.0 / self.m + (2.0 / n if self.held_out is not None else 0.0)

    def active_values(self) -> np.ndarray:
        """Modified values of the observations the recursion worked on."""
        v = self.modified.values
        return v if self.held_out is None else np.delete(v, self.held_out)


class _Walk(NamedTuple):
    values: np.ndarray
    move_ids: np.ndarray
    move_old: np.ndarray
    move_new: np.ndarray
    move_level: np.ndarray
    move_index: np.ndarray
    tree: RecursionTree


def _concat_ranges(lo: np.ndarray, hi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Indices of all ``range(lo[g], hi[g])`` concatenated, plus their group ids."""
    sizes = hi - lo
    group = np.repeat(np.arange(lo.size), sizes)
    offsets = np.cumsum(sizes) - sizes
    return lo[group] + np.arange(group.size) - offsets[group], group


def _relocate(seed, level, nodes, d, ids, group, to_right):
    """Fresh positions strictly inside the receiving half of each node."""
    h = 2.0 ** -(level + 1)
    c = (2 * nodes[group] + to_right[group]) * h
    pos = np.empty(ids.size)
    pending = np.arange(ids.size)
    for attempt in range(_MAX_REDRAWS):
        w = keyed_uniform(seed, level, nodes[group[pending]], ids[pending], _PLACE_TAG + attempt)
        cand = c[pending] + h * w
        ok = (cand > c[pending]) & (cand < c[pending] + h)
        pos[pending[ok]] = cand[ok]
        pending = pending[~ok]
        if not pending.size:
            return pos
    raise RuntimeError("could not place relocated points strictly inside their half")


def _equalize(sv, sids, starts, counts, level, nodes, grid, seed):
    """Choose donors and destinations for every listed node.

    Returns (d, ids, new positions, node group of each move).  ``d > 0``
    means the left half holds d points too many.
    """
    mids = (2 * nodes + 1) * 2.0 ** -(level + 1)
    n_left = np.searchsorted(sv, mids, side="left") - starts
    n_left = np.clip(n_left, 0, counts)
    d = n_left - grid.count_in(level + 1, 2 * nodes)
    active = np.flatnonzero(d != 0)
    if not active.size:
        empty = np.empty(0, dtype=np.int64)
        return d, empty, np.empty(0), empty
    lo = np.where(d[active] > 0, starts[active], starts[active] + n_left[active])
    hi = np.where(d[active] > 0, starts[active] + n_left[active], starts[active] + counts[active])
    cand, grp = _concat_ranges(lo, hi)
    keys = keyed_uniform(seed, level, nodes[active][grp], sids[cand], _DONOR_TAG)
    order = np.lexsort((sids[cand], keys, grp))
    sizes = hi - lo
    first = np.cumsum(sizes) - sizes
    rank = np.arange(order.size) - first[grp[order]]
    chosen = order[rank < np.abs(d[active])[grp[order]]]
    ids = sids[cand[chosen]]
    group = active[grp[chosen]]
    to_right = (d > 0).astype(np.int64)
    new = _relocate(seed, level, nodes, d, ids, group, to_right)
    return d, ids, new, group


def _walk(u: np.ndarray, m: float, seed: int, *, always_split: bool, split_below: int,
          level_cap: int, early_accept: bool, keep_positions: bool) -> _Walk:
    n = u.size
    grid = GridSpec(n)
    vals = u.copy()
    order = np.argsort(vals, kind="stable")
    nodes = np.zeros(1, dtype=np.int64)
    level = 0
    inv_m = 1.0 / m
    cols = {k: [] for k in ("level", "index", "x_count", "gap", "acc", "eq", "m_of_I", "moved_count", "moved", "pos", "pos_ids", "pos_count")}
    moves = {k: [] for k in ("ids", "old", "new", "level", "index")}

    while nodes.size:
        sv = vals[order]
        nd = node_of(sv, level)
        starts = np.searchsorted(nd, nodes, side="left")
        counts = np.searchsorted(nd, nodes, side="right") - starts
        gaps = node_gaps(sv, starts, counts, level, nodes, grid)
        equalized = counts == grid.count_in(level, nodes)
        acceptable = gaps / n <= inv_m
        if early_accept and 2.0**-level <= 0.5 * inv_m:
            short_ok = equalized & ~acceptable
            if np.any(short_ok):
                raise RuntimeError("equalized short interval failed the acceptability check")
        if always_split:
            split = np.full(nodes.size, level < split_below)
        else:
            split = ~acceptable
            if level >= level_cap and np.any(split):
                raise RuntimeError(f"unacceptable interval at level {level}, beyond the depth cap")

        m_of_I = np.zeros(nodes.size, dtype=np.int64)
        moved_count = np.zeros(nodes.size, dtype=np.int64)
        flagged = np.empty(0, dtype=np.int64)
        sidx = np.flatnonzero(split)
        if sidx.size:
            d, ids, new, group = _equalize(sv, order, starts[sidx], counts[sidx], level, nodes[sidx], grid, seed)
            rows = sidx[group]
            moves["ids"].append(ids)
            moves["old"].append(vals[ids])
            moves["new"].append(new)
            moves["level"].append(np.full(ids.size, level))
            moves["index"].append(nodes[rows])
            unacc = ~acceptable[rows]
            m_of_I[sidx] = np.where(acceptable[sidx], 0, np.abs(d))
            np.add.at(moved_count, rows[unacc], 1)
            flagged = ids[unacc]
            vals[ids] = new

        cols["level"].append(np.full(nodes.size, level))
        cols["index"].append(nodes)
        cols["x_count"].append(counts)
        cols["gap"].append(gaps)
        cols["acc"].append(acceptable)
        cols["eq"].append(equalized)
        cols["m_of_I"].append(m_of_I)
        cols["moved_count"].append(moved_count)
        cols["moved"].append(flagged)
        if keep_positions:
            cols["pos"].append(sv)
            cols["pos_ids"].append(order.copy())
            cols["pos_count"].append(counts)

        if not sidx.size:
            break
        keep, _ = _concat_ranges(starts[sidx], starts[sidx] + counts[sidx])
        nxt = order[keep]
        order = nxt[np.argsort(vals[nxt], kind="stable")]
        nodes = np.sort(np.concatenate([2 * nodes[sidx], 2 * nodes[sidx] + 1]))
        level += 1

    def cat(key, dtype):
        return np.concatenate(cols[key]).astype(dtype) if cols[key] else np.empty(0, dtype)

    def ptr(counts):
        return _ro(np.concatenate([[0], np.cumsum(counts)]), np.int64)

    tree = RecursionTree(
        n=n,
        m=m,
        level=_ro(cat("level", np.int64)),
        index=_ro(cat("index", np.int64)),
        x_count=_ro(cat("x_count", np.int64)),
        gap=_ro(cat("gap", np.int64)),
        acceptable=_ro(cat("acc", bool)),
        equalized=_ro(cat("eq", bool)),
        m_of_I=_ro(cat("m_of_I", np.int64)),
        moved_ptr=ptr(cat("moved_count", np.int64)),
        moved_ids=_ro(cat("moved", np.int64)),
        pos_ptr=ptr(cat("pos_count", np.int64)) if keep_positions else None,
        pos_vals=_ro(cat("pos", np.float64)) if keep_positions else None,
        pos_ids=_ro(cat("pos_ids", np.int64)) if keep_positions else None,
    )
    mv = {k: (np.concatenate(v) if v else np.empty(0)) for k, v in moves.items()}
    return _Walk(vals, mv["ids"].astype(np.int64), mv["old"], mv["new"],
                 mv["level"].astype(np.int64), mv["index"].astype(np.int64), tree)


def _prepare(sample, config: RegularizerConfig):
    u = np.asarray(sample, dtype=np.float64).reshape(-1)
    n = u.size
    if n == 0:
        raise DomainError("empty sample")
    if not np.all(np.isfinite(u)) or u.min() < 0.0 or u.max() > 1.0:
        raise DomainError("values must lie in [0, 1]")
    if not config.m <= n:
        raise DomainError(f"budget m={config.m} must lie in (0, n={n}]")
    if n % 2 == 1:
        return u, None, config.m
    # even n: hold the last observation out; a budget above the reduced
    # grid size cannot be met by a one-point-per-cell configuration
    return u[:-1], n - 1, min(config.m, n - 1)


def regularize_uniform(sample, config: RegularizerConfig) -> RunReport:
    """Move a few points of a sample on [0, 1] so that ``d_Y([0, 1]) <= 1/m``.

    The returned Kolmogorov distance to Unif[0, 1] is at most ``2/m``
    (plus ``2/n`` when n is even and one point was held out).  The bound is
    deterministic; the number of moved points is random.

    Raises
    ------
    DomainError
        If values fall outside [0, 1] or m is not in (0, n].
    """
    u, held, m_eff = _prepare(sample, config)
    walk = _walk(u, m_eff, config.seed, always_split=False, split_below=0,
                 level_cap=config.level_cap, early_accept=config.early_accept,
                 keep_positions=config.keep_positions)
    full = walk.values if held is None else np.append(walk.values, _value_at(sample, held))
    prov = getattr(sample, "provenance", None)
    moves = tuple(
        MoveRecord(int(i), float(o), float(w), DyadicInterval(int(l), int(j)))
        for i, o, w, l, j in zip(walk.move_ids, walk.move_old, walk.move_new, walk.move_level, walk.move_index)
    )
    return RunReport(
        modified=UniformizedSample(full, prov),
        moves=moves,
        m1=int(np.unique(walk.move_ids).size),
        tree=walk.tree,
        leaf_set=walk.tree.leaves(),
        grid=GridSpec(u.size),
        m=config.m,
        m_effective=m_eff,
        held_out=held,
    )


def _value_at(sample, i: int) -> float:
    return float(np.asarray(sample, dtype=np.float64).reshape(-1)[i])


def regularize_general(sample, model: DistributionModel, config: RegularizerConfig,
                       rng: np.random.Generator | None = None) -> tuple[Sample, RunReport]:
    """Regularize a sample from an arbitrary model through its uniformization.

    Only the moved observations change; they are mapped back with the
    model's quantile function.  `rng` feeds the randomized transform at
    atoms and defaults to a stream derived from ``config.seed``.
    """
    x = np.asarray(sample, dtype=np.float64).reshape(-1)
    if rng is None:
        rng = make_rng(config.seed, 0x756E69)
    us = uniformize(x, model, rng)
    report = regularize_uniform(us, config)
    out = x.copy()
    moved = np.unique(np.fromiter((mv.observation_id for mv in report.moves), dtype=np.int64))
    if moved.size:
        out[moved] = deuniformize(report.modified.values[moved], model).values
    return Sample(out), report


def equalize_halves(node_points, interval: DyadicInterval, grid: GridSpec, seed: int,
                    ids=None) -> list[MoveRecord]:
    """Equalize the two halves of one equalized dyadic node.

    `node_points` are the points of `interval` (any order); `ids` are their
    observation ids (default ``0 .. len-1``).  Donors are drawn uniformly
    without replacement from the overfull half; each is given a uniform
    position strictly inside the other half.
    """
    interval = DyadicInterval(*interval)
    pts = np.asarray(node_points, dtype=np.float64).reshape(-1)
    ids = np.arange(pts.size) if ids is None else np.asarray(ids, dtype=np.int64).reshape(-1)
    if pts.size and not np.all(interval.contains(pts)):
        raise DomainError(f"a point lies outside {interval}")
    want = int(grid.count_in(interval.level, interval.index))
    if pts.size != want:
        raise ValueError(f"{interval} is not equalized: {pts.size} points, {want} grid points")
    o = np.argsort(pts, kind="stable")
    nodes = np.array([interval.index])
    _, moved, new, _ = _equalize(pts[o], ids[o], np.array([0]), np.array([pts.size]),
                                interval.level, nodes, grid, seed)
    old = dict(zip(ids.tolist(), pts.tolist()))
    return [MoveRecord(int(i), old[int(i)], float(v), interval) for i, v in zip(moved, new)]


def run_algorithm2(sample, config: RegularizerConfig) -> tuple[int, RecursionTree]:
    """Always-split recursion truncated at level ``ceil(log2 n) + 1``.

    Returns m2, the number of moves made inside unacceptable intervals,
    and the annotated tree.  Deeper intervals are shorter than 1/n and
    would contribute nothing.
    """
    u, _, m_eff = _prepare(sample, config)
    depth = math.ceil(math.log2(u.size)) + 1 if u.size > 1 else 1
    walk = _walk(u, m_eff, config.seed, always_split=True, split_below=depth,
                 level_cap=depth, early_accept=False, keep_positions=config.keep_positions)
    return int(walk.tree.m_of_I.sum()), walk.tree


def run_coupled(sample, config: RegularizerConfig) -> tuple[int, int]:
    """(m1, m2) from both recursions on the same input with the same keyed randomness."""
    cfg = replace(config, keep_positions=False)
    m1 = regularize_uniform(sample, cfg).m1
    m2, _ = run_algorithm2(sample, cfg)
    return m1, m2


def verify_final_partition(report: RunReport, grid: GridSpec | None = None, m: float | None = None) -> bool:
    """Check that the leaves certify ``d_Y([0, 1]) <= 1/m`` for the modified sample.

    Verifies that the leaves tile [0, 1], that each leaf is acceptable by
    its snapshot and by recomputation, that each leaf and each prefix
    ``[0, left endpoint)`` is equalized, and that ``d_Y([0, 1]) <= 1/m``.
    """
    grid = report.grid if grid is None else grid
    m = report.m_effective if m is None else m
    v = np.sort(report.active_values())
    if v.size != grid.n:
        return False
    leaves = report.leaf_set
    if not leaves or leaves[0].left != 0.0 or leaves[-1].right != 1.0:
        return False
    for a, b in zip(leaves, leaves[1:]):
        if a.right != b.left:
            return False
    tree = report.tree
    lvl = np.array([lf.level for lf in leaves])
    idx = np.array([lf.index for lf in leaves])
    lo = np.searchsorted(v, [lf.left for lf in leaves], side="left")
    hi = np.append(lo[1:], v.size)
    counts = hi - lo
    for r, leaf in enumerate(leaves):
        snap = tree[leaf]
        if not snap.acceptable or not snap.dY <= 1.0 / m:
            return False
        gap = node_gaps(v[lo[r]:hi[r]], np.array([0]), np.array([counts[r]]), leaf.level, np.array([leaf.index]), grid)
        if gap[0] / grid.n > 1.0 / m:
            return False
    grid_in = np.array([int(grid.count_in(l, i)) for l, i in zip(lvl, idx)])
    if np.any(counts != grid_in):
        return False
    grid_before = np.array([int(grid.count_before(l, i)) for l, i in zip(lvl, idx)])
    if np.any(lo != grid_before):
        return False
    total = node_gaps(v, np.array([0]), np.array([v.size]), 0, np.array([0]), grid)
    return bool(total[0] / grid.n <= 1.0 / m)
