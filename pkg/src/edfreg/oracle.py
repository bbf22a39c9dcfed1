"""Slow reference implementations for small inputs.

Nothing here shares code with the fast paths it checks: grid points
``k / n`` are enumerated explicitly and compared as exact fractions, counts are taken by direct
comparison, and the regularizer replay is a plain recursive function.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .discrepancy import DyadicInterval, GridSpec
from .distributions import DistributionModel, cdf, open_uniforms
from .regularizer import RegularizerConfig, regularize_uniform
from .streams import keyed_uniform, make_rng

__all__ = [
    "BudgetExceeded",
    "CheckResult",
    "OracleBudget",
    "brute_force_dY",
    "brute_force_kolmogorov",
    "exhaustive_small_run_check",
]


class BudgetExceeded(ValueError):
    """Input is too large for a brute-force oracle."""


@dataclass(frozen=True)
class OracleBudget:
    max_n: int = 50
    grid_refinement: int = 100_000
    max_grid: int = 10_000


DEFAULT_BUDGET = OracleBudget()


def brute_force_kolmogorov(sample, model: DistributionModel, budget: OracleBudget = DEFAULT_BUDGET) -> float:
    """``sup_x |F_n(x) - F(x)|`` by evaluation on event points plus a dense grid."""
    x = np.asarray(sample, dtype=np.float64).reshape(-1)
    n = x.size
    if n > budget.max_n:
        raise BudgetExceeded(f"n={n} exceeds the oracle budget {budget.max_n}")
    lo, hi = float(x.min()) - 1.0, float(x.max()) + 1.0
    dense = np.linspace(lo, hi, int(budget.grid_refinement * (hi - lo)) + 1)
    below = np.nextafter(x, -np.inf)
    thresholds = np.concatenate([x, below, dense])
    # F_n by direct comparison, no sorting
    fn = (x[None, :] <= thresholds[:, None]).sum(axis=1) / n
    gaps = np.abs(fn - np.asarray(cdf(model, thresholds)))
    return float(gaps.max())


def _interval_bounds(interval: DyadicInterval) -> tuple[Fraction, Fraction, bool]:
    level, index = interval
    scale = 2**level
    return Fraction(index, scale), Fraction(index + 1, scale), index == scale - 1


def brute_force_dY(points, interval: DyadicInterval, grid: GridSpec, budget: OracleBudget = DEFAULT_BUDGET) -> float:
    """Local discrepancy with the grid enumerated as exact fractions."""
    pts = [Fraction(float(p)) for p in np.asarray(points, dtype=np.float64).reshape(-1)]
    if len(pts) > budget.max_n:
        raise BudgetExceeded(f"{len(pts)} points exceed the oracle budget {budget.max_n}")
    if grid.n > budget.max_grid:
        raise BudgetExceeded(f"grid size {grid.n} exceeds {budget.max_grid}")
    a, b, closed = _interval_bounds(DyadicInterval(*interval))

    def inside(v: Fraction) -> bool:
        return a <= v and (v <= b if closed else v < b)

    if not all(inside(p) for p in pts):
        raise ValueError("a point lies outside the interval")
    ys = sorted(Fraction(k / grid.n) for k in range(grid.n) if inside(Fraction(k / grid.n)))
    xs = sorted(pts)
    best = abs(len(xs) - len(ys))
    for t in xs + ys:
        # J = [a, t] and J = [a, t)
        closed_gap = bisect.bisect_right(xs, t) - bisect.bisect_right(ys, t)
        open_gap = bisect.bisect_left(xs, t) - bisect.bisect_left(ys, t)
        best = max(best, abs(closed_gap), abs(open_gap))
    return best / grid.n


@dataclass(frozen=True)
class CheckResult:
    ok: bool
    diff: str = ""

    def __bool__(self) -> bool:
        return self.ok


def _replay(report, u: np.ndarray, m: float, seed: int) -> str:
    """Re-run the recursion independently; return the first discrepancy found."""
    grid = GridSpec(u.size)
    moves_at = {}
    for mv in report.moves:
        moves_at.setdefault(tuple(mv.node), []).append(mv)
    state = {i: float(v) for i, v in enumerate(u)}
    seen = set()

    def visit(level: int, index: int, ids: list[int]) -> str:
        node = DyadicInterval(level, index)
        seen.add(node)
        if node not in report.tree:
            return f"{node}: processed by the replay but missing from the tree"
        snap = report.tree[node]
        pts = [state[i] for i in ids]
        dY = brute_force_dY(pts, node, grid, OracleBudget(max_n=64))
        a, b, _ = _interval_bounds(node)
        grid_in = sum(1 for k in range(grid.n) if a <= Fraction(k / grid.n) < b or (b == 1 and Fraction(k / grid.n) == 1))
        acceptable = dY <= 1.0 / m
        if snap.x_count != len(ids):
            return f"{node}: x_count {snap.x_count} != {len(ids)}"
        if snap.dY != dY:
            return f"{node}: dY {snap.dY!r} != {dY!r}"
        if snap.acceptable != acceptable:
            return f"{node}: acceptable {snap.acceptable} != {acceptable}"
        if snap.equalized != (len(ids) == grid_in):
            return f"{node}: equalized flag disagrees"
        if snap.positions is not None and sorted(snap.positions.tolist()) != sorted(pts):
            return f"{node}: recorded positions differ"
        mid = Fraction(2 * index + 1, 2 ** (level + 1))
        here = moves_at.get(tuple(node), [])
        if acceptable:
            if here or snap.m_of_I or snap.moved_point_ids:
                return f"{node}: acceptable node has moves"
            return ""
        left = [i for i in ids if Fraction(state[i]) < mid]
        right = [i for i in ids if Fraction(state[i]) >= mid]
        grid_left = sum(1 for k in range(grid.n) if a <= Fraction(k / grid.n) < mid)
        d = len(left) - grid_left
        if snap.m_of_I != abs(d) or len(here) != abs(d):
            return f"{node}: expected {abs(d)} moves, snapshot {snap.m_of_I}, log {len(here)}"
        donors = left if d > 0 else right
        keys = {i: float(keyed_uniform(seed, level, index, [i])[0]) for i in donors}
        expected = set(sorted(donors, key=lambda i: (keys[i], i))[: abs(d)])
        if {mv.observation_id for mv in here} != expected or set(snap.moved_point_ids) != expected:
            return f"{node}: donor set differs from the keyed choice"
        lo, hi = (mid, b) if d > 0 else (a, mid)
        for mv in here:
            if mv.old_value != state[mv.observation_id]:
                return f"{node}: move of {mv.observation_id} records a stale old value"
            if not lo < Fraction(mv.new_value) < hi:
                return f"{node}: move of {mv.observation_id} lands outside the open receiving half"
            state[mv.observation_id] = mv.new_value
        kids = ([i for i in ids if Fraction(state[i]) < mid], [i for i in ids if Fraction(state[i]) >= mid])
        for child, child_ids in zip((2 * index, 2 * index + 1), kids):
            err = visit(level + 1, child, child_ids)
            if err:
                return err
        return ""

    err = visit(0, 0, list(range(u.size)))
    if err:
        return err
    if seen != set(report.tree):
        return "tree holds nodes the replay never reached"
    final = np.array([state[i] for i in range(u.size)])
    if not np.array_equal(final, report.active_values()):
        return "final sample differs from the replay"
    return ""


def exhaustive_small_run_check(n: int, m: float, seeds, sample=None) -> CheckResult:
    """Replay ``regularize_uniform`` on tiny inputs and compare every snapshot.

    For each seed a uniform sample of size n is drawn (unless `sample` is
    given), regularized, and the recursion is replayed node by node with
    brute-force discrepancies and an independent donor selection.
    """
    if not 1 <= n <= 12:
        raise BudgetExceeded("exhaustive replay is limited to n <= 12")
    for seed in seeds:
        u = np.asarray(sample, dtype=np.float64) if sample is not None else open_uniforms(make_rng(seed, 7), n)
        report = regularize_uniform(u, RegularizerConfig(m=m, seed=seed))
        base = u if report.held_out is None else np.delete(u, report.held_out)
        err = _replay(report, base, report.m_effective, seed)
        if not err and report.held_out is not None and report.modified.values[report.held_out] != u[report.held_out]:
            err = "held-out observation changed"
        if err:
            return CheckResult(False, f"seed {seed}, n={n}, m={m}: {err}")
    return CheckResult(True)
