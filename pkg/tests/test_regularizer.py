import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from edfreg.discrepancy import DyadicInterval, GridSpec, kolmogorov_distance, local_discrepancy_dY
from edfreg.distributions import DomainError, bernoulli, exponential, open_uniforms, sample_iid, uniform01
from edfreg.regularizer import (
    RegularizerConfig,
    RunReport,
    depth_bound,
    equalize_halves,
    regularize_general,
    regularize_uniform,
    run_algorithm2,
    run_coupled,
    verify_final_partition,
)
from edfreg.streams import make_rng

WORKED = np.array([0.1, 0.2, 0.3])


def uniform_sample(n, seed):
    return open_uniforms(make_rng(seed, 99), n)


def odd_n():
    return st.integers(0, 400).map(lambda k: 2 * k + 1)


class TestAlgorithm1:
    def test_grid_sample_needs_no_moves(self):
        n = 1001
        rep = regularize_uniform(np.arange(n) / n, RegularizerConfig(m=10, seed=1))
        assert rep.m1 == 0 and rep.moves == ()
        assert len(rep.tree) == 1 and rep.tree[(0, 0)].dY == 0.0 and rep.tree[(0, 0)].acceptable

    def test_worked_instance(self):
        rep = regularize_uniform(WORKED, RegularizerConfig(m=3, seed=5))
        root = rep.tree[(0, 0)]
        assert root.x_count == 3 and root.dY == pytest.approx(2 / 3) and not root.acceptable
        assert root.m_of_I == 1 and len(rep.moves) == 1 and rep.m1 == 1
        mv = rep.moves[0]
        assert mv.node == (0, 0) and 0.5 < mv.new_value < 1.0 and mv.old_value < 0.5
        assert kolmogorov_distance(rep.modified, uniform01()).value <= 2 / 3
        assert verify_final_partition(rep)
        assert all(leaf.level >= 1 for leaf in rep.leaf_set)

    def test_seeded_runs_are_identical(self):
        u = uniform_sample(2001, 3)
        a = regularize_uniform(u, RegularizerConfig(m=1000, seed=11))
        b = regularize_uniform(u, RegularizerConfig(m=1000, seed=11))
        assert a.m1 > 0
        assert a.moves == b.moves and np.array_equal(a.modified.values, b.modified.values)
        for col in ("level", "index", "x_count", "gap", "m_of_I", "moved_ids", "pos_vals"):
            assert np.array_equal(getattr(a.tree, col), getattr(b.tree, col))
        c = regularize_uniform(u, RegularizerConfig(m=1000, seed=12))
        assert a.moves != c.moves

    def test_input_is_not_mutated(self):
        u = uniform_sample(101, 4)
        before = u.copy()
        regularize_uniform(u, RegularizerConfig(m=50, seed=0))
        assert np.array_equal(u, before)

    def test_rejects_bad_input(self):
        with pytest.raises(DomainError):
            regularize_uniform([0.2, 1.2, 0.5], RegularizerConfig(m=2, seed=0))
        with pytest.raises(DomainError):
            regularize_uniform([0.2, 0.3, 0.5], RegularizerConfig(m=4, seed=0))
        with pytest.raises(DomainError):
            regularize_uniform([], RegularizerConfig(m=1, seed=0))
        with pytest.raises(DomainError):
            RegularizerConfig(m=0, seed=0)

    @settings(max_examples=150, deadline=None)
    @given(odd_n(), st.floats(0.5, 1.0), st.integers(0, 2**40))
    def test_bound_and_snapshot_invariants(self, n, frac, seed):
        m = max(frac * n, 0.5)
        rep = regularize_uniform(uniform_sample(n, seed), RegularizerConfig(m=m, seed=seed))
        assert kolmogorov_distance(rep.modified, uniform01()).value <= 2 / m
        assert verify_final_partition(rep)
        ids = [mv.observation_id for mv in rep.moves]
        assert rep.m1 == len(set(ids))
        tree = rep.tree
        assert rep.depth <= depth_bound(m) + 1
        for node in tree:
            snap = tree[node]
            assert snap.acceptable == (snap.dY <= 1 / m)
            assert snap.m_of_I == len(snap.moved_point_ids)
            if snap.acceptable:
                assert snap.moved_point_ids == ()
            else:
                assert snap.m_of_I <= 2 * n * snap.dY + 1 + 1e-9
                kids = node.children()
                assert tree[kids[0]].x_count + tree[kids[1]].x_count == snap.x_count
        for mv in rep.moves:
            left, right = mv.node.children()
            old_side = left if left.contains(mv.old_value) else right
            new_side = left if left.contains(mv.new_value) else right
            assert old_side != new_side
            assert new_side.left < mv.new_value < new_side.right

    @pytest.mark.parametrize("layout", ["zeros", "ones", "cluster", "duplicates"])
    def test_bound_holds_for_adversarial_inputs(self, layout):
        n, m = 513, 64
        u = {
            "zeros": np.zeros(n),
            "ones": np.ones(n),
            "cluster": 0.3 + 1e-9 * np.arange(n),
            "duplicates": np.repeat([0.125, 0.6], [300, 213]),
        }[layout]
        rep = regularize_uniform(u, RegularizerConfig(m=m, seed=7))
        assert kolmogorov_distance(rep.modified, uniform01()).value <= 2 / m
        assert verify_final_partition(rep)
        assert rep.depth <= depth_bound(m) + 1

    @pytest.mark.parametrize("n", [2, 4, 100, 1000])
    def test_even_n_holds_out_last(self, n):
        u = uniform_sample(n, n)
        for m in (1, n / 2, n):
            rep = regularize_uniform(u, RegularizerConfig(m=m, seed=3))
            assert rep.held_out == n - 1 and rep.grid.n == n - 1
            assert rep.modified.values[-1] == u[-1]
            assert rep.guarantee == pytest.approx(2 / m + 2 / n)
            assert kolmogorov_distance(rep.modified, uniform01()).value <= rep.guarantee
            assert verify_final_partition(rep)

    def test_single_point(self):
        for m in (0.5, 1.0):
            rep = regularize_uniform([0.9], RegularizerConfig(m=m, seed=0))
            assert rep.m1 <= 1 and verify_final_partition(rep)

    def test_depth_cap_is_enforced(self):
        with pytest.raises(RuntimeError):
            regularize_uniform(np.zeros(101), RegularizerConfig(m=100, seed=0, max_level=1))


class TestGeneral:
    def test_uniform_model_matches_uniform_run(self):
        u = uniform_sample(501, 8)
        cfg = RegularizerConfig(m=40, seed=2)
        out, rep = regularize_general(u, uniform01(), cfg)
        assert np.array_equal(out.values, regularize_uniform(u, cfg).modified.values)

    def test_exponential(self):
        for seed in range(3):
            x = sample_iid(exponential(1.0), 10_001, make_rng(seed))
            out, rep = regularize_general(x, exponential(1.0), RegularizerConfig(m=100, seed=seed))
            assert kolmogorov_distance(out, exponential(1.0)).value <= 0.02
            unmoved = np.setdiff1d(np.arange(x.values.size), [mv.observation_id for mv in rep.moves])
            assert np.array_equal(out.values[unmoved], x.values[unmoved])

    def test_bernoulli(self):
        model = bernoulli(0.3)
        x = sample_iid(model, 10_001, make_rng(4))
        out, _ = regularize_general(x, model, RegularizerConfig(m=100, seed=4))
        assert kolmogorov_distance(out, model).value <= 0.02
        assert set(np.unique(out.values)) <= {0.0, 1.0}


class TestEqualizeHalves:
    def test_balanced_node_gives_no_records(self):
        # grid 0, .2, .4 | .6, .8 against points 3 | 2
        g = GridSpec(5)
        assert equalize_halves([0.1, 0.3, 0.45, 0.7, 0.9], DyadicInterval(0, 0), g, seed=0) == []

    def test_worked_instance(self):
        recs = equalize_halves(WORKED, DyadicInterval(0, 0), GridSpec(3), seed=9)
        assert len(recs) == 1
        assert recs[0].old_value in WORKED and 0.5 < recs[0].new_value < 1.0

    def test_requires_equalized_node(self):
        with pytest.raises(ValueError):
            equalize_halves([0.1, 0.2], DyadicInterval(0, 0), GridSpec(3), seed=0)
        with pytest.raises(DomainError):
            equalize_halves([0.1, 0.9], DyadicInterval(1, 0), GridSpec(3), seed=0)

    @settings(max_examples=200, deadline=None)
    @given(odd_n(), st.integers(0, 3), st.integers(0, 2**40))
    def test_record_count_bound(self, n, level, seed):
        rng = np.random.default_rng(seed)
        iv = DyadicInterval(level, int(rng.integers(0, 2**level)))
        g = GridSpec(n)
        k = int(g.count_in(level, iv.index))
        pts = iv.left + rng.random(k) ** int(rng.integers(1, 6)) * iv.length
        recs = equalize_halves(pts, iv, g, seed)
        assert len(recs) <= 2 * n * local_discrepancy_dY(pts, iv, g) + 1
        moved = {r.observation_id: r.new_value for r in recs}
        after = np.array([moved.get(i, p) for i, p in enumerate(pts)])
        left, right = iv.children()
        assert np.count_nonzero(left.contains(after)) == g.count_in(level + 1, left.index)
        assert after.size == pts.size

    def test_donors_are_uniform(self):
        # 6 | 3 points against 5 | 4 grid points: each left point donates about equally often
        pts = np.array([0.05, 0.1, 0.2, 0.3, 0.4, 0.45, 0.6, 0.8, 0.9])
        g = GridSpec(9)
        hits = np.zeros(6)
        for seed in range(5000):
            (rec,) = equalize_halves(pts, DyadicInterval(0, 0), g, seed)
            hits[rec.observation_id] += 1
        from scipy import stats
        assert stats.chisquare(hits).pvalue > 1e-4


class TestCoupling:
    def test_grid_sample_has_no_unacceptable_moves(self):
        n = 1001
        m2, tree = run_algorithm2(np.arange(n) / n, RegularizerConfig(m=30, seed=0))
        assert m2 == 0 and tree.acceptable.all()

    def test_truncation_level(self):
        n = 1001
        _, tree = run_algorithm2(uniform_sample(n, 1), RegularizerConfig(m=30, seed=1))
        assert tree.depth == math.ceil(math.log2(n)) + 1

    def test_snapshots_agree_on_common_nodes(self):
        for seed in range(5):
            u = uniform_sample(1001, seed)
            cfg = RegularizerConfig(m=30, seed=seed)
            rep = regularize_uniform(u, cfg)
            _, tree2 = run_algorithm2(u, cfg)
            for node in rep.tree:
                a, b = rep.tree[node], tree2[node]
                assert (a.x_count, a.dY, a.acceptable, a.equalized, a.moved_point_ids, a.m_of_I) == \
                       (b.x_count, b.dY, b.acceptable, b.equalized, b.moved_point_ids, b.m_of_I)
                assert np.array_equal(a.positions, b.positions)

    @settings(max_examples=100, deadline=None)
    @given(odd_n(), st.floats(0.05, 1.0), st.integers(0, 2**40))
    def test_m1_at_most_m2(self, n, frac, seed):
        m = max(frac * n, 1.0)
        m1, m2 = run_coupled(uniform_sample(n, seed), RegularizerConfig(m=m, seed=seed))
        assert m1 <= m2

    def test_acceptable_root_means_no_moves(self):
        u = (np.arange(101) + 0.5) / 101
        assert run_coupled(u, RegularizerConfig(m=50, seed=0))[0] == 0

    def test_repeatable(self):
        u = uniform_sample(2001, 5)
        cfg = RegularizerConfig(m=100, seed=5)
        assert run_coupled(u, cfg) == run_coupled(u, cfg)


class TestFinalPartition:
    def test_tampered_leaf_is_rejected(self):
        rep = regularize_uniform(uniform_sample(1001, 6), RegularizerConfig(m=100, seed=6))
        assert verify_final_partition(rep)
        leaf = rep.tree.row(rep.leaf_set[0])
        gap = np.array(rep.tree.gap)
        gap[leaf] = 1001  # d_Y = 1 > 1/m
        tampered = RunReport(rep.modified, rep.moves, rep.m1, rep.tree.with_columns(gap=gap), rep.leaf_set,
                             rep.grid, rep.m, rep.m_effective, rep.held_out)
        assert not verify_final_partition(tampered)

    def test_missing_leaf_is_rejected(self):
        rep = regularize_uniform(uniform_sample(1001, 7), RegularizerConfig(m=100, seed=7))
        broken = RunReport(rep.modified, rep.moves, rep.m1, rep.tree, rep.leaf_set[1:], rep.grid, rep.m,
                           rep.m_effective, rep.held_out)
        assert not verify_final_partition(broken)

    def test_stricter_budget_is_rejected(self):
        rep = regularize_uniform(uniform_sample(1001, 8), RegularizerConfig(m=20, seed=8))
        assert verify_final_partition(rep)
        assert not verify_final_partition(rep, m=1001)
