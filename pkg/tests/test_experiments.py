import json
import math

import numpy as np
import pytest

from edfreg import experiments as ex
from edfreg.distributions import bernoulli, uniform01
from edfreg.regularizer import RegularizerConfig, regularize_uniform, run_algorithm2
from edfreg.streams import make_rng


def small_plan(**kw):
    base = dict(n_values=(1001,), m_values=(30, 60, 120), trials=6, master_seed=3)
    base.update(kw)
    return ex.TrialPlan(**base)


class TestSweep:
    def test_reproducible_and_serializable(self, tmp_path):
        a = ex.sweep_moves(small_plan())
        b = ex.sweep_moves(small_plan())
        assert a.to_csv() == b.to_csv()
        assert json.dumps(a.as_dict(), sort_keys=True) == json.dumps(b.as_dict(), sort_keys=True)
        assert a.plan["master_seed"] == 3 and a.plan["trials"] == 6
        header = a.to_csv().splitlines()[0].split(",")
        assert header[:7] == ["n", "m", "mean", "stderr", "min", "max", "trials"]
        a.write(tmp_path / "s.csv", "csv")
        assert (tmp_path / "s.csv").read_text() == a.to_csv()

    def test_parallel_matches_serial(self):
        assert ex.sweep_moves(small_plan(), workers=2).to_csv() == ex.sweep_moves(small_plan(), workers=1).to_csv()

    def test_grid_sample_never_moves(self):
        res = ex.sweep_moves(small_plan(), draw=lambda n, rng: np.arange(n) / n)
        assert all(c.max == 0 for c in res.cells)

    def test_full_budget_ratio_at_most_one(self):
        res = ex.sweep_moves(small_plan(n_values=(201,), m_values=(201,), trials=20), keep_raw=True)
        cell = res.cell(m=201)
        assert cell.mean / 201 <= 1.0 and np.all(cell.values <= 201)

    def test_other_models(self):
        res = ex.sweep_moves(small_plan(model=bernoulli(0.3), trials=3))
        assert len(res.cells) == 3

    def test_budget_checked(self):
        with pytest.raises(ValueError):
            ex.sweep_moves(small_plan(m_values=(2000,)))

    def test_loglog_slope(self):
        assert ex.loglog_slope([1, 2, 4], [3, 6, 12]) == pytest.approx(1.0)
        assert math.isnan(ex.loglog_slope([1, 2], [0, 1]))


class TestDkw:
    def test_zero_threshold_and_monotone(self):
        res = ex.dkw_tail(200, 300, ex.TailExperimentConfig(t_values=(0.0, 0.5, 1.0, 1.5)), seed=1)
        freqs = [c.mean for c in res.cells]
        assert freqs[0] == 1.0 <= res.cells[0].extra["bound"]
        assert all(a >= b for a, b in zip(freqs, freqs[1:]))
        assert all(c.extra["within"] for c in res.cells)


class TestDeltaTail:
    def test_short_nodes_are_always_acceptable(self):
        n = 1001
        res = ex.delta_tail(n, 1024, 200, ex.TailExperimentConfig(k0=float(n)), seed=2)
        assert res.extras["mean_scaled"] == 0.0
        assert all(c.max == 0 for c in res.cells)

    def test_small_run(self):
        res = ex.delta_tail(2001, 16, 500, ex.TailExperimentConfig.for_budget(2001, 2001.0), seed=3)
        assert res.extras["m"] == pytest.approx(2001.0)
        assert 0 < res.extras["mean_scaled"] < 3
        freqs = [c.mean for c in res.cells]
        assert all(a >= b for a, b in zip(freqs, freqs[1:]))

    def test_k_must_be_power_of_two(self):
        with pytest.raises(ValueError):
            ex.delta_tail(101, 3, 10)


class TestLowerBound:
    def test_equal_spread_has_no_dense_cells(self):
        n, m = 10_000, 1000
        res = ex.lowerbound_experiment(n, m, 5, draw=lambda n, rng: (np.arange(n) + 0.5) / n)
        assert res.cell(stat="dense_fraction").max == 0.0
        assert res.cell(stat="lb_moves_estimate").max == 0.0

    def test_parameters_checked(self):
        with pytest.raises(ValueError):
            ex.lowerbound_experiment(10_000, 1001, 1)  # m^2/n not an integer
        with pytest.raises(ValueError):
            ex.lowerbound_experiment(10_000, 10_000, 1)  # n/k = 1

    def test_oracle(self):
        from scipy import stats
        direct = 1 - stats.binom.cdf(110, 10_000, 0.01)
        assert ex.binomial_dense_probability(10_000, 100) == pytest.approx(direct, rel=1e-9)


class TestInvariants:
    def test_check_invariants_all_true(self):
        u = make_rng(4).random(1001)
        cfg = RegularizerConfig(m=100, seed=4)
        rep = regularize_uniform(u, cfg)
        _, tree2 = run_algorithm2(u, cfg)
        assert all(ex.check_invariants(rep, tree2).values())

    def test_verify_runs(self):
        out = ex.verify_runs(1001, 30, 10, seed=1)
        assert out["all_ok"] and out["coupling_ok"] == 10 and not out["failures"]

    def test_bench(self):
        res = ex.bench_complexity([2**10, 2**12], 64, 2, seed=0)
        assert res.extras["octaves"] == 2.0 and math.isfinite(res.extras["exponent"])
        with pytest.raises(ValueError):
            ex.bench_complexity([1024], 64, 1)


def test_pilot_constants_recorded():
    assert ex.PILOT_SLACK == 1.5 and ex.PILOT_MOVE_RATIO > 0 and ex.PILOT_DELTA_MEAN > 0
