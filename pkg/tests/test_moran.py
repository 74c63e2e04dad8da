import math

import numpy as np
import pytest

from clonepit import (
    Exponential,
    InputEvent,
    PointMass,
    gw_survival_formula,
    mean_fitness,
    moran_init,
    moran_run,
    moran_step,
    write_trace_csv,
)
from clonepit.pit import ConfigurationError
from clonepit.rng import replicate_rng


class TestInit:
    def test_validation(self):
        with pytest.raises(ConfigurationError):
            moran_init(1, [1], [0.0])
        with pytest.raises(ConfigurationError):
            moran_init(10, [5, 5], [0.0])
        with pytest.raises(ConfigurationError):
            moran_init(10, [4, 5], [0.0, 1.0])
        with pytest.raises(ConfigurationError):
            moran_init(10, [-1, 11], [0.0, 1.0])
        # free mutation and a fixed schedule are mutually exclusive
        with pytest.raises(ConfigurationError):
            moran_init(
                10, [10], [0.0],
                lam=1.0, gamma=Exponential(1.0),
                schedule=[InputEvent(1, 0.5, 1.0, True)],
            )
        with pytest.raises(ConfigurationError):
            moran_init(10, [10], [0.0], lam=1.0)
        with pytest.raises(ConfigurationError):
            moran_init(10, [5, 5], [0.0, 1.0], schedule=[InputEvent(1, 0.5, 1.0, True)])

    def test_mean_fitness(self):
        st = moran_init(10, [5, 5], [0.0, 1.0])
        assert mean_fitness(st) == pytest.approx(0.5)

    def test_clock_rescaling(self):
        st = moran_init(100, [100], [0.0])
        st.clock = 2.0
        assert st.raw_clock == pytest.approx(2.0 * math.log(100))


class TestRuns:
    def test_counts_are_conserved(self):
        st = moran_init(200, [150, 50], [0.0, 0.5])
        res = moran_run(st, 1.0, np.random.default_rng(0))
        assert sum(res.state.counts) == 200
        assert res.n_events > 0

    def test_no_events_once_homogeneous(self):
        # with one type left and no mutation source the total rate is zero,
        # so a generous horizon costs nothing
        st = moran_init(100, [99, 1], [0.0, 1.0])
        res = moran_run(st, 500.0, np.random.default_rng(7), trace=False)
        assert len(res.state.counts) == 1

    def test_trace_grid_and_heights(self):
        st = moran_init(1000, [900, 100], [0.0, 1.0])
        res = moran_run(st, 1.0, np.random.default_rng(1), grid_step=0.25)
        tr = res.trace
        np.testing.assert_allclose(tr.times, [0.0, 0.25, 0.5, 0.75, 1.0])
        assert set(tr.heights) == {0, 1}
        # height of a type holding k individuals is log(1+k)/log N
        assert tr.heights[1][0] == pytest.approx(math.log(101) / math.log(1000))
        for h in tr.heights.values():
            assert np.all((h >= 0.0) & (h <= 1.0))

    def test_horizon_positive(self):
        st = moran_init(50, [50], [0.0])
        with pytest.raises(ConfigurationError):
            moran_run(st, 0.0, np.random.default_rng(3))

    def test_step_returns_kind(self):
        st = moran_init(
            100, [100], [0.0], lam=5.0, gamma=PointMass(1.0)
        )
        rng = np.random.default_rng(4)
        kinds = {moran_step(st, rng) for _ in range(50)}
        assert kinds == {"resampling", "mutation"}


class TestSchedule:
    def test_scheduled_mutation_creates_type(self):
        st = moran_init(500, [500], [0.0], schedule=[InputEvent(1, 0.5, 1.0, True)])
        res = moran_run(st, 3.0, np.random.default_rng(5))
        assert 1 in res.trace.heights
        born = res.trace.heights[1]
        # absent before t=0.5 on the grid, present right after birth
        grid = res.trace.times
        assert born[grid < 0.5].max() == 0.0
        (ind,) = res.indicators
        assert ind.index == 1 and ind.born == pytest.approx(0.5)
        assert res.indicator_vector() == [(1, ind.flag)]

    def test_indicator_eval_time_offset(self):
        st = moran_init(500, [500], [0.0], schedule=[InputEvent(1, 0.5, 1.0, True)])
        res = moran_run(st, 3.0, np.random.default_rng(6))
        (ind,) = res.indicators
        assert ind.eval_time == pytest.approx(0.5 + 1.0 / math.sqrt(math.log(500)))

    def test_indicator_threshold_override(self):
        # threshold 1 flags any mutant still alive at evaluation time
        st = moran_init(500, [499, 1], [0.0, 1.0])
        res = moran_run(
            st, 2.0, np.random.default_rng(8),
            initial_indicators=True, indicator_threshold=1.0,
            indicator_offset=1e-6, trace=False,
        )
        (ind,) = res.indicators
        assert ind.flag and ind.count >= 1


class TestSelection:
    def test_single_advantageous_mutant_sweep_frequency(self):
        # survival of the (1+s)-biased line from one copy: s/(1+s) = 1/2.
        # 152 of these 300 seeded runs fix, within MC error of that.
        fixed = 0
        reps = 300
        for r in range(reps):
            st = moran_init(100, [99, 1], [0.0, 1.0])
            res = moran_run(st, 60.0, replicate_rng(42, r), trace=False, indicators=False)
            fixed += res.state.count_of(1) == 100
        assert fixed == 152
        p = gw_survival_formula(2.0, 1.0)
        se = math.sqrt(p * (1 - p) / reps)
        assert abs(fixed / reps - p) < 3.5 * se

    def test_single_mutant_contender_frequency(self):
        # the mutant line behaves like a birth-death process with rates
        # (1+a, 1) until the indicator check log N individuals later;
        # the geometric tail of that process puts the flag near 0.41
        hits = 0
        reps = 600
        for r in range(reps):
            st = moran_init(1000, [999, 1], [0.0, 1.0])
            res = moran_run(
                st, 0.45, replicate_rng(7, r), trace=False, initial_indicators=True
            )
            ((_, flag),) = res.indicator_vector()
            hits += flag
        assert hits == 261
        n = 1000
        tt = math.sqrt(math.log(n))
        grow = math.exp(tt)
        p0 = (grow - 1.0) / (2.0 * grow - 1.0)
        eta = 2.0 * p0
        ref = (1.0 - p0) * eta ** (math.ceil(math.log(n)) - 1)
        assert abs(hits / reps - ref) < 0.08


def test_write_trace_csv(tmp_path):
    st = moran_init(200, [150, 50], [0.0, 1.0])
    res = moran_run(st, 1.0, np.random.default_rng(9), grid_step=0.5)
    out = tmp_path / "trace.csv"
    write_trace_csv(res, out, "0123456789abcdef")
    lines = out.read_text().strip().splitlines()
    assert "0123456789abcdef" in lines[0]
    assert lines[1] == "time,type_id,count,H,mean_fitness"
    # long format: one row per grid time and live type
    assert len(lines) - 2 >= len(res.trace.times)
    first = lines[2].split(",")
    assert first[0] == "0" and first[1] == "0" and first[2] == "150"
