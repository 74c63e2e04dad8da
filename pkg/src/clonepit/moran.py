"""Finite-population Moran model whose large-``N`` limit is the trajectory system.

``N`` individuals carry types with fixed fitness values.  On the generation
clock, an ordered pair resamples (``j`` replaces an individual of ``l``) at
rate ``x_j * x_l * (1 + (m_j - m_l)^+) / N``, and mutation hits a uniformly
chosen individual at total rate ``lam / log(N)``; the mutant founds a new
type with its parent's fitness plus an increment.  All public clocks here
are *rescaled*: one unit of engine time is ``log N`` generations, so
mutations arrive at rate ``lam`` and pair resampling at
``x_j * x_l * (1 + (m_j - m_l)^+) * log(N) / N``.

On the rescaled clock the log-frequency of type ``i`` is

    H_i(t) = log(1 + X_i(t)) / log(N),

which converges to the piecewise-linear trajectories of
:mod:`clonepit.pit`.  A mutant born at time ``T`` is classified a contender
when its raw count reaches ``log N`` by time ``T + 1/sqrt(log N)``; these
emergent indicator values couple a Moran run to the limiting trajectory
system driven by the same mutation times and increments.

The inner loop is deliberately plain Python over scalar floats: per event it
maintains the aggregates ``T_a = sum_b x_b * (1 + (m_a - m_b)^+)`` in O(k)
for k live types, consumes uniforms from a block buffer, and avoids all
allocation.  Aggregates are rebuilt from scratch periodically so float
drift cannot accumulate over tens of millions of events.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from .inputs import IncrementDistribution, InputEvent
from .pit import ConfigurationError, GenealogyTree
from .rng import UniformBuffer, as_generator

__all__ = [
    "MoranState",
    "ContenderIndicator",
    "LogFrequencyTrace",
    "MoranResult",
    "moran_init",
    "moran_step",
    "moran_run",
    "mean_fitness",
    "write_trace_csv",
]

_REBUILD_EVERY = 8192


@dataclass(frozen=True)
class ContenderIndicator:
    """Emergent contender classification of one mutant type."""

    index: int
    born: float
    eval_time: float
    count: int
    flag: bool


class MoranState:
    """Counts, fitness values and mutation source of one Moran population.

    Built by :func:`moran_init`.  The mutation source is either *free*
    (Poisson arrivals at rescaled rate ``lam`` with increments from
    ``gamma``) or a *coupled* schedule of fixed ``(time, increment)`` pairs;
    a schedule makes runs comparable to a trajectory-system replay driven by
    the same input.
    """

    def __init__(self, n, counts, fitness, lam, gamma, schedule):
        self.n = int(n)
        self.log_n = math.log(self.n)
        self.ids: list[int] = list(range(len(counts)))
        self.counts: list[float] = [float(c) for c in counts]
        self.fitness: list[float] = [float(m) for m in fitness]
        self.lam = float(lam)
        self.gamma = gamma
        self.schedule = schedule
        self.sched_pos = 0
        self.clock = 0.0
        self.events = 0
        self.mutations = 0
        self.sum_xm = sum(c * m for c, m in zip(self.counts, self.fitness))
        self.type_fitness: dict[int, float] = {
            i: m for i, m in zip(self.ids, self.fitness)
        }
        self.type_birth: dict[int, float] = {i: 0.0 for i in self.ids}
        self.genealogy = GenealogyTree()
        for i in self.ids:
            self.genealogy.add_root(i)
        self._next_id = len(self.ids)
        self._aggr: list[float] = []
        self._rebuild()

    # -- aggregates -----------------------------------------------------------

    def _rebuild(self):
        """Recompute T_a = sum_b x_b * (1 + (m_a - m_b)^+) for live types."""
        x, m = self.counts, self.fitness
        k = len(x)
        aggr = [0.0] * k
        for a in range(k):
            ma = m[a]
            s = 0.0
            for b in range(k):
                d = ma - m[b]
                s += x[b] * (1.0 + d) if d > 0.0 else x[b]
            aggr[a] = s
        self._aggr = aggr

    @property
    def raw_clock(self) -> float:
        """Elapsed generations (the unrescaled clock)."""
        return self.clock * self.log_n

    def count_of(self, tid: int) -> int:
        try:
            return int(self.counts[self.ids.index(tid)])
        except ValueError:
            return 0

    def live_types(self) -> dict[int, int]:
        return {i: int(c) for i, c in zip(self.ids, self.counts)}


def moran_init(n, counts, fitness, *, lam=0.0, gamma=None, schedule=None) -> MoranState:
    """Validate and build a Moran population.

    Parameters
    ----------
    n:
        Population size, at least 2.
    counts, fitness:
        Per-type initial counts (positive, summing to ``n``) and fitness
        values.  Types get ids 0, 1, ... in listed order.
    lam, gamma:
        Free-mutation configuration: rescaled arrival rate and increment
        law.  ``lam > 0`` requires ``gamma``.
    schedule:
        Coupled mutation schedule, an iterable of
        :class:`~clonepit.inputs.InputEvent` (contender flags are ignored;
        indicator values are emergent here).  Mutually exclusive with
        ``lam``/``gamma``.  Event indices become type ids and must start
        past the initial ids.
    """
    if n < 2:
        raise ConfigurationError(f"population size must be >= 2, got {n}")
    counts = list(counts)
    fitness = list(fitness)
    if not counts or len(counts) != len(fitness):
        raise ConfigurationError("counts and fitness must be non-empty and match")
    if any(c <= 0 or c != int(c) for c in counts):
        raise ConfigurationError(f"initial counts must be positive integers, got {counts}")
    if sum(counts) != n:
        raise ConfigurationError(
            f"initial counts must sum to the population size {n}, got {sum(counts)}"
        )
    if schedule is not None:
        if lam:
            raise ConfigurationError("a mutation schedule excludes a free mutation rate")
        sched = []
        prev = -math.inf
        for ev in schedule:
            if isinstance(ev, InputEvent):
                t, inc, idx = ev.time, ev.increment, ev.index
            else:
                t, inc, idx = ev
            if t <= prev:
                raise ConfigurationError("schedule times must be strictly increasing")
            prev = t
            if idx < len(counts):
                raise ConfigurationError(
                    f"schedule index {idx} collides with an initial type id"
                )
            sched.append((float(t), float(inc), int(idx)))
        schedule = sched
    elif lam:
        if lam < 0:
            raise ConfigurationError(f"lambda must be >= 0, got {lam}")
        if not isinstance(gamma, IncrementDistribution):
            raise ConfigurationError("a free mutation rate needs an increment distribution")
    return MoranState(n, counts, fitness, lam, gamma, schedule)


def mean_fitness(state: MoranState) -> float:
    """Population mean fitness ``sum_i X_i m_i / N``."""
    return state.sum_xm / state.n


@dataclass
class LogFrequencyTrace:
    """Sampled log-frequencies on the rescaled clock.

    ``times`` is the sample grid (uniform grid points plus mutation and
    indicator-evaluation times).  ``heights[tid]`` gives
    ``log(1 + X_tid) / log N`` at each sample; types absent at a time have
    height 0.  ``mean_fitness`` is sampled alongside.
    """

    times: np.ndarray
    heights: dict[int, np.ndarray]
    mean_fitness: np.ndarray
    counts: dict[int, np.ndarray]

    @staticmethod
    def _build(n, samples, all_ids):
        log_n = math.log(n)
        times = np.asarray([s[0] for s in samples])
        fbar = np.asarray([s[3] for s in samples])
        counts = {tid: np.zeros(len(samples)) for tid in all_ids}
        for row, (_, ids, xs, _) in enumerate(samples):
            for tid, c in zip(ids, xs):
                counts[tid][row] = c
        heights = {
            tid: np.log1p(arr) / log_n for tid, arr in counts.items()
        }
        return LogFrequencyTrace(times, heights, fbar, counts)


@dataclass
class MoranResult:
    """Outcome of one :func:`moran_run`."""

    state: MoranState
    trace: LogFrequencyTrace
    indicators: list[ContenderIndicator]
    n_events: int
    _last_kind: str = field(default="", repr=False)

    def indicator_vector(self) -> list[tuple[int, bool]]:
        return [(ind.index, ind.flag) for ind in sorted(self.indicators, key=lambda i: i.index)]


def moran_step(state: MoranState, rng) -> str:
    """Apply exactly one event; returns its kind (``"resampling"`` or ``"mutation"``).

    Raises :class:`ConfigurationError` when nothing can happen any more
    (monomorphic population without a pending mutation source).
    """
    res = _run_core(state, as_generator(rng), math.inf, max_events=1)
    if res.n_events == 0:
        raise ConfigurationError("no event possible: monomorphic and no pending mutation")
    return res._last_kind


def moran_run(
    state: MoranState,
    horizon: float,
    rng,
    *,
    grid_step: float = 0.01,
    indicators: bool = True,
    initial_indicators: bool = False,
    indicator_offset: float | None = None,
    indicator_threshold: float | None = None,
    trace: bool = True,
) -> MoranResult:
    """Run the population to the rescaled ``horizon``.

    ``indicators`` schedules a contender check for every mutant born during
    the run; ``initial_indicators`` additionally checks every initial type
    except the largest one (useful for single-mutant survival experiments).
    The check time offset defaults to ``1/sqrt(log N)`` after birth and the
    count threshold to ``log N``.

    The state is consumed: run each fresh state exactly once.
    """
    if horizon <= 0:
        raise ConfigurationError(f"horizon must be positive, got {horizon}")
    return _run_core(
        state,
        as_generator(rng),
        horizon,
        grid_step=grid_step,
        indicators=indicators,
        initial_indicators=initial_indicators,
        indicator_offset=indicator_offset,
        indicator_threshold=indicator_threshold,
        keep_trace=trace,
    )


def _run_core(
    state: MoranState,
    rng,
    horizon: float,
    *,
    max_events: int | None = None,
    grid_step: float = 0.01,
    indicators: bool = True,
    initial_indicators: bool = False,
    indicator_offset: float | None = None,
    indicator_threshold: float | None = None,
    keep_trace: bool = False,
) -> MoranResult:
    n = state.n
    log_n = state.log_n
    c_resc = log_n / n
    t_off = indicator_offset if indicator_offset is not None else 1.0 / math.sqrt(log_n)
    thresh = indicator_threshold if indicator_threshold is not None else log_n

    ids = state.ids
    x = state.counts
    m = state.fitness
    aggr = state._aggr
    lam = state.lam
    buf = UniformBuffer(rng)
    nextu = buf.next
    log = math.log

    pending: list[tuple[float, int]] = []
    done_inds: list[ContenderIndicator] = []
    if initial_indicators and indicators and len(ids) > 1:
        major = max(range(len(ids)), key=lambda i: x[i])
        for i, tid in enumerate(ids):
            if i != major:
                heapq.heappush(pending, (t_off, tid))

    samples = []
    all_ids = set(ids)
    if keep_trace and math.isfinite(horizon):
        grid = np.arange(0.0, horizon + 0.5 * grid_step, grid_step)
        grid[-1] = min(grid[-1], horizon)
    else:
        grid = np.empty(0)
    gp = 0
    glen = grid.size

    def snapshot(t):
        samples.append((t, tuple(ids), tuple(x), state.sum_xm / n))

    def settle(t):
        """Evaluate everything scheduled up to time t against the current state."""
        nonlocal gp
        while True:
            t_ind = pending[0][0] if pending else math.inf
            t_grid = grid[gp] if gp < glen else math.inf
            if t_ind <= t_grid and t_ind <= t:
                due, tid = heapq.heappop(pending)
                try:
                    cnt = x[ids.index(tid)]
                except ValueError:
                    cnt = 0.0
                done_inds.append(
                    ContenderIndicator(tid, state.type_birth[tid], due, int(cnt), cnt >= thresh)
                )
                if keep_trace:
                    snapshot(due)
            elif t_grid <= t:
                snapshot(t_grid)
                gp += 1
            else:
                break

    last_kind = ""
    events_done = 0
    rebuild_in = _REBUILD_EVERY
    while True:
        if max_events is not None and events_done >= max_events:
            break
        k = len(ids)

        # total pair-resampling rate on the rescaled clock
        total = 0.0
        for a in range(k):
            total += x[a] * (aggr[a] - x[a])
        total *= c_resc

        sched = state.schedule
        t_mut = math.inf
        if sched is not None and state.sched_pos < len(sched):
            t_mut = sched[state.sched_pos][0]

        rate_all = total + (lam if sched is None else 0.0)
        if rate_all > 0.0:
            t_new = state.clock - log(1.0 - nextu()) / rate_all
        else:
            t_new = math.inf

        if t_mut < t_new:
            # the scheduled mutation preempts; the exponential draw is
            # discarded, which is exact by memorylessness
            if t_mut > horizon:
                break
            settle(t_mut)
            state.clock = t_mut
            t, inc, idx = sched[state.sched_pos]
            state.sched_pos += 1
            _apply_mutation(state, idx, inc, nextu, pending, t_off, indicators)
            all_ids.add(idx)
            aggr = state._aggr
            events_done += 1
            state.events += 1
            last_kind = "mutation"
            if keep_trace:
                snapshot(t_mut)
            continue

        if t_new > horizon or math.isinf(t_new):
            break
        settle(t_new)
        state.clock = t_new

        if sched is None and lam > 0.0 and nextu() * rate_all < lam:
            idx = state._next_id
            inc = float(state.gamma.sample(rng))
            _apply_mutation(state, idx, inc, nextu, pending, t_off, indicators)
            all_ids.add(idx)
            aggr = state._aggr
            events_done += 1
            state.events += 1
            last_kind = "mutation"
            if keep_trace:
                snapshot(t_new)
            continue

        # -- resampling: pick reproducer a with weight x_a (T_a - x_a), then
        #    victim b != a with weight x_b (1 + (m_a - m_b)^+)
        u = nextu() * total / c_resc
        acc = 0.0
        a = k - 1
        for i in range(k):
            acc += x[i] * (aggr[i] - x[i])
            if u < acc:
                a = i
                break
        ma = m[a]
        tgt = nextu() * (aggr[a] - x[a])
        acc = 0.0
        b = -1
        for i in range(k):
            if i == a:
                continue
            d = ma - m[i]
            acc += x[i] * (1.0 + d) if d > 0.0 else x[i]
            b = i
            if tgt < acc:
                break

        x[a] += 1.0
        x[b] -= 1.0
        state.sum_xm += ma - m[b]
        mb = m[b]
        for i in range(k):
            da = m[i] - ma
            db = m[i] - mb
            aggr[i] += (1.0 + da if da > 0.0 else 1.0) - (1.0 + db if db > 0.0 else 1.0)
        if x[b] == 0.0:
            ids.pop(b)
            x.pop(b)
            m.pop(b)
            state._rebuild()
            aggr = state._aggr
        events_done += 1
        state.events += 1
        last_kind = "resampling"
        rebuild_in -= 1
        if rebuild_in == 0:
            rebuild_in = _REBUILD_EVERY
            state._rebuild()
            aggr = state._aggr

    # drain checkpoints up to the horizon with the final state
    if math.isfinite(horizon):
        settle(horizon)
        state.clock = horizon

    trace = (
        LogFrequencyTrace._build(n, samples, sorted(all_ids)) if keep_trace else None
    )
    return MoranResult(state, trace, done_inds, events_done, last_kind)


def _apply_mutation(state, idx, inc, nextu, pending, t_off, want_indicator):
    """A uniformly chosen individual founds type ``idx`` with fitness +``inc``."""
    ids, x, m = state.ids, state.counts, state.fitness
    k = len(ids)
    u = nextu() * state.n
    acc = 0.0
    p = k - 1
    for i in range(k):
        acc += x[i]
        if u < acc:
            p = i
            break
    parent = ids[p]
    fit = m[p] + inc
    x[p] -= 1.0
    if x[p] == 0.0:
        ids.pop(p)
        x.pop(p)
        m.pop(p)
    ids.append(idx)
    x.append(1.0)
    m.append(fit)
    state.type_fitness[idx] = fit
    state.type_birth[idx] = state.clock
    state.genealogy.add_edge(parent, idx)
    state.mutations += 1
    state._next_id = max(state._next_id, idx) + 1
    state.sum_xm += inc
    state._rebuild()
    if want_indicator:
        heapq.heappush(pending, (state.clock + t_off, idx))


def _fmt(v: float) -> str:
    return format(v, ".17g")


def write_trace_csv(result: MoranResult, path, scenario_hash: str | None = None):
    """Trace CSV: time, type_id, count, H, mean_fitness (one row per live type)."""
    tr = result.trace
    lines = []
    if scenario_hash:
        lines.append(f"# scenario={scenario_hash}")
    lines.append("time,type_id,count,H,mean_fitness")
    order = sorted(tr.heights)
    for row, t in enumerate(tr.times):
        for tid in order:
            c = tr.counts[tid][row]
            if c > 0.0:
                lines.append(
                    f"{_fmt(float(t))},{tid},{int(c)},"
                    f"{_fmt(float(tr.heights[tid][row]))},{_fmt(float(tr.mean_fitness[row]))}"
                )
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
