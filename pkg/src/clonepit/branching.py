"""Continuous-time binary branching processes as independent references.

A population of ``Z`` individuals gains one at rate ``birth * Z`` and loses
one at rate ``death * Z``.  Closed forms for survival and level-crossing
probabilities make this the calibration target for the stochastic engines:
a mutant line in the population model behaves like such a process while
rare, so these formulas predict contender probabilities and sweep times.

:func:`gw_run` is an exact Gillespie simulation.  The embedded jump chain
is a biased random walk (up with probability ``birth / (birth + death)``),
and the holding time in state ``Z`` is exponential with rate
``(birth + death) * Z``; both are drawn in numpy blocks so a run costs a
handful of array operations rather than one Python iteration per event.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .pit import ConfigurationError
from .rng import as_generator

__all__ = [
    "GwParams",
    "GwRun",
    "gw_survival_formula",
    "gamblers_ruin",
    "gw_run",
]

_BLOCK0 = 64
_BLOCK_MAX = 16384


@dataclass(frozen=True)
class GwParams:
    """Birth rate, death rate and initial size of one branching run."""

    birth: float
    death: float
    initial: int = 1

    def __post_init__(self):
        if self.birth < 0 or self.death < 0:
            raise ConfigurationError(
                f"rates must be nonnegative, got birth={self.birth} death={self.death}"
            )
        if self.birth == 0 and self.death == 0:
            raise ConfigurationError("at least one of birth and death must be positive")
        if self.initial < 1 or self.initial != int(self.initial):
            raise ConfigurationError(f"initial size must be a positive integer, got {self.initial}")

    @property
    def drift(self) -> float:
        return self.birth - self.death


@dataclass(frozen=True)
class GwRun:
    """Summary of one simulated path.

    ``escaped`` means the population exceeded the cap and the run stopped
    early; since the extinction probability from the cap is ``(d/b)^cap``,
    an escaped supercritical run is treated as having survived.
    ``level_times`` holds the first-passage time for each requested level
    that was reached.
    """

    params: GwParams
    extinct: bool
    escaped: bool
    extinction_time: float | None
    final_value: int
    max_level: int
    clock: float
    level_times: dict[int, float] = field(default_factory=dict)

    @property
    def survived(self) -> bool:
        return not self.extinct


def gw_survival_formula(birth: float, death: float, initial: int = 1) -> float:
    """Survival probability ``1 - (death/birth)^initial`` of a supercritical process.

    Requires ``birth > death``; for ``birth <= death`` survival has
    probability zero and callers should handle that case themselves rather
    than read it off a formula with a removable singularity.
    """
    if birth <= death:
        raise ConfigurationError(
            f"survival formula needs birth > death, got {birth} <= {death}"
        )
    if initial < 1:
        raise ConfigurationError(f"initial size must be >= 1, got {initial}")
    return 1.0 - (death / birth) ** initial


def gamblers_ruin(start: int, goal: int, birth: float, death: float) -> float:
    """Level-crossing number for the embedded walk of a binary branching process.

    For ``birth <= death`` returns ``start / goal``, an upper bound on the
    probability of reaching ``goal`` before 0 from ``start``.  For
    ``birth > death`` returns ``(death/birth)**(goal - start)``, the
    probability that a walk currently at ``goal`` ever falls back down to
    ``start``.
    """
    if not (0 < start < goal):
        raise ConfigurationError(f"need 0 < start < goal, got start={start} goal={goal}")
    if int(start) != start or int(goal) != goal:
        raise ConfigurationError("start and goal must be integers")
    if birth <= death:
        return start / goal
    return (death / birth) ** (goal - start)


def gw_run(
    params: GwParams,
    rng,
    *,
    horizon: float = math.inf,
    cap: int = 10_000_000,
    levels: tuple[int, ...] = (),
) -> GwRun:
    """Simulate one exact path until extinction, the cap, or the horizon.

    ``levels`` requests first-passage times; each level must not exceed the
    cap or the run could stop before reaching it.
    """
    if horizon <= 0:
        raise ConfigurationError(f"horizon must be positive, got {horizon}")
    if cap <= params.initial:
        raise ConfigurationError(f"cap {cap} must exceed the initial size {params.initial}")
    rng = as_generator(rng)
    b, d = params.birth, params.death
    p_up = b / (b + d)
    rate = b + d
    levels = tuple(sorted(set(int(x) for x in levels)))
    if levels and levels[-1] > cap:
        raise ConfigurationError(f"level {levels[-1]} exceeds the cap {cap}")

    z = params.initial
    t = 0.0
    max_level = z
    level_times: dict[int, float] = {}
    pending = [lv for lv in levels if lv > z]
    for lv in levels:
        if lv <= z:
            level_times[lv] = 0.0
    extinct = False
    escaped = False
    t_ext = None
    block = _BLOCK0

    while True:
        steps = np.where(rng.random(block) < p_up, 1, -1)
        path = z + np.cumsum(steps)
        holds = rng.exponential(size=block)
        prev = np.empty(block, dtype=np.int64)
        prev[0] = z
        prev[1:] = path[:-1]
        # entries past an absorption at 0 are garbage (prev hits 0 there);
        # they are cut off below before anything reads them
        with np.errstate(divide="ignore"):
            times = t + np.cumsum(holds / (rate * prev))

        stop = block
        hit_zero = np.flatnonzero(path == 0)
        if hit_zero.size:
            stop = min(stop, hit_zero[0] + 1)
        hit_cap = np.flatnonzero(path >= cap)
        if hit_cap.size:
            stop = min(stop, hit_cap[0] + 1)
        over = np.flatnonzero(times[:stop] > horizon)
        if over.size:
            # the step landing past the horizon never happens
            h = over[0]
            path = path[:h]
            times = times[:h]
            if h:
                max_level = max(max_level, int(path.max()))
                _record_levels(pending, level_times, path, times)
                z = int(path[-1])
            t = horizon
            break

        part = path[:stop]
        if part.size:
            max_level = max(max_level, int(part.max()))
            _record_levels(pending, level_times, part, times[:stop])
            z = int(part[-1])
            t = float(times[stop - 1])
        if hit_zero.size and stop == hit_zero[0] + 1:
            extinct = True
            t_ext = t
            break
        if hit_cap.size and stop == hit_cap[0] + 1:
            escaped = True
            break
        block = min(block * 4, _BLOCK_MAX)

    return GwRun(params, extinct, escaped, t_ext, z, max_level, t, level_times)


def _record_levels(pending, level_times, path, times):
    while pending:
        lv = pending[0]
        idx = np.flatnonzero(path >= lv)
        if idx.size == 0:
            return
        level_times[lv] = float(times[idx[0]])
        pending.pop(0)
