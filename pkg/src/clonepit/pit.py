"""Event-driven engine for piecewise-linear interacting fitness trajectories.

Each type ``i`` carries a trajectory ``H_i`` with values in [0, 1] (its
log-frequency on the macroscopic scale) that is piecewise linear in time.
Between events every trajectory moves at its current slope.  Three kinds of
event punctuate the motion:

* **immigration**: a new trajectory appears at height 0; contenders start
  with slope equal to their fitness increment, non-contenders stay at 0
  forever (latent),
* **extinction**: a trajectory hits 0 from above and is absorbed,
* **resident change**: one or more trajectories hit 1 from below.  With
  ``v*`` the largest slope among the hitters just before the hit, every
  trajectory with positive height has its slope reduced by ``v*`` (the
  kink), the hitter attaining ``v*`` becomes the new resident (ending at
  slope 0 and height 1), and the resident fitness jumps by ``v*``.

The admissible states of a single trajectory are ``{0} x [0, inf)`` union
``(0,1) x R`` union ``{1} x (-inf, 0]``; at every time exactly one
trajectory sits at ``(height, slope) = (1, 0)``: the current resident.

Exact bookkeeping identities are maintained and checked on the fly (see
:meth:`PitState.check_invariants`): the resident fitness equals the starting
fitness plus the sum of all ``v*`` jumps, each type's fitness equals its
parent's plus its increment, and every living trajectory's slope equals its
initial slope minus the fitness gained by the resident since its birth.

Event times are compared with an absolute tolerance of 1e-12; hits within
that window of each other are processed as one simultaneous group
(extinctions first, then the resident change, then any immigration carrying
the same timestamp).  Heights are clamped to [0, 1] after every update, and
hitters are pinned to exactly 0 or 1 at their hit time.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .inputs import InputEvent

__all__ = [
    "ConfigurationError",
    "InvariantViolation",
    "StartEntry",
    "ImmigrationEntry",
    "Trajectory",
    "PitEvent",
    "PitPeek",
    "GenealogyTree",
    "StepPath",
    "PiecewisePath",
    "PitState",
    "write_event_csv",
    "write_trajectories_jsonl",
]

#: absolute tolerance for treating two event times as simultaneous
TIME_EPS = 1e-12
#: slope tolerance used when testing whether a resident change is solitary
SLOPE_EPS = 1e-12
#: tolerance for the exact bookkeeping identities
CHECK_TOL = 1e-9


class ConfigurationError(ValueError):
    """Invalid start configuration, immigration sequence or parameters."""


class InvariantViolation(RuntimeError):
    """An exact bookkeeping identity failed beyond tolerance."""


@dataclass(frozen=True)
class StartEntry:
    """Initial trajectory: height in [0, 1] and slope.

    Admissible pairs follow the state space: slope >= 0 at height 0,
    anything in (0, 1), slope <= 0 at height 1.
    """

    height: float
    slope: float

    def __post_init__(self):
        h, v = self.height, self.slope
        if not 0.0 <= h <= 1.0:
            raise ConfigurationError(f"start height must lie in [0,1], got {h}")
        if h == 0.0 and v < 0.0:
            raise ConfigurationError(f"start at height 0 needs slope >= 0, got {v}")
        if h == 1.0 and v > 0.0:
            raise ConfigurationError(f"start at height 1 needs slope <= 0, got {v}")


@dataclass(frozen=True)
class ImmigrationEntry:
    """Deterministic immigration: arrival time and slope.

    ``increment`` is the fitness increment credited to the new type; it
    defaults to the slope.  A zero slope with a positive increment encodes a
    non-contender: the type is recorded in the genealogy with its fitness
    but its trajectory never leaves height 0.
    """

    time: float
    slope: float
    increment: float | None = None

    def __post_init__(self):
        if not self.time >= 0.0:
            raise ConfigurationError(f"immigration time must be >= 0, got {self.time}")
        if not self.slope >= 0.0:
            raise ConfigurationError(f"immigration slope must be >= 0, got {self.slope}")
        if self.increment is not None and not self.increment > 0.0:
            raise ConfigurationError(
                f"immigration increment must be positive, got {self.increment}"
            )


@dataclass(slots=True)
class Trajectory:
    """Bookkeeping record of one type."""

    id: int
    parent: int | None
    birth: float
    slope0: float
    increment: float
    fitness: float
    fitness_at_birth: float
    status: str = "active"  # active | resident | latent | extinct
    death: float | None = None
    segments: list | None = None


@dataclass(frozen=True)
class PitEvent:
    """One logged event.

    ``value`` holds the initial slope for immigrations, ``v*`` for resident
    changes, and 0 for extinctions.  ``resident_id``/``fitness`` are the
    resident and its fitness just after the event.  ``solitary`` is set on
    resident changes: True when every positive-height trajectory has
    non-positive slope after the kink (a renewal point).
    """

    time: float
    kind: str
    trajectory_id: int
    value: float
    resident_id: int
    fitness: float
    solitary: bool | None = None


@dataclass(frozen=True)
class PitPeek:
    """Next pending event, without applying it."""

    time: float
    kind: str  # immigration | hit_one | hit_zero | stalled
    trajectory_id: int | None = None

    @property
    def stalled(self) -> bool:
        return self.kind == "stalled"


class GenealogyTree:
    """Parent map of types; immigrants attach to the resident at their birth."""

    def __init__(self):
        self.parent: dict[int, int | None] = {}
        self.children: dict[int, list[int]] = {}

    def add_root(self, node: int):
        self.parent[node] = None
        self.children.setdefault(node, [])

    def add_edge(self, parent: int, child: int):
        if child in self.parent:
            raise ConfigurationError(f"duplicate genealogy node {child}")
        self.parent[child] = parent
        self.children.setdefault(parent, []).append(child)
        self.children.setdefault(child, [])

    def ancestors(self, node: int) -> list[int]:
        """Path from ``node``'s parent up to its root, nearest first."""
        out = []
        p = self.parent.get(node)
        while p is not None:
            out.append(p)
            p = self.parent.get(p)
        return out

    def __contains__(self, node: int) -> bool:
        return node in self.parent

    def __len__(self) -> int:
        return len(self.parent)


class StepPath:
    """Right-continuous step function given by jump times and values."""

    def __init__(self, times, values):
        self.times = np.asarray(times, dtype=float)
        self.values = np.asarray(values, dtype=float)
        if self.times.size != self.values.size or self.times.size == 0:
            raise ValueError("step path needs matching, non-empty times and values")

    def __call__(self, t):
        idx = np.searchsorted(self.times, np.asarray(t, dtype=float), side="right") - 1
        idx = np.clip(idx, 0, len(self.values) - 1)
        out = self.values[idx]
        return float(out) if np.isscalar(t) else out

    def jumps(self):
        return list(zip(self.times.tolist(), self.values.tolist()))


class PiecewisePath:
    """Piecewise-linear trajectory given by (time, height, slope) breakpoints."""

    def __init__(self, breakpoints, end_time: float):
        arr = np.asarray(breakpoints, dtype=float).reshape(-1, 3)
        self.t = arr[:, 0]
        self.h = arr[:, 1]
        self.v = arr[:, 2]
        self.end_time = end_time

    def __call__(self, t):
        ts = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.t, ts, side="right") - 1
        idx = np.clip(idx, 0, len(self.t) - 1)
        out = self.h[idx] + self.v[idx] * (ts - self.t[idx])
        out = np.clip(out, 0.0, 1.0)
        out = np.where(ts < self.t[0], self.h[0], out)
        return float(out) if np.isscalar(t) else out


def _normalize_events(events):
    """Yield (time, slope, increment, id_hint) from mixed event records."""
    for ev in events:
        if isinstance(ev, InputEvent):
            slope = ev.increment if ev.contender else 0.0
            yield ev.time, slope, ev.increment, ev.index
        elif isinstance(ev, ImmigrationEntry):
            inc = ev.increment if ev.increment is not None else ev.slope
            yield ev.time, ev.slope, inc, None
        else:
            t, slope = ev
            yield float(t), float(slope), float(slope), None


class PitState:
    """Mutable state of the trajectory system.

    Parameters
    ----------
    start:
        Iterable of :class:`StartEntry` (or ``(height, slope)`` pairs).
        Must contain exactly one ``(1, 0)`` entry, the initial resident.
        Defaults to that single entry.  The ``(1, 0)`` entry gets id 0;
        the others get ids -1, -2, ... in listed order.
    events:
        Iterable of immigrations (:class:`~clonepit.inputs.InputEvent`,
        :class:`ImmigrationEntry` or ``(time, slope)``), strictly increasing
        in time.  May be a lazy generator; it is consumed as the clock
        advances.
    f0:
        Fitness of the initial resident.
    record_log, record_paths, track_types:
        Switch off to cut memory and object churn in long ensemble runs.
        ``record_log`` keeps the full event list, ``record_paths`` the
        per-trajectory breakpoints, ``track_types`` the per-type records and
        the genealogy.  Resident changes are always kept (they are the
        renewal skeleton).
    validate:
        Check the exact bookkeeping identities at every resident change.
    """

    def __init__(
        self,
        start=None,
        events=(),
        f0: float = 0.0,
        *,
        record_log: bool = True,
        record_paths: bool = False,
        track_types: bool = True,
        validate: bool = True,
    ):
        self.record_log = record_log
        self.record_paths = record_paths
        self.track_types = track_types
        self.validate = validate
        self.f0 = float(f0)
        if record_paths and not track_types:
            raise ConfigurationError("record_paths requires track_types")

        if start is None:
            start = (StartEntry(1.0, 0.0),)
        entries = [e if isinstance(e, StartEntry) else StartEntry(*e) for e in start]
        pairs = [(e.height, e.slope) for e in entries]
        if len(set(pairs)) != len(pairs):
            raise ConfigurationError("start entries must be pairwise distinct")
        residents = [e for e in entries if e.height == 1.0 and e.slope == 0.0]
        if len(residents) != 1:
            raise ConfigurationError(
                f"start must contain exactly one (1, 0) entry, found {len(residents)}"
            )

        cap = max(8, len(entries) + 4)
        self._h = np.zeros(cap)
        self._v = np.zeros(cap)
        self._c0 = np.zeros(cap)
        self._fb = np.zeros(cap)
        self._n = 0
        self._slot_ids: list[int] = []
        self._slot_of: dict[int, int] = {}

        self.clock = 0.0
        self.fitness = self.f0
        self.resident_id = 0
        self.vstar_sum = 0.0
        #: upper bound for the total fitness gain: positive start slopes plus
        #: contender increments (each type turns resident at most once, and
        #: contributes at most its initial slope when it does)
        self.fitness_gain_bound = 0.0
        self.log: list[PitEvent] = []
        #: compact (time, v_star, fitness_after, resident_id, solitary) tuples
        self.resident_changes: list[tuple] = []
        self.types: dict[int, Trajectory] = {}
        self.genealogy = GenealogyTree()
        self._auto_id = 1

        next_start_id = -1
        for e in entries:
            if e.height == 1.0 and e.slope == 0.0:
                tid = 0
            else:
                tid = next_start_id
                next_start_id -= 1
            self._add_type(tid, None, 0.0, e.height, e.slope, e.slope, self.f0 + e.slope)
            if e.slope > 0.0:
                self.fitness_gain_bound += e.slope
            if e.height > 0.0 or e.slope > 0.0:
                self._add_slot(tid, e.height, e.slope)
            elif self.track_types:
                self.types[tid].status = "latent"
        if self.track_types:
            self.types[0].status = "resident"

        self._events = _normalize_events(events)
        self._pending = None
        self._last_time = -math.inf
        self._pull_event()

    # -- construction helpers --------------------------------------------

    def _add_type(self, tid, parent, birth, height0, slope, increment, fitness):
        if self.track_types:
            if tid in self.types:
                raise ConfigurationError(f"duplicate trajectory id {tid}")
            traj = Trajectory(
                id=tid,
                parent=parent,
                birth=birth,
                slope0=slope,
                increment=increment,
                fitness=fitness,
                fitness_at_birth=self.fitness,
            )
            if self.record_paths:
                traj.segments = [(birth, height0, slope)]
            self.types[tid] = traj
            if parent is None:
                self.genealogy.add_root(tid)
            else:
                self.genealogy.add_edge(parent, tid)

    def _add_slot(self, tid, h, v):
        n = self._n
        if n == self._h.size:
            for name in ("_h", "_v", "_c0", "_fb"):
                arr = getattr(self, name)
                grown = np.zeros(2 * arr.size)
                grown[:n] = arr
                setattr(self, name, grown)
        self._h[n] = h
        self._v[n] = v
        self._c0[n] = v
        self._fb[n] = self.fitness
        self._slot_ids.append(tid)
        self._slot_of[tid] = n
        self._n = n + 1

    def _drop_slot(self, slot):
        last = self._n - 1
        dropped = self._slot_ids[slot]
        del self._slot_of[dropped]
        if slot != last:
            for arr in (self._h, self._v, self._c0, self._fb):
                arr[slot] = arr[last]
            moved = self._slot_ids[last]
            self._slot_ids[slot] = moved
            self._slot_of[moved] = slot
        self._slot_ids.pop()
        self._n = last

    def _pull_event(self):
        try:
            t, slope, inc, idx = next(self._events)
        except StopIteration:
            self._pending = None
            return
        if t <= self._last_time:
            raise ConfigurationError(
                f"immigration times must be strictly increasing, got {t} after {self._last_time}"
            )
        self._last_time = t
        if idx is None:
            idx = self._auto_id
        elif idx < self._auto_id:
            raise ConfigurationError(f"immigration index {idx} reused or out of order")
        self._pending = (t, slope, inc, idx)

    # -- event scanning ----------------------------------------------------

    def _hit_offsets(self):
        """Relative time to each active slot's next boundary hit (inf if none)."""
        n = self._n
        h, v = self._h[:n], self._v[:n]
        out = np.full(n, math.inf)
        rising = v > 0.0
        falling = v < 0.0
        np.divide(1.0 - h, v, out=out, where=rising)
        np.divide(h, -v, out=out, where=falling)
        return out

    def next_event(self) -> PitPeek:
        """Earliest pending event without applying it.

        Boundary hits take precedence over an immigration carrying the same
        timestamp.  Returns a peek with kind ``"stalled"`` (time ``inf``)
        when nothing can ever happen again.
        """
        offs = self._hit_offsets()
        t_hit = math.inf
        slot = -1
        if offs.size:
            slot = int(np.argmin(offs))
            if math.isfinite(offs[slot]):
                t_hit = self.clock + offs[slot]
        t_imm = self._pending[0] if self._pending is not None else math.inf
        if math.isinf(t_hit) and math.isinf(t_imm):
            return PitPeek(math.inf, "stalled")
        if t_hit <= t_imm + TIME_EPS:
            kind = "hit_one" if self._v[slot] > 0 else "hit_zero"
            return PitPeek(float(t_hit), kind, self._slot_ids[slot])
        return PitPeek(float(t_imm), "immigration", self._pending[3])

    @property
    def pending_immigration(self):
        """Next drawn but not yet applied arrival as (time, slope, increment, id).

        ``None`` once the event stream is exhausted.  Drivers that stop a run
        mid-stream (say at a regeneration) need this to hand the event to a
        successor state instead of losing it.
        """
        return self._pending

    # -- event application ---------------------------------------------------

    def _log(self, ev: PitEvent):
        if self.record_log:
            self.log.append(ev)

    def _mark_segment(self, tid, h, v):
        traj = self.types[tid]
        if traj.segments is not None:
            traj.segments.append((self.clock, h, v))

    def _apply_extinction(self, tid) -> PitEvent:
        slot = self._slot_of[tid]
        self._h[slot] = 0.0
        if self.track_types:
            traj = self.types[tid]
            traj.status = "extinct"
            traj.death = self.clock
            if self.record_paths:
                self._mark_segment(tid, 0.0, 0.0)
        self._drop_slot(slot)
        ev = PitEvent(self.clock, "extinction", tid, 0.0, self.resident_id, self.fitness)
        self._log(ev)
        return ev

    def apply_resident_change(self, hitter_ids) -> PitEvent:
        """Kink every positive-height trajectory and crown the new resident.

        ``hitter_ids`` are the trajectories that reached height 1 at the
        current clock (already pinned to height exactly 1).  The winner is
        the hitter with maximal pre-hit slope, ties broken by smaller id.
        """
        hitters = sorted(hitter_ids)
        slots = [self._slot_of[tid] for tid in hitters]
        pre = np.asarray([self._v[s] for s in slots])
        v_star = float(pre.max())
        if not v_star > 0.0:
            raise InvariantViolation(
                f"resident change at t={self.clock} with non-positive slope {v_star}"
            )
        # argmax picks the first maximum; hitters are sorted by id.
        winner = hitters[int(np.argmax(pre))]

        n = self._n
        h, v = self._h[:n], self._v[:n]
        kinked = h > 0.0
        v[kinked] -= v_star
        wslot = self._slot_of[winner]
        self._h[wslot] = 1.0
        self._v[wslot] = 0.0

        old_resident = self.resident_id
        self.resident_id = winner
        self.fitness += v_star
        self.vstar_sum += v_star

        solitary = bool(np.all(v[kinked] <= SLOPE_EPS))
        self.resident_changes.append(
            (self.clock, v_star, self.fitness, winner, solitary)
        )

        if self.track_types:
            self.types[old_resident].status = "active"
            self.types[winner].status = "resident"
            if self.record_paths:
                for slot in np.nonzero(kinked)[0]:
                    tid = self._slot_ids[slot]
                    self._mark_segment(tid, float(h[slot]), float(v[slot]))

        if self.validate:
            self._check_after_change(winner)

        ev = PitEvent(
            self.clock, "resident_change", winner, v_star, winner, self.fitness, solitary
        )
        self._log(ev)
        return ev

    def _apply_immigration(self) -> PitEvent:
        t, slope, inc, tid = self._pending
        parent = self.resident_id
        self._add_type(tid, parent, t, 0.0, slope, inc, self.fitness + inc)
        if slope > 0.0:
            self._add_slot(tid, 0.0, slope)
            self.fitness_gain_bound += inc
        elif self.track_types:
            self.types[tid].status = "latent"
        self._auto_id = tid + 1
        self._pull_event()
        ev = PitEvent(t, "immigration", tid, slope, parent, self.fitness)
        self._log(ev)
        return ev

    def _check_after_change(self, winner):
        drift = abs(self.fitness - self.f0 - self.vstar_sum)
        if drift > CHECK_TOL:
            raise InvariantViolation(
                f"fitness != f0 + sum of v* at t={self.clock} (drift {drift:.3e})"
            )
        if self.track_types:
            mism = abs(self.fitness - self.types[winner].fitness)
            if mism > CHECK_TOL:
                raise InvariantViolation(
                    f"resident fitness {self.fitness} != type fitness "
                    f"{self.types[winner].fitness} for {winner} at t={self.clock}"
                )
        n = self._n
        implied = self._c0[:n] - (self.fitness - self._fb[:n])
        err = float(np.max(np.abs(self._v[:n] - implied))) if n else 0.0
        if err > CHECK_TOL:
            raise InvariantViolation(
                f"slope-coupling identity violated at t={self.clock} (max err {err:.3e})"
            )
        at_top = int(np.sum((self._h[:n] == 1.0) & (self._v[:n] == 0.0)))
        if at_top != 1:
            raise InvariantViolation(
                f"{at_top} trajectories at (1, 0) after change at t={self.clock}"
            )

    def _advance_heights(self, dt):
        if dt > 0.0 and self._n:
            n = self._n
            h = self._h[:n]
            h += self._v[:n] * dt
            np.clip(h, 0.0, 1.0, out=h)

    def advance(self, until: float = math.inf, *, stop_after_solitary: bool = False):
        """Process all events up to ``until``; the clock ends at ``until``.

        With ``stop_after_solitary`` the run returns right after the first
        solitary resident change instead (the clock then sits at that
        change).  Returns the list of events applied during this call, in
        order.
        """
        applied: list[PitEvent] = []
        while True:
            offs = self._hit_offsets()
            if offs.size:
                slot_min = int(np.argmin(offs))
                off_min = offs[slot_min]
            else:
                off_min = math.inf
            t_hit = self.clock + off_min if math.isfinite(off_min) else math.inf
            t_imm = self._pending[0] if self._pending is not None else math.inf
            t_next = min(t_hit, t_imm)
            if t_next > until or math.isinf(t_next):
                if math.isfinite(until):
                    self._advance_heights(until - self.clock)
                    self.clock = until
                return applied

            if math.isfinite(t_hit) and t_hit <= t_next + TIME_EPS:
                # Group by offset, not by t_next - clock: at large clocks the
                # absolute difference rounds below the true offset and can
                # even collapse to zero, which would select nothing and stall.
                sel = np.nonzero(offs <= off_min + TIME_EPS)[0]
                dying = [self._slot_ids[s] for s in sel if self._v[s] < 0.0]
                rising = [self._slot_ids[s] for s in sel if self._v[s] > 0.0]
            else:
                dying, rising = [], []
            take_imm = t_imm <= t_next + TIME_EPS

            self._advance_heights(t_next - self.clock)
            self.clock = float(t_next)

            for tid in dying:
                applied.append(self._apply_extinction(tid))
            saw_solitary = False
            if rising:
                for tid in rising:
                    self._h[self._slot_of[tid]] = 1.0
                ev = self.apply_resident_change(rising)
                applied.append(ev)
                saw_solitary = bool(ev.solitary)
            if take_imm:
                applied.append(self._apply_immigration())
            if stop_after_solitary and saw_solitary:
                return applied

    # -- derived views -------------------------------------------------------

    def resident_fitness_path(self) -> StepPath:
        """Resident fitness as a right-continuous step function from time 0."""
        times = [0.0] + [rc[0] for rc in self.resident_changes]
        values = [self.f0] + [rc[2] for rc in self.resident_changes]
        return StepPath(times, values)

    def trajectory_path(self, tid: int) -> PiecewisePath:
        """Piecewise-linear height path of type ``tid`` (needs ``record_paths``)."""
        traj = self.types[tid]
        if traj.status == "latent":
            return PiecewisePath([(traj.birth, 0.0, 0.0)], self.clock)
        if traj.segments is None:
            raise ConfigurationError("trajectory paths were not recorded for this run")
        return PiecewisePath(traj.segments, self.clock)

    def trace_on_grid(self, grid) -> dict[int, np.ndarray]:
        """Heights of every tracked type over ``grid`` (needs ``record_paths``)."""
        grid = np.asarray(grid, dtype=float)
        out = {}
        for tid, traj in self.types.items():
            vals = self.trajectory_path(tid)(grid)
            out[tid] = np.where(grid < traj.birth, 0.0, vals)
        return out

    def check_invariants(self):
        """Run all closing checks; raises :class:`InvariantViolation` on failure."""
        n = self._n
        if n:
            h = self._h[:n]
            if h.min() < 0.0 or h.max() > 1.0:
                raise InvariantViolation("height outside [0, 1]")
        at_top = int(np.sum((self._h[:n] == 1.0) & (self._v[:n] == 0.0))) if n else 0
        if at_top != 1:
            raise InvariantViolation(f"{at_top} trajectories at (1, 0)")
        drift = abs(self.fitness - self.f0 - self.vstar_sum)
        if drift > CHECK_TOL:
            raise InvariantViolation(f"fitness != f0 + sum of v* (drift {drift:.3e})")
        bound = self.fitness_gain_bound
        if self.fitness - self.f0 > bound + CHECK_TOL:
            raise InvariantViolation(
                f"fitness gain {self.fitness - self.f0} exceeds increment bound {bound}"
            )
        if self.track_types:
            for tid, traj in self.types.items():
                if traj.parent is not None:
                    expect = self.types[traj.parent].fitness + traj.increment
                    if abs(traj.fitness - expect) > CHECK_TOL:
                        raise InvariantViolation(
                            f"type {tid} fitness {traj.fitness} != parent + increment {expect}"
                        )

    # -- convenience -----------------------------------------------------------

    @property
    def active_ids(self) -> list[int]:
        return list(self._slot_ids)

    def height(self, tid: int) -> float:
        slot = self._slot_of.get(tid)
        if slot is None:
            traj = self.types.get(tid)
            if traj is not None and traj.status in ("latent", "extinct"):
                return 0.0
            raise KeyError(tid)
        return float(self._h[slot])

    def slope(self, tid: int) -> float:
        slot = self._slot_of.get(tid)
        if slot is None:
            traj = self.types.get(tid)
            if traj is not None and traj.status in ("latent", "extinct"):
                return 0.0
            raise KeyError(tid)
        return float(self._v[slot])


def _fmt(x: float) -> str:
    return format(x, ".17g")


def write_event_csv(events, path, scenario_hash: str | None = None):
    """Write an event log as CSV: time, kind, trajectory_id, v_star_or_slope, resident_id, fitness."""
    lines = []
    if scenario_hash:
        lines.append(f"# scenario={scenario_hash}")
    lines.append("time,kind,trajectory_id,v_star_or_slope,resident_id,fitness")
    for ev in events:
        lines.append(
            f"{_fmt(ev.time)},{ev.kind},{ev.trajectory_id},"
            f"{_fmt(ev.value)},{ev.resident_id},{_fmt(ev.fitness)}"
        )
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def write_trajectories_jsonl(state: PitState, path, scenario_hash: str | None = None):
    """Write per-type records as JSON lines: id, parent, birth, fitness, segments."""
    with open(path, "w") as fh:
        if scenario_hash:
            fh.write(json.dumps({"scenario": scenario_hash}) + "\n")
        for tid in sorted(state.types):
            traj = state.types[tid]
            segments = None
            if traj.segments is not None:
                segments = [[t, h, v] for (t, h, v) in traj.segments]
            fh.write(
                json.dumps(
                    {
                        "id": traj.id,
                        "parent": traj.parent,
                        "birth": traj.birth,
                        "fitness": traj.fitness,
                        "status": traj.status,
                        "segments": segments,
                    }
                )
                + "\n"
            )
