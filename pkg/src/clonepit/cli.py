"""Scenario-driven command line front end.

Every run is described by a scenario: a command plus a flat key = value
configuration.  Scenarios come from a config file (``--config``), from the
command line flags that override it, or both.  The file format is plain
text, one ``key = value`` pair per line, ``#`` starts a comment.  Repeatable
keys build lists in file order:

    command   = pit-replay
    seed      = 42
    f0        = 0.0
    start     = 0.1, 1.5        # height, slope (extra non-resident starts)
    event     = 1.2, 0.2, 1     # time, increment, contender flag (0 or 1)
    event     = 1.4, 1.0, 0

Scalar keys: ``lambda`` (arrival rate), ``gamma`` (increment distribution
descriptor, e.g. ``uniform(1,2)``), ``n`` (population size), ``horizon``
(end time; for ``speed`` the number of renewal cycles), ``replicates``,
``seed``, ``grid_step``, ``out`` (output directory), ``f0``, ``counts`` and
``fitness`` (comma lists for the initial Moran population), ``birth``,
``death``, ``initial``, ``cap`` (branching), ``scale`` (fclt time scale).

Artifacts land in ``out`` (default: ``$CLONEPIT_OUT`` or the working
directory): per-replicate CSV / JSON-lines files plus one ``summary.json``
echoing the scenario, its hash, the seed, a build tag and the wall time.
Every file starts with or embeds the scenario hash, so a mismatched rerun
can be detected from the artifacts alone.  Replicate r always draws from
the stream derived as ``replicate_rng(seed, r)``; reruns with the same
scenario and seed are byte-identical on the CSV side.

Exit status 0 means every requested analysis completed and all internal
invariant checks passed; configuration problems exit 2, engine or I/O
failures exit 1.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import subprocess
import sys
import time
from dataclasses import dataclass

import numpy as np

from .analysis import (
    coupled_run,
    detect_renewals,
    fclt_diagnostic,
    glh_speed,
    pointmass_speed,
    rglh_speed,
    sample_renewal_cycles,
    speed_estimate,
    write_cycles_csv,
)
from .branching import GwParams, gw_run, gw_survival_formula
from .inputs import (
    InputEvent,
    PointMass,
    contender_params,
    parse_distribution,
    sample_contender_stream,
)
from .moran import moran_init, moran_run, write_trace_csv
from .pit import (
    ConfigurationError,
    InvariantViolation,
    PitState,
    write_event_csv,
    write_trajectories_jsonl,
)
from .rng import replicate_rng

COMMANDS = (
    "pit-run",
    "pit-replay",
    "moran-run",
    "couple",
    "speed",
    "heuristics",
    "gw",
    "fclt",
)


@dataclass(frozen=True)
class Scenario:
    """One fully specified run; (scenario, seed) determines every output bit."""

    command: str
    lam: float = 0.0
    gamma: str = ""
    n: int = 0
    horizon: float = 0.0
    replicates: int = 1
    seed: int = 0
    grid_step: float = 0.01
    out: str = ""
    f0: float = 0.0
    birth: float = 0.0
    death: float = 0.0
    initial: int = 1
    cap: int = 10_000_000
    scale: float = 100.0
    counts: tuple = ()
    fitness: tuple = ()
    starts: tuple = ()
    events: tuple = ()

    def gamma_dist(self):
        return parse_distribution(self.gamma)

    def canonical(self) -> str:
        """Stable text form; hashing and round-tripping both go through this.

        The output directory is deliberately left out: it moves the files
        around without changing a single computed byte, so it is not part
        of the scenario's identity.
        """
        lines = [f"command = {self.command}"]
        scalars = [
            ("lambda", self.lam),
            ("gamma", self.gamma),
            ("n", self.n),
            ("horizon", self.horizon),
            ("replicates", self.replicates),
            ("seed", self.seed),
            ("grid_step", self.grid_step),
            ("f0", self.f0),
            ("birth", self.birth),
            ("death", self.death),
            ("initial", self.initial),
            ("cap", self.cap),
            ("scale", self.scale),
        ]
        for key, val in scalars:
            lines.append(f"{key} = {val!r}" if isinstance(val, str) else f"{key} = {val}")
        if self.counts:
            lines.append("counts = " + ", ".join(str(c) for c in self.counts))
        if self.fitness:
            lines.append("fitness = " + ", ".join(repr(m) for m in self.fitness))
        for h, s in self.starts:
            lines.append(f"start = {h!r}, {s!r}")
        for t, a, b in self.events:
            lines.append(f"event = {t!r}, {a!r}, {b}")
        return "\n".join(lines) + "\n"


def scenario_hash(scn: Scenario) -> str:
    return hashlib.sha256(scn.canonical().encode()).hexdigest()[:16]


# -- configuration parsing ---------------------------------------------------

_SCALARS = {
    "lambda": ("lam", float),
    "gamma": ("gamma", str),
    "n": ("n", int),
    "horizon": ("horizon", float),
    "replicates": ("replicates", int),
    "seed": ("seed", int),
    "grid_step": ("grid_step", float),
    "out": ("out", str),
    "f0": ("f0", float),
    "birth": ("birth", float),
    "death": ("death", float),
    "initial": ("initial", int),
    "cap": ("cap", int),
    "scale": ("scale", float),
}

_LISTS = {"counts", "fitness", "start", "event"}

# keys every command accepts (the common flags must never be rejected)
_COMMON = {"command", "seed", "replicates", "horizon", "out", "grid_step"}
_ALLOWED = {
    "pit-run": {"lambda", "gamma", "f0"},
    "pit-replay": {"f0", "start", "event"},
    "moran-run": {"n", "lambda", "gamma", "counts", "fitness", "event"},
    "couple": {"n", "event"},
    "speed": {"lambda", "gamma"},
    "heuristics": {"lambda", "gamma"},
    "gw": {"birth", "death", "initial", "cap"},
    "fclt": {"lambda", "gamma", "scale"},
}


def _strip_comment(line: str) -> str:
    pos = line.find("#")
    return line if pos < 0 else line[:pos]


def _unquote(text: str) -> str:
    t = text.strip()
    if len(t) >= 2 and t[0] == t[-1] and t[0] in "'\"":
        return t[1:-1]
    return t


def _cast(key: str, attr: str, conv, raw: str):
    try:
        return conv(_unquote(raw)) if conv is str else conv(raw)
    except ValueError:
        raise ConfigurationError(f"bad value for '{key}': {raw.strip()!r}") from None


def _parse_pairs(text: str):
    for raw_line in text.splitlines():
        line = _strip_comment(raw_line).strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"expected 'key = value', got {line!r}")
        key, _, raw = line.partition("=")
        yield key.strip(), raw.strip()


def parse_scenario(text: str, overrides: dict | None = None) -> Scenario:
    """Build a validated scenario from config text plus flag overrides."""
    values: dict = {}
    rows: dict = {"counts": [], "fitness": [], "start": [], "event": []}
    for key, raw in _parse_pairs(text):
        if key in _SCALARS:
            attr, conv = _SCALARS[key]
            values[attr] = _cast(key, attr, conv, raw)
        elif key == "command":
            values["command"] = _unquote(raw)
        elif key in _LISTS:
            rows[key].append(raw)
        else:
            raise ConfigurationError(f"unknown key '{key}'")
    for attr, val in (overrides or {}).items():
        if val is not None:
            values[attr] = val

    command = values.pop("command", "")
    if command not in COMMANDS:
        raise ConfigurationError(f"unknown command {command!r}, expected one of {', '.join(COMMANDS)}")

    if rows["counts"]:
        values["counts"] = tuple(
            _cast("counts", "counts", int, p) for r in rows["counts"] for p in r.split(",")
        )
    if rows["fitness"]:
        values["fitness"] = tuple(
            _cast("fitness", "fitness", float, p) for r in rows["fitness"] for p in r.split(",")
        )
    starts = []
    for r in rows["start"]:
        parts = r.split(",")
        if len(parts) != 2:
            raise ConfigurationError(f"bad value for 'start': {r!r} (need height, slope)")
        starts.append((float(parts[0]), float(parts[1])))
    values["starts"] = tuple(starts)
    events = []
    for r in rows["event"]:
        parts = [p.strip() for p in r.split(",")]
        if len(parts) not in (2, 3):
            raise ConfigurationError(
                f"bad value for 'event': {r!r} (need time, increment[, flag])"
            )
        flag = 1
        if len(parts) == 3:
            if parts[2] not in ("0", "1"):
                raise ConfigurationError(f"bad value for 'event': flag must be 0 or 1, got {parts[2]!r}")
            flag = int(parts[2])
        events.append((float(parts[0]), float(parts[1]), flag))
    values["events"] = tuple(events)

    scn = Scenario(command=command, **values)
    _validate(scn)
    return scn


def _used_keys(scn: Scenario):
    used = set()
    defaults = Scenario(command=scn.command)
    for key, (attr, _) in _SCALARS.items():
        if getattr(scn, attr) != getattr(defaults, attr):
            used.add(key)
    if scn.counts:
        used.add("counts")
    if scn.fitness:
        used.add("fitness")
    if scn.starts:
        used.add("start")
    if scn.events:
        used.add("event")
    return used


def _require(cond: bool, key: str, message: str):
    if not cond:
        raise ConfigurationError(f"constraint violated for '{key}': {message}")


def _validate(scn: Scenario):
    allowed = _COMMON | _ALLOWED[scn.command]
    stray = _used_keys(scn) - allowed
    if stray:
        raise ConfigurationError(
            f"key '{sorted(stray)[0]}' does not apply to command {scn.command!r}"
        )
    _require(scn.replicates >= 1, "replicates", "must be at least 1")
    _require(scn.seed >= 0, "seed", "must be nonnegative")
    _require(scn.grid_step > 0, "grid_step", "must be positive")
    cmd = scn.command

    if cmd in ("pit-run", "speed", "fclt", "heuristics"):
        _require(scn.lam > 0, "lambda", "must be positive")
        _require(bool(scn.gamma), "gamma", "an increment distribution is required")
    if scn.gamma:
        try:
            parse_distribution(scn.gamma)
        except ValueError as exc:
            raise ConfigurationError(f"bad value for 'gamma': {exc}") from None

    if cmd == "pit-run":
        _require(scn.horizon > 0, "horizon", "must be positive")
    elif cmd == "pit-replay":
        _require(bool(scn.events), "event", "a replay needs at least one event row")
        _require(scn.replicates == 1, "replicates", "a replay is deterministic; use 1")
    elif cmd == "moran-run":
        _require(scn.n >= 2, "n", "population size must be at least 2")
        _require(scn.horizon > 0, "horizon", "must be positive")
        free = scn.lam > 0
        _require(not (free and scn.events), "event", "a schedule excludes a free mutation rate")
        if free:
            _require(bool(scn.gamma), "gamma", "a free mutation rate needs a distribution")
    elif cmd == "couple":
        _require(scn.n >= 2, "n", "population size must be at least 2")
        _require(scn.horizon > 0, "horizon", "must be positive")
        _require(bool(scn.events), "event", "a coupling needs the shared mutation schedule")
    elif cmd == "speed":
        _require(scn.horizon >= 2 and scn.horizon == int(scn.horizon), "horizon",
                 "must be an integer cycle count of at least 2")
    elif cmd == "gw":
        _require(scn.birth >= 0 and scn.death >= 0, "birth", "rates must be nonnegative")
        _require(scn.birth + scn.death > 0, "birth", "birth and death cannot both be zero")
        _require(scn.initial >= 1, "initial", "must be a positive integer")
        _require(scn.cap >= 1, "cap", "must be a positive integer")
    elif cmd == "fclt":
        _require(scn.scale > 0, "scale", "must be positive")
        _require(scn.replicates >= 2, "replicates", "an ensemble needs at least 2 paths")


# -- artifact plumbing --------------------------------------------------------


def _build_tag() -> str:
    try:
        from importlib.metadata import version

        tag = "v" + version("clonepit")
    except Exception:
        tag = "v0"
    try:
        here = os.path.dirname(os.path.abspath(__file__))
        proc = subprocess.run(
            ["git", "describe", "--tags", "--always", "--dirty"],
            cwd=here, capture_output=True, text=True, timeout=2.0,
        )
        if proc.returncode == 0 and proc.stdout.strip():
            tag += "+g" + proc.stdout.strip()
    except Exception:
        pass
    return tag


def _out_dir(scn: Scenario) -> str:
    out = scn.out or os.environ.get("CLONEPIT_OUT", ".")
    os.makedirs(out, exist_ok=True)
    return out


def _write_summary(scn: Scenario, shash: str, results: dict, started: float) -> str:
    path = os.path.join(_out_dir(scn), "summary.json")
    doc = {
        "command": scn.command,
        "scenario": scn.canonical(),
        "scenario_hash": shash,
        "seed": scn.seed,
        "build": _build_tag(),
        "wall_time_s": round(time.time() - started, 3),
        "results": results,
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, default=float)
        fh.write("\n")
    return path


def _replay_events(scn: Scenario):
    return [
        InputEvent(i + 1, t, a, bool(b)) for i, (t, a, b) in enumerate(scn.events)
    ]


# -- commands ------------------------------------------------------------------


def _cmd_pit_run(scn: Scenario, shash: str, out: str) -> dict:
    law = contender_params(scn.lam, scn.gamma_dist())
    reps = []
    for r in range(scn.replicates):
        rng = replicate_rng(scn.seed, r)
        events = sample_contender_stream(law, scn.horizon, rng)
        st = PitState(events=events, f0=scn.f0, record_paths=True)
        st.advance(until=scn.horizon)
        st.check_invariants()
        write_event_csv(st.log, os.path.join(out, f"events_r{r:03d}.csv"), shash)
        write_trajectories_jsonl(
            st, os.path.join(out, f"trajectories_r{r:03d}.jsonl"), shash
        )
        _, records = detect_renewals(st)
        rep = {
            "replicate": r,
            "final_fitness": st.fitness,
            "n_events": len(st.log),
            "n_resident_changes": len(st.resident_changes),
            "n_cycles": len(records),
        }
        if len(records) >= 2:
            est = speed_estimate(records)
            rep["v_hat"] = est.v_hat
            rep["stderr"] = est.stderr
        reps.append(rep)
    return {"contender_rate": law.rate, "replicates": reps}


def _cmd_pit_replay(scn: Scenario, shash: str, out: str) -> dict:
    start = [(1.0, 0.0)] + list(scn.starts)
    horizon = scn.horizon if scn.horizon > 0 else math.inf
    st = PitState(start=start, events=_replay_events(scn), f0=scn.f0, record_paths=True)
    st.advance(until=horizon)
    st.check_invariants()
    write_event_csv(st.log, os.path.join(out, "events.csv"), shash)
    write_trajectories_jsonl(st, os.path.join(out, "trajectories.jsonl"), shash)
    return {
        "final_fitness": st.fitness,
        "clock": st.clock,
        "resident_changes": [
            {"time": t, "v_star": v, "fitness": f, "winner": w, "solitary": sol}
            for (t, v, f, w, sol) in st.resident_changes
        ],
    }


def _moran_schedule(scn: Scenario):
    base = len(scn.counts) if scn.counts else 1
    return [(t, a, base + i) for i, (t, a, _) in enumerate(scn.events)] or None


def _cmd_moran_run(scn: Scenario, shash: str, out: str) -> dict:
    counts = list(scn.counts) if scn.counts else [scn.n]
    fitness = list(scn.fitness) if scn.fitness else [0.0] * len(counts)
    gamma = parse_distribution(scn.gamma) if scn.gamma else None
    reps = []
    for r in range(scn.replicates):
        state = moran_init(
            scn.n, counts, fitness,
            lam=scn.lam, gamma=gamma, schedule=_moran_schedule(scn),
        )
        res = moran_run(state, scn.horizon, replicate_rng(scn.seed, r),
                        grid_step=scn.grid_step)
        write_trace_csv(res, os.path.join(out, f"trace_r{r:03d}.csv"), shash)
        reps.append({
            "replicate": r,
            "n_events": res.n_events,
            "live_types": sorted(res.state.live_types()),
            "mean_fitness": float(res.trace.mean_fitness[-1]),
            "indicators": [[i.index, bool(i.flag)] for i in res.indicators],
        })
    return {"n": scn.n, "replicates": reps}


def _cmd_couple(scn: Scenario, shash: str, out: str) -> dict:
    schedule = [(t, a, i + 1) for i, (t, a, _) in enumerate(scn.events)]
    lines = ["# scenario=" + shash, "replicate,distance"]
    dists = []
    for r in range(scn.replicates):
        res = coupled_run(scn.n, schedule, scn.horizon, replicate_rng(scn.seed, r),
                          grid_step=scn.grid_step)
        dists.append(res.distance)
        lines.append(f"{r},{res.distance:.17g}")
    with open(os.path.join(out, "couple.csv"), "w") as fh:
        fh.write("\n".join(lines) + "\n")
    return {
        "n": scn.n,
        "distances": dists,
        "median_distance": float(np.median(dists)),
    }


def _cmd_speed(scn: Scenario, shash: str, out: str) -> dict:
    law = contender_params(scn.lam, scn.gamma_dist())
    cycles = int(scn.horizon)
    pooled = []
    reps = []
    for r in range(scn.replicates):
        records = sample_renewal_cycles(law, cycles, replicate_rng(scn.seed, r))
        write_cycles_csv(records, os.path.join(out, f"cycles_r{r:03d}.csv"), shash)
        est = speed_estimate(records)
        reps.append({"replicate": r, "v_hat": est.v_hat, "stderr": est.stderr,
                     "sigma2_hat": est.sigma2_hat})
        pooled.extend(records)
    est = speed_estimate(pooled)
    results = {
        "n_cycles": len(pooled),
        "v_hat": est.v_hat,
        "stderr": est.stderr,
        "sigma2_hat": est.sigma2_hat,
        "replicates": reps,
    }
    dist = scn.gamma_dist()
    if isinstance(dist, PointMass):
        results["closed_form"] = pointmass_speed(scn.lam, dist.c)
    return results


def _cmd_heuristics(scn: Scenario, shash: str, out: str) -> dict:
    dist = scn.gamma_dist()
    law = contender_params(scn.lam, dist)
    return {
        "contender_rate": law.rate,
        "mean_increment": law.mean_increment(),
        "v_gl": glh_speed(scn.lam, dist),
        "v_rgl": rglh_speed(scn.lam, dist),
    }


def _cmd_gw(scn: Scenario, shash: str, out: str) -> dict:
    params = GwParams(scn.birth, scn.death, scn.initial)
    horizon = scn.horizon if scn.horizon > 0 else math.inf
    lines = ["# scenario=" + shash,
             "replicate,extinct,escaped,extinction_time,final_value,max_level"]
    n_extinct = n_escaped = 0
    for r in range(scn.replicates):
        run = gw_run(params, replicate_rng(scn.seed, r), horizon=horizon, cap=scn.cap)
        n_extinct += run.extinct
        n_escaped += run.escaped
        ext_t = "" if run.extinction_time is None else f"{run.extinction_time:.17g}"
        lines.append(
            f"{r},{int(run.extinct)},{int(run.escaped)},{ext_t},"
            f"{run.final_value},{run.max_level}"
        )
    with open(os.path.join(out, "runs.csv"), "w") as fh:
        fh.write("\n".join(lines) + "\n")
    results = {
        "replicates": scn.replicates,
        "n_extinct": n_extinct,
        "n_escaped": n_escaped,
        "survival_freq": 1.0 - n_extinct / scn.replicates,
    }
    if params.birth > params.death:
        results["survival_formula"] = gw_survival_formula(
            params.birth, params.death, params.initial
        )
    return results


def _cmd_fclt(scn: Scenario, shash: str, out: str) -> dict:
    law = contender_params(scn.lam, scn.gamma_dist())
    dist = scn.gamma_dist()
    calib = sample_renewal_cycles(law, 20_000, replicate_rng(scn.seed, scn.replicates))
    est = speed_estimate(calib)
    v_bar = pointmass_speed(scn.lam, dist.c) if isinstance(dist, PointMass) else est.v_hat
    sigma2 = est.sigma2_hat

    paths = []
    for r in range(scn.replicates):
        rng = replicate_rng(scn.seed, r)
        events = sample_contender_stream(law, scn.scale, rng)
        st = PitState(events=events, record_log=False, track_types=False, validate=False)
        st.advance(until=scn.scale)
        paths.append(st.resident_fitness_path())
    k = int(round(1.0 / scn.grid_step))
    grid = np.arange(1, k + 1) / k
    diag = fclt_diagnostic(paths, scn.scale, grid, v_bar, sigma2)
    lines = ["# scenario=" + shash, "t,variance"]
    for t, var in zip(diag.times, diag.variance):
        lines.append(f"{t:.17g},{var:.17g}")
    with open(os.path.join(out, "fclt.csv"), "w") as fh:
        fh.write("\n".join(lines) + "\n")
    return {
        "v_bar": v_bar,
        "sigma2": sigma2,
        "scale": scn.scale,
        "low_scale": diag.low_scale,
        "variance_at_1": float(diag.variance[-1]),
    }


_RUNNERS = {
    "pit-run": _cmd_pit_run,
    "pit-replay": _cmd_pit_replay,
    "moran-run": _cmd_moran_run,
    "couple": _cmd_couple,
    "speed": _cmd_speed,
    "heuristics": _cmd_heuristics,
    "gw": _cmd_gw,
    "fclt": _cmd_fclt,
}


def run(scn: Scenario) -> str:
    """Execute a validated scenario; returns the summary path."""
    started = time.time()
    shash = scenario_hash(scn)
    out = _out_dir(scn)
    results = _RUNNERS[scn.command](scn, shash, out)
    return _write_summary(scn, shash, results, started)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="clonepit",
        description="Clonal interference simulations: trajectory system, "
        "Moran prelimit, renewal speed estimates.",
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="scenario file (key = value lines)")
        p.add_argument("--seed", type=int, help="top-level seed (default: 0)")
        p.add_argument("--replicates", type=int, help="replicate count (default: 1)")
        p.add_argument("--horizon", type=float,
                       help="end time; cycle count for the speed command")
        p.add_argument("--out", help="output directory (default: $CLONEPIT_OUT or .)")
        p.add_argument("--grid-step", type=float, dest="grid_step",
                       help="sampling step for traces and grids (default: 0.01)")
    args = parser.parse_args(argv)

    text = ""
    if args.config:
        try:
            with open(args.config) as fh:
                text = fh.read()
        except OSError as exc:
            print(f"error: cannot read config: {exc}", file=sys.stderr)
            return 1
    overrides = {
        "command": args.command,
        "seed": args.seed,
        "replicates": args.replicates,
        "horizon": args.horizon,
        "out": args.out,
        "grid_step": args.grid_step,
    }
    try:
        scn = parse_scenario(text, overrides)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        summary = run(scn)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (InvariantViolation, OSError) as exc:
        print(f"error [{scn.command}]: {exc}", file=sys.stderr)
        return 1
    print(summary)
    return 0


if __name__ == "__main__":
    sys.exit(main())
