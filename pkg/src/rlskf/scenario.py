"""Declarative contamination of ideal trajectories.

Additive outliers (AO) edit observations only and never propagate.
Innovation-type events (IO: level shifts, local linear trends) enter the
state recursion and propagate: a level shift holds the state exactly
``magnitude`` above the ideal path over its window, a linear trend ramps
it by k * magnitude at the k-th window step; after the window the offset
evolves freely through the transition matrices. Because the offset path is
deterministic given the model, contamination is exact re-simulation under
common random numbers without redrawing any noise. Random substitutive
outliers (SO) replace each observation independently with probability r.

Application order: IO events, then random SOs, then AO patches.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, OutOfHorizon, ParseError
from .model import AO_MARK, CLEAN, IO_MARK, ModelSpec, Trajectory
from .numerics import RngStream, as_vector

AO_MODES = ("replace", "add")
IO_KINDS = ("level-shift", "linear-trend")
SO_LAWS = ("point", "gauss")


@dataclass(frozen=True)
class AoPatch:
    """Deterministic observation edit at a single time."""

    t: int
    mode: str  # replace | add
    value: np.ndarray

    def __post_init__(self):
        if self.mode not in AO_MODES:
            raise DomainError(f"AO mode must be one of {AO_MODES}, got {self.mode!r}")
        object.__setattr__(self, "value", as_vector(self.value))


@dataclass(frozen=True)
class IoEvent:
    """State-level event over [t_start, t_end] with per-step magnitude."""

    t_start: int
    t_end: int
    kind: str  # level-shift | linear-trend
    magnitude: np.ndarray

    def __post_init__(self):
        if self.kind not in IO_KINDS:
            raise DomainError(f"IO kind must be one of {IO_KINDS}, got {self.kind!r}")
        if self.t_start > self.t_end:
            raise DomainError(f"need t_start <= t_end, got [{self.t_start}, {self.t_end}]")
        object.__setattr__(self, "magnitude", as_vector(self.magnitude))


@dataclass(frozen=True)
class SoRandom:
    """Each observation independently replaced with probability r."""

    r: float
    law: str  # point | gauss
    params: tuple[float, ...]  # point: the replacement vector; gauss: (mean, scale)

    def __post_init__(self):
        if not 0.0 <= self.r <= 1.0:
            raise DomainError(f"SO radius must be in [0, 1], got {self.r}")
        if self.law not in SO_LAWS:
            raise DomainError(f"SO law must be one of {SO_LAWS}, got {self.law!r}")
        object.__setattr__(self, "params", tuple(float(x) for x in self.params))


@dataclass(frozen=True)
class Scenario:
    """Contamination plan: AO patches, IO events, optional random SO."""

    ao_patches: tuple[AoPatch, ...] = ()
    io_events: tuple[IoEvent, ...] = ()
    so_random: SoRandom | None = None

    @classmethod
    def empty(cls) -> "Scenario":
        return cls()

    def is_empty(self) -> bool:
        return not self.ao_patches and not self.io_events and self.so_random is None

    def coincident_times(self) -> tuple[int, ...]:
        """Times where a deterministic AO falls inside an IO window."""
        hits = set()
        for patch in self.ao_patches:
            for ev in self.io_events:
                if ev.t_start <= patch.t <= ev.t_end:
                    hits.add(patch.t)
        return tuple(sorted(hits))


def _offset_path(model: ModelSpec, ev: IoEvent, T: int) -> np.ndarray:
    """Deterministic state offset X_re - X_id caused by one IO event."""
    path = np.zeros((T + 1, model.p))
    mag = as_vector(ev.magnitude, model.p)
    for t in range(ev.t_start, T + 1):
        if t <= ev.t_end:
            k = t - ev.t_start + 1
            path[t] = mag if ev.kind == "level-shift" else k * mag
        else:
            path[t] = model.F_at(t) @ path[t - 1]
    return path


def contaminate(
    traj: Trajectory, sc: Scenario, model: ModelSpec, stream: RngStream
) -> Trajectory:
    """Apply a scenario to an ideal trajectory; the input is not modified."""
    T = traj.horizon
    out = traj.copy()

    for ev in sc.io_events:
        if not 1 <= ev.t_start <= ev.t_end <= T:
            raise OutOfHorizon(f"IO window [{ev.t_start}, {ev.t_end}] outside 1..{T}")
        offset = _offset_path(model, ev, T)
        out.states += offset
        for t in range(ev.t_start, T + 1):
            out.observations[t - 1] += model.Z_at(t) @ offset[t]
        for t in range(ev.t_start, ev.t_end + 1):
            out.marks[t - 1] = IO_MARK

    if sc.so_random is not None and sc.so_random.r > 0.0:
        so = sc.so_random
        hits = stream.child(0).gen.uniform(size=T) < so.r
        draw_stream = stream.child(1)
        for t in np.flatnonzero(hits) + 1:
            if so.law == "point":
                value = as_vector(so.params, model.q)
            else:
                mean, scale = so.params
                value = mean + scale * draw_stream.gen.standard_normal(model.q)
            out.observations[t - 1] = value
            out.marks[t - 1] = AO_MARK

    for patch in sc.ao_patches:
        if not 1 <= patch.t <= T:
            raise OutOfHorizon(f"AO time {patch.t} outside 1..{T}")
        value = as_vector(patch.value, model.q)
        if patch.mode == "replace":
            out.observations[patch.t - 1] = value
        else:
            out.observations[patch.t - 1] = out.observations[patch.t - 1] + value
        out.marks[patch.t - 1] = AO_MARK

    return out


def parse_scenario(text: str) -> Scenario:
    """Parse the plain-text scenario format (one directive per line).

        ao <replace|add> <t> <v1> [<v2> ...]
        io <level-shift|linear-trend> <t_start> <t_end> <m1> [<m2> ...]
        so <r> <point c1 ... | gauss mean scale>

    '#' begins a comment; unknown directives are rejected with the line
    number.
    """
    patches: list[AoPatch] = []
    events: list[IoEvent] = []
    so: SoRandom | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        kind = tokens[0]
        try:
            if kind == "ao":
                if len(tokens) < 4:
                    raise ValueError("ao needs: mode, t, value...")
                if tokens[1] not in AO_MODES:
                    raise ValueError(f"unknown ao mode {tokens[1]!r}")
                patches.append(
                    AoPatch(t=int(tokens[2]), mode=tokens[1], value=[float(x) for x in tokens[3:]])
                )
            elif kind == "io":
                if len(tokens) < 5:
                    raise ValueError("io needs: kind, t_start, t_end, magnitude...")
                if tokens[1] not in IO_KINDS:
                    raise ValueError(f"unknown io kind {tokens[1]!r}")
                events.append(
                    IoEvent(
                        t_start=int(tokens[2]),
                        t_end=int(tokens[3]),
                        kind=tokens[1],
                        magnitude=[float(x) for x in tokens[4:]],
                    )
                )
            elif kind == "so":
                if so is not None:
                    raise ValueError("only one so directive allowed")
                if len(tokens) < 3:
                    raise ValueError("so needs: r, law, params...")
                law = tokens[2]
                if law == "point":
                    if len(tokens) < 4:
                        raise ValueError("so point needs a replacement vector")
                    params = tuple(float(x) for x in tokens[3:])
                elif law == "gauss":
                    if len(tokens) != 5:
                        raise ValueError("so gauss needs: mean, scale")
                    params = (float(tokens[3]), float(tokens[4]))
                else:
                    raise ValueError(f"unknown so law {law!r}")
                so = SoRandom(r=float(tokens[1]), law=law, params=params)
            else:
                raise ValueError(f"unknown directive {kind!r}")
        except (ValueError, DomainError) as exc:
            raise ParseError(str(exc), line=lineno) from exc
    return Scenario(ao_patches=tuple(patches), io_events=tuple(events), so_random=so)


# Defaults for the built-in benchmark regimes on the 1-d steady-state model.
# All magnitudes are expressed in units of the steady-state innovation
# standard deviation sqrt(Delta_inf) = sqrt((1 + sqrt(5))/2 + 1) ~ 1.618:
# observation bumps of 8 units at three times, a level shift holding +8
# units over observations 37..42, and a local linear trend climbing
# +2 units per step over observations 20..25. The common unit keeps every
# event far enough above the hybrid's 99% flag threshold to separate the
# four regimes cleanly.
OUTLIER_UNIT = float(np.sqrt((1.0 + np.sqrt(5.0)) / 2.0 + 1.0))
AO_TIMES = (10, 15, 23)
AO_BUMP = 8.0 * OUTLIER_UNIT
TREND_WINDOW = (20, 25)
TREND_SLOPE = 2.0 * OUTLIER_UNIT
SHIFT_WINDOW = (37, 42)
SHIFT_SIZE = 8.0 * OUTLIER_UNIT

REGIME_VARIANTS = ("ideal", "io", "ao", "io-and-ao")


def reference_scenario(variant: str) -> Scenario:
    """Built-in contamination regimes used by the benchmark CLI."""
    if variant not in REGIME_VARIANTS:
        raise DomainError(f"unknown regime {variant!r}; choose from {REGIME_VARIANTS}")
    patches = tuple(AoPatch(t=t, mode="add", value=[AO_BUMP]) for t in AO_TIMES)
    events = (
        IoEvent(t_start=TREND_WINDOW[0], t_end=TREND_WINDOW[1], kind="linear-trend",
                magnitude=[TREND_SLOPE]),
        IoEvent(t_start=SHIFT_WINDOW[0], t_end=SHIFT_WINDOW[1], kind="level-shift",
                magnitude=[SHIFT_SIZE]),
    )
    if variant == "ideal":
        return Scenario.empty()
    if variant == "ao":
        return Scenario(ao_patches=patches)
    if variant == "io":
        return Scenario(io_events=events)
    return Scenario(ao_patches=patches, io_events=events)
