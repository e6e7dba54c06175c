"""Robust correction steps and the windowed hybrid filter.

rLS.AO replaces the classical correction increment M0 dY by its radial
clipping H_b(M0 dY), which bounds the influence of any single observation.
rLS.IO ("hysteric" filter) instead damps the estimate of the observation
error, following the data closely; it needs an invertible Z_t. The hybrid
rLS.IOAO runs both in parallel and switches to the IO track, with delay w,
when a high fraction of recent standardized innovations is large.
"""

from __future__ import annotations

import dataclasses
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DomainError, NonConformal, SingularZ
from .kalman import Corrector, FilterState, init, predict
from .model import ModelSpec
from .numerics import as_matrix, as_vector, chi_square_quantile, solve_spd

_MAX_Z_COND = 1e12


def weighted_norm(v: np.ndarray, weight: np.ndarray | None = None) -> float:
    """Euclidean norm, or the Mahalanobis norm sqrt(v' W v) for SPD ``weight``."""
    if weight is None:
        return float(np.linalg.norm(v))
    return float(math.sqrt(max(v @ (weight @ v), 0.0)))


def huberize(v, b: float, weight: np.ndarray | None = None) -> np.ndarray:
    """Radial shrinkage v * min{1, b / ||v||}; b = inf returns v unchanged.

    The weight at v = 0 is defined as 1 (limit convention), so the origin
    maps to itself for every b.
    """
    if not b > 0.0:
        raise DomainError(f"clipping height must be > 0, got {b}")
    v = as_vector(v)
    if math.isinf(b):
        return v
    nrm = weighted_norm(v, weight)
    if nrm <= b:
        return v
    return v * (b / nrm)


@dataclass(frozen=True)
class ClippingPolicy:
    """How the clipping height b_t is obtained.

    ``heights`` is either a single constant (possibly inf) or a 1-based
    per-step sequence; queries past the end of a sequence return its last
    entry (the post-convergence value of a time-invariant model).
    ``weight`` switches the clipping norm from Euclidean to Mahalanobis.
    """

    heights: float | tuple[float, ...]
    weight: np.ndarray | None = None

    def __post_init__(self):
        if isinstance(self.heights, (int, float)):
            object.__setattr__(self, "heights", float(self.heights))
            hs: Sequence[float] = (self.heights,)
        else:
            hs = tuple(float(h) for h in self.heights)
            if not hs:
                raise DomainError("per-step policy needs at least one height")
            object.__setattr__(self, "heights", hs)
        if any(not h > 0.0 for h in hs):
            raise DomainError("clipping heights must be > 0")
        if self.weight is not None:
            object.__setattr__(self, "weight", as_matrix(self.weight))

    @property
    def mode(self) -> str:
        return "fixed" if isinstance(self.heights, float) else "per-step"

    def height_at(self, t: int) -> float:
        if isinstance(self.heights, float):
            return self.heights
        idx = min(max(t, 1), len(self.heights)) - 1
        return self.heights[idx]

    @classmethod
    def fixed(cls, b: float, weight: np.ndarray | None = None) -> "ClippingPolicy":
        return cls(heights=float(b), weight=weight)

    @classmethod
    def per_step(cls, bs: Sequence[float], weight: np.ndarray | None = None) -> "ClippingPolicy":
        return cls(heights=tuple(bs), weight=weight)

    @classmethod
    def unclipped(cls) -> "ClippingPolicy":
        return cls(heights=math.inf)


def correct_rls_ao(state: FilterState, y, policy: ClippingPolicy) -> FilterState:
    """AO-robust correction: X_{t|t} = X_{t|t-1} + H_b(M0 dY).

    Covariance bookkeeping is classical (already carried by the predicted
    state); only the increment is clipped.
    """
    if state.x_pred is None:
        raise NonConformal("correct requires a predicted state")
    y = as_vector(y, state.y_pred.shape[0])
    innovation = y - state.y_pred
    b = policy.height_at(state.t)
    x_filt = state.x_pred + huberize(state.gain @ innovation, b, policy.weight)
    return dataclasses.replace(state, x_filt=x_filt, innovation=innovation)


def correct_rls_io(
    state: FilterState, y, policy: ClippingPolicy, model: ModelSpec
) -> FilterState:
    """IO-robust correction X_{t|t} = X_{t|t-1} + Z^{-1}[dY - H_b((I - Z M0) dY)].

    Offered for square invertible Z_t only; the clipping height applies to
    the residual-estimate term (I - Z M0) dY.
    """
    if state.x_pred is None:
        raise NonConformal("correct requires a predicted state")
    y = as_vector(y, model.q)
    if model.p != model.q:
        raise SingularZ(f"IO-robust step needs square Z, got {model.q}x{model.p}")
    z = model.Z_at(state.t)
    if np.linalg.cond(z) >= _MAX_Z_COND:
        raise SingularZ(f"Z at t={state.t} has condition number >= {_MAX_Z_COND:g}")
    innovation = y - state.y_pred
    residual_est = innovation - z @ (state.gain @ innovation)  # (I - Z M0) dY
    b = policy.height_at(state.t)
    damped = huberize(residual_est, b, policy.weight)
    x_filt = state.x_pred + np.linalg.solve(z, innovation - damped)
    return dataclasses.replace(state, x_filt=x_filt, innovation=innovation)


def rls_ao_corrector(policy: ClippingPolicy) -> Corrector:
    return lambda state, y: correct_rls_ao(state, y, policy)


def rls_io_corrector(policy: ClippingPolicy, model: ModelSpec) -> Corrector:
    return lambda state, y: correct_rls_io(state, y, policy, model)


def hybrid_flag(innovation, innovation_cov, quantile: float) -> bool:
    """True iff dY' Delta^{-1} dY exceeds the chi-square(q) ``quantile``.

    ``quantile >= 1`` never flags (used to disable switching).
    """
    if quantile >= 1.0:
        return False
    innovation = as_vector(innovation)
    d2 = float(innovation @ solve_spd(as_matrix(innovation_cov), innovation))
    return d2 > chi_square_quantile(innovation.shape[0], quantile)


@dataclass(frozen=True)
class HybridConfig:
    """Tuning of the hybrid filter: window w, switch fraction h, flag quantile."""

    ao_policy: ClippingPolicy
    io_policy: ClippingPolicy
    window: int = 5
    switch_fraction: float = 0.8
    quantile: float = 0.99

    def __post_init__(self):
        if self.window < 1:
            raise DomainError(f"window must be >= 1, got {self.window}")
        if not 0.0 < self.switch_fraction <= 1.0:
            raise DomainError(f"switch fraction must be in (0, 1], got {self.switch_fraction}")

    @property
    def flags_needed(self) -> int:
        return math.ceil(self.switch_fraction * self.window)


@dataclass(frozen=True)
class EmittedOutput:
    """Provisional filter output for one time step (may be revised later)."""

    t: int
    x_filt: np.ndarray
    x_pred: np.ndarray
    revised: bool = False


@dataclass(frozen=True)
class RevisionEvent:
    """Outputs t_start..t_end were replaced by IO-track values at switch_time."""

    t_start: int
    t_end: int
    switch_time: int


@dataclass
class HybridState:
    """Single-owner mutable state of one hybrid run."""

    ao_track: FilterState
    io_track: FilterState
    io_history: deque  # last w corrected IO FilterStates
    flag_window: deque  # last w booleans, aligned with io_history
    emitted: list[EmittedOutput] = field(default_factory=list)
    revisions: list[RevisionEvent] = field(default_factory=list)


def hybrid_init(model: ModelSpec, cfg: HybridConfig) -> HybridState:
    start = init(model)
    return HybridState(
        ao_track=start,
        io_track=start,
        io_history=deque(maxlen=cfg.window),
        flag_window=deque(maxlen=cfg.window),
    )


def hybrid_step(state: HybridState, y, cfg: HybridConfig, model: ModelSpec) -> HybridState:
    """Advance both tracks one step; emit the AO value, switching if flagged.

    When at least ceil(h*w) of the last w flags (computed from the AO
    track's standardized innovation) are set, the last w emitted outputs
    are revised to the stored IO values, the AO track continues from the
    IO track's current state, and the flag window is cleared.
    """
    ao_pred = predict(state.ao_track, model)
    io_pred = predict(state.io_track, model)
    ao_corr = correct_rls_ao(ao_pred, y, cfg.ao_policy)
    io_corr = correct_rls_io(io_pred, y, cfg.io_policy, model)
    flag = hybrid_flag(ao_corr.innovation, ao_corr.innovation_cov, cfg.quantile)

    state.io_track = io_corr
    state.io_history.append(io_corr)
    state.flag_window.append(flag)
    state.emitted.append(
        EmittedOutput(t=ao_corr.t, x_filt=ao_corr.x_filt, x_pred=ao_corr.x_pred)
    )
    state.ao_track = ao_corr

    if sum(state.flag_window) >= cfg.flags_needed:
        k = len(state.io_history)
        for back, io_state in enumerate(reversed(state.io_history)):
            slot = len(state.emitted) - 1 - back
            state.emitted[slot] = EmittedOutput(
                t=io_state.t, x_filt=io_state.x_filt, x_pred=io_state.x_pred, revised=True
            )
        state.revisions.append(
            RevisionEvent(t_start=ao_corr.t - k + 1, t_end=ao_corr.t, switch_time=ao_corr.t)
        )
        state.ao_track = io_corr  # inherits state and covariance
        state.flag_window.clear()
    return state


@dataclass
class HybridResult:
    """Final (revised) output series of a hybrid run plus its revision log."""

    x_filt: np.ndarray  # (T, p)
    x_pred: np.ndarray  # (T, p)
    revised: np.ndarray  # (T,) bool
    revisions: list[RevisionEvent]


def hybrid_run(model: ModelSpec, observations, cfg: HybridConfig) -> HybridResult:
    """Batch hybrid filter: returns the series after all revisions."""
    obs = np.atleast_2d(np.asarray(observations, dtype=float))
    if obs.size == 0:
        return HybridResult(
            x_filt=np.empty((0, model.p)),
            x_pred=np.empty((0, model.p)),
            revised=np.empty(0, dtype=bool),
            revisions=[],
        )
    state = hybrid_init(model, cfg)
    for y in obs:
        hybrid_step(state, y, cfg, model)
    xf = np.stack([e.x_filt for e in state.emitted])
    xp = np.stack([e.x_pred for e in state.emitted])
    revised = np.array([e.revised for e in state.emitted], dtype=bool)
    return HybridResult(x_filt=xf, x_pred=xp, revised=revised, revisions=state.revisions)
