"""Classical Kalman recursions: init, predict, correct, full filter runs.

The covariance recursion is shared by every robust variant in this package:
only the correction increment changes. Since the covariances, gain and
innovation covariance do not depend on the data, :func:`predict` already
carries the corrected covariance of the upcoming step; correctors fill in
the state estimate and the innovation.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import NonConformal, NotSPD
from .model import ModelSpec
from .numerics import as_vector, solve_spd, symmetrize

Corrector = Callable[["FilterState", np.ndarray], "FilterState"]


@dataclass(frozen=True)
class FilterState:
    """Immutable snapshot of all per-step filter quantities at time t."""

    t: int
    x_filt: np.ndarray | None  # X_{t|t}
    sigma_filt: np.ndarray  # Sigma_{t|t}
    x_pred: np.ndarray | None = None  # X_{t|t-1}
    sigma_pred: np.ndarray | None = None  # Sigma_{t|t-1}
    gain: np.ndarray | None = None  # M0_t (p x q)
    innovation_cov: np.ndarray | None = None  # Delta_t (q x q)
    innovation: np.ndarray | None = None  # Delta Y_t
    y_pred: np.ndarray | None = None  # Z_t X_{t|t-1}


def init(model: ModelSpec) -> FilterState:
    """Start the recursion: X_{0|0} = a0, Sigma_{0|0} = Q0."""
    return FilterState(t=0, x_filt=model.a0.copy(), sigma_filt=model.Q0.copy())


def predict(state: FilterState, model: ModelSpec) -> FilterState:
    """Advance to time t+1; populates prediction, gain and covariances.

    The returned state is "predicted but not corrected": ``x_filt`` is None
    while ``sigma_filt`` already holds the (data-independent) corrected
    covariance (I - M0 Z) Sigma_pred, symmetrized.
    """
    if state.x_filt is None:
        raise NonConformal("predict requires a corrected state")
    t = state.t + 1
    f = model.F_at(t)
    z = model.Z_at(t)
    x_pred = f @ state.x_filt
    sigma_pred = symmetrize(f @ state.sigma_filt @ f.T + model.Q_at(t))
    delta = symmetrize(z @ sigma_pred @ z.T + model.V_at(t))
    try:
        gain = solve_spd(delta, z @ sigma_pred).T  # Sigma_pred Z^T Delta^{-1}
    except NotSPD as exc:
        raise NotSPD(f"innovation covariance not PD at t={t}: {exc}") from exc
    sigma_filt = symmetrize((np.eye(model.p) - gain @ z) @ sigma_pred)
    return FilterState(
        t=t,
        x_filt=None,
        sigma_filt=sigma_filt,
        x_pred=x_pred,
        sigma_pred=sigma_pred,
        gain=gain,
        innovation_cov=delta,
        innovation=None,
        y_pred=z @ x_pred,
    )


def correct_classic(state: FilterState, y, model: ModelSpec) -> FilterState:
    """Classical correction X_{t|t} = X_{t|t-1} + M0 dY."""
    y = as_vector(y, model.q)
    if state.x_pred is None:
        raise NonConformal("correct requires a predicted state")
    innovation = y - state.y_pred
    x_filt = state.x_pred + state.gain @ innovation
    return dataclasses.replace(state, x_filt=x_filt, innovation=innovation)


def classic_corrector(model: ModelSpec) -> Corrector:
    return lambda state, y: correct_classic(state, y, model)


def filter_run(
    model: ModelSpec,
    observations: Sequence | np.ndarray,
    corrector: Corrector | None = None,
) -> list[FilterState]:
    """Run init, then alternate predict / corrector over all observations.

    ``corrector`` is how robust variants plug in; default is the classical
    correction. Returns the corrected states for t = 1..T.
    """
    obs = np.atleast_2d(np.asarray(observations, dtype=float))
    if obs.size == 0:
        return []
    if obs.shape[1] != model.q:
        raise NonConformal(f"observations have dim {obs.shape[1]}, model q={model.q}")
    if corrector is None:
        corrector = classic_corrector(model)
    state = init(model)
    out: list[FilterState] = []
    for y in obs:
        state = corrector(predict(state, model), y)
        out.append(state)
    return out


def steady_state_predict(
    model: ModelSpec, tol: float = 1e-13, max_iter: int = 100_000
) -> FilterState:
    """Iterate the covariance recursion of a time-invariant model to its
    Riccati fixed point; returns the converged predicted state (t is the
    step at which successive Delta_t changed by less than ``tol``)."""
    state = init(model)
    prev_delta = None
    for _ in range(max_iter):
        state = predict(state, model)
        if prev_delta is not None:
            if np.abs(state.innovation_cov - prev_delta).max() < tol:
                return state
        prev_delta = state.innovation_cov
        state = dataclasses.replace(state, x_filt=state.x_pred)
    raise NotSPD(f"covariance recursion did not converge within {max_iter} steps")


def states_to_arrays(states: Sequence[FilterState]) -> tuple[np.ndarray, np.ndarray]:
    """Stack (x_filt, x_pred) of a filter run into (T, p) arrays."""
    if not states:
        return np.empty((0, 0)), np.empty((0, 0))
    xf = np.stack([s.x_filt for s in states])
    xp = np.stack([s.x_pred for s in states])
    return xf, xp
