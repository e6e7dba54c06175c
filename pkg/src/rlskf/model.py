"""Linear time-variant state-space model and ideal-trajectory simulation.

The model is the latent VAR(1)

    X_t = F_t X_{t-1} + v_t,        v_t ~ N_p(0, Q_t)
    Y_t = Z_t X_t + eps_t,          eps_t ~ N_q(0, V_t)
    X_0 ~ N_p(a0, Q0)

with all hyper-parameters known. Time-indexed matrices are pure functions
of t (1-based); constant matrices are the common special case.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import NotSPD
from .numerics import (
    RngStream,
    as_matrix,
    as_vector,
    gaussian_sample,
    is_symmetric_pd,
    is_symmetric_psd,
)

MatrixLike = Callable[[int], np.ndarray] | np.ndarray | Sequence | float

CLEAN, AO_MARK, IO_MARK = "clean", "ao", "io"


def _provider(m: MatrixLike, rows: int, cols: int) -> Callable[[int], np.ndarray]:
    if callable(m):
        return lambda t: as_matrix(m(t), rows, cols)
    const = as_matrix(m, rows, cols)
    return lambda t: const


@dataclass(frozen=True)
class ModelSpec:
    """Hyper-parameters of the linear SSM; immutable and shareable."""

    p: int
    q: int
    F: MatrixLike
    Z: MatrixLike
    Q: MatrixLike
    V: MatrixLike
    a0: np.ndarray
    Q0: np.ndarray
    _F: Callable[[int], np.ndarray] = field(init=False, repr=False, compare=False)
    _Z: Callable[[int], np.ndarray] = field(init=False, repr=False, compare=False)
    _Q: Callable[[int], np.ndarray] = field(init=False, repr=False, compare=False)
    _V: Callable[[int], np.ndarray] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_F", _provider(self.F, self.p, self.p))
        object.__setattr__(self, "_Z", _provider(self.Z, self.q, self.p))
        object.__setattr__(self, "_Q", _provider(self.Q, self.p, self.p))
        object.__setattr__(self, "_V", _provider(self.V, self.q, self.q))
        object.__setattr__(self, "a0", as_vector(self.a0, self.p))
        object.__setattr__(self, "Q0", as_matrix(self.Q0, self.p, self.p))

    def F_at(self, t: int) -> np.ndarray:
        return self._F(t)

    def Z_at(self, t: int) -> np.ndarray:
        return self._Z(t)

    def Q_at(self, t: int) -> np.ndarray:
        return self._Q(t)

    def V_at(self, t: int) -> np.ndarray:
        return self._V(t)

    @classmethod
    def steady_state(cls) -> "ModelSpec":
        """One-dimensional random-walk benchmark model.

        F = Z = 1 with unit innovation and observation variances, started
        at a0 = 0 with Q0 = 1.
        """
        return cls(p=1, q=1, F=1.0, Z=1.0, Q=1.0, V=1.0, a0=0.0, Q0=1.0)


@dataclass
class Trajectory:
    """States X_0..X_T, observations Y_1..Y_T and per-time contamination marks."""

    states: np.ndarray  # (T+1, p)
    observations: np.ndarray  # (T, q)
    marks: list[str]  # length T, aligned with observations

    @property
    def horizon(self) -> int:
        return self.observations.shape[0]

    def copy(self) -> "Trajectory":
        return Trajectory(self.states.copy(), self.observations.copy(), list(self.marks))


def validate(model: ModelSpec, T: int) -> list[str]:
    """Dimension and definiteness diagnostics for t = 1..T (empty = valid)."""
    issues: list[str] = []
    if T < 1:
        return [f"horizon must be >= 1, got {T}"]
    if model.a0.shape != (model.p,):
        issues.append("a0 dims")
    if model.Q0.shape != (model.p, model.p):
        issues.append("Q0 dims")
    elif not is_symmetric_psd(model.Q0):
        issues.append("Q0 not PSD")
    for t in range(1, T + 1):
        for name, getter, shape in (
            ("F", model.F_at, (model.p, model.p)),
            ("Z", model.Z_at, (model.q, model.p)),
            ("Q", model.Q_at, (model.p, model.p)),
            ("V", model.V_at, (model.q, model.q)),
        ):
            try:
                m = getter(t)
            except Exception as exc:  # provider itself may reject the shape
                issues.append(f"{name} dims at t={t}: {exc}")
                continue
            if m.shape != shape:
                issues.append(f"{name} dims at t={t}")
                continue
            if name == "Q" and not is_symmetric_psd(m):
                issues.append(f"Q not PSD at t={t}")
            if name == "V" and not is_symmetric_pd(m):
                issues.append(f"V not PD at t={t}")
    return issues


def simulate_ideal(model: ModelSpec, T: int, stream: RngStream) -> Trajectory:
    """Simulate an uncontaminated trajectory.

    Sub-stream allocation is fixed (X0, then v_1..v_T, then eps_1..eps_T) so
    that trajectories are reproducible independent of later consumers.
    """
    s_x0, s_v, s_eps = stream.child(0), stream.child(1), stream.child(2)
    p, q = model.p, model.q
    states = np.empty((T + 1, p))
    obs = np.empty((T, q))
    states[0] = gaussian_sample(model.a0, model.Q0, s_x0)
    zero_p = np.zeros(p)
    zero_q = np.zeros(q)
    for t in range(1, T + 1):
        v = gaussian_sample(zero_p, model.Q_at(t), s_v)
        states[t] = model.F_at(t) @ states[t - 1] + v
    for t in range(1, T + 1):
        eps = gaussian_sample(zero_q, model.V_at(t), s_eps)
        obs[t - 1] = model.Z_at(t) @ states[t] + eps
    return Trajectory(states, obs, [CLEAN] * T)


def _require_valid(model: ModelSpec, T: int) -> None:
    issues = validate(model, T)
    if issues:
        raise NotSPD("invalid model: " + "; ".join(issues))
