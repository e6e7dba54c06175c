"""Clipping-height calibration and the least-favorable radius.

Two criteria fix the clipping height b of a robust correction step, both
evaluated under the ideal Gaussian law of the step:

* radius criterion: (1 - r) E(||W|| - b)_+ = r b, where W is the quantity
  being clipped (W = M0 dY for the AO track, W = (I - Z M0) dY for the IO
  track). The left side minus the right side is strictly decreasing in b,
  so a bracketing root search finds the unique solution.
* efficiency criterion: choose b so that the ideal-model MSE of the clipped
  step is exactly (1 + delta) times the classical one ("insurance premium"
  delta).

Given an interval [r_l, r_u] of plausible radii, the least-favorable radius
r0 equalizes two monotone inefficiency curves and is found by bisection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, Infeasible, NonConformal
from .kalman import FilterState, init, predict, steady_state_predict
from .model import ModelSpec
from .numerics import RngStream, as_matrix, psd_sqrt, solve_spd, symmetrize

DEFAULT_MC_N = 100_000
_CALIBRATION_SEED = 90210  # fixed derived stream: calibration is offline
_SQRT_2PI = math.sqrt(2.0 * math.pi)


def _phi(x: float) -> float:
    return math.exp(-0.5 * x * x) / _SQRT_2PI


def _Phi_neg(x: float) -> float:
    """P(N(0,1) > x) for x >= 0, i.e. Phi(-x)."""
    return 0.5 * math.erfc(x / math.sqrt(2.0))


@dataclass(frozen=True)
class ClippedMoments:
    """m1 = E(||W|| - b)_+ and m2 = E(||W|| - b)_+^2 with MC standard errors."""

    m1: float
    m2: float
    m1_se: float = 0.0
    m2_se: float = 0.0


class _NormLaw:
    """Distribution of ||W|| for W ~ N(0, S); exact in 1-d, sampled otherwise."""

    def m1(self, b: float) -> float:
        raise NotImplementedError

    def m2(self, b: float) -> float:
        raise NotImplementedError

    second_moment: float  # E ||W||^2
    scale: float  # sqrt(tr S)


class _ScalarNormLaw(_NormLaw):
    def __init__(self, sigma: float):
        self.sigma = sigma
        self.second_moment = sigma * sigma
        self.scale = sigma

    def m1(self, b: float) -> float:
        if self.sigma == 0.0 or math.isinf(b):
            return 0.0
        c = b / self.sigma
        return self.sigma * 2.0 * (_phi(c) - c * _Phi_neg(c))

    def m2(self, b: float) -> float:
        if self.sigma == 0.0 or math.isinf(b):
            return 0.0
        c = b / self.sigma
        return self.sigma * self.sigma * ((1.0 + c * c) * 2.0 * _Phi_neg(c) - 2.0 * c * _phi(c))


class _SampledNormLaw(_NormLaw):
    def __init__(self, s: np.ndarray, n: int, stream: RngStream):
        z = stream.gen.standard_normal((n, s.shape[0]))
        self.norms = np.linalg.norm(z @ psd_sqrt(s).T, axis=1)
        self.n = n
        self.second_moment = float(np.mean(self.norms**2))
        self.scale = math.sqrt(max(np.trace(s), 0.0))

    def _excess(self, b: float) -> np.ndarray:
        return np.clip(self.norms - b, 0.0, None)

    def m1(self, b: float) -> float:
        return 0.0 if math.isinf(b) else float(np.mean(self._excess(b)))

    def m2(self, b: float) -> float:
        return 0.0 if math.isinf(b) else float(np.mean(self._excess(b) ** 2))


def _norm_law(
    s: np.ndarray, method: str, n: int, stream: RngStream | None
) -> _NormLaw:
    s = as_matrix(s)
    if method == "quadrature-1d" or (method == "auto" and s.shape == (1, 1)):
        if s.shape != (1, 1):
            raise NonConformal("quadrature-1d requires a 1x1 covariance")
        return _ScalarNormLaw(math.sqrt(max(s[0, 0], 0.0)))
    if method not in ("auto", "monte-carlo"):
        raise DomainError(f"unknown method {method!r}")
    if stream is None:
        stream = RngStream(_CALIBRATION_SEED)
    return _SampledNormLaw(s, n, stream)


def clipped_moments(
    s,
    b: float,
    method: str = "auto",
    n: int = DEFAULT_MC_N,
    stream: RngStream | None = None,
) -> ClippedMoments:
    """Moments of the clipping excess (||N(0,S)|| - b)_+.

    For 1x1 S the closed forms (to 1e-10) are used; otherwise Monte Carlo
    with reported standard errors.
    """
    if b < 0.0:
        raise DomainError(f"clipping height must be >= 0, got {b}")
    law = _norm_law(s, method, n, stream)
    if isinstance(law, _ScalarNormLaw):
        return ClippedMoments(m1=law.m1(b), m2=law.m2(b))
    exc = law._excess(b) if not math.isinf(b) else np.zeros(1)
    m1 = float(np.mean(exc))
    m2 = float(np.mean(exc**2))
    m1_se = float(np.std(exc, ddof=1) / math.sqrt(law.n)) if exc.size > 1 else 0.0
    m2_se = float(np.std(exc**2, ddof=1) / math.sqrt(law.n)) if exc.size > 1 else 0.0
    return ClippedMoments(m1=m1, m2=m2, m1_se=m1_se, m2_se=m2_se)


@dataclass(frozen=True)
class StepGeometry:
    """Ideal-model second moments of one correction step.

    s_corr: covariance of the clipped quantity W.
    s_joint: joint covariance of (dX, dY) built from Sigma_pred, Z, V.
    trace_cond: tr Cov[dX | dY] = tr (I - M0 Z) Sigma_pred, i.e. the
        classical filtered MSE of the step.
    p: state dimension (first block of s_joint).
    """

    s_corr: np.ndarray
    s_joint: np.ndarray
    trace_cond: float
    p: int

    @property
    def q(self) -> int:
        return self.s_joint.shape[0] - self.p

    def gain(self) -> np.ndarray:
        c_xy = self.s_joint[: self.p, self.p :]
        delta = self.s_joint[self.p :, self.p :]
        return solve_spd(delta, c_xy.T).T


def _joint_cov(state: FilterState, model: ModelSpec) -> np.ndarray:
    z = model.Z_at(state.t)
    top = np.hstack([state.sigma_pred, state.sigma_pred @ z.T])
    bottom = np.hstack([z @ state.sigma_pred, state.innovation_cov])
    return np.vstack([top, bottom])


def ao_geometry(state: FilterState, model: ModelSpec) -> StepGeometry:
    """Geometry of the AO-robust step at a predicted state: W = M0 dY."""
    m = state.gain
    return StepGeometry(
        s_corr=symmetrize(m @ state.innovation_cov @ m.T),
        s_joint=_joint_cov(state, model),
        trace_cond=float(np.trace(state.sigma_filt)),
        p=model.p,
    )


def io_geometry(state: FilterState, model: ModelSpec) -> StepGeometry:
    """Geometry of the IO-robust step: W = (I - Z M0) dY."""
    z = model.Z_at(state.t)
    imzm = np.eye(model.q) - z @ state.gain
    return StepGeometry(
        s_corr=symmetrize(imzm @ state.innovation_cov @ imzm.T),
        s_joint=_joint_cov(state, model),
        trace_cond=float(np.trace(state.sigma_filt)),
        p=model.p,
    )


def _expand_bracket(f, lo: float, hi: float, grow: float = 2.0, max_iter: int = 200):
    """Grow hi until f(hi) <= 0; f(lo) must be >= 0."""
    f_hi = f(hi)
    it = 0
    while f_hi > 0.0:
        hi *= grow
        f_hi = f(hi)
        it += 1
        if it > max_iter:
            raise Infeasible("bracketing failed: objective stays positive")
    return hi


def _brentq(f, lo: float, hi: float, rtol: float = 1e-12) -> float:
    from scipy.optimize import brentq

    return float(brentq(f, lo, hi, xtol=1e-15, rtol=max(rtol, 4 * np.finfo(float).eps)))


def calibrate_b_radius(
    geom: StepGeometry,
    r: float,
    method: str = "auto",
    n: int = DEFAULT_MC_N,
    stream: RngStream | None = None,
) -> float:
    """Clipping height solving (1 - r) E(||W|| - b)_+ = r b.

    Uniqueness follows from strict monotonicity of LHS - RHS in b. A zero
    s_corr means there is no correction to clip; b = 0 is returned by
    convention.
    """
    if not 0.0 < r < 1.0:
        raise DomainError(f"radius must be in (0, 1), got {r}")
    law = _norm_law(geom.s_corr, method, n, stream)
    if law.scale <= 0.0:
        return 0.0
    f = lambda b: (1.0 - r) * law.m1(b) - r * b
    hi = _expand_bracket(f, 0.0, law.scale)
    return _brentq(f, 0.0, hi, rtol=1e-10)


def _joint_draws(geom: StepGeometry, n: int, stream: RngStream) -> tuple[np.ndarray, np.ndarray]:
    """Sample of (dX, dY) under the ideal joint Gaussian.

    Plain draws: the efficiency-criterion integrands are even under a joint
    sign flip (the clipping map is odd), so antithetic pairs would merely
    duplicate samples.
    """
    z = stream.gen.standard_normal((n, geom.s_joint.shape[0]))
    draws = z @ psd_sqrt(geom.s_joint).T
    return draws[:, : geom.p], draws[:, geom.p :]


def _clip_rows(w: np.ndarray, b: float) -> np.ndarray:
    if math.isinf(b):
        return w
    norms = np.linalg.norm(w, axis=1)
    factor = np.ones_like(norms)
    over = norms > b
    factor[over] = b / norms[over]
    return w * factor[:, None]


def efficiency_loss(
    geom: StepGeometry,
    b: float,
    n: int = DEFAULT_MC_N,
    stream: RngStream | None = None,
) -> float:
    """Monte Carlo ratio E||dX - H_b(M0 dY)||^2 / E||dX - M0 dY||^2.

    Common random numbers across numerator and denominator; b = inf gives
    exactly 1.
    """
    if stream is None:
        stream = RngStream(_CALIBRATION_SEED, 1)
    dx, dy = _joint_draws(geom, n, stream)
    mdy = dy @ geom.gain().T
    classical = float(np.mean(np.sum((dx - mdy) ** 2, axis=1)))
    loss = float(np.mean(np.sum((dx - _clip_rows(mdy, b)) ** 2, axis=1)))
    return loss / classical


def calibrate_b_efficiency(
    geom: StepGeometry,
    delta: float,
    n: int = DEFAULT_MC_N,
    stream: RngStream | None = None,
) -> float:
    """Clipping height with ideal-model MSE exactly (1 + delta) x classical.

    Both sides are evaluated by Monte Carlo on the joint Gaussian (dX, dY)
    with common random numbers; the loss is decreasing in b, so a
    bracketing search applies.
    """
    if not delta > 0.0:
        raise DomainError(f"efficiency loss must be > 0, got {delta}")
    if stream is None:
        stream = RngStream(_CALIBRATION_SEED, 1)
    dx, dy = _joint_draws(geom, n, stream)
    mdy = dy @ geom.gain().T
    err = dx - mdy
    classical = float(np.mean(np.sum(err * err, axis=1)))
    if classical <= 0.0:
        raise Infeasible("classical step has zero MSE; nothing to trade off")
    # ||dx - H_b(mdy)||^2 = ||dx - mdy||^2 + 2 (dx - mdy)'u (||mdy|| - b)_+
    #                       + (||mdy|| - b)_+^2   with u = mdy / ||mdy||,
    # so the root function only needs per-row scalars.
    norms = np.linalg.norm(mdy, axis=1)
    safe = np.where(norms > 0.0, norms, 1.0)
    cross = np.sum(err * mdy, axis=1) / safe

    def f(b: float) -> float:
        excess = np.clip(norms - b, 0.0, None)
        return float(np.mean(excess * (2.0 * cross + excess))) - delta * classical

    lo = 1e-12
    if f(lo) < 0.0:
        raise Infeasible(
            f"requested efficiency loss {delta} exceeds the b -> 0 limit; "
            "widen n if this is Monte Carlo noise"
        )
    scale = math.sqrt(max(np.trace(geom.s_corr), 1e-30))
    hi = _expand_bracket(f, lo, scale)
    return _brentq(f, lo, hi, rtol=1e-10)


def least_favorable_radius(
    geom: StepGeometry,
    r_l: float,
    r_u: float,
    tol: float = 1e-6,
    method: str = "auto",
    n: int = DEFAULT_MC_N,
    stream: RngStream | None = None,
) -> float:
    """Radius r0 in [r_l, r_u] with A_{r0} / A_{r_l} = B_{r0} / B_{r_u}.

    A_r = trace_cond + m2(b(r)) is nondecreasing and
    B_r = E||W||^2 - m2(b(r)) + b(r)^2 is nonincreasing in r, so the ratio
    difference is monotone and bisection converges; tolerance is on the
    ratio difference.
    """
    if not 0.0 <= r_l < r_u <= 1.0:
        raise DomainError(f"need 0 <= r_l < r_u <= 1, got ({r_l}, {r_u})")
    r_l = max(r_l, 1e-6)
    r_u = min(r_u, 1.0 - 1e-6)
    if r_u <= r_l:
        return 0.5 * (r_l + r_u)
    law = _norm_law(geom.s_corr, method, n, stream)
    if law.scale <= 0.0:
        return r_l

    def b_of(r: float) -> float:
        f = lambda b: (1.0 - r) * law.m1(b) - r * b
        hi = _expand_bracket(f, 0.0, law.scale)
        return _brentq(f, 0.0, hi, rtol=1e-10)

    def a_of(b: float) -> float:
        return geom.trace_cond + law.m2(b)

    def b_crit(b: float) -> float:
        return law.second_moment - law.m2(b) + b * b

    a_l = a_of(b_of(r_l))
    b_u = b_crit(b_of(r_u))
    g = lambda r: a_of(b_of(r)) / a_l - b_crit(b_of(r)) / b_u

    lo, hi = r_l, r_u
    g_mid = g(0.5 * (lo + hi))
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        g_mid = g(mid)
        if abs(g_mid) <= tol or (hi - lo) < 1e-14:
            return mid
        if g_mid < 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def steady_state_geometry(model: ModelSpec, track: str = "ao") -> StepGeometry:
    """Geometry at the Riccati fixed point of a time-invariant model."""
    state = steady_state_predict(model)
    if track == "ao":
        return ao_geometry(state, model)
    if track == "io":
        return io_geometry(state, model)
    raise DomainError(f"unknown track {track!r}")


def calibrate_policies(
    model: ModelSpec,
    T: int,
    r_ao: float = 0.1,
    r_io: float = 0.1,
    delta_ao: float | None = None,
    delta_io: float | None = None,
    mode: str = "per-step",
    n: int = DEFAULT_MC_N,
    stream: RngStream | None = None,
):
    """Clipping policies for the AO and IO tracks of one model.

    Radius calibration is the default for both tracks; a ``delta`` value
    switches that track to the efficiency criterion. ``mode`` "per-step"
    recomputes b_t at every step from the step's own geometry; the
    "steady-state" shortcut computes a single height after Riccati
    convergence (reasonable for time-invariant models). Efficiency
    calibration is Monte Carlo based and always uses the steady-state
    shortcut.
    """
    from .robust import ClippingPolicy

    if mode not in ("per-step", "steady-state"):
        raise DomainError(f"unknown calibration mode {mode!r}")
    if stream is None:
        stream = RngStream(_CALIBRATION_SEED, 2)

    def height(geom: StepGeometry, track: str) -> float:
        delta = delta_ao if track == "ao" else delta_io
        r = r_ao if track == "ao" else r_io
        if delta is not None:
            return calibrate_b_efficiency(geom, delta, n=n, stream=stream.child(0))
        return calibrate_b_radius(geom, r, n=n, stream=stream.child(1))

    if mode == "steady-state" or delta_ao is not None or delta_io is not None:
        state = steady_state_predict(model)
        b_ao = height(ao_geometry(state, model), "ao")
        b_io = height(io_geometry(state, model), "io")
        return ClippingPolicy.fixed(b_ao), ClippingPolicy.fixed(b_io)

    state = init(model)
    bs_ao: list[float] = []
    bs_io: list[float] = []
    import dataclasses as _dc

    for _ in range(T):
        state = predict(state, model)
        bs_ao.append(height(ao_geometry(state, model), "ao"))
        bs_io.append(height(io_geometry(state, model), "io"))
        state = _dc.replace(state, x_filt=state.x_pred)
    return ClippingPolicy.per_step(bs_ao), ClippingPolicy.per_step(bs_io)
