"""Benchmark harness: contamination regimes x filters -> empirical MSEs.

For every regime and replication the harness simulates an ideal
trajectory, applies the regime's contamination, runs each configured
filter and records the time-averaged squared estimation error of the
filtered and the one-step-predicted states. Results are aggregated over
replications (mean and standard error); ``replications = 1`` mirrors a
single-realization "ergodic" table.

Replication randomness derives from a master seed by (regime, replication)
index, so results are byte-identical regardless of execution order or
thread count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .calibration import calibrate_policies
from .errors import DomainError, EmptyAfterExclusion
from .kalman import classic_corrector, filter_run, states_to_arrays
from .model import ModelSpec, Trajectory, simulate_ideal
from .numerics import RngStream
from .robust import (
    ClippingPolicy,
    HybridConfig,
    hybrid_run,
    rls_ao_corrector,
    rls_io_corrector,
)
from .scenario import REGIME_VARIANTS, Scenario, contaminate, reference_scenario

FILTER_NAMES = ("kalman", "rls-io", "rls-ao", "rls-ioao")
KINDS = ("filter", "pred")


@dataclass(frozen=True)
class BenchmarkConfig:
    """Everything one benchmark run depends on."""

    model: ModelSpec
    horizon: int = 50
    replications: int = 200
    seed: int = 0
    filters: tuple[str, ...] = FILTER_NAMES
    regimes: tuple[str, ...] = REGIME_VARIANTS
    r_ao: float = 0.1
    r_io: float = 0.1
    delta_ao: float | None = None
    delta_io: float | None = None
    b_ao: float | None = None  # explicit overrides (may be inf)
    b_io: float | None = None
    window: int = 5
    switch_fraction: float = 0.8
    quantile: float = 0.99
    exclude: tuple[int, ...] = ()
    threads: int = 1
    calibration: str = "per-step"
    scenario: Scenario | None = None  # used by the "custom" regime

    def __post_init__(self):
        if self.replications < 1:
            raise DomainError("replications must be >= 1")
        if not self.filters:
            raise DomainError("filter list must be nonempty")
        for f in self.filters:
            if f not in FILTER_NAMES:
                raise DomainError(f"unknown filter {f!r}; choose from {FILTER_NAMES}")
        for rg in self.regimes:
            if rg not in REGIME_VARIANTS + ("custom",):
                raise DomainError(f"unknown regime {rg!r}")
        if "custom" in self.regimes and self.scenario is None:
            raise DomainError("regime 'custom' needs a scenario")


@dataclass
class MseReport:
    """Per-regime empirical MSEs of all configured filters."""

    regime: str
    replications: int
    excluded: tuple[int, ...]
    mse: dict[tuple[str, str], float]  # (filter, kind) -> mean over replications
    se: dict[tuple[str, str], float]
    samples: dict[tuple[str, str], np.ndarray] = field(default_factory=dict, repr=False)

    def sample_diff(self, better: str, worse: str, kind: str = "filter"):
        """Paired per-replication MSE difference worse - better and its SE."""
        d = self.samples[(worse, kind)] - self.samples[(better, kind)]
        se = float(np.std(d, ddof=1) / math.sqrt(d.size)) if d.size > 1 else 0.0
        return float(np.mean(d)), se


def empirical_mse(true_states, estimates, exclude: tuple[int, ...] = ()) -> float:
    """Mean over non-excluded t of ||X_t - estimate_t||^2 (t is 1-based)."""
    truth = np.atleast_2d(np.asarray(true_states, dtype=float))
    est = np.atleast_2d(np.asarray(estimates, dtype=float))
    if truth.shape != est.shape:
        raise DomainError(f"length mismatch: {truth.shape} vs {est.shape}")
    keep = np.ones(truth.shape[0], dtype=bool)
    for t in exclude:
        if 1 <= t <= truth.shape[0]:
            keep[t - 1] = False
    if not keep.any():
        raise EmptyAfterExclusion("no time points left after exclusion")
    err = truth[keep] - est[keep]
    return float(np.mean(np.sum(err * err, axis=1)))


@dataclass(frozen=True)
class FilterBank:
    """Pre-resolved policies shared by all replications of one benchmark."""

    model: ModelSpec
    ao_policy: ClippingPolicy
    io_policy: ClippingPolicy
    hybrid: HybridConfig

    def run(self, name: str, observations) -> tuple[np.ndarray, np.ndarray]:
        """Return (x_filt, x_pred) arrays of shape (T, p) for one filter."""
        if name == "kalman":
            states = filter_run(self.model, observations, classic_corrector(self.model))
            return states_to_arrays(states)
        if name == "rls-ao":
            states = filter_run(self.model, observations, rls_ao_corrector(self.ao_policy))
            return states_to_arrays(states)
        if name == "rls-io":
            states = filter_run(
                self.model, observations, rls_io_corrector(self.io_policy, self.model)
            )
            return states_to_arrays(states)
        if name == "rls-ioao":
            result = hybrid_run(self.model, observations, self.hybrid)
            return result.x_filt, result.x_pred
        raise DomainError(f"unknown filter {name!r}")


def build_filter_bank(cfg: BenchmarkConfig) -> FilterBank:
    need_calibration = (
        (cfg.b_ao is None or cfg.b_io is None)
        and ({"rls-ao", "rls-io", "rls-ioao"} & set(cfg.filters))
    )
    if need_calibration:
        ao_pol, io_pol = calibrate_policies(
            cfg.model,
            cfg.horizon,
            r_ao=cfg.r_ao,
            r_io=cfg.r_io,
            delta_ao=cfg.delta_ao,
            delta_io=cfg.delta_io,
            mode=cfg.calibration,
        )
    else:
        ao_pol = io_pol = ClippingPolicy.unclipped()
    if cfg.b_ao is not None:
        ao_pol = ClippingPolicy.fixed(cfg.b_ao)
    if cfg.b_io is not None:
        io_pol = ClippingPolicy.fixed(cfg.b_io)
    hybrid = HybridConfig(
        ao_policy=ao_pol,
        io_policy=io_pol,
        window=cfg.window,
        switch_fraction=cfg.switch_fraction,
        quantile=cfg.quantile,
    )
    return FilterBank(model=cfg.model, ao_policy=ao_pol, io_policy=io_pol, hybrid=hybrid)


def _regime_scenario(cfg: BenchmarkConfig, regime: str) -> Scenario:
    if regime == "custom":
        return cfg.scenario
    return reference_scenario(regime)


@dataclass
class SampleRealization:
    """First replication of a regime, kept for plotting."""

    regime: str
    trajectory: Trajectory
    estimates: dict[str, np.ndarray]  # filter -> x_filt (T, p)


def run_benchmark(
    cfg: BenchmarkConfig, keep_samples: bool = False
) -> tuple[list[MseReport], list[SampleRealization]]:
    """Run all regimes; returns per-regime reports (and optionally the first
    replication of each regime for figure rendering)."""
    bank = build_filter_bank(cfg)
    reports: list[MseReport] = []
    realizations: list[SampleRealization] = []

    for regime_idx, regime in enumerate(cfg.regimes):
        scenario = _regime_scenario(cfg, regime)

        def one_replication(rep: int, _regime_idx=regime_idx, _scenario=scenario):
            stream = RngStream(cfg.seed).child(_regime_idx, rep)
            ideal = simulate_ideal(cfg.model, cfg.horizon, stream.child(0))
            traj = contaminate(ideal, _scenario, cfg.model, stream.child(1))
            truth = traj.states[1:]
            row: dict[tuple[str, str], float] = {}
            estimates: dict[str, np.ndarray] = {}
            for name in cfg.filters:
                xf, xp = bank.run(name, traj.observations)
                row[(name, "filter")] = empirical_mse(truth, xf, cfg.exclude)
                row[(name, "pred")] = empirical_mse(truth, xp, cfg.exclude)
                estimates[name] = xf
            return row, traj, estimates

        if cfg.threads > 1:
            with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
                results = list(pool.map(one_replication, range(cfg.replications)))
        else:
            results = [one_replication(rep) for rep in range(cfg.replications)]

        samples = {
            (name, kind): np.array([res[0][(name, kind)] for res in results])
            for name in cfg.filters
            for kind in KINDS
        }
        mse = {key: float(np.mean(vals)) for key, vals in samples.items()}
        se = {
            key: (
                float(np.std(vals, ddof=1) / math.sqrt(vals.size))
                if vals.size > 1
                else float("nan")
            )
            for key, vals in samples.items()
        }
        reports.append(
            MseReport(
                regime=regime,
                replications=cfg.replications,
                excluded=tuple(cfg.exclude),
                mse=mse,
                se=se,
                samples=samples,
            )
        )
        if keep_samples:
            _, traj0, est0 = results[0]
            realizations.append(
                SampleRealization(regime=regime, trajectory=traj0, estimates=est0)
            )
    return reports, realizations


def _fmt(x: float) -> str:
    return format(x, ".10g")


def report_to_csv(reports: list[MseReport], filters: tuple[str, ...]) -> str:
    """CSV with columns regime,filter,kind,mse,se,replications,excluded."""
    lines = ["regime,filter,kind,mse,se,replications,excluded"]
    for report in reports:
        excluded = ";".join(str(t) for t in report.excluded)
        for name in filters:
            for kind in KINDS:
                lines.append(
                    ",".join(
                        [
                            report.regime,
                            name,
                            kind,
                            _fmt(report.mse[(name, kind)]),
                            _fmt(report.se[(name, kind)]),
                            str(report.replications),
                            excluded,
                        ]
                    )
                )
    return "\n".join(lines) + "\n"


def parse_report_csv(text: str) -> list[MseReport]:
    """Inverse of :func:`report_to_csv` (samples are not round-tripped)."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    header = "regime,filter,kind,mse,se,replications,excluded"
    if not lines or lines[0] != header:
        raise DomainError(f"unexpected report header: {lines[:1]}")
    by_regime: dict[str, MseReport] = {}
    order: list[str] = []
    for line in lines[1:]:
        regime, name, kind, mse, se, reps, excluded = line.split(",")
        if regime not in by_regime:
            excl = tuple(int(t) for t in excluded.split(";") if t)
            by_regime[regime] = MseReport(
                regime=regime, replications=int(reps), excluded=excl, mse={}, se={}
            )
            order.append(regime)
        by_regime[regime].mse[(name, kind)] = float(mse)
        by_regime[regime].se[(name, kind)] = float(se)
    return [by_regime[rg] for rg in order]


def report_to_table(reports: list[MseReport], filters: tuple[str, ...]) -> str:
    """Plain-text table; the per-regime minimum in each row is starred."""
    width = max(len(f) for f in filters) + 2
    head = f"{'regime':<12}{'kind':<8}" + "".join(f"{f:>{width + 2}}" for f in filters)
    lines = [head, "-" * len(head)]
    for report in reports:
        for kind in KINDS:
            values = [report.mse[(name, kind)] for name in filters]
            best = min(range(len(values)), key=values.__getitem__)
            cells = []
            for i, v in enumerate(values):
                mark = "*" if i == best else " "
                cells.append(f"{v:>{width}.4f}{mark} ")
            lines.append(f"{report.regime:<12}{kind:<8}" + "".join(cells).rstrip())
    if reports and reports[0].excluded:
        lines.append(f"excluded times: {', '.join(str(t) for t in reports[0].excluded)}")
    return "\n".join(lines) + "\n"
