"""Command line interface: simulate, calibrate, filter, benchmark, saddle.

Exit codes: 0 success, 1 usage error, 2 numerical failure. The environment
variable RLSKF_SEED overrides the default seed when --seed is not given.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import bench, csvio
from .calibration import (
    calibrate_b_efficiency,
    calibrate_b_radius,
    calibrate_policies,
    io_geometry,
    ao_geometry,
    least_favorable_radius,
)
from .errors import ParseError, RlskfError
from .kalman import steady_state_predict
from .model import ModelSpec, simulate_ideal, validate
from .numerics import RngStream
from .robust import hybrid_run
from .saddle import SoModel, rho_solve, saddle_check
from .scenario import REGIME_VARIANTS, Scenario, contaminate, parse_scenario, reference_scenario

DEFAULT_SEED = 1729


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit with code 1
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(1)


def _seed_default() -> int:
    env = os.environ.get("RLSKF_SEED")
    return int(env) if env else DEFAULT_SEED


def _load_model(source: str) -> ModelSpec:
    if source == "steady-state":
        return ModelSpec.steady_state()
    return csvio.model_from_text(Path(source).read_text())


def _load_scenario(args, regime: str | None) -> Scenario:
    if getattr(args, "scenario_file", None):
        return parse_scenario(Path(args.scenario_file).read_text())
    if regime:
        return reference_scenario(regime)
    return Scenario.empty()


def _write(text: str, output: str | None) -> None:
    if output:
        Path(output).write_text(text)
    else:
        sys.stdout.write(text)


def _comma_list(value: str) -> tuple[str, ...]:
    return tuple(x.strip() for x in value.split(",") if x.strip())


def _comma_ints(value: str) -> tuple[int, ...]:
    return tuple(int(x) for x in value.split(",") if x.strip())


def _add_model_args(p: argparse.ArgumentParser):
    p.add_argument("--model", default="steady-state",
                   help="'steady-state' or path to a model file")
    p.add_argument("--horizon", type=int, default=50, help="number of observations T")


def _add_policy_args(p: argparse.ArgumentParser):
    p.add_argument("--r-ao", type=float, default=None, help="radius for the AO clipping height")
    p.add_argument("--r-io", type=float, default=None, help="radius for the IO clipping height")
    p.add_argument("--delta-ao", type=float, default=None,
                   help="efficiency loss for the AO height (overrides --r-ao)")
    p.add_argument("--delta-io", type=float, default=None,
                   help="efficiency loss for the IO height (overrides --r-io)")
    p.add_argument("--b-ao", type=float, default=None,
                   help="explicit AO clipping height ('inf' disables clipping)")
    p.add_argument("--b-io", type=float, default=None, help="explicit IO clipping height")
    p.add_argument("--window", type=int, default=None, help="hybrid window width w")
    p.add_argument("--switch-fraction", type=float, default=None,
                   help="hybrid switch fraction h in (0, 1]")
    p.add_argument("--quantile", type=float, default=None,
                   help="hybrid flag quantile (>= 1 disables switching)")
    p.add_argument("--calibration", choices=("per-step", "steady-state"), default=None)


def _cmd_simulate(args) -> int:
    model = _load_model(args.model)
    issues = validate(model, args.horizon)
    if issues:
        raise RlskfError("invalid model: " + "; ".join(issues))
    stream = RngStream(args.seed)
    traj = simulate_ideal(model, args.horizon, stream.child(0))
    scenario = _load_scenario(args, args.regime)
    if not scenario.is_empty():
        traj = contaminate(traj, scenario, model, stream.child(1))
    _write(csvio.trajectory_to_csv(traj), args.output)
    return 0


def _cmd_calibrate(args) -> int:
    model = _load_model(args.model)
    mode = args.calibration or "per-step"
    ao_pol, io_pol = calibrate_policies(
        model,
        args.horizon,
        r_ao=args.r if args.r is not None else 0.1,
        r_io=args.r if args.r is not None else 0.1,
        delta_ao=args.delta,
        delta_io=args.delta,
        mode=mode,
    )
    lines = ["t,b_ao,b_io"]
    for t in range(1, args.horizon + 1):
        lines.append(f"{t},{ao_pol.height_at(t):.10g},{io_pol.height_at(t):.10g}")
    _write("\n".join(lines) + "\n", args.output)

    state = steady_state_predict(model)
    geom_ao = ao_geometry(state, model)
    geom_io = io_geometry(state, model)
    r = args.r if args.r is not None else 0.1
    if args.delta is not None:
        b_ss_ao = calibrate_b_efficiency(geom_ao, args.delta)
        b_ss_io = calibrate_b_efficiency(geom_io, args.delta)
    else:
        b_ss_ao = calibrate_b_radius(geom_ao, r)
        b_ss_io = calibrate_b_radius(geom_io, r)
    r0 = least_favorable_radius(geom_ao, args.r_lower, args.r_upper)
    print(
        f"steady state: b_ao={b_ss_ao:.8g} b_io={b_ss_io:.8g} "
        f"least-favorable r0={r0:.8g} over [{args.r_lower}, {args.r_upper}]",
        file=sys.stderr,
    )
    return 0


def _cmd_filter(args) -> int:
    model = _load_model(args.model)
    traj = csvio.trajectory_from_csv(Path(args.input).read_text())
    cfg = bench.BenchmarkConfig(
        model=model,
        horizon=traj.horizon,
        replications=1,
        seed=args.seed,
        filters=(args.filter,),
        regimes=("ideal",),
        r_ao=args.r_ao if args.r_ao is not None else 0.1,
        r_io=args.r_io if args.r_io is not None else 0.1,
        delta_ao=args.delta_ao,
        delta_io=args.delta_io,
        b_ao=args.b_ao,
        b_io=args.b_io,
        window=args.window if args.window is not None else 5,
        switch_fraction=args.switch_fraction if args.switch_fraction is not None else 0.8,
        quantile=args.quantile if args.quantile is not None else 0.99,
        calibration=args.calibration or "per-step",
    )
    bank = bench.build_filter_bank(cfg)
    if args.filter == "rls-ioao":
        result = hybrid_run(model, traj.observations, bank.hybrid)
        text = csvio.estimates_to_csv(args.filter, result.x_filt, result.x_pred, result.revised)
        log_lines = ["t_start,t_end,switch_time"] + [
            f"{ev.t_start},{ev.t_end},{ev.switch_time}" for ev in result.revisions
        ]
        if args.revision_log:
            Path(args.revision_log).write_text("\n".join(log_lines) + "\n")
        else:
            for ev in result.revisions:
                print(
                    f"revised t={ev.t_start}..{ev.t_end} at switch time {ev.switch_time}",
                    file=sys.stderr,
                )
    else:
        xf, xp = bank.run(args.filter, traj.observations)
        text = csvio.estimates_to_csv(args.filter, xf, xp)
    _write(text, args.output)
    return 0


_BOOL_TRUE = ("1", "true", "yes", "on")


def _benchmark_config(args) -> tuple[bench.BenchmarkConfig, dict]:
    file_kv: dict[str, str] = {}
    if args.config:
        file_kv = csvio.parse_keyvalue(Path(args.config).read_text())

    def pick(flag_value, key: str, default, convert):
        if flag_value is not None:
            return flag_value
        if key in file_kv:
            return convert(file_kv[key])
        return default

    model_spec = pick(args.model, "model", "steady-state", str)
    scenario_file = pick(args.scenario_file, "scenario_file", None, str)
    scenario = None
    if scenario_file:
        scenario = parse_scenario(Path(scenario_file).read_text())
    regimes = pick(args.regime, "regimes", REGIME_VARIANTS, _comma_list)
    if scenario is not None and args.regime is None and "regimes" not in file_kv:
        regimes = ("custom",)
    replications = pick(args.replications, "replications", 200, int)
    single = args.single_realization or (
        file_kv.get("single_realization", "").lower() in _BOOL_TRUE
    )
    if single:
        replications = 1
    cfg = bench.BenchmarkConfig(
        model=_load_model(model_spec),
        horizon=pick(args.horizon, "horizon", 50, int),
        replications=replications,
        seed=pick(args.seed, "seed", _seed_default(), int),
        filters=pick(args.filter, "filters", bench.FILTER_NAMES, _comma_list),
        regimes=regimes,
        r_ao=pick(args.r_ao, "r_ao", 0.1, float),
        r_io=pick(args.r_io, "r_io", 0.1, float),
        delta_ao=pick(args.delta_ao, "delta_ao", None, float),
        delta_io=pick(args.delta_io, "delta_io", None, float),
        b_ao=pick(args.b_ao, "b_ao", None, float),
        b_io=pick(args.b_io, "b_io", None, float),
        window=pick(args.window, "window", 5, int),
        switch_fraction=pick(args.switch_fraction, "switch_fraction", 0.8, float),
        quantile=pick(args.quantile, "quantile", 0.99, float),
        exclude=pick(args.exclude, "exclude", (), _comma_ints),
        threads=pick(args.threads, "threads", 1, int),
        calibration=pick(args.calibration, "calibration", "per-step", str),
        scenario=scenario,
    )
    out_opts = {
        "output": pick(args.output, "output", None, str),
        "format": pick(args.format, "format", "csv", str),
        "plot_dir": pick(args.plot_dir, "plot_dir", None, str),
        "no_plots": args.no_plots or file_kv.get("no_plots", "").lower() in _BOOL_TRUE,
    }
    return cfg, out_opts


def _cmd_benchmark(args) -> int:
    cfg, out = _benchmark_config(args)
    plot_dir = None
    if out["plot_dir"]:
        plot_dir = Path(out["plot_dir"])
    elif out["output"] and not out["no_plots"]:
        plot_dir = Path(out["output"]).resolve().parent
    reports, samples = bench.run_benchmark(cfg, keep_samples=plot_dir is not None)
    if out["format"] == "table":
        text = bench.report_to_table(reports, cfg.filters)
    else:
        text = bench.report_to_csv(reports, cfg.filters)
    _write(text, out["output"])
    if plot_dir is not None:
        from . import plots

        plot_dir.mkdir(parents=True, exist_ok=True)
        for sample in samples:
            plots.render_regime_figure(sample, plot_dir / f"regime_{sample.regime}.png")
        plots.render_mse_figure(reports, cfg.filters, plot_dir / "mse_summary.png")
    return 0


def _cmd_saddle(args) -> int:
    p = len(args.cov_x)
    if len(args.cov_eps) != p:
        raise RlskfError("--cov-x and --cov-eps need the same number of entries")
    model = SoModel(
        mean_x=np.zeros(p) if args.mean_x is None else np.array(args.mean_x),
        cov_x=np.diag(args.cov_x),
        cov_eps=np.diag(args.cov_eps),
        r=args.radius,
    )
    if model.r > 0.0:
        model = SoModel(
            mean_x=model.mean_x, cov_x=model.cov_x, cov_eps=model.cov_eps,
            r=model.r, rho=rho_solve(model),
        )
    report = saddle_check(model, args.samples, RngStream(args.seed))
    for line in report.summary_lines():
        print(line)
    if args.output:
        rows = ["section,label,mse,se,diff,diff_se"]
        rows.append(
            f"reference,f0-least-favorable,{report.mse_f0_lf:.10g},"
            f"{report.mse_f0_lf_se:.10g},0,0"
        )
        for row in report.alternatives:
            rows.append(
                f"alternative,{row.label},{row.mse:.10g},{row.se:.10g},"
                f"{row.diff:.10g},{row.diff_se:.10g}"
            )
        for row in report.competitors:
            rows.append(
                f"competitor,{row.label},{row.mse:.10g},{row.se:.10g},"
                f"{row.diff:.10g},{row.diff_se:.10g}"
            )
        Path(args.output).write_text("\n".join(rows) + "\n")
    return 0 if report.holds else 2


def build_parser() -> _Parser:
    parser = _Parser(prog="rlskf", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="simulate a (possibly contaminated) trajectory")
    _add_model_args(p_sim)
    p_sim.add_argument("--seed", type=int, default=_seed_default())
    p_sim.add_argument("--regime", choices=REGIME_VARIANTS, default=None,
                       help="apply a built-in contamination regime")
    p_sim.add_argument("--scenario-file", default=None,
                       help="apply a scenario file instead of a built-in regime")
    p_sim.add_argument("--output", default=None, help="trajectory CSV path (default stdout)")
    p_sim.set_defaults(func=_cmd_simulate)

    p_cal = sub.add_parser("calibrate", help="clipping heights and least-favorable radius")
    _add_model_args(p_cal)
    p_cal.add_argument("--r", type=float, default=None, help="calibration radius (default 0.1)")
    p_cal.add_argument("--delta", type=float, default=None,
                       help="efficiency-loss criterion instead of the radius one")
    p_cal.add_argument("--calibration", choices=("per-step", "steady-state"), default=None)
    p_cal.add_argument("--r-lower", type=float, default=0.05)
    p_cal.add_argument("--r-upper", type=float, default=0.5)
    p_cal.add_argument("--output", default=None, help="b_t table CSV path (default stdout)")
    p_cal.set_defaults(func=_cmd_calibrate)

    p_fil = sub.add_parser("filter", help="run one filter over a trajectory CSV")
    p_fil.add_argument("--input", required=True, help="trajectory CSV")
    p_fil.add_argument("--filter", required=True, choices=bench.FILTER_NAMES)
    p_fil.add_argument("--model", default="steady-state")
    p_fil.add_argument("--seed", type=int, default=_seed_default())
    _add_policy_args(p_fil)
    p_fil.add_argument("--revision-log", default=None,
                       help="CSV path for hybrid revision events")
    p_fil.add_argument("--output", default=None, help="estimates CSV path (default stdout)")
    p_fil.set_defaults(func=_cmd_filter)

    p_ben = sub.add_parser("benchmark", help="run the contamination benchmark")
    p_ben.add_argument("--config", default=None, help="key = value config file")
    p_ben.add_argument("--model", default=None)
    p_ben.add_argument("--horizon", type=int, default=None)
    p_ben.add_argument("--replications", type=int, default=None)
    p_ben.add_argument("--seed", type=int, default=None)
    p_ben.add_argument("--filter", type=_comma_list, default=None,
                       help="comma list of filters")
    p_ben.add_argument("--regime", type=_comma_list, default=None,
                       help="comma list of regimes")
    p_ben.add_argument("--exclude", type=_comma_ints, default=None,
                       help="comma list of time indices excluded from the MSE")
    p_ben.add_argument("--single-realization", action="store_true",
                       help="one replication (ergodic table)")
    p_ben.add_argument("--threads", type=int, default=None)
    p_ben.add_argument("--scenario-file", default=None,
                       help="custom contamination scenario")
    _add_policy_args(p_ben)
    p_ben.add_argument("--format", choices=("csv", "table"), default=None)
    p_ben.add_argument("--output", default=None, help="report path (default stdout)")
    p_ben.add_argument("--plot-dir", default=None, help="directory for rendered figures")
    p_ben.add_argument("--no-plots", action="store_true",
                       help="skip figure rendering next to --output")
    p_ben.set_defaults(func=_cmd_benchmark)

    p_sad = sub.add_parser("saddle", help="verify the one-step saddle point by Monte Carlo")
    p_sad.add_argument("--cov-x", type=lambda s: [float(x) for x in s.split(",")],
                       default=[1.0], help="diagonal of Var X")
    p_sad.add_argument("--cov-eps", type=lambda s: [float(x) for x in s.split(",")],
                       default=[1.0], help="diagonal of Var eps")
    p_sad.add_argument("--mean-x", type=lambda s: [float(x) for x in s.split(",")],
                       default=None)
    p_sad.add_argument("--radius", type=float, default=0.2, help="contamination radius r")
    p_sad.add_argument("--samples", type=int, default=200_000)
    p_sad.add_argument("--seed", type=int, default=_seed_default())
    p_sad.add_argument("--output", default=None, help="CSV report path")
    p_sad.set_defaults(func=_cmd_saddle)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ParseError as exc:
        print(f"rlskf: {exc}", file=sys.stderr)
        return 1
    except (RlskfError, np.linalg.LinAlgError) as exc:
        print(f"rlskf: numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
