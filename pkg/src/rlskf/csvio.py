"""File formats of the CLI: trajectory CSV, estimates CSV, model and config files."""

from __future__ import annotations

import numpy as np

from .errors import ParseError
from .model import CLEAN, ModelSpec, Trajectory


def _fmt(x: float) -> str:
    return format(x, ".10g")


def trajectory_to_csv(traj: Trajectory) -> str:
    """Header t,x_1..x_p,y_1..y_q,mark; the t=0 row has empty y fields."""
    p = traj.states.shape[1]
    q = traj.observations.shape[1]
    cols = (
        ["t"]
        + [f"x_{i + 1}" for i in range(p)]
        + [f"y_{i + 1}" for i in range(q)]
        + ["mark"]
    )
    lines = [",".join(cols)]
    lines.append(",".join(["0"] + [_fmt(v) for v in traj.states[0]] + [""] * q + [CLEAN]))
    for t in range(1, traj.horizon + 1):
        row = (
            [str(t)]
            + [_fmt(v) for v in traj.states[t]]
            + [_fmt(v) for v in traj.observations[t - 1]]
            + [traj.marks[t - 1]]
        )
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def trajectory_from_csv(text: str) -> Trajectory:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ParseError("empty trajectory file")
    header = lines[0].split(",")
    p = sum(1 for c in header if c.startswith("x_"))
    q = sum(1 for c in header if c.startswith("y_"))
    if header[:1] != ["t"] or p == 0 or q == 0 or header[-1] != "mark":
        raise ParseError(f"unexpected trajectory header: {lines[0]!r}")
    T = len(lines) - 2
    if T < 0:
        raise ParseError("trajectory file has no data rows")
    states = np.empty((T + 1, p))
    obs = np.empty((T, q))
    marks = [CLEAN] * T
    for i, line in enumerate(lines[1:]):
        cells = line.split(",")
        if len(cells) != 1 + p + q + 1:
            raise ParseError(f"wrong cell count: {line!r}", line=i + 2)
        t = int(cells[0])
        if t != i:
            raise ParseError(f"non-contiguous time index {t}", line=i + 2)
        states[t] = [float(c) for c in cells[1 : 1 + p]]
        if t > 0:
            obs[t - 1] = [float(c) for c in cells[1 + p : 1 + p + q]]
            marks[t - 1] = cells[-1]
    return Trajectory(states=states, observations=obs, marks=marks)


def estimates_to_csv(
    name: str, x_filt: np.ndarray, x_pred: np.ndarray, revised: np.ndarray | None = None
) -> str:
    """Header t,filter,xfilt_1..p,xpred_1..p,revised (revised in {0,1})."""
    T, p = x_filt.shape
    cols = (
        ["t", "filter"]
        + [f"xfilt_{i + 1}" for i in range(p)]
        + [f"xpred_{i + 1}" for i in range(p)]
        + ["revised"]
    )
    lines = [",".join(cols)]
    for t in range(T):
        flag = "1" if revised is not None and bool(revised[t]) else "0"
        row = (
            [str(t + 1), name]
            + [_fmt(v) for v in x_filt[t]]
            + [_fmt(v) for v in x_pred[t]]
            + [flag]
        )
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def parse_keyvalue(text: str) -> dict[str, str]:
    """Plain 'key = value' lines; '#' comments; later keys override earlier."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"expected 'key = value', got {line!r}", line=lineno)
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _parse_matrix(text: str) -> np.ndarray:
    rows = [r for r in text.split(";") if r.strip()]
    return np.array([[float(x) for x in row.split(",")] for row in rows])


def model_from_text(text: str) -> ModelSpec:
    """Model file: keys p, q, F, Z, Q, V, a0, Q0.

    Matrices are row-major with ';' between rows and ',' between entries.
    """
    kv = parse_keyvalue(text)
    missing = [k for k in ("p", "q", "F", "Z", "Q", "V", "a0", "Q0") if k not in kv]
    if missing:
        raise ParseError(f"model file missing keys: {', '.join(missing)}")
    try:
        return ModelSpec(
            p=int(kv["p"]),
            q=int(kv["q"]),
            F=_parse_matrix(kv["F"]),
            Z=_parse_matrix(kv["Z"]),
            Q=_parse_matrix(kv["Q"]),
            V=_parse_matrix(kv["V"]),
            a0=np.array([float(x) for x in kv["a0"].split(",")]),
            Q0=_parse_matrix(kv["Q0"]),
        )
    except ValueError as exc:
        raise ParseError(f"bad model file: {exc}") from exc
