"""Problem configs (JSON) and CSV/JSON export.

A config describes one problem::

    {
      "type": "retarded" | "neutral" | "system",
      "delays": [0, 0.5, 1], "a": [0, 1, 1], "d": [0, 0.5],   # scalar equations
      "A": [[...]], "b": [...]  or  "g": [...],                  # systems
      "y": 1.0,
      "x0": {"const": 0} | {"poly": [c0, c1, ...]} | {"samples": [...]},
      "x0_deriv": {...},                                        # neutral only
      "epsilon": 0.5,
      "grid_h": 0.001
    }

For systems ``y`` is a list and ``x0`` is either one descriptor (used for every
component) or a list of descriptors. A general pair (A, b) is brought to companion
form on load, and the state is transformed with it.
"""

from __future__ import annotations

import csv
import io as _io
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional, Union

import numpy as np

from .core import (
    ControlSignal,
    DelayEquation,
    GridFunction,
    InitialState,
    RetardedSystem,
    grid_function,
    steps,
)
from .exceptions import ConfigError, GridError

__all__ = [
    "Problem",
    "load_config",
    "parse_config",
    "format_float",
    "trajectory_rows",
    "control_rows",
    "write_table",
    "read_generator_csv",
    "dumps_json",
]

DEFAULT_H = 1e-3


@dataclass(frozen=True, eq=False)
class Problem:
    kind: str
    model: Union[DelayEquation, RetardedSystem]
    state: InitialState
    epsilon: float
    h: float
    raw: dict

    @property
    def horizon(self) -> float:
        n = self.model.dim if isinstance(self.model, RetardedSystem) else 1
        return n + self.epsilon


def _require(cfg: dict, key: str):
    if key not in cfg:
        raise ConfigError(f"missing key '{key}'")
    return cfg[key]


def _number(value, key: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"key '{key}' must be a number, got {value!r}")
    return float(value)


def _numbers(value, key: str) -> list:
    if not isinstance(value, list):
        raise ConfigError(f"key '{key}' must be a list of numbers")
    return [_number(v, f"{key}[{i}]") for i, v in enumerate(value)]


def _history(desc, key: str, h: float) -> np.ndarray:
    """Samples on ``[-1, 0]`` from a ``const`` / ``poly`` / ``samples`` descriptor."""
    if not isinstance(desc, dict) or len(desc) != 1:
        raise ConfigError(f"key '{key}' must be an object with exactly one of 'const', 'poly', 'samples'")
    (form, value), = desc.items()
    M = steps(1.0, h)
    if form == "const":
        c = _number(value, f"{key}.const")
        return np.full(M + 1, c)
    if form == "poly":
        coef = _numbers(value, f"{key}.poly")
        if not coef:
            raise ConfigError(f"key '{key}.poly' must not be empty")
        return grid_function(-1.0, 0.0, h, np.polynomial.Polynomial(coef)).samples
    if form == "samples":
        vals = _numbers(value, f"{key}.samples")
        if len(vals) != M + 1:
            raise ConfigError(f"key '{key}.samples' needs {M + 1} values for grid_h={h}, got {len(vals)}")
        return np.array(vals)
    raise ConfigError(f"key '{key}' has unknown form '{form}' (expected const, poly or samples)")


def _vector_history(desc, key: str, h: float, n: int) -> np.ndarray:
    if isinstance(desc, list):
        if len(desc) != n:
            raise ConfigError(f"key '{key}' lists {len(desc)} components, expected {n}")
        cols = [_history(s, f"{key}[{i}]", h) for i, s in enumerate(desc)]
    else:
        cols = [_history(desc, key, h)] * n
    return np.stack(cols, axis=-1)


def parse_config(cfg: Any, h_override: Optional[float] = None) -> Problem:
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    kind = _require(cfg, "type")
    if kind not in ("retarded", "neutral", "system"):
        raise ConfigError(f"key 'type' must be retarded, neutral or system, got {kind!r}")
    h = h_override if h_override is not None else _number(cfg.get("grid_h", DEFAULT_H), "grid_h")
    eps = _number(_require(cfg, "epsilon"), "epsilon")
    try:
        steps(1.0, h)
        steps(eps, h)
    except GridError as exc:
        raise ConfigError(f"key 'grid_h'/'epsilon': {exc}") from exc

    if kind == "system":
        try:
            if "g" in cfg:
                model = RetardedSystem.companion(_numbers(cfg["g"], "g"))
            else:
                A = _require(cfg, "A")
                if not isinstance(A, list) or not all(isinstance(r, list) for r in A):
                    raise ConfigError("key 'A' must be a list of rows")
                model = RetardedSystem([_numbers(r, f"A[{i}]") for i, r in enumerate(A)], _numbers(_require(cfg, "b"), "b"))
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(f"key 'A'/'b'/'g': {exc}") from exc
        n = model.dim
        y = _numbers(_require(cfg, "y"), "y") if isinstance(cfg.get("y"), list) else [_number(_require(cfg, "y"), "y")] * n
        if len(y) != n:
            raise ConfigError(f"key 'y' has {len(y)} entries, expected {n}")
        x0 = _vector_history(_require(cfg, "x0"), "x0", h, n)
        state = InitialState(np.array(y), GridFunction(-1.0, 0.0, x0))
        if not model.is_companion():
            # work in companion coordinates x -> G x; the control is unchanged
            from .optimal import transform_state
            from .spectral import companion_transform

            model, G = companion_transform(model)
            state = transform_state(state, G)
        if not 0.0 < eps < 1.0:
            raise ConfigError(f"key 'epsilon' must lie in (0, 1), got {eps}")
        return Problem(kind, model, state, eps, h, cfg)

    delays = _numbers(_require(cfg, "delays"), "delays")
    a = _numbers(_require(cfg, "a"), "a")
    d = _numbers(cfg.get("d", []), "d")
    if kind == "neutral" and (not d or d[-1] == 0.0):
        raise ConfigError("key 'd': a neutral equation needs d_N != 0")
    if kind == "retarded" and any(v != 0.0 for v in d):
        raise ConfigError("key 'd': a retarded equation must not have derivative delays")
    try:
        eq = DelayEquation(tuple(delays), tuple(a), tuple(d))
        for r in delays:
            steps(r, h)
        eq.check_epsilon(eps)
    except (ValueError, GridError) as exc:
        raise ConfigError(f"keys 'delays'/'a'/'d'/'epsilon': {exc}") from exc
    y = _number(_require(cfg, "y"), "y")
    x0 = GridFunction(-1.0, 0.0, _history(_require(cfg, "x0"), "x0", h))
    dx0 = None
    if "x0_deriv" in cfg:
        dx0 = GridFunction(-1.0, 0.0, _history(cfg["x0_deriv"], "x0_deriv", h))
    return Problem(kind, eq, InitialState(y, x0, dx0), eps, h, cfg)


def load_config(path: Union[str, Path], h_override: Optional[float] = None) -> Problem:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return parse_config(cfg, h_override)


# ---------------------------------------------------------------------------
# export


def format_float(v) -> str:
    return "%.17g" % v


def trajectory_rows(traj, t_from: float = -1.0):
    """Header and rows ``t, x`` (or ``t, x_1..x_n``), plus ``dx`` when available."""
    vals = traj.values
    i0 = vals.node_index(t_from)
    t = vals.t[i0:]
    x = vals.samples[i0:]
    if x.ndim == 1:
        header = ["t", "x"]
        cols = [x]
    else:
        header = ["t"] + [f"x_{k + 1}" for k in range(x.shape[1])]
        cols = [x[:, k] for k in range(x.shape[1])]
    if traj.deriv is not None:
        header.append("dx")
        cols.append(traj.deriv.samples[i0:])
    rows = [[format_float(ti)] + [format_float(np.real(c[j])) for c in cols] for j, ti in enumerate(t)]
    return header, rows


def control_rows(u: ControlSignal):
    """``t, u, segment_label``; breakpoints appear once per adjacent segment."""
    rows = []
    for seg in u.segments:
        for ti, ui in zip(seg.fn.t, seg.fn.samples):
            rows.append([format_float(ti), format_float(np.real(ui)), seg.label])
    return ["t", "u", "segment_label"], rows


def write_table(path: Path, header, rows, fmt: str = "csv") -> Path:
    path = Path(path)
    if fmt == "json":
        path = path.with_suffix(".json")
        path.write_text(dumps_json({"columns": list(header), "rows": rows}))
        return path
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    path.write_text(buf.getvalue())
    return path


def read_generator_csv(path: Union[str, Path], h: float) -> GridFunction:
    """Read ``t, u`` rows (header optional) as a generator on ``[0, eps]``."""
    try:
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r]
    except OSError as exc:
        raise ConfigError(f"cannot read generator file {path}: {exc}") from exc
    try:
        float(rows[0][0])
    except (ValueError, IndexError):
        rows = rows[1:]
    try:
        data = np.array([[float(r[0]), float(r[1])] for r in rows])
    except (ValueError, IndexError) as exc:
        raise ConfigError(f"{path}: generator rows must be 't,u' numbers") from exc
    if len(data) < 3 or abs(data[0, 0]) > 1e-12:
        raise ConfigError(f"{path}: generator must start at t=0 and have at least 3 rows")
    if not np.allclose(np.diff(data[:, 0]), h, rtol=1e-6, atol=0):
        raise ConfigError(f"{path}: generator nodes must be spaced by grid_h={h}")
    return GridFunction(0.0, float(data[-1, 0]), data[:, 1])


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def dumps_json(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=2) + "\n"
