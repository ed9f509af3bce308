"""Run configuration: a JSON document with nested sections.

Every key has a default; unknown keys are rejected.  Input files
(``verify.state``, ``represent.input``) are resolved relative to the config
file; ``output`` is relative to the working directory.  ``--set section.key=value``
overrides on the command line take precedence over the file.  Example::

    {
      "experiment": "solve",
      "disorder": {"dimension": 1, "charges": [[1, 0.5], [2, 0.5]],
                   "r_disp": 0.1, "half_width": 0.2},
      "grid": {"L": 8, "N": 32},
      "kernel": {"m": 1.0},
      "fill": {"mode": "neutral"},
      "solver": {"tol": 1e-8},
      "seeds": [0, 1, 2],
      "output": "out/solve"
    }
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from pathlib import Path

from .disorder import DisorderParams
from .experiments import FillSpec
from .scf import SCFOptions

CHECKS = ("hoffmann_ostenhof", "lieb_thirring", "self_consistency", "spectral_projection", "representability")

EXPERIMENTS = ("sample", "solve", "sweep-l", "sweep-m", "verify", "represent")

DEFAULTS: dict = {
    "experiment": None,
    "disorder": {
        "dimension": 1,
        "charges": [[1.0, 1.0]],
        "r_disp": 0.0,
        "half_width": 0.25,
        "uniform": None,
    },
    "grid": {"L": 4, "N": 32, "L_values": [4, 8, 16, 32]},
    "kernel": {"m": 1.0, "m_values": [2.0, 1.0, 0.5, 0.25, 0.1, 0.0]},
    "fill": {"mode": "neutral", "value": None},
    "solver": {
        "alpha": 0.3,
        "tol": 1e-8,
        "max_iter": 1000,
        "deg_tol": None,
        "eigensolver": "auto",
        "dense_max": 6000,
        "anderson": True,
        "anderson_depth": 6,
        "init": "mu",
        "pinning_window": 0.05,
        "pinning_max_levels": 4,
    },
    "seeds": [0],
    "sweep": {"workers": 1, "band": None},
    "verify": {
        "checks": list(CHECKS),
        "trials": 100,
        "lt_policy": "half",
        "level": None,
        "trial_seed": 0,
        "state": None,
    },
    "represent": {"input": None},
    "output": "out",
}

FILL_MODES = ("neutral", "count", "per_cell", "fermi")


class ConfigError(ValueError):
    pass


def _merge(base: dict, update: dict, schema: dict = DEFAULTS, where: str = "") -> dict:
    """Sections are the keys whose default is a dict; everything else is a leaf."""
    out = copy.deepcopy(base)
    for key, value in update.items():
        path = f"{where}{key}"
        if key not in schema:
            raise ConfigError(f"unknown config key {path!r}")
        if isinstance(schema[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"config key {path!r} must be a section")
            out[key] = _merge(base[key], value, schema[key], path + ".")
        else:
            out[key] = value
    return out


def parse_override(text: str) -> tuple[list[str], object]:
    """``a.b=value``; the value is read as JSON when possible, else kept as a string."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not of the form key=value")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip().split("."), value


def _nest(path: list[str], value) -> dict:
    out: dict = value
    for part in reversed(path):
        out = {part: out}
    return out


@dataclass(frozen=True)
class RunConfig:
    params: DisorderParams
    uniform: float | None
    L: int
    N: int
    L_values: tuple[int, ...]
    m: float
    m_values: tuple[float, ...]
    fill: FillSpec
    options: SCFOptions
    seeds: tuple[int, ...]
    workers: int
    band: float | None
    checks: tuple[str, ...]
    trials: int
    lt_policy: object
    level: float | None
    trial_seed: int
    state: str | None
    represent_input: str | None
    output: Path
    experiment: str | None
    raw: dict


def _seeds(value) -> tuple[int, ...]:
    if isinstance(value, dict):
        unknown = set(value) - {"start", "count"}
        if unknown:
            raise ConfigError(f"unknown seed keys {sorted(unknown)}")
        start, count = int(value.get("start", 0)), int(value["count"])
        return tuple(range(start, start + count))
    if isinstance(value, int):
        return (value,)
    return tuple(int(s) for s in value)


def build_config(data: dict | None = None, overrides=()) -> RunConfig:
    """Merge defaults, file data and overrides, then validate everything."""
    merged = _merge(DEFAULTS, data or {})
    for text in overrides:
        path, value = parse_override(text)
        merged = _merge(merged, _nest(path, value))
    try:
        return _validate(merged)
    except ConfigError:
        raise
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError(str(exc)) from exc


def _validate(c: dict) -> RunConfig:
    dis = c["disorder"]
    params = DisorderParams(
        dimension=int(dis["dimension"]),
        charges=tuple(tuple(q) for q in dis["charges"]),
        r_disp=float(dis["r_disp"]),
        half_width=float(dis["half_width"]),
    )
    uniform = dis["uniform"]
    if uniform is not None and float(uniform) < 0:
        raise ConfigError("disorder.uniform must be non-negative")
    grid = c["grid"]
    for name in ("L", "N"):
        if not isinstance(grid[name], int) or isinstance(grid[name], bool):
            raise ConfigError(f"grid.{name} must be an integer")
    if grid["L"] < 1:
        raise ConfigError("grid.L must be >= 1")
    if grid["N"] < 4 or grid["N"] % 2:
        raise ConfigError("grid.N must be even and >= 4")
    fill = c["fill"]
    if fill["mode"] not in FILL_MODES:
        raise ConfigError(f"fill.mode must be one of {FILL_MODES}")
    fill_spec = FillSpec(fill["mode"], None if fill["value"] is None else float(fill["value"]))
    kernel = c["kernel"]
    m = float(kernel["m"])
    m_values = tuple(float(v) for v in kernel["m_values"])
    if m < 0 or any(v < 0 for v in m_values):
        raise ConfigError("kernel masses must be >= 0")
    options = SCFOptions(**c["solver"])
    seeds = _seeds(c["seeds"])
    if not seeds:
        raise ConfigError("at least one seed is required")
    sweep = c["sweep"]
    if int(sweep["workers"]) < 1:
        raise ConfigError("sweep.workers must be >= 1")
    if c["experiment"] is not None and c["experiment"] not in EXPERIMENTS:
        raise ConfigError(f"experiment must be one of {EXPERIMENTS}")
    ver = c["verify"]
    unknown = set(ver["checks"]) - set(CHECKS)
    if unknown:
        raise ConfigError(f"unknown checks {sorted(unknown)}; known: {CHECKS}")
    if ver["lt_policy"] not in ("half", "semiclassical") and not isinstance(ver["lt_policy"], (int, float)):
        raise ConfigError("verify.lt_policy must be 'half', 'semiclassical' or a number")
    if int(ver["trials"]) < 1:
        raise ConfigError("verify.trials must be >= 1")
    return RunConfig(
        params=params,
        uniform=None if uniform is None else float(uniform),
        L=grid["L"],
        N=grid["N"],
        L_values=tuple(int(v) for v in grid["L_values"]),
        m=m,
        m_values=m_values,
        fill=fill_spec,
        options=options,
        seeds=seeds,
        workers=int(sweep["workers"]),
        band=None if sweep["band"] is None else float(sweep["band"]),
        checks=tuple(ver["checks"]),
        trials=int(ver["trials"]),
        lt_policy=ver["lt_policy"],
        level=None if ver["level"] is None else float(ver["level"]),
        trial_seed=int(ver["trial_seed"]),
        state=ver["state"],
        represent_input=c["represent"]["input"],
        output=Path(c["output"]),
        experiment=c["experiment"],
        raw=c,
    )


def load_config(path=None, overrides=()) -> RunConfig:
    data = {}
    if path is not None:
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be an object")
        data = _resolve_inputs(data, Path(path).parent)
    return build_config(data, overrides)


def _resolve_inputs(data: dict, base: Path) -> dict:
    """Input files named in a config file are relative to that file."""
    data = copy.deepcopy(data)
    for section, key in (("verify", "state"), ("represent", "input")):
        sec = data.get(section)
        if isinstance(sec, dict) and isinstance(sec.get(key), str) and not Path(sec[key]).is_absolute():
            sec[key] = str(base / sec[key])
    return data
