"""Experiment configuration: flat ``section.key = value`` files, one experiment each.

The syntax is the dotted-key subset of TOML, so files are parsed with the
standard TOML reader.  Every key is checked against a per-experiment schema
before anything runs; errors carry the line of the offending key.
"""

from __future__ import annotations

import math
import re
import sys
from dataclasses import dataclass, field
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


class ConfigError(ValueError):
    """Invalid configuration; ``line`` is 1-based or ``None`` when not attributable."""

    def __init__(self, message: str, line: int | None = None, source: str | None = None):
        self.line = line
        self.source = source
        where = source or "<config>"
        prefix = f"{where}:{line}: " if line is not None else f"{where}: "
        super().__init__(prefix + message)


# --- schema ------------------------------------------------------------------
# each entry: key -> (type tag, default); ``None`` default means optional/auto

FLOAT, INT, STR, BOOL, FLOATS, INTS = "float", "int", "str", "bool", "float list", "int list"

COMMON: dict[str, tuple[str, Any]] = {
    "experiment": (STR, None),
    "seed": (INT, 0),
    "output.dir": (STR, "out"),
    "damping.kind": (STR, "periodic-power"),
    "damping.gamma": (FLOAT, 1.0),
    "damping.eps0": (FLOAT, 1.0),
    "damping.amplitude": (FLOAT, 1.0),
    "damping.sharpness": (INT, 4),
    "damping.center": (FLOATS, None),
    "damping.axes": (INTS, None),
    "damping.floor": (FLOAT, None),
}

KIND_KEYS: dict[str, dict[str, tuple[str, Any]]] = {
    "resolvent-q0": {
        "params.mu": (FLOATS, [-100.0, -10.0, -1.0, 0.0, 0.5] + [10 ** (1 + 2 * j / 19) for j in range(20)]),
        "params.tol": (FLOAT, 1e-6),
        "params.exponent_tol": (FLOAT, 0.05),
        "params.fit_lo": (FLOAT, 10.0),
        "params.fit_hi": (FLOAT, 1000.0),
        "geometry.box": (FLOAT, None),
        "geometry.box_factor": (FLOAT, 8.0),
        "geometry.box_min": (FLOAT, 20.0),
        "geometry.modes": (INT, None),
    },
    "resolvent-1d": {
        "params.lambda": (FLOATS, [20 * 25 ** (j / 7) for j in range(8)]),
        "params.tol": (FLOAT, 1e-6),
        "params.exponent_tol": (FLOAT, 0.07),
        "params.top_min_slope": (FLOAT, 0.9),
        "params.delta": (FLOAT, 0.125),
    },
    "gcc": {
        "params.lambda": (FLOATS, [4.0, 6.0, 8.0, 11.0, 16.0, 22.0, 30.0]),
        "params.tol": (FLOAT, 1e-6),
        "params.exponent_tol": (FLOAT, None),
        "params.direction_count": (INT, 64),
        "params.base_count": (INT, 16),
        "params.t_max": (FLOAT, None),
        "params.eps": (FLOAT, 0.01),
        "geometry.dims": (INTS, [1, 1]),
    },
    "simulate": {
        "params.dt": (FLOAT, 1e-3),
        "params.horizon": (FLOAT, 50.0),
        "params.stride": (FLOAT, 0.1),
        "params.residual_tol": (FLOAT, 1e-8),
        "params.energy_tol": (FLOAT, 1e-11),
        "params.order_check": (BOOL, False),
        "params.order_window": (FLOAT, 5.0),
        "params.decay": (BOOL, False),
        "params.decay_horizon": (FLOAT, 60.0),
        "params.decay_k_max": (INT, 3000),
        "params.decay_window_lo": (FLOAT, -3.0),
        "params.decay_window_hi": (FLOAT, -1.2),
        "params.bump_center": (FLOAT, 0.0),
        "params.bump_width": (FLOAT, 0.5),
        "geometry.modes": (INT, 64),
        "geometry.dims": (INTS, [1, 1]),
    },
    "quasimode": {
        "params.k": (INTS, [64, 128, 256, 384, 512]),
        "params.ratio_tol": (FLOAT, 1.2),
        "params.cutoff": (STR, "plateau"),
    },
    "sharpness": {
        "params.mu": (FLOATS, [10 ** (2 + 2 * j / 9) for j in range(10)]),
        "params.spread_tol": (FLOAT, 2.0),
        "geometry.dims": (INTS, [1]),
    },
    "regions": {
        "params.lambda": (FLOATS, [1e2, 1e4, 1e6]),
        "params.samples": (INT, 100_000),
        "params.metric_samples": (INT, 1_000_000),
        "params.probe_samples": (INT, 10_000),
        "params.r": (FLOAT, 0.1),
        "params.threshold": (FLOAT, 0.125),
        "params.table_rows": (INT, 2000),
    },
    "reduce-check": {
        "params.count": (INT, 50),
        "params.lambda": (FLOAT, 7.3),
        "params.tol": (FLOAT, 1e-12),
        "geometry.modes": (INT, 32),
        "geometry.dims": (INTS, [1, 1]),
    },
}

DESCRIPTIONS = {
    "resolvent-q0": "sigma_min(Q0 - mu) across all shift branches, with the growth exponent for large mu",
    "resolvent-1d": "worst-over-omega sigma_min(P_{lambda,omega}) on the circle against lambda",
    "gcc": "ray certification plus sigma_min(P_lambda) slope on the 2-torus",
    "simulate": "damped wave evolution: dissipation identity, energy monotonicity, decay",
    "quasimode": "||P_k u_k|| / k^{1/(gamma+1)} for concentrating quasimodes",
    "sharpness": "modulated-dilated witness ratio for Q0 - mu",
    "regions": "phase-space tags, metric weight and slow-variation probe",
    "reduce-check": "partial-Fourier reduction identity on random fields",
}

DAMPING_KINDS = ("periodic-power", "radial-power", "strip", "constant")

POSITIVE_KEYS = {
    "damping.floor", "params.tol", "params.exponent_tol", "params.top_min_slope", "params.delta", "params.t_max",
    "params.eps", "params.dt", "params.horizon", "params.stride", "params.residual_tol", "params.energy_tol",
    "params.order_window", "params.decay_horizon", "params.decay_k_max", "params.bump_width", "params.ratio_tol",
    "params.spread_tol", "params.samples", "params.metric_samples", "params.probe_samples", "params.r",
    "params.threshold", "params.table_rows", "params.count", "geometry.box", "geometry.box_factor",
    "geometry.box_min", "params.direction_count", "params.base_count",
}


@dataclass
class ExperimentConfig:
    """Validated configuration: the flat key/value map with defaults filled in."""

    values: dict[str, Any]
    source: str | None = field(default=None, compare=False)

    @property
    def kind(self) -> str:
        return self.values["experiment"]

    def __getitem__(self, key: str) -> Any:
        return self.values[key]

    def get(self, key: str, default: Any = None) -> Any:
        return self.values.get(key, default)


def _flatten(table: dict, prefix: str = "") -> dict[str, Any]:
    out = {}
    for key, value in table.items():
        full = f"{prefix}{key}"
        if isinstance(value, dict):
            out.update(_flatten(value, full + "."))
        else:
            out[full] = value
    return out


def _line_of(text: str, key: str) -> int | None:
    """1-based line where ``key`` is assigned (dotted form or inside a ``[table]``)."""
    dotted = re.compile(r"^\s*" + re.escape(key).replace(r"\.", r"\s*\.\s*") + r"\s*=")
    head, _, leaf = key.rpartition(".")
    table = None
    for n, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        if stripped.startswith("[") and stripped.endswith("]"):
            table = stripped.strip("[]").strip()
            continue
        if dotted.match(line):
            return n
        if head and table == head and re.match(r"^\s*" + re.escape(leaf) + r"\s*=", line):
            return n
    return None


def _coerce(key: str, tag: str, value: Any, line: int | None, source: str | None) -> Any:
    def bad(what: str):
        raise ConfigError(f"{key} must be {what}, got {value!r}", line, source)

    if tag == FLOAT:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            bad("a number")
        if not math.isfinite(value):
            bad("finite")
        return float(value)
    if tag == INT:
        if isinstance(value, bool) or not isinstance(value, int):
            bad("an integer")
        return int(value)
    if tag == STR:
        if not isinstance(value, str):
            bad("a string")
        return value
    if tag == BOOL:
        if not isinstance(value, bool):
            bad("true or false")
        return value
    if tag in (FLOATS, INTS):
        if not isinstance(value, list) or not value:
            bad("a non-empty list")
        inner = FLOAT if tag == FLOATS else INT
        return [_coerce(key, inner, v, line, source) for v in value]
    raise AssertionError(tag)


def _check_values(v: dict[str, Any], lines: dict[str, int | None], source: str | None) -> None:
    def fail(key, message):
        raise ConfigError(message, lines.get(key), source)

    kind = v["experiment"]
    if v["damping.kind"] not in DAMPING_KINDS:
        fail("damping.kind", f"damping.kind must be one of {', '.join(DAMPING_KINDS)}")
    for key in ("damping.gamma", "damping.eps0"):
        if not v[key] > 0:
            fail(key, f"{key} must be positive")
    if v["damping.amplitude"] < 0:
        fail("damping.amplitude", "damping.amplitude must be non-negative")
    for key, value in v.items():
        if key in POSITIVE_KEYS and value is not None and not value > 0:
            fail(key, f"{key} must be positive")
    if kind in ("resolvent-1d", "gcc", "regions") and any(x <= 0 for x in v["params.lambda"]):
        fail("params.lambda", "params.lambda values must be positive")
    if kind == "resolvent-q0":
        mus = v["params.mu"]
        if not (min(mus) <= -100 and any(-1 <= m <= 1 for m in mus) and max(mus) >= 1000):
            fail("params.mu", "params.mu must reach -100, touch [-1, 1] and reach 1000")
        if v["damping.kind"] not in ("periodic-power", "radial-power"):
            fail("damping.kind", "resolvent-q0 needs a power-type damping")
    if kind == "resolvent-1d" and len(v["params.lambda"]) < 5:
        fail("params.lambda", "params.lambda needs at least 5 values for the fit")
    if kind == "gcc" and len(v["params.lambda"]) < 5:
        fail("params.lambda", "params.lambda needs at least 5 values for the fit")
    if kind == "quasimode" and any(k < 1 for k in v["params.k"]):
        fail("params.k", "params.k values must be positive integers")
    if kind == "quasimode" and v["params.cutoff"] not in ("plateau", "bump"):
        fail("params.cutoff", "params.cutoff must be plateau or bump")
    if kind == "sharpness" and any(m <= 0 for m in v["params.mu"]):
        fail("params.mu", "params.mu values must be positive")
    if "geometry.modes" in v and v["geometry.modes"] is not None and (v["geometry.modes"] < 2 or v["geometry.modes"] % 2):
        fail("geometry.modes", "geometry.modes must be an even integer >= 2")
    if "geometry.dims" in v and (any(d < 0 for d in v["geometry.dims"]) or sum(v["geometry.dims"]) < 1):
        fail("geometry.dims", "geometry.dims must be non-negative with a positive sum")


def parse_config(text: str, source: str | None = None) -> ExperimentConfig:
    """Parse and validate; raises :class:`ConfigError` with a line number."""
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        match = re.search(r"line (\d+)", str(exc))
        raise ConfigError(f"syntax error: {exc}", int(match.group(1)) if match else None, source) from None
    flat = _flatten(raw)
    lines = {k: _line_of(text, k) for k in flat}
    if "experiment" not in flat:
        raise ConfigError("missing required key 'experiment'", None, source)
    kind = flat["experiment"]
    if kind not in KIND_KEYS:
        raise ConfigError(f"unknown experiment {kind!r}; choose from {', '.join(KIND_KEYS)}", lines["experiment"], source)
    schema = {**COMMON, **KIND_KEYS[kind]}
    values: dict[str, Any] = {}
    for key, value in flat.items():
        if key not in schema:
            raise ConfigError(f"unknown key {key!r} for experiment {kind!r}", lines[key], source)
        values[key] = _coerce(key, schema[key][0], value, lines[key], source)
    for key, (_, default) in schema.items():
        values.setdefault(key, list(default) if isinstance(default, list) else default)
    _check_values(values, lines, source)
    return ExperimentConfig(dict(sorted(values.items())), source)


def load_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), str(path))


def _format_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value) if math.isfinite(value) else str(value)
    if isinstance(value, int):
        return str(value)
    if isinstance(value, str):
        return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(value, list):
        return "[" + ", ".join(_format_value(v) for v in value) + "]"
    raise TypeError(f"cannot serialize {type(value).__name__}")


def serialize_config(config: ExperimentConfig) -> str:
    """Flat dotted-key text; optional keys left unset are omitted."""
    keys = sorted(config.values, key=lambda k: (k != "experiment", k))
    return "".join(f"{k} = {_format_value(config.values[k])}\n" for k in keys if config.values[k] is not None)
