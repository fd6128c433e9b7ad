"""Strict JSON run configuration.

Every key is checked against a fixed schema, defaults are filled in and
numeric preconditions are validated before any computation starts. The
resolved form (``RunConfig.resolved``) is self-contained: re-running it
reproduces the experiment bit for bit.
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from typing import Any, Dict, Optional

from .geometry import (
    GeometryError,
    Table,
    contains,
    make_sinai,
    make_square,
    make_stadium,
    table_from_dict,
    table_to_dict,
)

KINDS = ("simulate", "angles", "diverge", "lyapunov", "coverage", "quantum")

_REQUIRED = object()

_TABLE_KEYS = {
    "square": {"side": 1.0},
    "sinai": {"side": 1.0, "center": [0.5, 0.5], "radius": 0.2},
    "stadium": {"straight_length": 2.0, "radius": 1.0},
}

_START = {"start": _REQUIRED, "direction": _REQUIRED}

_EXPERIMENT_KEYS: Dict[str, Dict[str, Any]] = {
    "simulate": {**_START, "bounces": 300},
    "angles": {**_START, "bounces": 300, "wall": 2, "tolerance": 1e-3},
    "diverge": {**_START, "offset": 1e-6, "path_length": 60.0, "spacing": 0.01},
    "lyapunov": {"start": None, "direction": None, "ensemble": None,
                 "offset": 1e-9, "renormalizations": 200},
    "coverage": {**_START, "bounces": 2000, "spacing": 0.01, "resolution": 32},
    "quantum": {"spacing": 0.02, "center": None, "sigma": 0.15, "wavevector": [25.0, 0.0],
                "dt": 1e-4, "t_final": 0.5, "snapshot_every": 500,
                "include_initial": True},
}


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending entry."""

    def __init__(self, message: str, field: Optional[str] = None,
                 line: Optional[int] = None, column: Optional[int] = None):
        super().__init__(message)
        self.field = field
        self.line = line
        self.column = column

    def record(self) -> dict:
        rec = {"error": "ConfigError", "message": str(self)}
        if self.field is not None:
            rec["field"] = self.field
        if self.line is not None:
            rec["line"] = self.line
            rec["column"] = self.column
        return rec


@dataclass(frozen=True)
class RunConfig:
    table: Table
    kind: str
    experiment: Dict[str, Any]
    resolved: Dict[str, Any]
    output: Optional[str] = None

    def resolved_json(self) -> str:
        return json.dumps(self.resolved, indent=2, sort_keys=True) + "\n"


def _number(value, field: str, *, positive=False, nonnegative=False, integer=False,
            minimum=None) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{field} must be a number, got {value!r}", field)
    if integer and not (isinstance(value, int) or float(value).is_integer()):
        raise ConfigError(f"{field} must be an integer, got {value!r}", field)
    if not math.isfinite(value):
        raise ConfigError(f"{field} must be finite", field)
    if positive and not value > 0:
        raise ConfigError(f"{field} must be > 0, got {value!r}", field)
    if nonnegative and value < 0:
        raise ConfigError(f"{field} must be >= 0, got {value!r}", field)
    if minimum is not None and value < minimum:
        raise ConfigError(f"{field} must be >= {minimum}, got {value!r}", field)
    return int(value) if integer else float(value)


def _vector(value, field: str):
    if not (isinstance(value, list) and len(value) == 2):
        raise ConfigError(f"{field} must be a list of two numbers", field)
    return [_number(v, f"{field}[{i}]") for i, v in enumerate(value)]


def _direction(value, field: str):
    dx, dy = _vector(value, field)
    n = math.hypot(dx, dy)
    if n == 0:
        raise ConfigError(f"{field} must be nonzero", field)
    # already unit (e.g. read back from a resolved config): keep the exact bits
    if abs(n - 1.0) <= 1e-15:
        return [dx, dy]
    return [dx / n, dy / n]


def _strict(obj, allowed, where: str) -> None:
    if not isinstance(obj, dict):
        raise ConfigError(f"{where} must be an object", where)
    unknown = sorted(set(obj) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown key {where}.{unknown[0]}", f"{where}.{unknown[0]}")


def _fill(obj: dict, schema: dict, where: str) -> dict:
    out = {}
    for key, default in schema.items():
        if key in obj:
            out[key] = obj[key]
        elif default is _REQUIRED:
            raise ConfigError(f"missing required key {where}.{key}", f"{where}.{key}")
        elif default is not None:
            out[key] = default
    return out


def _resolve_table(spec, base_dir: str):
    _strict(spec, {"builtin", "file", "walls", "side", "center", "radius",
                   "straight_length"}, "table")
    sources = [k for k in ("builtin", "file", "walls") if k in spec]
    if len(sources) != 1:
        raise ConfigError("table needs exactly one of builtin, file, walls", "table")
    try:
        if "builtin" in spec:
            name = spec["builtin"]
            if name not in _TABLE_KEYS:
                raise ConfigError(f"table.builtin must be one of {sorted(_TABLE_KEYS)}",
                                  "table.builtin")
            _strict(spec, {"builtin", *_TABLE_KEYS[name]}, "table")
            params = _fill(spec, _TABLE_KEYS[name], "table")
            if name == "square":
                params["side"] = _number(params["side"], "table.side", positive=True)
                table = make_square(params["side"])
            elif name == "sinai":
                params["side"] = _number(params["side"], "table.side", positive=True)
                params["center"] = _vector(params["center"], "table.center")
                params["radius"] = _number(params["radius"], "table.radius", positive=True)
                table = make_sinai(params["side"], tuple(params["center"]), params["radius"])
            else:
                params["straight_length"] = _number(params["straight_length"],
                                                    "table.straight_length", nonnegative=True)
                params["radius"] = _number(params["radius"], "table.radius", positive=True)
                table = make_stadium(params["straight_length"], params["radius"])
            return table, {"builtin": name, **params}
        if "file" in spec:
            _strict(spec, {"file"}, "table")
            path = spec["file"]
            if not os.path.isabs(path):
                path = os.path.join(base_dir, path)
            if not os.path.isfile(path):
                raise ConfigError(f"table file not found: {spec['file']}", "table.file")
            with open(path) as fh:
                data = json.load(fh)
        else:
            _strict(spec, {"walls"}, "table")
            data = {"walls": spec["walls"]}
        table = table_from_dict(data)
        return table, table_to_dict(table)
    except GeometryError as exc:
        raise ConfigError(f"invalid table: {exc}", "table") from exc
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid table: {exc}", "table") from exc


def _check_start(table: Table, exp: dict, where: str, start_key="start", dir_key="direction"):
    exp[start_key] = _vector(exp[start_key], f"{where}.{start_key}")
    exp[dir_key] = _direction(exp[dir_key], f"{where}.{dir_key}")
    if not contains(table, tuple(exp[start_key])):
        raise ConfigError(f"{where}.{start_key} {exp[start_key]} is not inside the table",
                          f"{where}.{start_key}")


def _resolve_experiment(spec, table: Table, kind_hint: Optional[str]) -> dict:
    if not isinstance(spec, dict):
        raise ConfigError("experiment must be an object", "experiment")
    kind = spec.get("kind", kind_hint)
    if kind not in KINDS:
        raise ConfigError(f"experiment.kind must be one of {list(KINDS)}, got {kind!r}",
                          "experiment.kind")
    if kind_hint is not None and kind != kind_hint:
        raise ConfigError(f"experiment.kind {kind!r} does not match subcommand {kind_hint!r}",
                          "experiment.kind")
    schema = _EXPERIMENT_KEYS[kind]
    _strict(spec, {"kind", *schema}, "experiment")
    exp = _fill(spec, schema, "experiment")
    w = "experiment"

    if kind in ("simulate", "angles", "diverge", "coverage"):
        _check_start(table, exp, w)
    if kind in ("simulate", "angles", "coverage"):
        exp["bounces"] = _number(exp["bounces"], f"{w}.bounces", integer=True, nonnegative=True)
    if kind == "angles":
        exp["wall"] = _number(exp["wall"], f"{w}.wall", integer=True)
        if exp["wall"] not in table.wall_ids:
            raise ConfigError(f"{w}.wall {exp['wall']} is not a wall of the table", f"{w}.wall")
        exp["tolerance"] = _number(exp["tolerance"], f"{w}.tolerance", positive=True)
    if kind == "diverge":
        exp["offset"] = _number(exp["offset"], f"{w}.offset", nonnegative=True)
        exp["path_length"] = _number(exp["path_length"], f"{w}.path_length", positive=True)
        exp["spacing"] = _number(exp["spacing"], f"{w}.spacing", positive=True)
    if kind == "coverage":
        exp["spacing"] = _number(exp["spacing"], f"{w}.spacing", positive=True)
        exp["resolution"] = _number(exp["resolution"], f"{w}.resolution", integer=True,
                                    minimum=2)
    if kind == "lyapunov":
        exp["offset"] = _number(exp["offset"], f"{w}.offset", positive=True)
        exp["renormalizations"] = _number(exp["renormalizations"], f"{w}.renormalizations",
                                          integer=True, minimum=10)
        single = "start" in exp or "direction" in exp
        if single == ("ensemble" in exp):
            raise ConfigError(f"{w} needs either start+direction or ensemble", w)
        if single:
            if "start" not in exp or "direction" not in exp:
                raise ConfigError(f"{w} needs both start and direction", w)
            _check_start(table, exp, w)
        else:
            members = exp["ensemble"]
            if not isinstance(members, list) or not members:
                raise ConfigError(f"{w}.ensemble must be a non-empty list", f"{w}.ensemble")
            resolved = []
            for i, m in enumerate(members):
                where = f"{w}.ensemble[{i}]"
                _strict(m, {"start", "direction"}, where)
                m = _fill(m, _START, where)
                _check_start(table, m, where)
                resolved.append(m)
            exp["ensemble"] = resolved
    if kind == "quantum":
        exp["spacing"] = _number(exp["spacing"], f"{w}.spacing", positive=True)
        xmin, ymin, xmax, ymax = table.bounding_box
        if min(xmax - xmin, ymax - ymin) / exp["spacing"] + 1 < 8:
            raise ConfigError(f"{w}.spacing too coarse: fewer than 8 nodes across the table",
                              f"{w}.spacing")
        if "center" not in exp:
            exp["center"] = [0.5 * (xmin + xmax), 0.5 * (ymin + ymax)]
        exp["center"] = _vector(exp["center"], f"{w}.center")
        if not contains(table, tuple(exp["center"])):
            raise ConfigError(f"{w}.center {exp['center']} is not inside the table",
                              f"{w}.center")
        exp["sigma"] = _number(exp["sigma"], f"{w}.sigma", positive=True)
        exp["wavevector"] = _vector(exp["wavevector"], f"{w}.wavevector")
        exp["dt"] = _number(exp["dt"], f"{w}.dt", positive=True)
        exp["t_final"] = _number(exp["t_final"], f"{w}.t_final", positive=True)
        exp["snapshot_every"] = _number(exp["snapshot_every"], f"{w}.snapshot_every",
                                        integer=True, minimum=1)
        if not isinstance(exp["include_initial"], bool):
            raise ConfigError(f"{w}.include_initial must be a boolean", f"{w}.include_initial")
    exp["kind"] = kind
    return exp


def parse_config(text: str, kind: Optional[str] = None, base_dir: str = ".") -> RunConfig:
    """Parse and validate a JSON configuration document.

    ``kind`` (the CLI subcommand) fills in ``experiment.kind`` when absent and
    must agree with it when present. Relative table file paths resolve
    against ``base_dir``.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"JSON parse error at line {exc.lineno}, column {exc.colno}: "
                          f"{exc.msg}", line=exc.lineno, column=exc.colno) from exc
    _strict(doc, {"table", "experiment", "output"}, "config")
    if "table" not in doc:
        raise ConfigError("missing required key config.table", "config.table")
    table, table_spec = _resolve_table(doc["table"], base_dir)
    exp = _resolve_experiment(doc.get("experiment", {}), table, kind)
    output = doc.get("output")
    if output is not None and not isinstance(output, str):
        raise ConfigError("config.output must be a string", "config.output")
    resolved = {"table": table_spec, "experiment": exp}
    return RunConfig(table, exp["kind"], exp, resolved, output)
