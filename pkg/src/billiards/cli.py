"""Command-line front end: ``billiard <experiment> --config cfg.json --out dir``.

Units: table lengths are dimensionless; the quantum experiments solve
i dpsi/dt = -1/2 lap(psi) with hbar = m = 1.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional

from . import chaos, dynamics, quantum
from .config import KINDS, ConfigError, RunConfig, parse_config
from .dynamics import BallState, CornerHit, LeakedBall
from .geometry import GeometryError, dump_table, make_sinai, make_square, make_stadium

log = logging.getLogger("billiards")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONFIG = 2
EXIT_CORNER = 3


def _write(out_dir: str, name: str, data) -> None:
    mode = "wb" if isinstance(data, bytes) else "w"
    kwargs = {} if mode == "wb" else {"newline": ""}
    with open(os.path.join(out_dir, name), mode, **kwargs) as fh:
        fh.write(data)


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _state(exp: dict) -> BallState:
    return BallState(tuple(exp["start"]), tuple(exp["direction"]))


def _run_simulate(cfg: RunConfig, out: str) -> None:
    traj = dynamics.simulate(cfg.table, _state(cfg.experiment), cfg.experiment["bounces"])
    _write(out, "trajectory.csv", dynamics.trajectory_to_csv(traj))


def _run_angles(cfg: RunConfig, out: str) -> None:
    exp = cfg.experiment
    traj = dynamics.simulate(cfg.table, _state(exp), exp["bounces"])
    angles = chaos.incidence_angles(traj, exp["wall"])
    _write(out, "trajectory.csv", dynamics.trajectory_to_csv(traj))
    _write(out, "angles.csv", chaos.angle_record_csv(traj, exp["wall"]))
    _write(out, "angles.json", _json({
        "wall": exp["wall"], "n_hits": len(angles), "tolerance": exp["tolerance"],
        "distinct": chaos.distinct_angle_count(angles, exp["tolerance"])}))


def _run_diverge(cfg: RunConfig, out: str) -> None:
    exp = cfg.experiment
    a = _state(exp)
    b = chaos.transverse_offset(a, exp["offset"])
    series = chaos.separation_series(cfg.table, a, b, exp["path_length"], exp["spacing"])
    _write(out, "divergence.csv", series.to_csv())
    _write(out, "divergence.json", _json({
        "initial_offset": series.initial_offset,
        "max_separation": series.max_separation,
        "final_separation": float(series.separation[-1]),
        "truncated": series.truncated}))


def _run_lyapunov(cfg: RunConfig, out: str, jobs: int) -> None:
    exp = cfg.experiment

    def one(member: dict) -> chaos.LyapunovEstimate:
        return chaos.lyapunov_estimate(cfg.table, _state(member), exp["offset"],
                                       exp["renormalizations"])

    if "ensemble" not in exp:
        _write(out, "lyapunov.json", one(exp).to_json() + "\n")
        return
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        estimates = list(pool.map(one, exp["ensemble"]))
    good = [e.exponent for e in estimates if e.valid]
    summary = {
        "exponent": math.fsum(good) / len(good) if good else float("nan"),
        "n_renormalizations": min(e.n_renormalizations for e in estimates),
        "offset": exp["offset"],
        "valid": len(good) == len(estimates),
        "ensemble": [json.loads(e.to_json()) for e in estimates],
    }
    _write(out, "lyapunov.json", _json(summary))


def _run_coverage(cfg: RunConfig, out: str) -> None:
    exp = cfg.experiment
    traj = dynamics.simulate(cfg.table, _state(exp), exp["bounces"])
    points = dynamics.resample_path(traj, exp["spacing"])
    frac = chaos.coverage_fraction(points, cfg.table, exp["resolution"])
    _write(out, "coverage.json", _json({
        "coverage": frac, "resolution": exp["resolution"], "bounces": len(traj.events),
        "spacing": exp["spacing"], "n_points": len(points)}))


def _run_quantum(cfg: RunConfig, out: str) -> None:
    exp = cfg.experiment
    grid = quantum.build_grid(cfg.table, exp["spacing"], min_nodes=8)
    spec = quantum.PacketSpec(tuple(exp["center"]), exp["sigma"], tuple(exp["wavevector"]))
    field = quantum.gaussian_packet(grid, spec, cfg.table)
    log_path = os.path.join(out, "snapshots.jsonl")
    with open(log_path, "w") as log_fh:
        def save(snap: quantum.WaveField) -> None:
            name = quantum.snapshot_name(snap.time)
            _write(out, name + ".pgm", quantum.density_pgm(snap))
            _write(out, name + ".raw", quantum.density_raw(snap))
            _write(out, name + ".json", _json(quantum.raw_sidecar(snap)))
            log_fh.write(json.dumps(quantum.snapshot_record(snap), sort_keys=True) + "\n")
            log_fh.flush()

        quantum.evolve(field, exp["t_final"], exp["dt"], exp["snapshot_every"],
                       include_initial=exp["include_initial"], callback=save)


def run(cfg: RunConfig, out_dir: str, jobs: int = 1) -> int:
    """Execute one experiment, writing outputs and ``resolved-config.json`` into ``out_dir``.

    Returns the process exit status. On failure an ``error.json`` record is
    written; a corner hit also flushes the partial trajectory.
    """
    os.makedirs(out_dir, exist_ok=True)
    _write(out_dir, "resolved-config.json", cfg.resolved_json())
    try:
        if cfg.kind == "lyapunov":
            _run_lyapunov(cfg, out_dir, jobs)
        else:
            globals()[f"_run_{cfg.kind}"](cfg, out_dir)
    except CornerHit as exc:
        if exc.trajectory is not None:
            _write(out_dir, "trajectory.csv", dynamics.trajectory_to_csv(exc.trajectory))
        _write(out_dir, "error.json", _json({
            "error": "CornerHit", "message": str(exc), "event_index": exc.index,
            "point": list(exc.point), "wall_id": exc.wall_id}))
        return EXIT_CORNER
    except (LeakedBall, quantum.SolverError, GeometryError, ValueError, RuntimeError) as exc:
        record = {"error": type(exc).__name__, "message": str(exc)}
        for attr in ("index", "step_index", "residual"):
            if getattr(exc, attr, None) is not None:
                record[attr] = getattr(exc, attr)
        if isinstance(exc, LeakedBall) and exc.trajectory is not None:
            _write(out_dir, "trajectory.csv", dynamics.trajectory_to_csv(exc.trajectory))
        _write(out_dir, "error.json", _json(record))
        return EXIT_ERROR
    return EXIT_OK


def _table_command(args) -> int:
    try:
        if args.builtin == "square":
            table = make_square(args.side)
        elif args.builtin == "sinai":
            table = make_sinai(args.side, tuple(args.center), args.radius)
        else:
            table = make_stadium(args.straight_length, args.radius)
    except GeometryError as exc:
        print(json.dumps({"error": "GeometryError", "message": str(exc)}), file=sys.stderr)
        return EXIT_CONFIG
    text = dump_table(table) + "\n"
    if args.out in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(args.out, "w") as fh:
            fh.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="billiard",
        description="Classical and quantum billiard experiments. Lengths are in table "
                    "units; quantum runs use hbar = m = 1 and H = -1/2 lap.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for kind in KINDS:
        p = sub.add_parser(kind, help=f"run a {kind} experiment")
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--out", help="output directory (overrides config 'output')")
        p.add_argument("--jobs", type=int, default=1,
                       help="threads for independent initial conditions")
    t = sub.add_parser("table", help="write a builtin table as JSON")
    t.add_argument("--builtin", required=True, choices=["square", "sinai", "stadium"])
    t.add_argument("--side", type=float, default=1.0)
    t.add_argument("--center", type=float, nargs=2, default=[0.5, 0.5])
    t.add_argument("--radius", type=float, default=None)
    t.add_argument("--straight-length", type=float, default=2.0)
    t.add_argument("--out", default=None)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "table":
        if args.radius is None:
            args.radius = 0.2 if args.builtin == "sinai" else 1.0
        return _table_command(args)

    out_dir = args.out
    try:
        with open(args.config) as fh:
            text = fh.read()
    except OSError as exc:
        text = None
        error = ConfigError(f"cannot read config: {exc}", "config")
    if text is not None:
        try:
            cfg = parse_config(text, args.command,
                               base_dir=os.path.dirname(os.path.abspath(args.config)))
            error = None
        except ConfigError as exc:
            error = exc
    if error is None:
        out_dir = out_dir or cfg.output
        if out_dir is None:
            error = ConfigError("no output directory: pass --out or set config.output",
                                "output")
    if error is not None:
        record = _json(error.record())
        if out_dir:
            os.makedirs(out_dir, exist_ok=True)
            _write(out_dir, "error.json", record)
        else:
            sys.stderr.write(record)
        log.error("%s", error)
        return EXIT_CONFIG
    log.info("running %s into %s", cfg.kind, out_dir)
    status = run(cfg, out_dir, args.jobs)
    if status != EXIT_OK:
        log.error("run failed, see %s", os.path.join(out_dir, "error.json"))
    return status


if __name__ == "__main__":
    sys.exit(main())
