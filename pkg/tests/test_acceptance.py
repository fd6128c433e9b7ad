"""Acceptance gate: one test per criterion, each at its stated tolerance.

Run ``pytest tests/test_acceptance.py`` to get a pass/fail line per
criterion in the terminal summary.
"""
import json
import math
import os

import numpy as np
import pytest

from billiards.chaos import (
    coverage_fraction,
    distinct_angle_count,
    incidence_angles,
    lyapunov_estimate,
    separation_series,
    transverse_offset,
)
from billiards.cli import EXIT_OK, main
from billiards.dynamics import BallState, advance, resample_path, simulate
from billiards.geometry import make_sinai, make_square, make_stadium
from billiards.quantum import (
    PacketSpec,
    build_grid,
    centroid_and_spread,
    density,
    evolve,
    field_from_function,
    free_packet_width,
    gaussian_packet,
    spread_fraction,
    wall_zone,
    zone_mass,
)
from oracles import march_bounces

SQUARE = make_square(1.0)
SINAI = make_sinai()
STADIUM = make_stadium(2.0, 1.0)

SQUARE_START = BallState.from_angle((0.2, 0.3), 1.0)
SINAI_START = BallState.from_angle((0.1, 0.27), 0.9)
STADIUM_START = BallState.from_angle((0.1, 0.2), 0.7)

TABLES = {
    "square": (SQUARE, SQUARE_START),
    "sinai": (SINAI, SINAI_START),
    "stadium": (STADIUM, STADIUM_START),
}


def _angle_to_normal(d, n):
    # angle between d and n, via atan2 for accuracy near 0 and pi/2
    return math.atan2(abs(d[0] * n[1] - d[1] * n[0]), d[0] * n[0] + d[1] * n[1])


@pytest.mark.criterion(1, "reflection law over 10,000 bounces")
@pytest.mark.parametrize("name", list(TABLES))
def test_reflection_law(name):
    table, start = TABLES[name]
    traj = simulate(table, start, 10_000)
    assert len(traj.events) == 10_000
    worst_angle = worst_norm = 0.0
    for ev in traj.events:
        n = ev.normal
        a_in = _angle_to_normal((-ev.dir_in[0], -ev.dir_in[1]), n)
        a_out = _angle_to_normal(ev.dir_out, n)
        worst_angle = max(worst_angle, abs(a_in - a_out))
        worst_norm = max(worst_norm, abs(math.hypot(*ev.dir_out) - 1))
    assert worst_angle < 1e-9
    assert worst_norm < 1e-12


@pytest.mark.criterion(2, "square top-wall angle constancy")
def test_square_angle_constancy():
    traj = simulate(SQUARE, BallState.aimed((0.3, 0.3), (1, 2)), 300)
    angles = incidence_angles(traj, 2)
    assert len(angles) > 0
    assert distinct_angle_count(angles, 1e-3) == 1


@pytest.mark.criterion(3, "Sinai top-wall angle diversity")
def test_sinai_angle_diversity():
    traj = simulate(SINAI, SINAI_START, 300)
    assert distinct_angle_count(incidence_angles(traj, 2), 1e-3) >= 10


@pytest.mark.criterion(4, "period-6 orbit in the unit square")
def test_rational_periodicity():
    start = BallState.aimed((0.3, 0.3), (1, 2))
    length = 2 * math.sqrt(5)
    end, _, bounces = advance(SQUARE, start, length)
    assert bounces == 6
    assert math.hypot(end.position[0] - 0.3, end.position[1] - 0.3) < 1e-8
    assert end.direction == pytest.approx(start.direction, abs=1e-8)
    # path between the first and seventh collision, the same point, is one period
    traj = simulate(SQUARE, start, 7)
    first, seventh = traj.events[0], traj.events[6]
    assert math.dist(first.point, seventh.point) < 1e-8
    assert abs(seventh.path_length_so_far - first.path_length_so_far - length) < 1e-8


@pytest.mark.criterion(5, "event-driven vs marching oracle, 10 collisions")
@pytest.mark.parametrize("name", list(TABLES))
def test_marching_oracle(name):
    table, start = TABLES[name]
    engine = simulate(table, start, 10).points()[1:]
    oracle = march_bounces(table, start.position, start.direction, 10)
    assert np.abs(engine - oracle).max() < 1e-6


@pytest.mark.criterion(6, "sensitivity contrast square vs stadium")
def test_sensitivity_contrast():
    sq = separation_series(SQUARE, SQUARE_START, transverse_offset(SQUARE_START, 1e-6),
                           60.0, 0.01)
    st = separation_series(STADIUM, STADIUM_START, transverse_offset(STADIUM_START, 1e-6),
                           60.0, 0.01)
    assert not sq.truncated and not st.truncated
    assert sq.max_separation < 1e-3
    assert st.max_separation > 0.5
    assert st.max_separation >= 100 * sq.max_separation


@pytest.mark.criterion(7, "Lyapunov sign contrast and offset stability")
def test_lyapunov_contrast():
    square = lyapunov_estimate(SQUARE, SQUARE_START, 1e-9, 200)
    stadium = lyapunov_estimate(STADIUM, STADIUM_START, 1e-9, 200)
    sinai = lyapunov_estimate(SINAI, SINAI_START, 1e-9, 200)
    assert square.valid and stadium.valid and sinai.valid
    assert abs(square.exponent) < 1e-3
    assert stadium.exponent > 0.05
    assert sinai.exponent > 0.05
    halved = lyapunov_estimate(STADIUM, STADIUM_START, 5e-10, 200)
    assert abs(halved.exponent - stadium.exponent) <= 0.2 * abs(stadium.exponent)


@pytest.mark.criterion(8, "coverage contrast stadium vs square periodic orbit")
def test_coverage_contrast():
    stadium = simulate(STADIUM, STADIUM_START, 2000)
    assert coverage_fraction(resample_path(stadium, 0.01), STADIUM, 32) > 0.99
    # slope-1 orbit through (0.3, 0.1) closes after 4 bounces
    square = simulate(SQUARE, BallState.aimed((0.3, 0.1), (1, 1)), 2000)
    assert coverage_fraction(resample_path(square, 0.01), SQUARE, 32) < 0.2


@pytest.mark.criterion(9, "norm conservation over 2000 Crank-Nicolson steps")
def test_norm_conservation():
    grid = build_grid(STADIUM, 0.02)
    field = gaussian_packet(grid, PacketSpec((0.0, 0.0), 0.15, (25.0, 0.0)), STADIUM)
    snaps = evolve(field, 2000 * 1e-4, 1e-4, snapshot_every=250)
    assert round(snaps[-1].time / 1e-4) == 2000
    assert max(abs(s.norm() - 1) for s in snaps) < 1e-8


@pytest.mark.criterion(10, "free packet width and centroid velocity")
def test_free_packet():
    # side 6 keeps the walls many widths away over the whole run
    table = make_square(6.0)
    sigma0, k = 0.25, 5.0
    grid = build_grid(table, 0.02)
    field = gaussian_packet(grid, PacketSpec((2.5, 3.0), sigma0, (k, 0.0)), table)
    snaps = evolve(field, 0.15, 1e-3, snapshot_every=10, include_initial=True)
    times, xs = [], []
    for s in snaps:
        (cx, _), spread = centroid_and_spread(s)
        assert abs(spread / free_packet_width(sigma0, s.time) - 1) < 0.01
        times.append(s.time)
        xs.append(cx)
    velocity = np.polyfit(times, xs, 1)[0]
    assert abs(velocity / k - 1) < 0.005


@pytest.mark.criterion(11, "stationary state on the unit square")
def test_stationary_state():
    grid = build_grid(SQUARE, 0.02)
    X, Y = grid.coordinates()
    field = field_from_function(grid, np.sin(math.pi * X) * np.sin(math.pi * Y))
    rho0 = density(field)
    snaps = evolve(field, 0.5, 1e-3, snapshot_every=50)
    assert max(np.abs(density(s) - rho0).max() for s in snaps) < 5e-3


@pytest.mark.criterion(12, "stadium packet: right cap first, then spreading")
def test_stadium_packet_sequence():
    grid = build_grid(STADIUM, 0.02)
    field = gaussian_packet(grid, PacketSpec((0.0, 0.0), 0.15, (25.0, 0.0)), STADIUM)
    snaps = evolve(field, 0.5, 1e-4, snapshot_every=50, include_initial=True)
    right = wall_zone(grid, STADIUM, [1], 0.1)
    left = wall_zone(grid, STADIUM, [3], 0.1)
    t = np.array([s.time for s in snaps])
    t_right = t[np.argmax([zone_mass(s, right) for s in snaps])]
    t_left = t[np.argmax([zone_mass(s, left) for s in snaps])]
    assert t_right < t_left
    first, last = spread_fraction(snaps[0]), spread_fraction(snaps[-1])
    assert last > 0.5
    assert last > first


RECIPES = {
    "simulate": {"table": {"builtin": "square"},
                 "experiment": {"start": [0.3, 0.3], "direction": [1, 2], "bounces": 300}},
    "angles": {"table": {"builtin": "sinai"},
               "experiment": {"start": [0.1, 0.27], "direction": [0.6216, 0.7833]}},
    "diverge": {"table": {"builtin": "stadium"},
                "experiment": {"start": [0.1, 0.2], "direction": [0.7648, 0.6442]}},
    "lyapunov": {"table": {"builtin": "stadium"},
                 "experiment": {"ensemble": [{"start": [0.1, 0.2], "direction": [0.76, 0.64]},
                                             {"start": [-0.5, 0.3], "direction": [0.3, -1]}]}},
    "coverage": {"table": {"builtin": "stadium"},
                 "experiment": {"start": [0.1, 0.2], "direction": [0.76, 0.64]}},
    "quantum": {"table": {"builtin": "stadium"},
                "experiment": {"spacing": 0.04, "dt": 1e-3, "t_final": 0.05,
                               "snapshot_every": 10}},
}


@pytest.mark.criterion(13, "bit-identical rerun from resolved-config.json")
@pytest.mark.parametrize("kind", sorted(RECIPES))
def test_reproducibility(tmp_path, kind):
    def run(doc, name):
        cfg = tmp_path / f"{name}.json"
        cfg.write_text(json.dumps(doc))
        out = tmp_path / name
        assert main([kind, "--config", str(cfg), "--out", str(out), "--jobs", "2"]) == EXIT_OK
        return out

    first = run(RECIPES[kind], "first")
    second = run(json.loads((first / "resolved-config.json").read_text()), "second")
    names = sorted(os.listdir(first))
    assert names == sorted(os.listdir(second))
    assert len(names) > 1
    for name in names:
        assert (first / name).read_bytes() == (second / name).read_bytes(), name
