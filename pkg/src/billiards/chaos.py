"""Diagnostics separating integrable from chaotic tables.

Coverage is only a proxy for mixing: an irrational-slope orbit in the square
is dense (its coverage tends to 1) yet the square is not mixing. Contrast
studies should use rational-slope square orbits.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .dynamics import (
    BallState,
    CornerHit,
    Trajectory,
    advance,
    next_collision,
    positions_at,
    reflect,
    simulate_length,
)
from .geometry import Point, Table, contains


@dataclass(frozen=True)
class DivergenceSeries:
    path_length: np.ndarray
    separation: np.ndarray
    initial_offset: float
    truncated: bool = False

    @property
    def samples(self) -> List[Tuple[float, float]]:
        return list(zip(self.path_length.tolist(), self.separation.tolist()))

    @property
    def max_separation(self) -> float:
        return float(self.separation.max()) if self.separation.size else 0.0

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["path_length", "separation"])
        for s, d in zip(self.path_length.tolist(), self.separation.tolist()):
            w.writerow([repr(s), repr(d)])
        return buf.getvalue()


@dataclass(frozen=True)
class LyapunovEstimate:
    exponent: float
    n_renormalizations: int
    offset: float
    valid: bool = True
    path_length: float = 0.0

    def to_json(self) -> str:
        return json.dumps({"exponent": self.exponent,
                           "n_renormalizations": self.n_renormalizations,
                           "offset": self.offset, "valid": self.valid}, indent=2)


def incidence_angles(trajectory: Trajectory, wall_id: int) -> List[float]:
    if wall_id not in trajectory.table_ref.wall_ids:
        raise KeyError(f"table has no wall with id {wall_id}")
    return [ev.incidence_angle for ev in trajectory.events if ev.wall_id == wall_id]


def angle_record_csv(trajectory: Trajectory, wall_id: int) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["event_index", "angle"])
    for ev in trajectory.events:
        if ev.wall_id == wall_id:
            w.writerow([ev.index, repr(ev.incidence_angle)])
    return buf.getvalue()


def distinct_angle_count(angles: Sequence[float], tolerance: float) -> int:
    """Number of single-linkage clusters: sorted gaps larger than ``tolerance`` split clusters."""
    if not tolerance > 0:
        raise ValueError("tolerance must be positive")
    if len(angles) == 0:
        return 0
    a = np.sort(np.asarray(angles, dtype=float))
    return int(np.count_nonzero(np.diff(a) > tolerance)) + 1


def transverse_offset(state: BallState, offset: float) -> BallState:
    """Displace the position perpendicular (counter-clockwise) to the direction."""
    dx, dy = state.direction
    x, y = state.position
    return BallState((x - offset * dy, y + offset * dx), state.direction)


def separation_series(table: Table, a: BallState, b: BallState,
                      total_path_length: float, sample_spacing: float) -> DivergenceSeries:
    """Distance between two balls at matching path lengths ``0, spacing, 2*spacing, ...``."""
    if not sample_spacing > 0:
        raise ValueError("sample_spacing must be positive")
    ta = simulate_length(table, a, total_path_length, allow_truncation=True)
    tb = simulate_length(table, b, total_path_length, allow_truncation=True)
    end = total_path_length
    truncated = ta.truncated or tb.truncated
    if truncated:
        end = min(end, ta.path_length if ta.truncated else end,
                  tb.path_length if tb.truncated else end)
    n = int(math.floor(end / sample_spacing + 1e-9))
    s = np.arange(n + 1, dtype=float) * sample_spacing
    pa = positions_at(ta, s)
    pb = positions_at(tb, s)
    sep = np.hypot(pa[:, 0] - pb[:, 0], pa[:, 1] - pb[:, 1])
    offset = math.hypot(a.position[0] - b.position[0], a.position[1] - b.position[1])
    return DivergenceSeries(s, sep, offset, truncated)


def _phase_distance(ref: BallState, other: BallState) -> Tuple[float, np.ndarray]:
    delta = np.array([other.position[0] - ref.position[0],
                      other.position[1] - ref.position[1],
                      other.direction[0] - ref.direction[0],
                      other.direction[1] - ref.direction[1]])
    return float(np.sqrt(delta @ delta)), delta


def _to_next_midpoint(table: Table, state: BallState, last_wall: Optional[int]) -> float:
    hit = next_collision(table, state, last_wall)
    after = BallState(hit.point, reflect(state.direction, hit.inward_normal))
    return hit.t + 0.5 * next_collision(table, after, hit.wall_id).t


def lyapunov_estimate(table: Table, initial: BallState, offset: float = 1e-9,
                      n_renormalizations: int = 200) -> LyapunovEstimate:
    """Finite-time largest Lyapunov exponent per unit path length.

    The reference ball is advanced bounce by bounce and checked at the midpoint
    of each free flight, where both balls are safely away from the walls. The
    perturbed ball is advanced by the same path length; the phase-space
    separation ``d`` (position and direction) is logged as ``ln(d/offset)`` and
    the perturbation is shrunk back to ``offset`` along its current direction.
    The starting perturbation is a transverse position shift.
    """
    if not offset > 0:
        raise ValueError("offset must be positive")
    if n_renormalizations < 10:
        raise ValueError("n_renormalizations must be at least 10")
    ref = initial
    other = transverse_offset(initial, offset)
    ref_wall: Optional[int] = None
    other_wall: Optional[int] = None
    log_sum = 0.0
    travelled = 0.0
    done = 0
    valid = True
    try:
        step = 0.5 * next_collision(table, ref, ref_wall).t
        for _ in range(n_renormalizations):
            ref, ref_wall, _ = advance(table, ref, step, ref_wall)
            other, other_wall, _ = advance(table, other, step, other_wall)
            travelled += step
            d, delta = _phase_distance(ref, other)
            log_sum += math.log(d / offset)
            done += 1
            delta *= offset / d
            other = BallState.aimed(
                (ref.position[0] + delta[0], ref.position[1] + delta[1]),
                (ref.direction[0] + delta[2], ref.direction[1] + delta[3]))
            other_wall = ref_wall
            step = _to_next_midpoint(table, ref, ref_wall)
    except CornerHit:
        valid = False
    exponent = log_sum / travelled if travelled > 0 else float("nan")
    if done < 10:
        valid = False
    return LyapunovEstimate(exponent, done, offset, valid, travelled)


def coverage_fraction(points: Sequence[Point], table: Table, grid_resolution: int) -> float:
    """Fraction of interior grid cells visited by at least one point.

    The bounding box is split into ``grid_resolution`` squared cells; a cell is
    interior when its center lies inside the table.
    """
    if grid_resolution < 2:
        raise ValueError("grid_resolution must be at least 2")
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if pts.shape[0] == 0:
        return 0.0
    mask = interior_cells(table, grid_resolution)
    xmin, ymin, xmax, ymax = table.bounding_box
    n = grid_resolution
    ix = np.clip(np.floor((pts[:, 0] - xmin) / (xmax - xmin) * n).astype(int), 0, n - 1)
    iy = np.clip(np.floor((pts[:, 1] - ymin) / (ymax - ymin) * n).astype(int), 0, n - 1)
    visited = np.zeros((n, n), dtype=bool)
    visited[iy, ix] = True
    return float(np.count_nonzero(visited & mask)) / float(np.count_nonzero(mask))


def interior_cells(table: Table, grid_resolution: int) -> np.ndarray:
    """Boolean ``(n, n)`` array indexed ``[row=y, col=x]``; true where the cell center is inside."""
    xmin, ymin, xmax, ymax = table.bounding_box
    n = grid_resolution
    cx = xmin + (np.arange(n) + 0.5) * (xmax - xmin) / n
    cy = ymin + (np.arange(n) + 0.5) * (ymax - ymin) / n
    return np.array([[contains(table, (x, y)) for x in cx] for y in cy], dtype=bool)
