"""Event-driven simulation of a point particle on a billiard table.

The ball moves with unit speed, so path length and time coincide. Each step
finds the nearest wall along the current ray and applies specular reflection.
Nothing here is random: identical inputs give bit-identical trajectories.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .geometry import (
    DEFAULT_T_MIN,
    Hit,
    Point,
    Table,
    contains,
    first_hit,
)

CORNER_TOL = 1e-9


class TangencyError(ValueError):
    """The direction is not incoming with respect to the wall normal."""


class LeakedBall(RuntimeError):
    """No wall was found along the ray; the table boundary is inconsistent."""

    def __init__(self, message: str, index: Optional[int] = None, trajectory=None):
        super().__init__(message)
        self.index = index
        self.trajectory = trajectory


class CornerHit(RuntimeError):
    """The ball arrived within ``CORNER_TOL`` of a wall endpoint or junction.

    ``point`` is the offending hit point, ``index`` the event number that would
    have been recorded and ``trajectory`` the events before it (set by
    :func:`simulate`).
    """

    def __init__(self, point: Point, wall_id: int, index: Optional[int] = None,
                 trajectory: Optional["Trajectory"] = None):
        super().__init__(f"corner hit at ({point[0]:.12g}, {point[1]:.12g}) on wall {wall_id}"
                         + (f" (event {index})" if index is not None else ""))
        self.point = point
        self.wall_id = wall_id
        self.index = index
        self.trajectory = trajectory


@dataclass(frozen=True)
class BallState:
    position: Point
    direction: Point

    def __post_init__(self):
        dx, dy = self.direction
        if abs(math.hypot(dx, dy) - 1.0) > 1e-12:
            raise ValueError(f"direction must be a unit vector, got {self.direction}")

    @classmethod
    def from_angle(cls, position: Point, angle: float) -> "BallState":
        return cls(tuple(map(float, position)), (math.cos(angle), math.sin(angle)))

    @classmethod
    def aimed(cls, position: Point, direction: Sequence[float]) -> "BallState":
        """State with ``direction`` normalized to unit length."""
        dx, dy = float(direction[0]), float(direction[1])
        n = math.hypot(dx, dy)
        if n == 0.0:
            raise ValueError("direction must be nonzero")
        return cls((float(position[0]), float(position[1])), (dx / n, dy / n))


@dataclass(frozen=True)
class CollisionEvent:
    index: int
    point: Point
    wall_id: int
    dir_in: Point
    dir_out: Point
    incidence_angle: float
    path_length_so_far: float
    normal: Point = (0.0, 0.0)


@dataclass(frozen=True)
class Trajectory:
    initial: BallState
    events: Tuple[CollisionEvent, ...]
    table_ref: Table = field(repr=False, compare=False)
    truncation: Optional[CornerHit] = field(default=None, repr=False, compare=False)

    @property
    def truncated(self) -> bool:
        return self.truncation is not None

    @property
    def path_length(self) -> float:
        return self.events[-1].path_length_so_far if self.events else 0.0

    @property
    def final_state(self) -> BallState:
        if not self.events:
            return self.initial
        ev = self.events[-1]
        return BallState(ev.point, ev.dir_out)

    def points(self) -> np.ndarray:
        """Initial position followed by every collision point, shape (n+1, 2)."""
        pts = [self.initial.position] + [ev.point for ev in self.events]
        return np.asarray(pts, dtype=float)


def _angle_between(u: Point, v: Point) -> float:
    # atan2 form stays accurate near 0 and pi/2, unlike acos
    return math.atan2(abs(u[0] * v[1] - u[1] * v[0]), u[0] * v[0] + u[1] * v[1])


def reflect(direction: Point, inward_normal: Point) -> Point:
    """Specular reflection ``d - 2 (d.n) n`` of an incoming direction."""
    dx, dy = direction
    nx, ny = inward_normal
    dn = dx * nx + dy * ny
    if not dn < 0.0:
        raise TangencyError(f"direction {direction} is not incoming for normal {inward_normal}")
    rx, ry = dx - 2.0 * dn * nx, dy - 2.0 * dn * ny
    norm = math.hypot(rx, ry)
    return (rx / norm, ry / norm)


def incidence_angle(dir_in: Point, inward_normal: Point) -> float:
    """Angle between the reversed incoming direction and the inward normal."""
    return _angle_between((-dir_in[0], -dir_in[1]), inward_normal)


def _near_corner(table: Table, hit: Hit) -> bool:
    px, py = hit.point
    for ex, ey in table.wall(hit.wall_id).endpoints():
        if math.hypot(px - ex, py - ey) <= CORNER_TOL:
            return True
    return False


def next_collision(table: Table, state: BallState,
                   previous_wall: Optional[int] = None,
                   t_min: float = DEFAULT_T_MIN) -> Hit:
    """Nearest wall hit from ``state``; raises :class:`CornerHit` or :class:`LeakedBall`."""
    hit = first_hit(table, state.position, state.direction, previous_wall, t_min)
    if hit is None:
        raise LeakedBall(f"no wall found from {state.position} along {state.direction}")
    if _near_corner(table, hit):
        raise CornerHit(hit.point, hit.wall_id)
    return hit


def _bounce(table: Table, state: BallState, previous_wall: Optional[int], index: int,
            travelled: float) -> CollisionEvent:
    hit = next_collision(table, state, previous_wall)
    d_out = reflect(state.direction, hit.inward_normal)
    return CollisionEvent(
        index=index,
        point=hit.point,
        wall_id=hit.wall_id,
        dir_in=state.direction,
        dir_out=d_out,
        incidence_angle=incidence_angle(state.direction, hit.inward_normal),
        path_length_so_far=travelled + hit.t,
        normal=hit.inward_normal,
    )


def simulate(table: Table, initial: BallState, n_bounces: int,
             allow_truncation: bool = False,
             max_path_length: Optional[float] = None) -> Trajectory:
    """Run ``n_bounces`` collisions from ``initial``.

    On a corner hit the partial trajectory is attached to the raised
    :class:`CornerHit`; with ``allow_truncation=True`` it is returned instead,
    with ``truncation`` set. If ``max_path_length`` is given the run also stops
    after the first event whose cumulative path length reaches it.
    """
    if n_bounces < 0:
        raise ValueError("n_bounces must be nonnegative")
    events: List[CollisionEvent] = []
    state = initial
    prev: Optional[int] = None
    travelled = 0.0
    for index in range(1, n_bounces + 1):
        try:
            ev = _bounce(table, state, prev, index, travelled)
        except (CornerHit, LeakedBall) as exc:
            exc.index = index
            partial = Trajectory(initial, tuple(events), table,
                                 exc if isinstance(exc, CornerHit) else None)
            exc.trajectory = partial
            if allow_truncation and isinstance(exc, CornerHit):
                return partial
            raise
        events.append(ev)
        state = BallState(ev.point, ev.dir_out)
        prev = ev.wall_id
        travelled = ev.path_length_so_far
        if max_path_length is not None and travelled >= max_path_length:
            break
    return Trajectory(initial, tuple(events), table)


def simulate_length(table: Table, initial: BallState, path_length: float,
                    allow_truncation: bool = False, max_bounces: int = 10_000_000) -> Trajectory:
    """Simulate until the cumulative path length reaches ``path_length``."""
    if path_length <= 0:
        return Trajectory(initial, (), table)
    traj = simulate(table, initial, max_bounces, allow_truncation, max_path_length=path_length)
    if not traj.truncated and traj.path_length < path_length:
        raise RuntimeError(f"path length {path_length} not reached in {max_bounces} bounces")
    return traj


def advance(table: Table, state: BallState, distance: float,
            previous_wall: Optional[int] = None) -> Tuple[BallState, Optional[int], int]:
    """Move the ball exactly ``distance`` along its path.

    Returns the new state, the id of the last wall hit (for the exclusion rule)
    and the number of collisions that occurred.
    """
    remaining = distance
    bounces = 0
    while True:
        hit = next_collision(table, state, previous_wall)
        if hit.t > remaining:
            x, y = state.position
            dx, dy = state.direction
            return BallState((x + remaining * dx, y + remaining * dy), state.direction), \
                previous_wall, bounces
        remaining -= hit.t
        state = BallState(hit.point, reflect(state.direction, hit.inward_normal))
        previous_wall = hit.wall_id
        bounces += 1


def positions_at(trajectory: Trajectory, lengths: Sequence[float]) -> np.ndarray:
    """Positions at the given cumulative path lengths (must not exceed the path)."""
    pts = trajectory.points()
    knots = np.concatenate([[0.0], [ev.path_length_so_far for ev in trajectory.events]])
    s = np.asarray(lengths, dtype=float)
    if s.size and (s.min() < 0 or s.max() > knots[-1] * (1 + 1e-15) + 1e-15):
        raise ValueError("requested path length outside the trajectory")
    if len(knots) == 1:
        return np.repeat(pts[:1], s.size, axis=0)
    k = np.clip(np.searchsorted(knots, s, side="right") - 1, 0, len(knots) - 2)
    seg_len = knots[k + 1] - knots[k]
    frac = np.where(seg_len > 0, (s - knots[k]) / np.where(seg_len > 0, seg_len, 1.0), 0.0)
    return pts[k] + frac[:, None] * (pts[k + 1] - pts[k])


def resample_path(trajectory: Trajectory, spacing: float) -> List[Point]:
    """Points along the path no more than ``spacing`` apart, including every collision point."""
    if not spacing > 0:
        raise ValueError("spacing must be positive")
    pts = trajectory.points()
    out: List[Point] = [tuple(pts[0])]
    for a, b in zip(pts[:-1], pts[1:]):
        length = float(np.hypot(*(b - a)))
        n = max(1, int(math.ceil(length / spacing)))
        for j in range(1, n):
            p = a + (j / n) * (b - a)
            out.append((float(p[0]), float(p[1])))
        out.append((float(b[0]), float(b[1])))
    return out


def check_trajectory(trajectory: Trajectory) -> None:
    """Assert the structural invariants of a trajectory (used by tests and the CLI)."""
    last = 0.0
    table = trajectory.table_ref
    prev_point = trajectory.initial.position
    for ev in trajectory.events:
        assert ev.path_length_so_far > last
        last = ev.path_length_so_far
        mid = (0.5 * (prev_point[0] + ev.point[0]), 0.5 * (prev_point[1] + ev.point[1]))
        assert contains(table, mid) or min(w.distance(mid) for w in table.walls) < 1e-9
        prev_point = ev.point


# --- trajectory CSV ------------------------------------------------------------

TRAJECTORY_HEADER = ["index", "x", "y", "wall_id", "dir_in_x", "dir_in_y",
                     "dir_out_x", "dir_out_y", "incidence_angle", "path_length"]


def trajectory_rows(trajectory: Trajectory) -> List[list]:
    init = trajectory.initial
    rows = [[0, repr(init.position[0]), repr(init.position[1]), "", "", "",
             repr(init.direction[0]), repr(init.direction[1]), "", repr(0.0)]]
    for ev in trajectory.events:
        rows.append([ev.index, repr(ev.point[0]), repr(ev.point[1]), ev.wall_id,
                     repr(ev.dir_in[0]), repr(ev.dir_in[1]),
                     repr(ev.dir_out[0]), repr(ev.dir_out[1]),
                     repr(ev.incidence_angle), repr(ev.path_length_so_far)])
    return rows


def trajectory_to_csv(trajectory: Trajectory) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TRAJECTORY_HEADER)
    writer.writerows(trajectory_rows(trajectory))
    return buf.getvalue()


def read_trajectory_csv(text: str) -> List[dict]:
    """Parse a trajectory CSV into dict rows with numeric fields converted."""
    rows = []
    for rec in csv.DictReader(io.StringIO(text)):
        row = {}
        for key, value in rec.items():
            if value == "":
                row[key] = None
            elif key in ("index", "wall_id"):
                row[key] = int(value)
            else:
                row[key] = float(value)
        rows.append(row)
    return rows
