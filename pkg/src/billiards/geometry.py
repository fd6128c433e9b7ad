"""Wall primitives, billiard tables and exact ray queries.

Coordinates are dimensionless table units. A table is an immutable ordered
list of walls; every wall knows which side is the table interior so that it
can report an inward unit normal at any of its points.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional, Tuple, Union

Point = Tuple[float, float]

TWO_PI = 2.0 * math.pi
DEFAULT_T_MIN = 1e-9
BOUNDARY_TOL = 1e-12
# slack allowed past segment ends / arc ends when accepting a hit
END_SLACK = 1e-12
UNIT_TOL = 1e-12


class GeometryError(ValueError):
    """Invalid wall or table construction."""


@dataclass(frozen=True)
class Segment:
    p0: Point
    p1: Point

    @property
    def length(self) -> float:
        return math.hypot(self.p1[0] - self.p0[0], self.p1[1] - self.p0[1])


@dataclass(frozen=True)
class Arc:
    """Circular arc from ``angle_start`` counter-clockwise to ``angle_end``.

    ``interior`` is ``"inside"`` when the table lies inside the circle (a
    stadium cap) and ``"outside"`` when it lies outside (a scatterer).
    """

    center: Point
    radius: float
    angle_start: float
    angle_end: float
    interior: str = "inside"

    @property
    def span(self) -> float:
        return self.angle_end - self.angle_start

    @property
    def is_full_circle(self) -> bool:
        return self.span >= TWO_PI - 1e-15

    def contains_angle(self, theta: float, slack: float = 0.0) -> bool:
        if self.is_full_circle:
            return True
        rel = (theta - self.angle_start) % TWO_PI
        tol = slack / self.radius
        return rel <= self.span + tol or rel >= TWO_PI - tol

    def endpoints(self) -> Tuple[Point, Point]:
        cx, cy = self.center
        r = self.radius
        return (
            (cx + r * math.cos(self.angle_start), cy + r * math.sin(self.angle_start)),
            (cx + r * math.cos(self.angle_end), cy + r * math.sin(self.angle_end)),
        )


Shape = Union[Segment, Arc]


@dataclass(frozen=True)
class Wall:
    id: int
    shape: Shape
    # inward normal of a segment; unused for arcs
    normal: Point = (0.0, 0.0)

    def inward_normal(self, point: Point) -> Point:
        shape = self.shape
        if isinstance(shape, Segment):
            return self.normal
        dx = point[0] - shape.center[0]
        dy = point[1] - shape.center[1]
        r = math.hypot(dx, dy)
        sign = -1.0 if shape.interior == "inside" else 1.0
        return (sign * dx / r, sign * dy / r)

    def endpoints(self) -> Tuple[Point, ...]:
        if isinstance(self.shape, Segment):
            return (self.shape.p0, self.shape.p1)
        if self.shape.is_full_circle:
            return ()
        return self.shape.endpoints()

    def distance(self, point: Point) -> float:
        """Unsigned Euclidean distance from ``point`` to the wall's point set."""
        shape = self.shape
        px, py = point
        if isinstance(shape, Segment):
            (x0, y0), (x1, y1) = shape.p0, shape.p1
            ex, ey = x1 - x0, y1 - y0
            u = ((px - x0) * ex + (py - y0) * ey) / (ex * ex + ey * ey)
            u = min(1.0, max(0.0, u))
            return math.hypot(px - (x0 + u * ex), py - (y0 + u * ey))
        dx, dy = px - shape.center[0], py - shape.center[1]
        rho = math.hypot(dx, dy)
        if rho > 0.0 and shape.contains_angle(math.atan2(dy, dx)):
            return abs(rho - shape.radius)
        return min(math.hypot(px - ex, py - ey) for ex, ey in shape.endpoints())


@dataclass(frozen=True)
class Hit:
    t: float
    point: Point
    inward_normal: Point
    wall_id: int


@dataclass(frozen=True)
class Table:
    walls: Tuple[Wall, ...]
    bounding_box: Tuple[float, float, float, float]  # xmin, ymin, xmax, ymax
    name: str = "custom"

    def wall(self, wall_id: int) -> Wall:
        for w in self.walls:
            if w.id == wall_id:
                return w
        raise KeyError(f"table has no wall with id {wall_id}")

    @property
    def wall_ids(self) -> Tuple[int, ...]:
        return tuple(w.id for w in self.walls)

    def contains(self, point: Point) -> bool:
        return contains(self, point)


def _segment_wall(wall_id: int, p0: Point, p1: Point, interior_side: Point) -> Wall:
    """Build a segment wall whose normal points toward ``interior_side``."""
    seg = Segment(tuple(map(float, p0)), tuple(map(float, p1)))
    length = seg.length
    if not length > 0.0:
        raise GeometryError(f"wall {wall_id}: segment endpoints coincide")
    tx, ty = (p1[0] - p0[0]) / length, (p1[1] - p0[1]) / length
    nx, ny = -ty, tx
    mx, my = 0.5 * (p0[0] + p1[0]), 0.5 * (p0[1] + p1[1])
    if (interior_side[0] - mx) * nx + (interior_side[1] - my) * ny < 0:
        nx, ny = -nx, -ny
    return Wall(wall_id, seg, (nx + 0.0, ny + 0.0))


def _arc_wall(wall_id: int, center: Point, radius: float, a0: float, a1: float,
              interior: str) -> Wall:
    if not radius > 0.0:
        raise GeometryError(f"wall {wall_id}: arc radius must be positive, got {radius}")
    span = a1 - a0
    if not (0.0 < span <= TWO_PI + 1e-12):
        raise GeometryError(f"wall {wall_id}: arc span must lie in (0, 2pi], got {span}")
    if interior not in ("inside", "outside"):
        raise GeometryError(f"wall {wall_id}: interior must be 'inside' or 'outside'")
    return Wall(wall_id, Arc((float(center[0]), float(center[1])), float(radius),
                             float(a0), float(a1), interior))


def make_square(side: float = 1.0) -> Table:
    """Square ``[0, side]^2`` with walls 0=bottom, 1=right, 2=top, 3=left."""
    if not side > 0:
        raise GeometryError(f"side must be positive, got {side}")
    s = float(side)
    walls = (
        Wall(0, Segment((0.0, 0.0), (s, 0.0)), (0.0, 1.0)),
        Wall(1, Segment((s, 0.0), (s, s)), (-1.0, 0.0)),
        Wall(2, Segment((s, s), (0.0, s)), (0.0, -1.0)),
        Wall(3, Segment((0.0, s), (0.0, 0.0)), (1.0, 0.0)),
    )
    return Table(walls, (0.0, 0.0, s, s), "square")


def make_sinai(side: float = 1.0, obstacle_center: Point = (0.5, 0.5),
               obstacle_radius: float = 0.2) -> Table:
    """Square table with a circular scatterer (wall id 4)."""
    if not obstacle_radius > 0:
        raise GeometryError(f"obstacle radius must be positive, got {obstacle_radius}")
    square = make_square(side)
    cx, cy = float(obstacle_center[0]), float(obstacle_center[1])
    clearance = min(cx, cy, side - cx, side - cy) - obstacle_radius
    if not clearance > 0:
        raise GeometryError(
            f"obstacle (center {obstacle_center}, radius {obstacle_radius}) "
            f"must lie strictly inside the square of side {side}")
    obstacle = Wall(4, Arc((cx, cy), float(obstacle_radius), 0.0, TWO_PI, "outside"))
    return Table(square.walls + (obstacle,), square.bounding_box, "sinai")


def make_stadium(straight_length: float = 2.0, radius: float = 1.0) -> Table:
    """Bunimovich stadium centred on the origin.

    Wall ids: 0=bottom segment, 1=right cap, 2=top segment, 3=left cap. With
    ``straight_length == 0`` the segments are dropped and the two caps form a
    circle.
    """
    if straight_length < 0:
        raise GeometryError(f"straight_length must be nonnegative, got {straight_length}")
    if not radius > 0:
        raise GeometryError(f"radius must be positive, got {radius}")
    a = 0.5 * float(straight_length)
    r = float(radius)
    half = 0.5 * math.pi
    walls = []
    if a > 0:
        walls.append(_segment_wall(0, (-a, -r), (a, -r), (0.0, 0.0)))
    walls.append(_arc_wall(1, (a, 0.0), r, -half, half, "inside"))
    if a > 0:
        walls.append(_segment_wall(2, (a, r), (-a, r), (0.0, 0.0)))
    walls.append(_arc_wall(3, (-a, 0.0), r, half, 3 * half, "inside"))
    return Table(tuple(walls), (-a - r, -r, a + r, r), "stadium")


def ray_wall_intersect(origin: Point, direction: Point, wall: Wall,
                       t_min: float = DEFAULT_T_MIN) -> Optional[Hit]:
    """First intersection of the ray ``origin + t*direction`` (``t > t_min``) with a wall."""
    dx, dy = direction
    if abs(math.hypot(dx, dy) - 1.0) > UNIT_TOL:
        raise ValueError(f"direction must be a unit vector, got {direction}")
    if not t_min > 0:
        raise ValueError("t_min must be positive")
    ox, oy = origin
    shape = wall.shape

    if isinstance(shape, Segment):
        (x0, y0), (x1, y1) = shape.p0, shape.p1
        ex, ey = x1 - x0, y1 - y0
        den = dx * ey - dy * ex
        if den == 0.0:
            return None
        wx, wy = x0 - ox, y0 - oy
        t = (wx * ey - wy * ex) / den
        u = (wx * dy - wy * dx) / den
        slack = END_SLACK / shape.length
        if t <= t_min or u < -slack or u > 1.0 + slack:
            return None
        return Hit(t, (ox + t * dx, oy + t * dy), wall.normal, wall.id)

    cx, cy = shape.center
    fx, fy = ox - cx, oy - cy
    b = fx * dx + fy * dy
    c = fx * fx + fy * fy - shape.radius * shape.radius
    disc = b * b - c
    if disc < 0.0:
        return None
    sq = math.sqrt(disc)
    # stable pair of roots of t^2 + 2bt + c = 0
    q = -b - sq if b >= 0 else -b + sq
    roots = [q, c / q] if q != 0.0 else [0.0, 0.0]
    for t in sorted(roots):
        if t <= t_min:
            continue
        px, py = ox + t * dx, oy + t * dy
        if shape.contains_angle(math.atan2(py - cy, px - cx), END_SLACK):
            return Hit(t, (px, py), wall.inward_normal((px, py)), wall.id)
    return None


class _Degenerate(Exception):
    """Probe ray passes too close to a wall endpoint to count reliably."""


def _ray_crossings(origin: Point, direction: Point, wall: Wall) -> int:
    """Number of points where the ray from ``origin`` crosses the wall (t > 0)."""
    ox, oy = origin
    dx, dy = direction
    shape = wall.shape
    for ex, ey in wall.endpoints():
        # perpendicular distance of the endpoint from the probe line, ahead of the origin
        rx, ry = ex - ox, ey - oy
        if rx * dx + ry * dy > 0 and abs(rx * dy - ry * dx) < 1e-9:
            raise _Degenerate
    if isinstance(shape, Segment):
        (x0, y0), (x1, y1) = shape.p0, shape.p1
        ex, ey = x1 - x0, y1 - y0
        den = dx * ey - dy * ex
        if den == 0.0:
            return 0
        wx, wy = x0 - ox, y0 - oy
        t = (wx * ey - wy * ex) / den
        u = (wx * dy - wy * dx) / den
        return int(t > 0 and 0.0 <= u <= 1.0)
    cx, cy = shape.center
    fx, fy = ox - cx, oy - cy
    b = fx * dx + fy * dy
    disc = b * b - (fx * fx + fy * fy - shape.radius ** 2)
    if disc <= 0.0:
        return 0
    sq = math.sqrt(disc)
    if sq < 1e-9:
        raise _Degenerate  # tangent to the circle
    count = 0
    for t in (-b - sq, -b + sq):
        if t > 0:
            px, py = ox + t * dx, oy + t * dy
            if shape.contains_angle(math.atan2(py - cy, px - cx)):
                count += 1
    return count


# irrational probe directions for even-odd counting, tried in turn
_PROBES = tuple((math.cos(a), math.sin(a)) for a in (1.0, 2.5, 4.1, 5.3, 0.3))


def contains(table: Table, point: Point) -> bool:
    """True iff ``point`` is strictly inside the table.

    Points within 1e-12 of any wall count as outside. Full-circle scatterers are
    tested as disks; all other walls take part in an even-odd crossing count
    along a probe ray that avoids wall endpoints.
    """
    px, py = float(point[0]), float(point[1])
    xmin, ymin, xmax, ymax = table.bounding_box
    if not (xmin < px < xmax and ymin < py < ymax):
        return False
    boundary = []
    for wall in table.walls:
        if wall.distance((px, py)) <= BOUNDARY_TOL:
            return False
        shape = wall.shape
        if isinstance(shape, Arc) and shape.is_full_circle and shape.interior == "outside":
            if math.hypot(px - shape.center[0], py - shape.center[1]) < shape.radius:
                return False
            continue
        boundary.append(wall)
    for probe in _PROBES:
        try:
            crossings = sum(_ray_crossings((px, py), probe, w) for w in boundary)
        except _Degenerate:
            continue
        return crossings % 2 == 1
    raise RuntimeError(f"no usable probe direction for point {point}")


def first_hit(table: Table, origin: Point, direction: Point,
              exclude_wall: Optional[int] = None,
              t_min: float = DEFAULT_T_MIN) -> Optional[Hit]:
    """Nearest hit over all walls.

    ``exclude_wall`` is skipped only when it is a segment; a chord of a circle
    may legitimately hit the same arc again.
    """
    best = None
    for wall in table.walls:
        if wall.id == exclude_wall and isinstance(wall.shape, Segment):
            continue
        hit = ray_wall_intersect(origin, direction, wall, t_min)
        if hit is not None and (best is None or hit.t < best.t):
            best = hit
    return best


# --- table description files -------------------------------------------------

def table_to_dict(table: Table) -> dict:
    walls = []
    for w in table.walls:
        s = w.shape
        if isinstance(s, Segment):
            walls.append({"kind": "segment", "p0": list(s.p0), "p1": list(s.p1)})
        else:
            walls.append({"kind": "arc", "center": list(s.center), "radius": s.radius,
                          "from": s.angle_start, "to": s.angle_end,
                          "interior": s.interior})
    return {"walls": walls}


def dump_table(table: Table) -> str:
    return json.dumps(table_to_dict(table), indent=2)


def _arc_extent(arc: Arc) -> Tuple[list, list]:
    xs, ys = [], []
    cx, cy, r = arc.center[0], arc.center[1], arc.radius
    if not arc.is_full_circle:
        for ex, ey in arc.endpoints():
            xs.append(ex)
            ys.append(ey)
    for k in range(4):
        theta = 0.5 * math.pi * k
        if arc.contains_angle(theta):
            xs.append(cx + r * math.cos(theta))
            ys.append(cy + r * math.sin(theta))
    return xs, ys


def table_from_dict(data: dict) -> Table:
    """Build a table from the JSON wall-list format.

    Segment normals are oriented by probing a point just off the segment
    midpoint with an even-odd test against the remaining boundary.
    """
    if not isinstance(data, dict) or set(data) != {"walls"}:
        raise GeometryError("table description must be an object with a single 'walls' key")
    raw = data["walls"]
    if not isinstance(raw, list) or not raw:
        raise GeometryError("'walls' must be a non-empty list")
    arcs = []
    segs = []
    for i, w in enumerate(raw):
        kind = w.get("kind") if isinstance(w, dict) else None
        if kind == "segment":
            extra = set(w) - {"kind", "p0", "p1"}
            if extra:
                raise GeometryError(f"wall {i}: unknown keys {sorted(extra)}")
            segs.append((i, tuple(map(float, w["p0"])), tuple(map(float, w["p1"]))))
        elif kind == "arc":
            extra = set(w) - {"kind", "center", "radius", "from", "to", "interior"}
            if extra:
                raise GeometryError(f"wall {i}: unknown keys {sorted(extra)}")
            arcs.append(_arc_wall(i, tuple(map(float, w["center"])), float(w["radius"]),
                                  float(w["from"]), float(w["to"]),
                                  w.get("interior", "inside")))
        else:
            raise GeometryError(f"wall {i}: kind must be 'segment' or 'arc'")

    xs, ys = [], []
    for _, p0, p1 in segs:
        xs += [p0[0], p1[0]]
        ys += [p0[1], p1[1]]
    for a in arcs:
        if a.shape.interior == "inside" or not a.shape.is_full_circle:
            ax, ay = _arc_extent(a.shape)
            xs += ax
            ys += ay
    if not xs:
        raise GeometryError("table has no outer boundary")
    bbox = (min(xs), min(ys), max(xs), max(ys))

    # provisional walls with arbitrary normal orientation, then fix by probing
    provisional = [Wall(i, Segment(p0, p1), (0.0, 0.0)) for i, p0, p1 in segs]
    for w in provisional:
        if not w.shape.length > 0:
            raise GeometryError(f"wall {w.id}: segment endpoints coincide")
    walls = sorted(provisional + arcs, key=lambda w: w.id)
    probe_table = Table(tuple(walls), bbox)
    fixed = []
    for w in walls:
        if isinstance(w.shape, Segment):
            (x0, y0), (x1, y1) = w.shape.p0, w.shape.p1
            L = w.shape.length
            nx, ny = -(y1 - y0) / L, (x1 - x0) / L
            mx, my = 0.5 * (x0 + x1), 0.5 * (y0 + y1)
            eps = 1e-7 * max(1.0, bbox[2] - bbox[0], bbox[3] - bbox[1])
            if not contains(probe_table, (mx + eps * nx, my + eps * ny)):
                nx, ny = -nx, -ny
            w = Wall(w.id, w.shape, (nx + 0.0, ny + 0.0))
        fixed.append(w)
    return Table(tuple(fixed), bbox)


def load_table(text: str) -> Table:
    return table_from_dict(json.loads(text))
