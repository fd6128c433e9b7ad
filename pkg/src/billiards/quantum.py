"""Wave-packet propagation in a hard-wall billiard.

Solves ``i dpsi/dt = -1/2 lap(psi)`` (hbar = m = 1) on a uniform grid whose
nodes outside the table are removed, which imposes psi = 0 on a staircase
approximation of the boundary (an O(h) geometric error). Time stepping is
Crank-Nicolson; each step solves a sparse complex system with BiCGSTAB.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import bicgstab

from .geometry import Point, Table, contains

SOLVER_RTOL = 1e-12


class GridError(ValueError):
    """Grid spacing incompatible with the table."""


class SolverError(RuntimeError):
    """The linear solve did not reach the residual target."""

    def __init__(self, message: str, residual: float, step_index: Optional[int] = None):
        super().__init__(message)
        self.residual = residual
        self.step_index = step_index


@dataclass(frozen=True, eq=False)
class Grid2D:
    """Node ``(row j, col i)`` sits at ``origin + (i*h, j*h)``; arrays are ``(ny, nx)``."""

    nx: int
    ny: int
    h: float
    origin: Point
    interior_mask: np.ndarray = field(repr=False)

    @property
    def n_interior(self) -> int:
        return int(np.count_nonzero(self.interior_mask))

    def coordinates(self) -> Tuple[np.ndarray, np.ndarray]:
        x = self.origin[0] + self.h * np.arange(self.nx)
        y = self.origin[1] + self.h * np.arange(self.ny)
        return np.meshgrid(x, y)


@dataclass(frozen=True, eq=False)
class WaveField:
    grid: Grid2D
    amplitudes: np.ndarray = field(repr=False)
    time: float = 0.0

    def norm(self) -> float:
        return math.sqrt(self.grid.h ** 2 * float(np.sum(np.abs(self.amplitudes) ** 2)))


@dataclass(frozen=True)
class PacketSpec:
    center: Point
    width: float
    wavevector: Point = (0.0, 0.0)

    def __post_init__(self):
        if not self.width > 0:
            raise ValueError("packet width must be positive")


def build_grid(table: Table, spacing: float, min_nodes: int = 3) -> Grid2D:
    """Uniform grid over the table's bounding box with a node-center interior mask."""
    if not spacing > 0:
        raise GridError("spacing must be positive")
    xmin, ymin, xmax, ymax = table.bounding_box
    nx = int(round((xmax - xmin) / spacing)) + 1
    ny = int(round((ymax - ymin) / spacing)) + 1
    if min(nx, ny) < min_nodes:
        raise GridError(f"spacing {spacing} too coarse: {min(nx, ny)} nodes across the table, "
                        f"need at least {min_nodes}")
    xs = xmin + spacing * np.arange(nx)
    ys = ymin + spacing * np.arange(ny)
    mask = np.array([[contains(table, (x, y)) for x in xs] for y in ys], dtype=bool)
    if not mask.any():
        raise GridError(f"spacing {spacing} leaves no interior nodes")
    return Grid2D(nx, ny, float(spacing), (xmin, ymin), mask)


def gaussian_packet(grid: Grid2D, spec: PacketSpec, table: Optional[Table] = None) -> WaveField:
    """Normalized ``exp(-|x-c|^2 / (4 sigma^2)) exp(i k.x)`` restricted to the mask.

    With ``table`` given, warns when the center is closer than 3 sigma to a wall.
    """
    cx, cy = spec.center
    X, Y = grid.coordinates()
    i = int(round((cx - grid.origin[0]) / grid.h))
    j = int(round((cy - grid.origin[1]) / grid.h))
    inside = 0 <= i < grid.nx and 0 <= j < grid.ny and grid.interior_mask[j, i]
    if table is not None:
        inside = inside and contains(table, (cx, cy))
    if not inside:
        raise ValueError(f"packet center {spec.center} is not inside the domain")
    if table is not None:
        clearance = min(w.distance((cx, cy)) for w in table.walls)
        if clearance < 3 * spec.width:
            warnings.warn(f"packet clearance {clearance:.3g} is below 3 sigma "
                          f"({3 * spec.width:.3g}); the initial state is clipped by the walls",
                          stacklevel=2)
    kx, ky = spec.wavevector
    r2 = (X - cx) ** 2 + (Y - cy) ** 2
    psi = np.exp(-r2 / (4 * spec.width ** 2)) * np.exp(1j * (kx * X + ky * Y))
    psi = np.where(grid.interior_mask, psi, 0.0)
    psi /= math.sqrt(grid.h ** 2 * float(np.sum(np.abs(psi) ** 2)))
    return WaveField(grid, psi, 0.0)


def field_from_function(grid: Grid2D, values: np.ndarray, normalize: bool = True) -> WaveField:
    """Wrap an ``(ny, nx)`` array as a masked (and optionally normalized) field."""
    psi = np.where(grid.interior_mask, np.asarray(values, dtype=complex), 0.0)
    if normalize:
        psi = psi / math.sqrt(grid.h ** 2 * float(np.sum(np.abs(psi) ** 2)))
    return WaveField(grid, psi, 0.0)


def hamiltonian(grid: Grid2D) -> sp.csr_matrix:
    """``-1/2`` times the five-point Laplacian on interior nodes (exterior neighbours are zero)."""
    mask = grid.interior_mask
    index = -np.ones(mask.shape, dtype=np.int64)
    index[mask] = np.arange(np.count_nonzero(mask))
    n = int(np.count_nonzero(mask))
    rows = [np.arange(n)]
    cols = [np.arange(n)]
    vals = [np.full(n, 2.0 / grid.h ** 2)]
    off = -0.5 / grid.h ** 2
    for dj, di in ((0, 1), (1, 0)):
        a = index[: mask.shape[0] - dj, : mask.shape[1] - di]
        b = index[dj:, di:]
        both = (a >= 0) & (b >= 0)
        ra, rb = a[both], b[both]
        rows += [ra, rb]
        cols += [rb, ra]
        vals += [np.full(ra.size, off), np.full(ra.size, off)]
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(n, n))


class CrankNicolson:
    """Reusable propagator for a fixed grid and time step (negative ``dt`` runs backwards)."""

    def __init__(self, grid: Grid2D, dt: float, rtol: float = SOLVER_RTOL,
                 maxiter: Optional[int] = None):
        if dt == 0:
            raise ValueError("dt must be nonzero")
        self.grid = grid
        self.dt = dt
        self.rtol = rtol
        n = grid.n_interior
        self.maxiter = maxiter if maxiter is not None else max(10, int(10 * math.sqrt(n)))
        H = hamiltonian(grid)
        eye = sp.identity(n, dtype=complex, format="csr")
        self.lhs = (eye + 0.5j * dt * H).tocsr()
        self.rhs = (eye - 0.5j * dt * H).tocsr()

    def advance(self, psi: np.ndarray) -> np.ndarray:
        """One step on the interior-node vector ``psi``."""
        b = self.rhs @ psi
        bnorm = float(np.linalg.norm(b))
        if bnorm == 0.0:
            return np.zeros_like(psi)
        x, info = bicgstab(self.lhs, b, x0=b, rtol=self.rtol, atol=0.0, maxiter=self.maxiter)
        residual = float(np.linalg.norm(b - self.lhs @ x)) / bnorm
        if info != 0 or residual > self.rtol:
            # bicgstab checks a recurrence residual; one restart usually settles it
            x, info = bicgstab(self.lhs, b, x0=x, rtol=self.rtol, atol=0.0,
                               maxiter=self.maxiter)
            residual = float(np.linalg.norm(b - self.lhs @ x)) / bnorm
            if info != 0 or residual > self.rtol:
                raise SolverError(f"BiCGSTAB did not converge: relative residual {residual:.3e}",
                                  residual)
        return x

    def step(self, field: WaveField) -> WaveField:
        mask = self.grid.interior_mask
        psi = self.advance(field.amplitudes[mask])
        out = np.zeros_like(field.amplitudes)
        out[mask] = psi
        return WaveField(self.grid, out, field.time + self.dt)


def step(field: WaveField, dt: float) -> WaveField:
    """One Crank-Nicolson step of size ``dt``."""
    return CrankNicolson(field.grid, dt).step(field)


def evolve(field: WaveField, t_final: float, dt: float, snapshot_every: int = 1,
           include_initial: bool = False, callback=None) -> List[WaveField]:
    """Step until ``t_final`` (``round(t_final/dt)`` steps).

    Returns a snapshot every ``snapshot_every`` steps plus the final state.
    Snapshot times are ``field.time + k*dt`` computed from the step count.
    ``callback(snapshot)`` is invoked as each snapshot is taken.
    """
    if not t_final > 0:
        raise ValueError("t_final must be positive")
    if dt == 0:
        raise ValueError("dt must be nonzero")
    if snapshot_every < 1:
        raise ValueError("snapshot_every must be at least 1")
    n_steps = max(1, int(round(t_final / abs(dt))))
    prop = CrankNicolson(field.grid, dt)
    mask = field.grid.interior_mask
    psi = field.amplitudes[mask]
    t0 = field.time
    snapshots: List[WaveField] = []

    def take(k: int, vec: np.ndarray) -> None:
        amps = np.zeros_like(field.amplitudes)
        amps[mask] = vec
        snap = WaveField(field.grid, amps, t0 + k * dt)
        snapshots.append(snap)
        if callback is not None:
            callback(snap)

    if include_initial:
        take(0, psi)
    for k in range(1, n_steps + 1):
        try:
            psi = prop.advance(psi)
        except SolverError as exc:
            exc.step_index = k
            raise
        if k % snapshot_every == 0 or k == n_steps:
            take(k, psi)
    return snapshots


def density(field: WaveField) -> np.ndarray:
    return np.abs(field.amplitudes) ** 2


def centroid_and_spread(field: WaveField) -> Tuple[Point, float]:
    """Mean position of the density and its per-axis RMS width.

    The width is ``sqrt(<|x - c|^2> / 2)``, i.e. the RMS radius divided by
    sqrt(2), so a fresh packet reports its ``sigma``.
    """
    rho = density(field)
    total = float(rho.sum())
    if total == 0.0:
        raise ValueError("field is identically zero")
    X, Y = field.grid.coordinates()
    cx = float((rho * X).sum()) / total
    cy = float((rho * Y).sum()) / total
    msr = float((rho * ((X - cx) ** 2 + (Y - cy) ** 2)).sum()) / total
    return (cx, cy), math.sqrt(0.5 * msr)


def free_packet_width(sigma0: float, t: float) -> float:
    """Analytic density width of a free Gaussian packet (hbar = m = 1)."""
    return sigma0 * math.sqrt(1.0 + (t / (2.0 * sigma0 ** 2)) ** 2)


# --- snapshot output -----------------------------------------------------------

def density_pgm(field: WaveField) -> bytes:
    """Binary 16-bit PGM of the density scaled to its maximum, top row = largest y."""
    rho = density(field)
    peak = float(rho.max())
    scaled = np.zeros_like(rho) if peak == 0 else rho / peak
    pix = np.round(scaled[::-1] * 65535).astype(">u2")
    header = f"P5\n{field.grid.nx} {field.grid.ny}\n65535\n".encode("ascii")
    return header + pix.tobytes()


def read_pgm(data: bytes) -> np.ndarray:
    parts = data.split(b"\n", 3)
    if parts[0] != b"P5":
        raise ValueError("not a binary PGM")
    nx, ny = map(int, parts[1].split())
    maxval = int(parts[2])
    dtype = ">u2" if maxval > 255 else "u1"
    return np.frombuffer(parts[3], dtype=dtype).reshape(ny, nx)


def density_raw(field: WaveField) -> bytes:
    """Row-major little-endian float64 density (row index = y)."""
    return density(field).astype("<f8").tobytes()


def raw_sidecar(field: WaveField) -> dict:
    g = field.grid
    return {"nx": g.nx, "ny": g.ny, "h": g.h, "origin": list(g.origin),
            "time": field.time, "norm": field.norm()}


def snapshot_record(field: WaveField) -> dict:
    (cx, cy), spread = centroid_and_spread(field)
    return {"time": field.time, "norm": field.norm(), "centroid": [cx, cy], "spread": spread}


def snapshot_name(time: float) -> str:
    return f"density_t{time:.6f}"


def read_raw(data: bytes, sidecar: dict) -> np.ndarray:
    return np.frombuffer(data, dtype="<f8").reshape(sidecar["ny"], sidecar["nx"])


def zone_mass(field: WaveField, zone: np.ndarray) -> float:
    """Probability inside a boolean node mask."""
    return field.grid.h ** 2 * float(density(field)[zone].sum())


def wall_zone(grid: Grid2D, table: Table, wall_ids: Sequence[int], width: float) -> np.ndarray:
    """Interior nodes within ``width`` of any of the given walls."""
    X, Y = grid.coordinates()
    walls = [table.wall(w) for w in wall_ids]
    zone = np.zeros(grid.interior_mask.shape, dtype=bool)
    for j, i in zip(*np.nonzero(grid.interior_mask)):
        p = (float(X[j, i]), float(Y[j, i]))
        zone[j, i] = min(w.distance(p) for w in walls) < width
    return zone


def spread_fraction(field: WaveField, factor: float = 0.1) -> float:
    """Fraction of interior nodes whose density exceeds ``factor`` times the interior mean."""
    rho = density(field)[field.grid.interior_mask]
    return float(np.count_nonzero(rho > factor * rho.mean())) / rho.size

