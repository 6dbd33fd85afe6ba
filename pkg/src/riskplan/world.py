"""Static occupancy, moving-obstacle prediction and collision-risk composition."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np


class GridParseError(ValueError):
    """Raised for malformed grid files; the message names the offending line."""


class ContractViolation(ValueError):
    """An operation was called with arguments outside its contract."""


@dataclass(frozen=True, eq=False)
class OccupancyGrid:
    """Row-major occupancy raster. Row 0 is the top of the map.

    Cell ``(col, row)`` has its center at
    ``((col + 0.5) * res, (height - row - 0.5) * res)``.
    """

    width: int
    height: int
    resolution: float
    cells: np.ndarray  # shape (height, width), values in [0, 1]

    def __post_init__(self):
        cells = np.asarray(self.cells, dtype=float)
        if cells.size != self.width * self.height:
            raise ValueError("cells length must equal width * height")
        cells = cells.reshape(self.height, self.width)
        if self.resolution <= 0:
            raise ValueError("resolution must be positive")
        if cells.size and (cells.min() < 0.0 or cells.max() > 1.0):
            raise ValueError("cell occupancy must lie in [0, 1]")
        cells.setflags(write=False)
        object.__setattr__(self, "cells", cells)

    @property
    def size_m(self) -> tuple[float, float]:
        return self.width * self.resolution, self.height * self.resolution

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        w, h = self.size_m
        return 0.0, 0.0, w, h

    def cell_center(self, col: int, row: int) -> tuple[float, float]:
        res = self.resolution
        return (col + 0.5) * res, (self.height - row - 0.5) * res

    def contains(self, x, y):
        w, h = self.size_m
        return (x >= 0.0) & (x <= w) & (y >= 0.0) & (y <= h)

    def to_text(self) -> str:
        lines = [f"{self.width} {self.height} {self.resolution!r}"]
        for row in self.cells:
            lines.append("".join("#" if c >= 0.5 else "." for c in row))
        return "\n".join(lines) + "\n"

    def __eq__(self, other):
        if not isinstance(other, OccupancyGrid):
            return NotImplemented
        return (self.width == other.width and self.height == other.height
                and self.resolution == other.resolution
                and np.array_equal(self.cells, other.cells))

    __hash__ = object.__hash__


def load_grid(text: str) -> OccupancyGrid:
    lines = text.splitlines()
    if not lines:
        raise GridParseError("line 1: empty grid file")
    header = lines[0].split()
    if len(header) != 3:
        raise GridParseError("line 1: header must be '<width> <height> <resolution_m>'")
    try:
        width, height = int(header[0]), int(header[1])
        resolution = float(header[2])
    except ValueError as exc:
        raise GridParseError(f"line 1: bad header value ({exc})") from None
    if width <= 0 or height <= 0 or not resolution > 0 or not math.isfinite(resolution):
        raise GridParseError("line 1: width, height and resolution must be positive")
    rows = lines[1:]
    # tolerate trailing blank lines only
    while len(rows) > height and not rows[-1].strip():
        rows.pop()
    if len(rows) != height:
        raise GridParseError(f"line {len(lines) + 1}: expected {height} rows, found {len(rows)}")
    cells = np.zeros((height, width))
    for i, row in enumerate(rows):
        lineno = i + 2
        row = row.rstrip("\r")
        if len(row) != width:
            raise GridParseError(f"line {lineno}: expected {width} characters, found {len(row)}")
        for j, ch in enumerate(row):
            if ch == "#":
                cells[i, j] = 1.0
            elif ch != ".":
                raise GridParseError(f"line {lineno}: illegal character {ch!r} at column {j + 1}")
    return OccupancyGrid(width, height, resolution, cells)


@lru_cache(maxsize=64)
def _footprint_offsets(radius_cells: float) -> tuple[np.ndarray, np.ndarray]:
    k = int(math.ceil(radius_cells)) + 1
    dc, dr = np.meshgrid(np.arange(-k, k + 1), np.arange(-k, k + 1), indexing="ij")
    return dc.ravel(), dr.ravel()


def static_risk_batch(grid: OccupancyGrid, xs, ys, robot_radius: float) -> np.ndarray:
    """Max occupancy over cells whose centers lie within ``robot_radius``.

    Positions outside the map bounds get risk 1.0.
    """
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    ys = np.atleast_1d(np.asarray(ys, dtype=float))
    res = grid.resolution
    # exact shortcut: wherever every cell the footprint may touch and every cell
    # it surely covers share the same maximum, that maximum is the answer; the
    # maps carry a ring of never-settled cells for points off the grid
    may, must = _bound_maps(grid, robot_radius)
    c = np.clip(np.floor(xs / res).astype(int), -1, grid.width) + 1
    r = grid.height - np.clip(np.floor(ys / res).astype(int), -1, grid.height)
    hi = may[r, c]
    settled = hi == must[r, c]
    if settled.all():
        return hi
    inb = grid.contains(xs, ys)
    out = np.where(inb, 0.0, 1.0)
    out[settled] = hi[settled]
    hot = inb & ~settled
    if hot.any():
        dc, dr = _footprint_offsets(robot_radius / res)
        out[hot] = _footprint_max(grid, xs[hot], ys[hot], robot_radius, dc, dr)
    return out


def _bound_maps(grid: OccupancyGrid, robot_radius: float) -> tuple[np.ndarray, np.ndarray]:
    """Per base cell: max occupancy over cells a footprint may reach, and over cells it must cover."""
    cache = grid.__dict__.setdefault("_bound_cache", {})
    if robot_radius not in cache:
        rc = robot_radius / grid.resolution
        dc, dr = _footprint_offsets(rc)
        # distances in cell units from the base cell square [0, 1)^2 to offset cell centers
        px, py = dc + 0.5, dr + 0.5
        near = np.hypot(np.clip(px, 0.0, 1.0) - px, np.clip(py, 0.0, 1.0) - py)
        far = np.hypot(np.maximum(np.abs(px), np.abs(px - 1.0)),
                       np.maximum(np.abs(py), np.abs(py - 1.0)))
        k = int(dc.max())
        padded = np.pad(grid.cells, k)
        h, w = grid.height, grid.width
        may = np.zeros((h, w))
        must = np.zeros((h, w))
        margin = 1e-6
        for a, b, n, f in zip(dc, dr, near, far):
            if n > rc + margin:
                continue
            # rows count from the top, so a positive bottom-row offset moves up
            view = padded[k - b:k - b + h, k + a:k + a + w]
            np.maximum(may, view, out=may)
            if f < rc - margin:
                np.maximum(must, view, out=must)
        may = np.pad(may, 1, constant_values=np.inf)
        must = np.pad(must, 1, constant_values=-np.inf)
        cache[robot_radius] = (may, must)
    return cache[robot_radius]


def _footprint_max(grid, xs, ys, robot_radius, dc, dr) -> np.ndarray:
    res = grid.resolution
    # candidate cells in a window around the cell holding the point
    col0 = np.floor(xs / res).astype(int)
    rowb0 = np.floor(ys / res).astype(int)  # row index counted from the bottom
    cols = col0[:, None] + dc[None, :]
    rowsb = rowb0[:, None] + dr[None, :]
    cx = (cols + 0.5) * res
    cy = (rowsb + 0.5) * res
    inside = (cols >= 0) & (cols < grid.width) & (rowsb >= 0) & (rowsb < grid.height)
    near = (cx - xs[:, None]) ** 2 + (cy - ys[:, None]) ** 2 <= robot_radius * robot_radius
    take = inside & near
    rows = grid.height - 1 - rowsb
    occ = np.zeros(cols.shape)
    occ[take] = grid.cells[rows[take], cols[take]]
    return occ.max(axis=1) if occ.shape[1] else np.zeros(len(xs))


def static_risk(grid: OccupancyGrid, position, robot_radius: float) -> float:
    if not robot_radius > 0:
        raise ContractViolation("robot_radius must be positive")
    return float(static_risk_batch(grid, [position[0]], [position[1]], robot_radius)[0])


def segment_points(a, b, spacing: float) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    length = float(np.hypot(*(b - a)))
    n = max(1, int(math.ceil(length / spacing)))
    s = np.arange(n + 1) / n
    return a[None, :] + s[:, None] * (b - a)[None, :]


def segment_free(grid: OccupancyGrid, a, b, robot_radius: float) -> bool:
    """True iff static risk stays below 0.5 along ``ab`` at half-cell spacing."""
    pts = segment_points(a, b, grid.resolution / 2.0)
    return bool(np.all(static_risk_batch(grid, pts[:, 0], pts[:, 1], robot_radius) < 0.5))


@dataclass(frozen=True, eq=False)
class MovingObstacle:
    id: str
    radius: float
    times: np.ndarray
    positions: np.ndarray  # shape (n, 2)

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float).reshape(-1)
        pos = np.asarray(self.positions, dtype=float).reshape(-1, 2)
        if len(times) != len(pos):
            raise ValueError("times and positions must have equal length")
        if len(times) > 1 and np.any(np.diff(times) <= 0):
            raise ValueError(f"obstacle {self.id}: timestamps must be strictly increasing")
        if not self.radius > 0:
            raise ValueError("obstacle radius must be positive")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "positions", pos)

    @classmethod
    def from_samples(cls, id, radius, samples):
        """Build from ``(t, x, y)`` triples."""
        arr = np.asarray(sorted(samples), dtype=float).reshape(-1, 3)
        return cls(id, radius, arr[:, 0], arr[:, 1:])

    def observed_until(self, t: float) -> "MovingObstacle | None":
        """Samples with timestamps at or before ``t``; None when there are none."""
        n = int(np.searchsorted(self.times, t, side="right"))
        if n == 0:
            return None
        return MovingObstacle(self.id, self.radius, self.times[:n], self.positions[:n])


def load_crowd(text: str, radius: float = 0.3) -> list[MovingObstacle]:
    """Parse the crowd CSV (header ``id,t,x,y``); one obstacle per id."""
    reader = csv.reader(io.StringIO(text))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise ValueError("crowd file is empty") from None
    if header != ["id", "t", "x", "y"]:
        raise ValueError(f"crowd file header must be 'id,t,x,y', got {','.join(header)!r}")
    samples: dict[str, list] = {}
    for lineno, row in enumerate(reader, start=2):
        if not row or not "".join(row).strip():
            continue
        if len(row) != 4:
            raise ValueError(f"crowd file line {lineno}: expected 4 fields")
        try:
            t, x, y = float(row[1]), float(row[2]), float(row[3])
        except ValueError:
            raise ValueError(f"crowd file line {lineno}: non-numeric value") from None
        samples.setdefault(row[0].strip(), []).append((t, x, y))
    return [MovingObstacle.from_samples(oid, radius, s) for oid, s in sorted(samples.items())]


def dump_crowd(obstacles) -> str:
    buf = io.StringIO()
    buf.write("id,t,x,y\n")
    for ob in obstacles:
        for t, (x, y) in zip(ob.times, ob.positions):
            buf.write(f"{ob.id},{float(t)!r},{float(x)!r},{float(y)!r}\n")
    return buf.getvalue()


@dataclass(frozen=True, eq=False)
class ObstaclePrediction:
    """Per-step isotropic Gaussian forecast for one obstacle, steps k = 0..N."""

    obstacle_id: str
    radius: float
    times: np.ndarray
    means: np.ndarray  # (N+1, 2)
    sigmas: np.ndarray  # (N+1,)

    @property
    def steps(self):
        return [(float(t), (float(m[0]), float(m[1])), float(s))
                for t, m, s in zip(self.times, self.means, self.sigmas)]


def predict_obstacles(obstacles, t0: float, params) -> list[ObstaclePrediction]:
    """Constant-velocity forecast from the two latest samples at or before ``t0``.

    Steps cover ``t0, t0 + dt, ..., t0 + N*dt`` with uncertainty growing by
    ``params.sigma_growth`` per step. Obstacles never observed by ``t0`` are
    left out.
    """
    k = np.arange(params.N + 1)
    times = t0 + k * params.dt
    sigmas = params.sigma0 + k * params.sigma_growth
    out = []
    for ob in obstacles:
        n = int(np.searchsorted(ob.times, t0, side="right"))
        if n == 0:
            continue
        t_last, p_last = ob.times[n - 1], ob.positions[n - 1]
        if n >= 2:
            vel = (p_last - ob.positions[n - 2]) / (t_last - ob.times[n - 2])
        else:
            vel = np.zeros(2)
        means = p_last[None, :] + (times - t_last)[:, None] * vel[None, :]
        out.append(ObstaclePrediction(ob.id, ob.radius, times, means, sigmas.copy()))
    return out


def dynamic_risk_single(pred_step, position, robot_radius: float, obstacle_radius: float) -> float:
    """Collision probability proxy for one predicted obstacle step ``(mean, sigma)``."""
    mean, sigma = pred_step
    if not sigma > 0:
        raise ContractViolation("sigma must be positive")
    d = math.hypot(position[0] - mean[0], position[1] - mean[1])
    return float(_dynamic_risk(d, robot_radius + obstacle_radius, sigma))


def _dynamic_risk(d, r_c, sigma):
    gap = np.maximum(np.asarray(d, dtype=float) - r_c, 0.0)
    return np.exp(-(gap * gap) / (2.0 * sigma * sigma))


def combined_risk(p_rs: float, p_rd_list) -> float:
    """Static risk absorbed first, then independent moving-obstacle risks."""
    values = [p_rs, *p_rd_list]
    for p in values:
        if not 0.0 <= p <= 1.0:
            raise ContractViolation(f"probability {p!r} outside [0, 1]")
    # r + (1 - r) p is 1 - prod(1 - p) unrolled; it keeps the one-term cases exact
    p_rd = 0.0
    for p in p_rd_list:
        p_rd = p_rd + (1.0 - p_rd) * p
    return p_rs + (1.0 - p_rs) * p_rd


class RiskField:
    """Risk evaluator for one planning cycle: static grid plus forecasts from ``t0``."""

    def __init__(self, grid: OccupancyGrid, robot_radius: float,
                 predictions=(), t0: float = 0.0, dt: float = 0.5):
        self.grid = grid
        self.robot_radius = robot_radius
        self.predictions = list(predictions)
        self.t0 = t0
        self.dt = dt
        if self.predictions:
            self._means = np.stack([p.means for p in self.predictions])  # (n_obs, N+1, 2)
            self._sigmas = np.stack([p.sigmas for p in self.predictions])  # (n_obs, N+1)
            self._rc = np.array([robot_radius + p.radius for p in self.predictions])
        else:
            self._means = None

    def horizon_index(self, t) -> np.ndarray:
        k = np.rint((np.asarray(t, dtype=float) - self.t0) / self.dt).astype(int)
        if self._means is not None:
            k = np.clip(k, 0, self._means.shape[1] - 1)
        return k

    def static(self, xs, ys) -> np.ndarray:
        return static_risk_batch(self.grid, xs, ys, self.robot_radius)

    def dynamic(self, xs, ys, ts) -> np.ndarray:
        xs = np.atleast_1d(np.asarray(xs, dtype=float))
        ys = np.atleast_1d(np.asarray(ys, dtype=float))
        if self._means is None:
            return np.zeros(len(xs))
        k = np.broadcast_to(self.horizon_index(ts), xs.shape)
        mx = self._means[:, k, 0]
        my = self._means[:, k, 1]
        sig = self._sigmas[:, k]
        d = np.hypot(xs[None, :] - mx, ys[None, :] - my)
        p = _dynamic_risk(d, self._rc[:, None], sig)
        out = np.zeros(len(xs))
        for row in p:
            out = out + (1.0 - out) * row
        return out

    def combined(self, xs, ys, ts, static=None) -> np.ndarray:
        p_rs = self.static(xs, ys) if static is None else static
        p_rd = self.dynamic(xs, ys, ts)
        return p_rs + (1.0 - p_rs) * p_rd
