"""Built-in benchmark worlds: rectangle rasterizer, reference maps and scripted crowds."""
from __future__ import annotations

from dataclasses import replace
from pathlib import Path

import numpy as np

from .kinematics import PlannerParams, RobotState
from .sim import Scenario
from .world import MovingObstacle, OccupancyGrid, dump_crowd, segment_free

# 43.2 m square maps at a coarser raster than the 800 px originals
MAP_CELLS = 200
MAP_RES = 0.216

Rect = tuple[float, float, float, float]  # x0, y0, x1, y1 in meters
Wall = tuple[float, float, float, float, float]  # x0, y0, x1, y1, half thickness

# staggered wall segments across the middle of the map: the straight line from
# start to goal is blocked twice, and the passages between walls form corridors
CORRIDOR_WALLS: tuple[Wall, ...] = ()
CORRIDOR_RECTS: tuple[Rect, ...] = (
    (6.0, 14.0, 26.0, 16.5),
    (17.0, 26.5, 37.0, 29.0),
    (30.0, 18.5, 32.0, 22.5),
    (11.0, 21.0, 13.0, 24.0),
    (0.0, 34.0, 8.0, 35.5),
    (35.5, 6.0, 37.0, 14.0),
)

# a staircase of alternating horizontal and vertical walls: the route bends
# four times, and each detour along a wall still closes in on the goal
STAIRCASE_RECTS: tuple[Rect, ...] = (
    (0.0, 10.0, 18.0, 11.5),
    (22.0, 6.0, 23.5, 26.0),
    (20.0, 30.0, 38.0, 31.5),
)


def rasterize(rects=(), walls=(), cells: int = MAP_CELLS, res: float = MAP_RES) -> OccupancyGrid:
    """Occupancy grid marking every cell whose center lies in a rectangle or thick wall."""
    centers = (np.arange(cells) + 0.5) * res
    cx, cy = np.meshgrid(centers, centers[::-1])  # grid rows count from the top
    occ = np.zeros((cells, cells), dtype=bool)
    for x0, y0, x1, y1 in rects:
        occ |= (cx >= x0) & (cx <= x1) & (cy >= y0) & (cy <= y1)
    for x0, y0, x1, y1, half in walls:
        dx, dy = x1 - x0, y1 - y0
        s = np.clip(((cx - x0) * dx + (cy - y0) * dy) / (dx * dx + dy * dy), 0.0, 1.0)
        occ |= np.hypot(cx - x0 - s * dx, cy - y0 - s * dy) <= half
    return OccupancyGrid(cells, cells, res, occ.astype(float))


def corridor_map() -> OccupancyGrid:
    return rasterize(CORRIDOR_RECTS, CORRIDOR_WALLS)


def staircase_map() -> OccupancyGrid:
    return rasterize(STAIRCASE_RECTS)


def crossing_crowd(n: int = 10, duration: float = 600.0, seed: int = 7,
                   sample_dt: float = 0.5, radius: float = 0.3,
                   grid: OccupancyGrid | None = None) -> list[MovingObstacle]:
    """Pedestrians pacing back and forth across the map on straight lanes.

    Lanes alternate between horizontal and vertical crossings; each walker
    reverses at the lane ends, so tracks cover ``[0, duration]``. With a
    ``grid``, lanes are redrawn until they stay clear of static obstacles;
    lanes are also redrawn when a walker would touch an earlier one.
    """
    rng = np.random.default_rng(seed)
    times = np.arange(0.0, duration + 1e-9, sample_dt)
    crowd = []
    i = 0
    while len(crowd) < n:
        lane = rng.uniform(9.0, 34.0)
        lo, hi = sorted(rng.uniform(3.0, 40.0, size=2))
        if hi - lo < 12.0:
            lo, hi = max(3.0, lo - 6.0), min(40.0, hi + 6.0)
        speed = rng.uniform(0.4, 0.8)
        span = hi - lo
        phase = rng.uniform(0.0, 2 * span)
        horizontal = len(crowd) % 2 == 0
        ends = ((lo, lane), (hi, lane)) if horizontal else ((lane, lo), (lane, hi))
        if grid is not None and not segment_free(grid, ends[0], ends[1], radius + 0.2):
            continue
        # triangle wave along the lane, starting at a random phase
        s = (phase + speed * times) % (2 * span)
        along = lo + np.where(s <= span, s, 2 * span - s)
        across = np.full_like(along, lane)
        pos = np.column_stack((along, across) if horizontal else (across, along))
        # walkers never pass through each other
        if any(np.min(np.hypot(*(pos - o.positions).T)) <= 2 * radius + 0.2 for o in crowd):
            continue
        crowd.append(MovingObstacle(f"p{i:02d}", radius, times, pos))
        i += 1
    return crowd


# calibrated for desk-scale batches; see README for the meaning of each field
BENCH_PARAMS = dict(iterations_per_cycle=60, goal_radius=3.0, heuristic_burst=400)


def corridor_scenario(crowd: bool = False, max_sim_time: float = 300.0) -> Scenario:
    grid = corridor_map()
    return Scenario(
        grid=grid,
        start=RobotState(3.0, 3.0, 0.0),
        goal=(40.0, 40.0),
        crowd=crossing_crowd(duration=max_sim_time, grid=grid) if crowd else [],
        params=replace(PlannerParams(), **BENCH_PARAMS),
        max_sim_time=max_sim_time,
        name="corridor-crowd" if crowd else "corridor",
    )


def staircase_scenario(max_sim_time: float = 300.0) -> Scenario:
    return Scenario(
        grid=staircase_map(),
        start=RobotState(3.0, 3.0, 0.0),
        goal=(40.0, 40.0),
        params=replace(PlannerParams(), **BENCH_PARAMS),
        max_sim_time=max_sim_time,
        name="staircase",
    )


def write_scenario_files(scenario: Scenario, directory: Path | str) -> Path:
    """Write ``<name>.scenario`` plus its grid (and crowd CSV) into ``directory``."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    name = scenario.name
    (out / f"{name}.grid").write_text(scenario.grid.to_text())
    lines = [
        f"name = {name}",
        f"grid = {name}.grid",
        f"start = {scenario.start.x!r} {scenario.start.y!r} {scenario.start.theta!r}",
        f"goal = {scenario.goal[0]!r} {scenario.goal[1]!r}",
        f"robot_radius = {scenario.robot_radius!r}",
        f"max_sim_time = {scenario.max_sim_time!r}",
        f"seed = {scenario.seed}",
    ]
    if scenario.crowd:
        (out / f"{name}.crowd.csv").write_text(dump_crowd(scenario.crowd))
        lines.append(f"crowd = {name}.crowd.csv")
        lines.append(f"obstacle_radius = {scenario.crowd[0].radius!r}")
    defaults = PlannerParams()
    for key, value in vars(scenario.params).items():
        if value != getattr(defaults, key):
            lines.append(f"params.{key} = {value}")
    path = out / f"{name}.scenario"
    path.write_text("\n".join(lines) + "\n")
    return path


def main(argv=None) -> int:
    import argparse
    p = argparse.ArgumentParser(description="write the built-in benchmark scenarios as files")
    p.add_argument("directory", nargs="?", default="scenarios")
    args = p.parse_args(argv)
    for sc in (corridor_scenario(), corridor_scenario(crowd=True), staircase_scenario()):
        print(write_scenario_files(sc, args.directory))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
