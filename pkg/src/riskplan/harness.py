"""Batch benchmarks, CSV reports and SVG snapshots of tree growth."""
from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .planners import Planner, PlannerKind
from .sim import EpisodeResult, Scenario, crowd_position, run_episode
from .world import OccupancyGrid

REPORT_COLUMNS = ("kind", "success_rate", "exec_mean", "exec_std", "len_mean", "len_std",
                  "collision_count")
EPISODE_COLUMNS = ("kind", "seed", "success", "execution_time", "trajectory_length",
                   "collided", "cycles")


@dataclass
class KindSummary:
    kind: str
    episodes: int
    successes: int
    exec_mean: float | None
    exec_std: float | None
    len_mean: float | None
    len_std: float | None
    collision_count: int

    @property
    def success_rate(self) -> float:
        return 100.0 * self.successes / self.episodes if self.episodes else 0.0


def summarize(kind: str, results: list[EpisodeResult]) -> KindSummary:
    """Success rate plus mean/population-std over successful episodes only."""
    ok = [r for r in results if r.success]
    ex = np.array([r.execution_time for r in ok])
    ln = np.array([r.trajectory_length for r in ok])

    def stat(a, fn):
        return float(fn(a)) if len(a) else None

    return KindSummary(
        kind=kind,
        episodes=len(results),
        successes=len(ok),
        exec_mean=stat(ex, np.mean),
        exec_std=stat(ex, np.std),
        len_mean=stat(ln, np.mean),
        len_std=stat(ln, np.std),
        collision_count=sum(r.collided for r in results),
    )


@dataclass
class BatchReport:
    scenario: str
    seed_base: int
    results: dict[str, list[EpisodeResult]] = field(default_factory=dict)

    def summary(self, kind: str) -> KindSummary:
        return summarize(kind, self.results[kind])

    def summaries(self) -> list[KindSummary]:
        return [self.summary(k) for k in self.results]


def _run_one(job):
    scenario, kind, seed = job
    return run_episode(scenario, kind, seed=seed)


def run_batch(scenario: Scenario, kinds, repeats: int, seed_base: int = 0,
              workers: int = 1) -> BatchReport:
    """Run ``repeats`` episodes per planner with seeds ``seed_base + i``.

    Episodes share nothing, so ``workers > 1`` fans them out over processes;
    results are stored in seed order either way.
    """
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    kinds = [PlannerKind.parse(k) if isinstance(k, str) else k for k in kinds]
    jobs = [(scenario, k, seed_base + i) for k in kinds for i in range(repeats)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            done = list(pool.map(_run_one, jobs))
    else:
        done = [_run_one(j) for j in jobs]
    report = BatchReport(scenario.name, seed_base)
    for (_, kind, _), result in zip(jobs, done):
        report.results.setdefault(kind.value, []).append(result)
    return report


def _num(x: float | None) -> str:
    # repr of a rounded float never depends on the locale
    return "" if x is None else repr(round(float(x), 4))


def write_report(report: BatchReport) -> str:
    """One CSV row per planner; empty cells where no episode succeeded."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_COLUMNS)
    for s in report.summaries():
        w.writerow([s.kind, f"{s.success_rate:.1f}", _num(s.exec_mean), _num(s.exec_std),
                    _num(s.len_mean), _num(s.len_std), s.collision_count])
    return buf.getvalue()


def write_episodes(report: BatchReport) -> str:
    """Raw per-episode rows; the summary rows can be recomputed from these."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(EPISODE_COLUMNS)
    for kind, results in report.results.items():
        for r in results:
            w.writerow([kind, r.seed, int(r.success), repr(r.execution_time),
                        repr(r.trajectory_length), int(r.collided), r.cycles])
    return buf.getvalue()


def read_episodes(text: str) -> dict[str, list[EpisodeResult]]:
    """Inverse of :func:`write_episodes` (metrics only)."""
    out: dict[str, list[EpisodeResult]] = {}
    for row in csv.DictReader(io.StringIO(text)):
        out.setdefault(row["kind"], []).append(EpisodeResult(
            kind=row["kind"], seed=int(row["seed"]), success=row["success"] == "1",
            execution_time=float(row["execution_time"]),
            trajectory_length=float(row["trajectory_length"]),
            collided=row["collided"] == "1", cycles=int(row["cycles"]),
            final_state=(math.nan,) * 6))
    return out


# -- snapshots ----------------------------------------------------------------

def _f(v: float) -> str:
    return f"{v:.3f}"


def _rows(text: str) -> list[dict]:
    return list(csv.DictReader(io.StringIO(text)))


def render_snapshot(rooted_csv: str, forest_csv: str, grid: OccupancyGrid,
                    crowd=(), plan=(), heuristic=(), start=None, goal=None,
                    px_per_m: float = 10.0) -> str:
    """SVG picture of one planning cycle.

    ``rooted_csv`` and ``forest_csv`` are the tree exports; ``crowd`` holds
    ``(x, y, radius)`` discs, ``plan`` and ``heuristic`` are point sequences.
    Output depends only on the inputs, so re-rendering is byte-identical.
    """
    w_m, h_m = grid.size_m
    k = px_per_m

    def pt(x, y):
        return _f(float(x) * k), _f((h_m - float(y)) * k)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_f(w_m * k)}" height="{_f(h_m * k)}" '
        f'viewBox="0 0 {_f(w_m * k)} {_f(h_m * k)}">',
        "<style>.cell{fill:#222}.rooted{stroke:#1f5fbf;stroke-width:1}"
        ".edge{stroke-width:1}.plan{fill:none;stroke:#d62728;stroke-width:2.5}"
        ".heuristic{fill:none;stroke:#ff9f1c;stroke-width:2;stroke-dasharray:4 3}"
        ".obstacle{fill:#f4a261;fill-opacity:.8}.start{fill:#2a9d8f}.goal{fill:#e63946}</style>",
        f'<rect width="{_f(w_m * k)}" height="{_f(h_m * k)}" fill="#fff"/>',
    ]
    # occupied cells, merged into horizontal runs
    res = grid.resolution
    occ = grid.cells >= 0.5
    out.append('<g class="grid">')
    for r in range(grid.height):
        row = occ[r]
        c = 0
        while c < grid.width:
            if not row[c]:
                c += 1
                continue
            c0 = c
            while c < grid.width and row[c]:
                c += 1
            x0, y0 = pt(c0 * res, (grid.height - r) * res)
            out.append(f'<rect class="cell" x="{x0}" y="{y0}" width="{_f((c - c0) * res * k)}" '
                       f'height="{_f(res * k)}"/>')
    out.append("</g>")

    forest = _rows(forest_csv)
    pos = {row["id"]: (row["x"], row["y"]) for row in forest}
    groups: dict[int, list[dict]] = {}
    for row in forest:
        groups.setdefault(int(row["subtree"]), []).append(row)
    for i, sid in enumerate(sorted(groups)):
        hue = (i * 137) % 360
        out.append(f'<g class="subtree subtree-{sid}" stroke="hsl({hue},60%,45%)">')
        for row in groups[sid]:
            x1, y1 = pt(row["x"], row["y"])
            if row["parent"]:
                x0, y0 = pt(*pos[row["parent"]])
                out.append(f'<line class="edge" x1="{x0}" y1="{y0}" x2="{x1}" y2="{y1}"/>')
            else:
                out.append(f'<circle cx="{x1}" cy="{y1}" r="2" fill="hsl({hue},60%,45%)"/>')
        out.append("</g>")

    rooted = _rows(rooted_csv)
    rpos = {row["id"]: (row["x"], row["y"]) for row in rooted}
    out.append('<g class="rooted-tree">')
    for row in rooted:
        if row["parent"]:
            x0, y0 = pt(*rpos[row["parent"]])
            x1, y1 = pt(row["x"], row["y"])
            out.append(f'<line class="rooted" x1="{x0}" y1="{y0}" x2="{x1}" y2="{y1}"/>')
    out.append("</g>")

    for cls, seq in (("heuristic", heuristic), ("plan", plan)):
        seq = list(seq)
        if len(seq) >= 2:
            pts = " ".join(",".join(pt(x, y)) for x, y in seq)
            out.append(f'<polyline class="{cls}" points="{pts}"/>')
    for x, y, r in crowd:
        cx, cy = pt(x, y)
        out.append(f'<circle class="obstacle" cx="{cx}" cy="{cy}" r="{_f(r * k)}"/>')
    for cls, p in (("start", start), ("goal", goal)):
        if p is not None:
            cx, cy = pt(p[0], p[1])
            out.append(f'<circle class="{cls}" cx="{cx}" cy="{cy}" r="{_f(0.5 * k)}"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def planner_snapshot(planner: Planner, scenario: Scenario, t: float, trajectory=None) -> str:
    """Render the planner's current trees, plan and the crowd's true positions at ``t``."""
    tree = planner.rooted
    plan = [(tree.x[tree.root], tree.y[tree.root])]
    if trajectory is not None:
        plan += [(tree.x[i], tree.y[i]) for i in trajectory.node_ids]
    heuristic = planner.heuristic.mus if planner.heuristic is not None else ()
    crowd = []
    for ob in scenario.crowd:
        c = crowd_position(ob, t)
        crowd.append((float(c[0]), float(c[1]), ob.radius))
    return render_snapshot(tree.export_csv(), planner.forest.export_csv(), scenario.grid,
                           crowd=crowd, plan=plan, heuristic=[tuple(m) for m in heuristic],
                           start=(scenario.start.x, scenario.start.y), goal=scenario.goal)


def snapshot_writer(scenario: Scenario, directory: Path | str):
    """Snapshot hook for :func:`run_episode` that writes ``cycle_XXXXX.svg`` files."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)

    def hook(cycle, planner, state, trajectory):
        svg = planner_snapshot(planner, scenario, state.t, trajectory)
        (out / f"cycle_{cycle:05d}.svg").write_text(svg)

    return hook
