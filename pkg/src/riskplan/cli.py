"""``plan`` command line: single episodes, benchmarks and the goal-tree ablation."""
from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from .harness import run_batch, snapshot_writer, write_episodes, write_report
from .planners import PlannerKind
from .sim import ConfigError, load_scenario, run_episode

EXIT_CONFIG = 2


def _overrides(pairs) -> dict[str, str]:
    out = {}
    for item in pairs or ():
        key, sep, value = item.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"--params expects key=value, got {item!r}")
        out[key.strip()] = value.strip()
    return out


def _kinds(text: str) -> list[PlannerKind]:
    try:
        return [PlannerKind.parse(k) for k in text.split(",") if k.strip()]
    except ValueError:
        raise ConfigError(f"unknown planner in {text!r}; use risk, bi or multi") from None


def _cmd_run(args) -> int:
    scenario = load_scenario(args.scenario, _overrides(args.params))
    kind = _kinds(args.planner)[0]
    hook = None
    if args.snapshot_every:
        if not args.out:
            raise ConfigError("--snapshot-every needs --out")
        hook = snapshot_writer(scenario, args.out)
    result = run_episode(scenario, kind, seed=args.seed, snapshot_every=args.snapshot_every,
                         snapshot_hook=hook)
    print(result.summary())
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "episode.json").write_text(result.to_json() + "\n")
    else:
        print(result.to_json())
    return 0


def _emit(report, out: str | None) -> None:
    text = write_report(report)
    print(text, end="")
    if out:
        path = Path(out)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
        path.with_name(path.stem + "_episodes.csv").write_text(write_episodes(report))


def _cmd_bench(args) -> int:
    scenario = load_scenario(args.scenario, _overrides(args.params))
    report = run_batch(scenario, _kinds(args.planners), args.repeats, args.seed_base, args.workers)
    _emit(report, args.out)
    return 0


def _cmd_ablate(args) -> int:
    base = load_scenario(args.scenario, _overrides(args.params))
    rows = []
    for retain in (False, True):
        sc = replace(base, params=replace(base.params, retain_goal_tree=retain))
        report = run_batch(sc, [PlannerKind.MULTI], args.repeats, args.seed_base, args.workers)
        s = report.summary(PlannerKind.MULTI.value)
        rows.append((retain, s))
    print("retain_goal_tree,success_rate,exec_mean,exec_std")
    for retain, s in rows:
        mean = "" if s.exec_mean is None else f"{s.exec_mean:.4f}"
        std = "" if s.exec_std is None else f"{s.exec_std:.4f}"
        print(f"{str(retain).lower()},{s.success_rate:.1f},{mean},{std}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="plan", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--scenario", required=True, help="scenario file")
        sp.add_argument("--params", action="append", metavar="KEY=VALUE",
                        help="planner parameter override (repeatable)")

    run = sub.add_parser("run", help="simulate one episode")
    common(run)
    run.add_argument("--planner", default="multi", help="risk, bi or multi")
    run.add_argument("--seed", type=int, default=None)
    run.add_argument("--snapshot-every", type=int, default=None, metavar="K",
                     help="write an SVG snapshot every K cycles")
    run.add_argument("--out", default=None, help="output directory")
    run.set_defaults(func=_cmd_run)

    bench = sub.add_parser("bench", help="batch statistics per planner")
    common(bench)
    bench.add_argument("--planners", default="risk,bi,multi")
    bench.add_argument("--repeats", type=int, default=20)
    bench.add_argument("--seed-base", type=int, default=0)
    bench.add_argument("--workers", type=int, default=1)
    bench.add_argument("--out", default=None, help="CSV report path")
    bench.set_defaults(func=_cmd_bench)

    ab = sub.add_parser("ablate-goal-tree", help="multi with the goal tree retained vs refreshed")
    common(ab)
    ab.add_argument("--repeats", type=int, default=20)
    ab.add_argument("--seed-base", type=int, default=0)
    ab.add_argument("--workers", type=int, default=1)
    ab.set_defaults(func=_cmd_ablate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
