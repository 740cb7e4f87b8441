"""Command-line entry point: ``temple run|sweep|demo-savings|inspect-templates``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace

from . import kernels
from .environments import LandformMaze, ground_truth_templates, load_maze
from .harness import (
    LEARNERS,
    PRESETS,
    SWEEPABLE,
    ConfigError,
    RunConfig,
    estimate_savings_demo,
    output_dir,
    run_experiment,
    sweep,
    write_result,
)
from .templates import TemplateLibrary

# flag dest -> RunConfig field
FLAG_FIELDS = {
    "gap": "gap", "m": "regular_threshold", "ms": "small_threshold", "gamma": "discount",
    "t1": "phase1_tasks", "model_gap": "model_gap", "eta": "eta",
    "tie_tolerance": "tie_tolerance", "episodes": "episodes", "steps": "steps",
    "num_tasks": "num_tasks", "seeds": "seeds", "output": "output", "workers": "workers",
    "learning_rate": "learning_rate", "exploration": "exploration",
}
TASK_FLAGS = ("kind", "width", "height", "block")


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with RunConfig fields")
    p.add_argument("--preset", choices=sorted(PRESETS), help="episode/task/seed preset")
    p.add_argument("--learner", default=None,
                   help=f"comma-separated subset of {','.join(LEARNERS)}")
    g = p.add_argument_group("task distribution")
    g.add_argument("--kind", choices=("landform", "two-goal", "gaussian-mixture", "varying-size"))
    g.add_argument("--width", type=int)
    g.add_argument("--height", type=int)
    g.add_argument("--sizes", type=int, nargs="+")
    g.add_argument("--block", type=int, help="tasks per size in the varying-size schedule")
    g.add_argument("--actions", type=int, choices=(4, 8))
    h = p.add_argument_group("hyperparameters")
    h.add_argument("--gap", type=float, help="template gap (default 0.15, 0.24 for fmtemple)")
    h.add_argument("--m", type=int, help="known threshold")
    h.add_argument("--ms", type=int, help="small threshold for identification")
    h.add_argument("--gamma", type=float)
    h.add_argument("--t1", type=int, help="phase-1 tasks for fmtemple")
    h.add_argument("--model-gap", type=float)
    h.add_argument("--eta", type=int)
    h.add_argument("--tie-tolerance", type=float)
    h.add_argument("--learning-rate", type=float)
    h.add_argument("--exploration", type=float)
    h.add_argument("--no-templates", action="store_true", help="disable identification")
    h.add_argument("--literal-identification", action="store_true",
                   help="skip identification for pairs already known")
    r = p.add_argument_group("run")
    r.add_argument("--episodes", type=int)
    r.add_argument("--steps", type=int)
    r.add_argument("--num-tasks", type=int)
    r.add_argument("--seeds", type=int, nargs="+")
    r.add_argument("--output", help="output directory (overridden by $TEMPLE_OUTPUT_DIR)")
    r.add_argument("--workers", type=int)
    r.add_argument("--timing", action="store_true", help="record wall-clock per task")


def build_configs(args) -> list[RunConfig]:
    base: dict = {}
    if args.config:
        with open(args.config) as fh:
            base.update(json.load(fh))
    if args.preset:
        base.update(PRESETS[args.preset])
    for dest, name in FLAG_FIELDS.items():
        value = getattr(args, dest, None)
        if value is not None:
            base[name] = value
    tasks = dict(base.get("tasks", {"kind": "landform"}))
    for key in TASK_FLAGS:
        if getattr(args, key, None) is not None:
            tasks[key] = getattr(args, key)
    if args.sizes:
        tasks["sizes"] = args.sizes
    if args.actions:
        tasks["num_actions"] = args.actions
    base["tasks"] = tasks
    if args.no_templates:
        base["templates"] = False
    if args.literal_identification:
        base["identify_known"] = False
    if args.timing:
        base["timing"] = True
    config = RunConfig.from_dict(base)
    learners = args.learner.split(",") if args.learner else [config.learner]
    return [replace(config, learner=name.strip()).validate() for name in learners]


def _summary(result) -> str:
    curve = result.mean_curve()
    tail = curve[len(curve) // 2:]
    return (f"{result.config.learner:18s} tasks={len(curve):3d} "
            f"mean reward={curve.mean():10.2f} second-half={tail.mean():10.2f}")


def cmd_run(args) -> int:
    for config in build_configs(args):
        result = run_experiment(config)
        print(_summary(result))
    out = output_dir(config)
    if out is not None:
        print(f"csv written to {out}")
    return 0


def cmd_sweep(args) -> int:
    for config in build_configs(args):
        results = sweep(config, args.parameter, args.values)
        for value, res in results.items():
            print(f"{args.parameter}={value:<6g} {_summary(res)}")
    return 0


def cmd_demo(args) -> int:
    report = estimate_savings_demo(
        size=args.size, slip=args.slip, accuracy=args.accuracy,
        trials=args.trials, seed=args.seed,
    )
    print("\n".join(report.lines()))
    return 0


def cmd_inspect(args) -> int:
    if args.library:
        lib = TemplateLibrary.load(args.library)
        print(f"{len(lib)} templates, {lib.total_counts()} pooled visits")
        for i, (g, rec) in enumerate(zip(lib.templates, lib.records)):
            print(f"{i:4d} n={rec.total:<8d} {g}")
        return 0
    if args.maze:
        maze = load_maze(args.maze)
    else:
        w, h, slip = args.uniform
        maze = LandformMaze.uniform(int(w), int(h), float(slip), goal=None, step_cost=0.0)
    templates = ground_truth_templates(maze)
    print(f"{len(templates)} distinct templates")
    for g in templates:
        print(f"  {g}")
    return 0


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="temple", description="Template learning experiments.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run learners over seeded task sequences")
    _add_run_flags(run)
    run.set_defaults(func=cmd_run)

    sw = sub.add_parser("sweep", help="repeat a run over parameter values")
    _add_run_flags(sw)
    sw.add_argument("--parameter", choices=SWEEPABLE, default="gap")
    sw.add_argument("--values", type=float, nargs="+", required=True)
    sw.set_defaults(func=cmd_sweep)

    demo = sub.add_parser("demo-savings", help="per-pair vs pooled sample requirements")
    demo.add_argument("--size", type=int, default=5)
    demo.add_argument("--slip", type=float, default=0.4)
    demo.add_argument("--accuracy", type=float, default=0.01)
    demo.add_argument("--trials", type=int, default=200)
    demo.add_argument("--seed", type=int, default=0)
    demo.set_defaults(func=cmd_demo)

    ins = sub.add_parser("inspect-templates", help="list a maze's exact templates or a saved library")
    src = ins.add_mutually_exclusive_group(required=True)
    src.add_argument("--maze", help="maze text file")
    src.add_argument("--uniform", nargs=3, metavar=("W", "H", "SLIP"))
    src.add_argument("--library", help="saved template library")
    ins.set_defaults(func=cmd_inspect)
    return p


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    if args.verbose:
        logging.getLogger(__name__).info("kernel backend: %s", kernels.BACKEND)
    try:
        return args.func(args)
    except ConfigError as exc:
        for name, msg in exc.errors.items():
            print(f"config error: {name}: {msg}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
