"""Command-line interface.

Subcommands: train-fixed, train-gradual, ablate, tune, eval, plot.
Exit codes: 0 success, 2 configuration error, 3 runtime failure,
4 I/O failure. GRIDMETA_OUT_ROOT sets the default output root
(default ./runs).
"""
from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3
EXIT_IO = 4


def _out_root() -> Path:
    return Path(os.environ.get("GRIDMETA_OUT_ROOT", "runs"))


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", metavar="PATH", help="JSON run config file")
    parser.add_argument("--seed", type=int, help="run seed")
    parser.add_argument("--out", metavar="DIR", help="output directory")
    parser.add_argument("--no-meta", action="store_true",
                        help="disable the outer meta-update (plain HRL)")
    parser.add_argument("--no-intrinsic", action="store_true",
                        help="disable the intrinsic exploration bonus")
    parser.add_argument("--no-curriculum", action="store_true",
                        help="pin the curriculum at its start level")
    parser.add_argument("--workers", type=int, default=1,
                        help="parallel workers for per-task adaptation / trials")
    parser.add_argument("--iterations", type=int, dest="meta_iterations",
                        help="override the meta-iteration count")
    parser.add_argument("--no-plots", action="store_true",
                        help="skip plot emission")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gridmeta",
        description="Hierarchical meta-RL laboratory over trap gridworlds.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("train-fixed", "train on the constant-complexity scenario"),
        ("train-gradual", "train with the progressive curriculum"),
        ("ablate", "run full / no-meta / no-intrinsic variants side by side"),
    ):
        p = sub.add_parser(name, help=help_text)
        _add_common(p)

    p = sub.add_parser("tune", help="hyperparameter study with median pruning")
    _add_common(p)
    p.add_argument("--trials", type=int, default=50)
    p.add_argument("--no-pruning", action="store_true")

    p = sub.add_parser("eval", help="evaluate a checkpoint on sampled tasks")
    p.add_argument("checkpoint", help="training checkpoint (.npz)")
    p.add_argument("--level", type=int, default=3)
    p.add_argument("--tasks", type=int, default=20)
    p.add_argument("--episodes", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("plot", help="render charts from a metrics CSV")
    p.add_argument("metrics", help="metrics CSV path")
    p.add_argument("--out", metavar="DIR", help="output directory for images")
    return parser


def _resolve_run(args, scenario: str):
    from .config import load_config_file, resolve_config

    file_values = load_config_file(args.config) if args.config else {}
    overrides = {
        "seed": args.seed,
        "out_dir": args.out,
        "workers": args.workers,
        "meta_iterations": args.meta_iterations,
    }
    if args.no_meta:
        overrides["meta_enabled"] = False
    if args.no_intrinsic:
        overrides["intrinsic_enabled"] = False
    if args.no_curriculum:
        overrides["curriculum_enabled"] = False
    if args.no_plots:
        overrides["plots"] = False
    run = resolve_config(scenario, file_values, overrides)
    if not run.out_dir:
        label = f"{scenario}-seed{run.meta.seed}"
        run = __import__("dataclasses").replace(
            run, out_dir=str(_out_root() / label))
    return run


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    from .config import ConfigError

    try:
        return _dispatch(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except Exception as exc:  # runtime failures get their own exit code
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def _dispatch(args) -> int:
    from . import harness
    from .metrics import MetricsFormatError

    if args.command == "train-fixed":
        run = _resolve_run(args, "fixed")
        path = harness.run_fixed(run)
        print(f"metrics written to {path}")
        return EXIT_OK

    if args.command == "train-gradual":
        run = _resolve_run(args, "gradual")
        path = harness.run_gradual(run)
        print(f"metrics written to {path}")
        return EXIT_OK

    if args.command == "ablate":
        run = _resolve_run(args, "fixed")
        path = harness.run_ablation_suite(run)
        print(f"ablation report written to {path}")
        return EXIT_OK

    if args.command == "tune":
        from .config import freeze_config
        from .hpo import tune

        run = _resolve_run(args, "custom")
        out = Path(run.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        freeze_config(run, out)
        best, study = tune(
            n_trials=args.trials,
            base_config=run.meta,
            parallel_workers=run.workers,
            pruning=not args.no_pruning,
            study_path=out / "study.jsonl",
        )
        (out / "best_hyperparams.json").write_text(
            __import__("json").dumps(
                __import__("dataclasses").asdict(best), indent=2, sort_keys=True
            ) + "\n"
        )
        completed = sum(1 for t in study if t.status == "complete")
        print(f"{len(study)} trials ({completed} complete); study at "
              f"{out / 'study.jsonl'}")
        return EXIT_OK

    if args.command == "eval":
        from .curriculum import level_spec
        from .gridworld import generate_task
        from .metatrain import encoder_for_schedule, load_training_checkpoint
        from .rollout import StateEncoder, evaluate

        state = load_training_checkpoint(args.checkpoint)
        spec = level_spec(args.level)
        rng = np.random.default_rng(args.seed)
        tasks = [generate_task(spec, rng) for _ in range(args.tasks)]
        width = state.theta.input_width
        side = int(round(width**0.5))
        encoder = StateEncoder(grid_width=side, grid_height=side)
        success, mean_return = evaluate(
            state.theta, tasks, args.episodes, rng, encoder=encoder)
        print(f"success_rate={success:.4f} mean_ext_return={mean_return:.4f}")
        return EXIT_OK

    if args.command == "plot":
        try:
            produced = harness.emit_plots(
                args.metrics, args.out if args.out else None)
        except MetricsFormatError as exc:
            print(f"malformed metrics file: {exc}", file=sys.stderr)
            return EXIT_RUNTIME
        print("\n".join(str(p) for p in produced))
        return EXIT_OK

    raise AssertionError(f"unhandled command {args.command}")


if __name__ == "__main__":
    sys.exit(main())
