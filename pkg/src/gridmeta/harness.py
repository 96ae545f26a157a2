"""Scenario runners, metrics persistence, and plot emission."""
from __future__ import annotations

import dataclasses
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from . import metrics as metrics_mod
from .config import RunConfig, freeze_config
from .metatrain import meta_train
from .metrics import MetricsRecord, read_metrics_csv

ABLATION_VARIANTS = ("full", "no_meta", "no_intrinsic")


def _prepare_out_dir(run: RunConfig) -> Path:
    out = Path(run.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    freeze_config(run, out)
    return out


def run_scenario(run: RunConfig, suffix: str = "") -> Path:
    """Execute one training run and persist metrics, timing, task seeds,
    and (optionally) plots. Returns the metrics CSV path."""
    out = _prepare_out_dir(run)
    task_log: list[list[int]] = []
    records = meta_train(
        run.meta,
        workers=run.workers,
        checkpoint_dir=out if run.meta.checkpoint_every > 0 else None,
        task_log=task_log,
    )
    name = f"metrics{suffix}.csv"
    metrics_path = out / name
    metrics_mod.write_metrics_csv(metrics_path, records)
    metrics_mod.write_timing_csv(out / f"timing{suffix}.csv", records)
    (out / f"task_seeds{suffix}.log").write_text(
        "\n".join(" ".join(str(s) for s in seeds) for seeds in task_log) + "\n"
    )
    if run.plots:
        emit_plots(metrics_path, out)
    return metrics_path


def run_fixed(run: RunConfig) -> Path:
    """Constant-complexity baseline run (preset pins the 6x6 / 3-trap
    level)."""
    return run_scenario(run)


def run_gradual(run: RunConfig) -> Path:
    """Curriculum run over the level ladder."""
    return run_scenario(run)


def run_ablation_suite(run: RunConfig) -> Path:
    """Run full / no-meta / no-intrinsic variants on identical seeds and
    emit a side-by-side report. Returns the report CSV path."""
    out = _prepare_out_dir(run)
    per_variant: dict[str, list[MetricsRecord]] = {}
    for variant in ABLATION_VARIANTS:
        flags = dataclasses.replace(
            run.meta.flags,
            meta_enabled=(variant != "no_meta"),
            intrinsic_enabled=(variant != "no_intrinsic"),
        )
        meta = dataclasses.replace(run.meta, flags=flags)
        variant_run = dataclasses.replace(
            run, meta=meta, out_dir=str(out / variant), plots=False
        )
        metrics_path = run_scenario(variant_run)
        per_variant[variant] = read_metrics_csv(metrics_path)

    report = out / "ablation_report.csv"
    columns = ["meta_iteration"]
    for variant in ABLATION_VARIANTS:
        columns += [f"{variant}_meta_loss", f"{variant}_avg_reward",
                    f"{variant}_success_rate", f"{variant}_mean_intrinsic"]
    lines = [",".join(columns)]
    n = len(per_variant["full"])
    for i in range(n):
        row = [str(per_variant["full"][i].meta_iteration)]
        for variant in ABLATION_VARIANTS:
            rec = per_variant[variant][i]
            row += [repr(rec.meta_loss), repr(rec.avg_reward),
                    repr(rec.success_rate), repr(rec.mean_intrinsic)]
        lines.append(",".join(row))
    report.write_text("\n".join(lines) + "\n")

    summary = {
        variant: {
            "final_50_success": _tail_mean(
                [r.success_rate for r in recs], 50),
            "final_50_avg_reward": _tail_mean(
                [r.avg_reward for r in recs], 50),
        }
        for variant, recs in per_variant.items()
    }
    (out / "ablation_summary.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n"
    )
    if run.plots:
        _plot_ablation(per_variant, out)
    return report


def _tail_mean(values, k):
    tail = values[-k:] if len(values) >= k else values
    return sum(tail) / len(tail)


def _plot_ablation(per_variant, out: Path) -> None:
    fig, ax = plt.subplots(figsize=(8, 4.5))
    for variant, recs in per_variant.items():
        ax.plot([r.meta_iteration for r in recs],
                [r.success_rate for r in recs], label=variant)
    ax.set_xlabel("meta-iteration")
    ax.set_ylabel("success rate")
    ax.set_ylim(0.0, 1.0)
    ax.legend()
    fig.tight_layout()
    fig.savefig(out / "ablation_success_rate.svg")
    plt.close(fig)


def emit_plots(metrics_path, out_dir=None) -> list[Path]:
    """One line chart per metric plus a combined three-series chart.
    Static SVG output."""
    records = read_metrics_csv(metrics_path)
    if not records:
        raise metrics_mod.MetricsFormatError(1, "metrics file has no data rows")
    out = Path(out_dir) if out_dir is not None else Path(metrics_path).parent
    out.mkdir(parents=True, exist_ok=True)
    iters = [r.meta_iteration for r in records]
    produced = []
    series = {
        "meta_loss": [r.meta_loss for r in records],
        "avg_reward": [r.avg_reward for r in records],
        "success_rate": [r.success_rate for r in records],
        "mean_intrinsic": [r.mean_intrinsic for r in records],
        "level": [r.level for r in records],
    }
    for name, values in series.items():
        fig, ax = plt.subplots(figsize=(8, 4.5))
        ax.plot(iters, values)
        ax.set_xlabel("meta-iteration")
        ax.set_ylabel(name.replace("_", " "))
        if name == "success_rate":
            ax.set_ylim(0.0, 1.0)
        fig.tight_layout()
        path = out / f"{name}.svg"
        fig.savefig(path)
        plt.close(fig)
        produced.append(path)

    fig, ax = plt.subplots(figsize=(9, 5))
    ax.plot(iters, series["meta_loss"], color="tab:red", label="meta-loss")
    ax.plot(iters, series["avg_reward"], color="tab:blue", label="avg reward")
    ax2 = ax.twinx()
    ax2.plot(iters, series["success_rate"], color="tab:green",
             label="success rate")
    ax2.set_ylim(0.0, 1.0)
    ax.set_xlabel("meta-iteration")
    ax.set_ylabel("meta-loss / avg reward")
    ax2.set_ylabel("success rate")
    h1, l1 = ax.get_legend_handles_labels()
    h2, l2 = ax2.get_legend_handles_labels()
    ax.legend(h1 + h2, l1 + l2, loc="upper right")
    fig.tight_layout()
    path = out / "combined.svg"
    fig.savefig(path)
    plt.close(fig)
    produced.append(path)
    return produced
