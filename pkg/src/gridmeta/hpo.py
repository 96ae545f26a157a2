"""Hyperparameter search: seeded random sampling over per-parameter
ranges, a trailing-window objective, and median-based early pruning.

The sampler is deliberately plain random search; the pruning rule is the
interesting part and is reproduced exactly: a trial is pruned at a report
step when at least `min_completed` other trials have reported at that
step and the trial's value falls strictly below their median.
"""
from __future__ import annotations

import json
import math
import threading
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from statistics import median
from typing import Callable, Sequence

import numpy as np

from .agent import HyperParams
from .metatrain import MetaConfig, meta_train
from .metrics import MetricsRecord

OBJECTIVE_WINDOW = 10  # mean avg_reward over the final 10 meta-iterations
DEFAULT_REPORT_EVERY = 10
DEFAULT_MIN_COMPLETED = 5


@dataclass(frozen=True)
class ParamRange:
    kind: str  # "uniform" | "log" | "int"
    low: float
    high: float

    def __post_init__(self):
        if self.kind not in ("uniform", "log", "int"):
            raise ValueError(f"unknown range kind {self.kind!r}")
        if self.high < self.low:
            raise ValueError("empty range")
        if self.kind == "log" and self.low <= 0:
            raise ValueError("log range needs positive bounds")

    def sample(self, rng: np.random.Generator):
        if self.kind == "int":
            return int(rng.integers(int(self.low), int(self.high) + 1))
        if self.kind == "log":
            return float(np.exp(rng.uniform(math.log(self.low), math.log(self.high))))
        return float(rng.uniform(self.low, self.high))


SearchSpace = dict[str, ParamRange]


def default_space() -> SearchSpace:
    return {
        "beta_meta": ParamRange("log", 1e-6, 1e-3),
        "alpha_inner": ParamRange("log", 1e-4, 1e-2),
        "inner_steps": ParamRange("int", 1, 10),
        "eps_high": ParamRange("uniform", 0.01, 1.0),
        "eps_option": ParamRange("uniform", 0.01, 1.0),
        "eta": ParamRange("uniform", 0.0, 0.5),
    }


def sample_hyperparams(
    rng: np.random.Generator, space: SearchSpace, base: HyperParams | None = None
) -> HyperParams:
    """One draw per parameter in the space; unsampled fields keep the base
    values."""
    if not space:
        raise ValueError("empty search space")
    base = base if base is not None else HyperParams()
    draws = {name: rng_range.sample(rng) for name, rng_range in space.items()}
    return replace(base, **draws)


@dataclass
class TrialRecord:
    trial_id: int
    hyperparams: dict
    intermediates: dict[int, float] = field(default_factory=dict)
    final_objective: float | None = None
    status: str = "running"  # running | pruned | complete

    def best_intermediate(self) -> float:
        return max(self.intermediates.values()) if self.intermediates else -math.inf


def median_prune(
    history: Sequence[TrialRecord],
    step: int,
    current_value: float,
    min_completed: int = DEFAULT_MIN_COMPLETED,
) -> bool:
    """Prune iff enough prior trials reported at this step and the current
    value is strictly below their median."""
    values = [t.intermediates[step] for t in history if step in t.intermediates]
    if len(values) < min_completed:
        return False
    return current_value < median(values)


def trial_objective(records: Sequence[MetricsRecord]) -> float:
    if len(records) < OBJECTIVE_WINDOW:
        raise ValueError(
            f"need at least {OBJECTIVE_WINDOW} metric records, got {len(records)}"
        )
    tail = records[-OBJECTIVE_WINDOW:]
    return float(sum(r.avg_reward for r in tail) / OBJECTIVE_WINDOW)


class _TrialPruned(Exception):
    pass


def _default_runner(config: MetaConfig, report, report_every: int):
    records: list[MetricsRecord] = []

    def on_record(rec: MetricsRecord) -> None:
        records.append(rec)
        if rec.meta_iteration % report_every == 0 and len(records) >= OBJECTIVE_WINDOW:
            if report(rec.meta_iteration, trial_objective(records)):
                raise _TrialPruned()

    try:
        meta_train(config, on_record=on_record)
    except _TrialPruned:
        pass
    return records


def tune(
    n_trials: int,
    base_config: MetaConfig,
    space: SearchSpace | None = None,
    parallel_workers: int = 1,
    seed: int | None = None,
    pruning: bool = True,
    min_completed: int = DEFAULT_MIN_COMPLETED,
    report_every: int = DEFAULT_REPORT_EVERY,
    runner: Callable | None = None,
    study_path: str | Path | None = None,
) -> tuple[HyperParams, list[TrialRecord]]:
    """Run a study and return the best hyperparameters with all records.

    Each trial runs a meta-training with sampled hyperparameters and
    reports its trailing-window objective every `report_every` iterations;
    pruning compares against a snapshot of the other trials' reports at
    that step. If every trial is pruned the best intermediate value wins
    instead, with a warning. A custom `runner(config, report)` may replace
    the meta-training call (used by the tests).
    """
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    space = space if space is not None else default_space()
    rng = np.random.default_rng(base_config.seed if seed is None else seed)
    # pre-draw all trial settings so worker scheduling cannot shift the rng
    settings = [
        (sample_hyperparams(rng, space, base_config.hp), int(rng.integers(0, 2**31)))
        for _ in range(n_trials)
    ]
    run = runner if runner is not None else (
        lambda cfg, report: _default_runner(cfg, report, report_every)
    )
    study: list[TrialRecord] = [
        TrialRecord(trial_id=i, hyperparams=_hp_dict(hp))
        for i, (hp, _) in enumerate(settings)
    ]
    lock = threading.Lock()

    def run_trial(i: int) -> None:
        hp, trial_seed = settings[i]
        rec = study[i]

        def report(step: int, value: float) -> bool:
            with lock:
                rec.intermediates[step] = value
                snapshot = [t for t in study if t is not rec]
            if pruning and median_prune(snapshot, step, value, min_completed):
                rec.status = "pruned"
                return True
            return False

        config = replace(base_config, hp=hp, seed=trial_seed)
        records = run(config, report)
        if rec.status != "pruned":
            rec.final_objective = trial_objective(records)
            rec.status = "complete"

    if parallel_workers > 1:
        with ThreadPoolExecutor(max_workers=parallel_workers) as pool:
            list(pool.map(run_trial, range(n_trials)))
    else:
        for i in range(n_trials):
            run_trial(i)

    completed = [t for t in study if t.status == "complete"]
    if completed:
        best = max(completed, key=lambda t: t.final_objective)
    else:
        warnings.warn("all trials pruned; returning best intermediate objective")
        best = max(study, key=lambda t: t.best_intermediate())
    if study_path is not None:
        save_study(study_path, study)
    best_hp = replace(base_config.hp, **best.hyperparams)
    return best_hp, study


def _hp_dict(hp: HyperParams) -> dict:
    from dataclasses import asdict

    return asdict(hp)


def save_study(path, study: Sequence[TrialRecord]) -> None:
    """One JSON object per line: trial id, params, intermediates, status,
    objective."""
    lines = []
    for t in study:
        lines.append(
            json.dumps(
                {
                    "trial": t.trial_id,
                    "params": t.hyperparams,
                    "intermediates": {str(k): v for k, v in t.intermediates.items()},
                    "status": t.status,
                    "objective": t.final_objective,
                },
                sort_keys=True,
            )
        )
    Path(path).write_text("\n".join(lines) + "\n")


def load_study(path) -> list[TrialRecord]:
    study = []
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        obj = json.loads(line)
        study.append(
            TrialRecord(
                trial_id=obj["trial"],
                hyperparams=obj["params"],
                intermediates={int(k): v for k, v in obj["intermediates"].items()},
                final_objective=obj["objective"],
                status=obj["status"],
            )
        )
    return study
