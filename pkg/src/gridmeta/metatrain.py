"""Bilevel training loop: per-task inner adaptation, first-order
meta-gradients, Adam outer updates, and the curriculum gate.

The meta-gradient is first-order: each task's validation loss is
differentiated at the adapted parameters and that gradient is applied to
the meta-parameters, ignoring second-order terms through the inner SGD
steps. Ablation flags turn off the outer loop (plain HRL with parameters
carried forward), the intrinsic bonus (eta forced to 0), or curriculum
advancement (level pinned).
"""
from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import nets
from .agent import AgentParams, HyperParams, clone_agent, init_agent
from .curriculum import CurriculumSchedule, default_schedule, should_advance
from .exploration import VisitCounts
from .gridworld import GridTask, RewardSpec, generate_task
from .losses import (
    AgentGradients,
    agent_sgd_step,
    sync_targets,
    total_inner_loss_and_grads,
    zero_agent_gradients,
)
from .metrics import MetricsRecord
from .rollout import StateEncoder, evaluate, run_episode

CHECKPOINT_VERSION = 1


class TrainingError(RuntimeError):
    """Adaptation or meta-update failure, with iteration context."""


@dataclass(frozen=True)
class AblationFlags:
    meta_enabled: bool = True
    intrinsic_enabled: bool = True
    curriculum_enabled: bool = True


@dataclass(frozen=True)
class MetaConfig:
    hp: HyperParams = field(default_factory=HyperParams)
    meta_iterations: int = 500
    schedule: CurriculumSchedule = field(default_factory=default_schedule)
    flags: AblationFlags = field(default_factory=AblationFlags)
    seed: int = 0
    max_steps: int = 100
    reward_spec: RewardSpec = field(default_factory=RewardSpec)
    validation_episodes: int = 2  # rollouts backing each task's meta-loss
    eval_episodes_per_task: int = 2  # greedy episodes per adapted task
    checkpoint_every: int = 0  # 0 disables periodic checkpoints

    def __post_init__(self):
        if self.meta_iterations < 1:
            raise ValueError("meta_iterations must be >= 1")
        if self.validation_episodes < 1 or self.eval_episodes_per_task < 1:
            raise ValueError("episode counts must be >= 1")

    def effective_hp(self) -> HyperParams:
        if self.flags.intrinsic_enabled:
            return self.hp
        return replace(self.hp, eta=0.0)


def encoder_for_schedule(schedule: CurriculumSchedule) -> StateEncoder:
    w = max(s.grid_width for s in schedule.levels)
    h = max(s.grid_height for s in schedule.levels)
    return StateEncoder(grid_width=w, grid_height=h)


@dataclass
class AdaptedParams:
    params: AgentParams
    task_seed: int
    inner_losses: list[float]
    counts: VisitCounts
    mean_intrinsic: float


def inner_adapt(
    theta: AgentParams,
    task: GridTask,
    hp: HyperParams,
    rng: np.random.Generator,
    encoder: StateEncoder | None = None,
) -> AdaptedParams:
    """K inner SGD steps on a clone of theta (targets synced once from the
    clone at the start)."""
    params = clone_agent(theta)
    targets = sync_targets(params)
    counts = VisitCounts()
    inner_losses: list[float] = []
    intrinsic_sum = 0.0
    n_transitions = 0
    for k in range(hp.inner_steps):
        trajs = [
            run_episode(params, task, hp, counts, rng, encoder=encoder)
            for _ in range(hp.episodes_per_inner_step)
        ]
        bundle, grads = total_inner_loss_and_grads(params, trajs, targets, hp.gamma)
        if not np.isfinite(bundle.total) or not grads.is_finite():
            raise TrainingError(
                f"non-finite inner loss at step {k} (task seed {task.seed})"
            )
        params = agent_sgd_step(params, grads, hp.alpha_inner)
        inner_losses.append(bundle.total)
        for traj in trajs:
            intrinsic_sum += sum(t.r_int for t in traj.transitions)
            n_transitions += traj.length
    return AdaptedParams(
        params=params,
        task_seed=task.seed,
        inner_losses=inner_losses,
        counts=counts,
        mean_intrinsic=intrinsic_sum / max(n_transitions, 1),
    )


def _copy_counts(counts: VisitCounts) -> VisitCounts:
    out = VisitCounts()
    out._counts = dict(counts._counts)
    return out


def _validation_loss(
    adapted: AdaptedParams,
    task: GridTask,
    hp: HyperParams,
    rng: np.random.Generator,
    encoder: StateEncoder | None,
    n_episodes: int,
    with_grads: bool,
):
    # counts are copied so repeated evaluation with the same seed is pure
    counts = _copy_counts(adapted.counts)
    params = adapted.params
    targets = sync_targets(params)
    trajs = [
        run_episode(params, task, hp, counts, rng, encoder=encoder)
        for _ in range(n_episodes)
    ]
    bundle, grads = total_inner_loss_and_grads(
        params, trajs, targets, hp.gamma, with_grads=with_grads
    )
    if not np.isfinite(bundle.total) or (grads is not None and not grads.is_finite()):
        raise TrainingError(f"non-finite meta-loss (task seed {task.seed})")
    return bundle.total, grads


def meta_loss(
    adapted: AdaptedParams,
    task: GridTask,
    hp: HyperParams,
    rng: np.random.Generator,
    encoder: StateEncoder | None = None,
    n_episodes: int = 2,
) -> float:
    """Validation loss of the adapted parameters on fresh rollouts."""
    loss, _ = _validation_loss(adapted, task, hp, rng, encoder, n_episodes, False)
    return loss


def meta_loss_and_grad(
    adapted: AdaptedParams,
    task: GridTask,
    hp: HyperParams,
    rng: np.random.Generator,
    encoder: StateEncoder | None = None,
    n_episodes: int = 2,
) -> tuple[float, AgentGradients]:
    """Validation loss plus its first-order meta-gradient (taken at the
    adapted parameters)."""
    loss, grads = _validation_loss(adapted, task, hp, rng, encoder, n_episodes, True)
    return loss, grads


@dataclass
class AgentAdamState:
    high: nets.AdamState
    options: list[nets.AdamState]
    termination: nets.AdamState

    @property
    def t(self) -> int:
        return self.high.t


def init_agent_adam(params: AgentParams, **kwargs) -> AgentAdamState:
    return AgentAdamState(
        high=nets.adam_init(params.high, **kwargs),
        options=[nets.adam_init(o, **kwargs) for o in params.options],
        termination=nets.adam_init(params.termination, **kwargs),
    )


def meta_update(
    theta: AgentParams,
    task_gradients: Sequence[AgentGradients],
    adam: AgentAdamState,
    beta_meta: float,
) -> tuple[AgentParams, AgentAdamState]:
    """Sum per-task meta-gradients (in task order) and apply one Adam step."""
    if not task_gradients:
        raise ValueError("need at least one task gradient")
    total = zero_agent_gradients(theta)
    for g in task_gradients:
        total.add(g)
    if not total.is_finite():
        raise TrainingError("non-finite summed meta-gradient")
    high, adam_high = nets.adam_step(theta.high, total.high, adam.high, beta_meta)
    options, adam_options = [], []
    for o, g, st in zip(theta.options, total.options, adam.options):
        o2, st2 = nets.adam_step(o, g, st, beta_meta)
        options.append(o2)
        adam_options.append(st2)
    term, adam_term = nets.adam_step(
        theta.termination, total.termination, adam.termination, beta_meta
    )
    return (
        AgentParams(high=high, options=options, termination=term),
        AgentAdamState(high=adam_high, options=adam_options, termination=adam_term),
    )


@dataclass
class TrainState:
    """Everything needed to resume a run mid-way."""

    theta: AgentParams
    adam: AgentAdamState
    iteration: int  # last completed meta-iteration
    level_position: int  # 0-based index into the schedule
    level_success_history: list[float]
    outer_updates: int
    rng_state: dict


def _spawn(rng: np.random.Generator) -> np.random.Generator:
    return np.random.default_rng(int(rng.integers(0, 2**63)))


def _adapt_one(args):
    theta, task, hp, adapt_rng, val_rng, eval_rng, encoder, val_eps, eval_eps, with_grad = args
    adapted = inner_adapt(theta, task, hp, adapt_rng, encoder=encoder)
    if with_grad:
        loss, grads = meta_loss_and_grad(
            adapted, task, hp, val_rng, encoder=encoder, n_episodes=val_eps
        )
    else:
        loss = meta_loss(adapted, task, hp, val_rng, encoder=encoder,
                         n_episodes=val_eps)
        grads = None
    success, mean_return = evaluate(
        adapted.params, [task], eval_eps, eval_rng, encoder=encoder
    )
    return adapted, loss, grads, success, mean_return


def meta_train(
    config: MetaConfig,
    workers: int = 1,
    on_record: Callable[[MetricsRecord], None] | None = None,
    checkpoint_dir: str | Path | None = None,
    resume_from: str | Path | None = None,
    task_log: list | None = None,
) -> list[MetricsRecord]:
    """Run the full meta-training loop; returns one record per iteration.

    With workers > 1 the per-task adaptations of a meta-iteration run on a
    thread pool; per-task rngs are pre-split and the gradient reduction is
    ordered by task index, so results match single-worker runs.
    """
    hp = config.effective_hp()
    encoder = encoder_for_schedule(config.schedule)
    rng = np.random.default_rng(config.seed)
    if resume_from is not None:
        state = load_training_checkpoint(resume_from)
        rng.bit_generator.state = state.rng_state
    else:
        theta = init_agent(encoder.n_inputs, rng)
        state = TrainState(
            theta=theta,
            adam=init_agent_adam(theta),
            iteration=0,
            level_position=0,
            level_success_history=[],
            outer_updates=0,
            rng_state={},
        )

    records: list[MetricsRecord] = []
    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        for it in range(state.iteration + 1, config.meta_iterations + 1):
            t0 = time.perf_counter()
            level = config.schedule.spec_at(state.level_position)
            tasks = [
                generate_task(level, rng, config.max_steps, config.reward_spec)
                for _ in range(hp.tasks_per_meta_batch)
            ]
            if task_log is not None:
                task_log.append([t.seed for t in tasks])

            if config.flags.meta_enabled:
                job_args = [
                    (state.theta, task, hp, _spawn(rng), _spawn(rng), _spawn(rng),
                     encoder, config.validation_episodes,
                     config.eval_episodes_per_task, True)
                    for task in tasks
                ]
                try:
                    if pool is not None:
                        results = list(pool.map(_adapt_one, job_args))
                    else:
                        results = [_adapt_one(a) for a in job_args]
                    grads = [r[2] for r in results]
                    state.theta, state.adam = meta_update(
                        state.theta, grads, state.adam, hp.beta_meta
                    )
                except TrainingError as exc:
                    raise TrainingError(f"meta-iteration {it}: {exc}") from exc
                state.outer_updates += 1
            else:
                # plain HRL: adapt sequentially, carry parameters forward
                results = []
                for task in tasks:
                    args = (state.theta, task, hp, _spawn(rng), _spawn(rng),
                            _spawn(rng), encoder, config.validation_episodes,
                            config.eval_episodes_per_task, False)
                    try:
                        res = _adapt_one(args)
                    except TrainingError as exc:
                        raise TrainingError(f"meta-iteration {it}: {exc}") from exc
                    results.append(res)
                    state.theta = res[0].params

            success_rate = float(np.mean([r[3] for r in results]))
            record = MetricsRecord(
                meta_iteration=it,
                meta_loss=float(np.mean([r[1] for r in results])),
                avg_reward=float(np.mean([r[4] for r in results])),
                success_rate=success_rate,
                level=level.level,
                mean_intrinsic=float(np.mean([r[0].mean_intrinsic for r in results])),
                wall_time=time.perf_counter() - t0,
            )
            records.append(record)
            if on_record is not None:
                on_record(record)

            state.level_success_history.append(success_rate)
            if (
                config.flags.curriculum_enabled
                and state.level_position < config.schedule.n_levels - 1
                and should_advance(state.level_success_history, config.schedule.gate)
            ):
                state.level_position += 1
                state.level_success_history = []

            state.iteration = it
            if (
                checkpoint_dir is not None
                and config.checkpoint_every > 0
                and it % config.checkpoint_every == 0
            ):
                state.rng_state = rng.bit_generator.state
                save_training_checkpoint(
                    Path(checkpoint_dir) / f"checkpoint_{it:06d}.npz", state
                )
    finally:
        if pool is not None:
            pool.shutdown()
    return records


def _agent_arrays(prefix: str, params: AgentParams, arrays: dict) -> None:
    named = {"high": params.high, "termination": params.termination}
    for i, o in enumerate(params.options):
        named[f"option{i}"] = o
    for name, net in named.items():
        for i, (w, b) in enumerate(zip(net.weights, net.biases)):
            arrays[f"{prefix}/{name}/w{i}"] = w
            arrays[f"{prefix}/{name}/b{i}"] = b


def save_training_checkpoint(path, state: TrainState) -> None:
    """Single-file resume point: parameters, optimizer moments, loop
    counters, and the generator state."""
    arrays: dict[str, np.ndarray] = {}
    _agent_arrays("theta", state.theta, arrays)
    named_adam = {"high": state.adam.high, "termination": state.adam.termination}
    for i, st in enumerate(state.adam.options):
        named_adam[f"option{i}"] = st
    for name, st in named_adam.items():
        for i in range(len(st.m_weights)):
            arrays[f"adam/{name}/mw{i}"] = st.m_weights[i]
            arrays[f"adam/{name}/mb{i}"] = st.m_biases[i]
            arrays[f"adam/{name}/vw{i}"] = st.v_weights[i]
            arrays[f"adam/{name}/vb{i}"] = st.v_biases[i]
    theta = state.theta
    meta = {
        "version": CHECKPOINT_VERSION,
        "iteration": state.iteration,
        "level_position": state.level_position,
        "level_success_history": state.level_success_history,
        "outer_updates": state.outer_updates,
        "adam_t": state.adam.t,
        "adam_betas": [state.adam.high.beta1, state.adam.high.beta2,
                       state.adam.high.eps],
        "rng_state": state.rng_state,
        "dims": {
            "high": list(theta.high.layer_dims),
            "option": list(theta.options[0].layer_dims),
            "termination": list(theta.termination.layer_dims),
        },
    }
    arrays["__meta__"] = np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)
    np.savez(path, **arrays)


def _read_net(data, prefix: str, dims, activation: str) -> nets.Mlp:
    n = len(dims) - 1
    return nets.Mlp(
        tuple(dims),
        [data[f"{prefix}/w{i}"].copy() for i in range(n)],
        [data[f"{prefix}/b{i}"].copy() for i in range(n)],
        activation,
    )


def load_training_checkpoint(path) -> TrainState:
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(bytes(data["__meta__"]).decode())
        if meta.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta.get('version')}")
        dims = meta["dims"]
        theta = AgentParams(
            high=_read_net(data, "theta/high", dims["high"], "linear"),
            options=[
                _read_net(data, f"theta/option{i}", dims["option"], "linear")
                for i in range(5)
            ],
            termination=_read_net(data, "theta/termination", dims["termination"],
                                  "sigmoid"),
        )
        b1, b2, eps = meta["adam_betas"]
        t = meta["adam_t"]

        def read_adam(name: str, net: nets.Mlp) -> nets.AdamState:
            n = net.n_layers
            return nets.AdamState(
                m_weights=[data[f"adam/{name}/mw{i}"].copy() for i in range(n)],
                m_biases=[data[f"adam/{name}/mb{i}"].copy() for i in range(n)],
                v_weights=[data[f"adam/{name}/vw{i}"].copy() for i in range(n)],
                v_biases=[data[f"adam/{name}/vb{i}"].copy() for i in range(n)],
                t=t, beta1=b1, beta2=b2, eps=eps,
            )

        adam = AgentAdamState(
            high=read_adam("high", theta.high),
            options=[read_adam(f"option{i}", theta.options[i]) for i in range(5)],
            termination=read_adam("termination", theta.termination),
        )
    rng_state = meta["rng_state"]
    # JSON round trip turns the state ints into plain ints; numpy accepts that
    return TrainState(
        theta=theta,
        adam=adam,
        iteration=meta["iteration"],
        level_position=meta["level_position"],
        level_success_history=list(meta["level_success_history"]),
        outer_updates=meta["outer_updates"],
        rng_state=rng_state,
    )
