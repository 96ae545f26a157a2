"""Hierarchical episode execution.

One episode: the high-level policy picks an option at the first step and
after every sampled termination; the active option's policy picks
primitive actions; after each step the termination network is sampled at
the next state. Goal or timeout ends both the option and the episode.

The visit count of the current state is updated before the intrinsic
bonus is computed, so each transition carries the bonus of its source
state at its post-increment count.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import agent as agent_mod
from . import exploration, gridworld
from .agent import AgentParams, HyperParams
from .exploration import VisitCounts
from .gridworld import GridTask


@dataclass(frozen=True)
class StateEncoder:
    """Maps grid positions to one-hot indices of a fixed reference grid.

    Tasks smaller than the reference grid embed at the top-left corner,
    which gives every curriculum level a consistent input width (that of
    the largest grid in the schedule).
    """

    grid_width: int
    grid_height: int

    @property
    def n_inputs(self) -> int:
        return self.grid_width * self.grid_height

    def index(self, position: tuple[int, int]) -> int:
        return position[1] * self.grid_width + position[0]

    def encode_index(self, state_index: int) -> np.ndarray:
        vec = np.zeros(self.n_inputs)
        vec[state_index] = 1.0
        return vec

    def fits(self, task: GridTask) -> bool:
        return task.width <= self.grid_width and task.height <= self.grid_height


def encoder_for_task(task: GridTask) -> StateEncoder:
    return StateEncoder(grid_width=task.width, grid_height=task.height)


@dataclass(frozen=True)
class Transition:
    state_index: int
    option: int
    action: int
    r_ext: float
    r_int: float
    r_total: float
    next_state_index: int
    done: bool
    option_terminated: bool
    succeeded: bool


@dataclass(frozen=True)
class Trajectory:
    transitions: tuple[Transition, ...]
    cumulative_ext: float
    cumulative_total: float
    success: bool
    length: int

    def mean_intrinsic(self) -> float:
        if not self.transitions:
            return 0.0
        return sum(t.r_int for t in self.transitions) / len(self.transitions)


def run_episode(
    params: AgentParams,
    task: GridTask,
    hp: HyperParams,
    counts: VisitCounts | None,
    rng: np.random.Generator,
    encoder: StateEncoder | None = None,
) -> Trajectory:
    """Execute one hierarchical episode on the task.

    With counts=None no visitation is tracked and the intrinsic bonus is
    zero regardless of hp.eta (evaluation mode). The encoder defaults to
    the task's own grid; curriculum runs pass a shared one.
    """
    if encoder is None:
        encoder = encoder_for_task(task)
    if params.input_width != encoder.n_inputs:
        raise ValueError(
            f"agent input width {params.input_width} != encoder width "
            f"{encoder.n_inputs}"
        )
    if not encoder.fits(task):
        raise ValueError("task does not fit within the encoder grid")
    state = gridworld.reset(task)
    option = -1
    need_option = True
    transitions: list[Transition] = []
    done = False
    while not done:
        s_idx = encoder.index(state.position)
        enc = encoder.encode_index(s_idx)
        if need_option:
            option = agent_mod.select_option(params, enc, hp.eps_high, rng)
        action = agent_mod.select_action(params, option, enc, hp.eps_option, rng)
        next_state, r_ext, done = gridworld.step(task, state, action)
        if counts is not None:
            n = exploration.record_visit(counts, s_idx)
            r_int = exploration.intrinsic_reward(n, hp.eta, hp.eps_count)
        else:
            r_int = 0.0
        next_idx = encoder.index(next_state.position)
        beta = agent_mod.termination_prob(params, option, encoder.encode_index(next_idx))
        terminated = agent_mod.sample_termination(beta, rng) or done
        transitions.append(
            Transition(
                state_index=s_idx,
                option=option,
                action=action,
                r_ext=r_ext,
                r_int=r_int,
                r_total=exploration.total_reward(r_ext, r_int),
                next_state_index=next_idx,
                done=done,
                option_terminated=terminated,
                succeeded=next_state.succeeded,
            )
        )
        need_option = terminated
        state = next_state
    return Trajectory(
        transitions=tuple(transitions),
        cumulative_ext=sum(t.r_ext for t in transitions),
        cumulative_total=sum(t.r_total for t in transitions),
        success=transitions[-1].succeeded,
        length=len(transitions),
    )


def evaluate(
    params: AgentParams,
    tasks: Sequence[GridTask],
    n_episodes: int,
    rng: np.random.Generator,
    encoder: StateEncoder | None = None,
) -> tuple[float, float]:
    """Greedy evaluation: epsilon and intrinsic scale forced to zero, no
    count updates. Returns (success_rate, mean extrinsic return)."""
    if n_episodes < 1:
        raise ValueError("n_episodes must be >= 1")
    if not tasks:
        raise ValueError("no tasks to evaluate")
    hp = HyperParams().greedy()
    successes = 0
    returns = 0.0
    total = 0
    for task in tasks:
        for _ in range(n_episodes):
            traj = run_episode(params, task, hp, None, rng, encoder=encoder)
            successes += int(traj.success)
            returns += traj.cumulative_ext
            total += 1
    return successes / total, returns / total


def option_segments(traj: Trajectory) -> list[tuple[int, int, int]]:
    """Split a trajectory at option terminations.

    Returns (start, end, option) triples with end exclusive; every
    transition inside a segment ran under the same option.
    """
    segments = []
    start = 0
    for i, tr in enumerate(traj.transitions):
        if tr.option_terminated:
            segments.append((start, i + 1, tr.option))
            start = i + 1
    if start < len(traj.transitions):
        segments.append((start, len(traj.transitions), traj.transitions[start].option))
    return segments


def format_trajectory(traj: Trajectory) -> str:
    """Debug dump, one transition per line."""
    lines = [
        f"s={t.state_index} w={t.option} a={t.action} r_ext={t.r_ext:.4f} "
        f"r_int={t.r_int:.4f} s'={t.next_state_index} done={int(t.done)} "
        f"term={int(t.option_terminated)} ok={int(t.succeeded)}"
        for t in traj.transitions
    ]
    return "\n".join(lines) + "\n"
