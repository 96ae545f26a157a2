"""Procedurally generated trap gridworlds with deterministic dynamics.

A task is a W x H grid; the agent starts at the top-left corner and must
reach the bottom-right goal. A configurable number of trap cells is placed
uniformly at random among the remaining cells; layouts are resampled until
a trap-avoiding path from start to goal exists (BFS check).

Coordinates are (x, y) with x in [0, width) and y in [0, height).
The flat state index of a cell is ``y * width + x``.
Actions: 0=up, 1=down, 2=left, 3=right. Moves off the grid clip in place.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, replace

import numpy as np

N_ACTIONS = 4
ACTION_NAMES = ("up", "down", "left", "right")
_DELTAS = ((0, -1), (0, 1), (-1, 0), (1, 0))

MAX_GENERATION_ATTEMPTS = 1000


class TaskGenerationError(RuntimeError):
    """Raised when no solvable layout is found (over-constrained level)."""


@dataclass(frozen=True)
class RewardSpec:
    """Reward constants for one task.

    step_penalty applies to every step; trap_penalty is added on trap
    entry and goal_reward on goal entry. If trap_terminates is set,
    entering a trap ends the episode (unsuccessfully).
    """

    step_penalty: float = -0.1
    trap_penalty: float = -1.0
    goal_reward: float = 10.0
    trap_terminates: bool = False

    def __post_init__(self):
        if self.step_penalty > 0 or self.trap_penalty > 0:
            raise ValueError("penalties must be <= 0")
        if self.goal_reward <= 0:
            raise ValueError("goal_reward must be > 0")


@dataclass(frozen=True)
class GridTask:
    """One sampled environment instance. Immutable after construction."""

    width: int
    height: int
    start: tuple[int, int]
    goal: tuple[int, int]
    traps: frozenset[tuple[int, int]]
    max_steps: int = 100
    reward_spec: RewardSpec = RewardSpec()
    seed: int = 0

    @property
    def n_states(self) -> int:
        return self.width * self.height

    def cell_index(self, pos: tuple[int, int]) -> int:
        return pos[1] * self.width + pos[0]


@dataclass
class EnvState:
    position: tuple[int, int]
    steps_taken: int = 0
    terminated: bool = False
    succeeded: bool = False


def solvable(width: int, height: int, start, goal, traps) -> bool:
    """BFS reachability of goal from start avoiding traps."""
    if start in traps or goal in traps:
        return False
    seen = {start}
    queue = deque([start])
    while queue:
        x, y = queue.popleft()
        if (x, y) == goal:
            return True
        for dx, dy in _DELTAS:
            nxt = (x + dx, y + dy)
            if (
                0 <= nxt[0] < width
                and 0 <= nxt[1] < height
                and nxt not in traps
                and nxt not in seen
            ):
                seen.add(nxt)
                queue.append(nxt)
    return False


def shortest_path_length(task: GridTask) -> int:
    """Trap-avoiding shortest path length from start to goal (BFS)."""
    dist = {task.start: 0}
    queue = deque([task.start])
    while queue:
        pos = queue.popleft()
        if pos == task.goal:
            return dist[pos]
        x, y = pos
        for dx, dy in _DELTAS:
            nxt = (x + dx, y + dy)
            if (
                0 <= nxt[0] < task.width
                and 0 <= nxt[1] < task.height
                and nxt not in task.traps
                and nxt not in dist
            ):
                dist[nxt] = dist[pos] + 1
                queue.append(nxt)
    raise ValueError("task is not solvable")


def complexity_score(task: GridTask) -> float:
    """Shortest-path length times trap density. Logged, not used for sampling."""
    density = len(task.traps) / task.n_states
    return shortest_path_length(task) * density


def generate_task(
    level_spec,
    rng: np.random.Generator,
    max_steps: int = 100,
    reward_spec: RewardSpec | None = None,
) -> GridTask:
    """Sample a solvable task for a curriculum level.

    Start is the top-left corner, goal the bottom-right; only the trap
    layout is randomized. Resamples until BFS solvability holds, raising
    TaskGenerationError after MAX_GENERATION_ATTEMPTS tries.
    """
    width, height = level_spec.grid_width, level_spec.grid_height
    n_traps = level_spec.n_traps
    start = (0, 0)
    goal = (width - 1, height - 1)
    free = [
        (x, y)
        for y in range(height)
        for x in range(width)
        if (x, y) != start and (x, y) != goal
    ]
    if n_traps > len(free):
        raise TaskGenerationError(
            f"level asks for {n_traps} traps but only {len(free)} free cells exist"
        )
    spec = reward_spec if reward_spec is not None else RewardSpec()
    for _ in range(MAX_GENERATION_ATTEMPTS):
        seed = int(rng.integers(0, 2**63))
        picks = rng.choice(len(free), size=n_traps, replace=False)
        traps = frozenset(free[i] for i in picks)
        if solvable(width, height, start, goal, traps):
            return GridTask(
                width=width,
                height=height,
                start=start,
                goal=goal,
                traps=traps,
                max_steps=max_steps,
                reward_spec=spec,
                seed=seed,
            )
    raise TaskGenerationError(
        f"no solvable {width}x{height} layout with {n_traps} traps after "
        f"{MAX_GENERATION_ATTEMPTS} attempts"
    )


def reset(task: GridTask) -> EnvState:
    return EnvState(position=task.start)


def step(task: GridTask, state: EnvState, action: int) -> tuple[EnvState, float, bool]:
    """Apply one primitive action; returns (next_state, extrinsic reward, done)."""
    if state.terminated:
        raise ValueError("cannot step a terminated state")
    if not 0 <= action < N_ACTIONS:
        raise ValueError(f"invalid action {action}")
    dx, dy = _DELTAS[action]
    x = min(max(state.position[0] + dx, 0), task.width - 1)
    y = min(max(state.position[1] + dy, 0), task.height - 1)
    pos = (x, y)
    spec = task.reward_spec
    reward = spec.step_penalty
    steps = state.steps_taken + 1
    succeeded = pos == task.goal
    hit_trap = pos in task.traps
    if hit_trap:
        reward += spec.trap_penalty
    if succeeded:
        reward += spec.goal_reward
    done = succeeded or steps >= task.max_steps or (hit_trap and spec.trap_terminates)
    next_state = EnvState(
        position=pos, steps_taken=steps, terminated=done, succeeded=succeeded
    )
    return next_state, reward, done


def encode_state(task: GridTask, state: EnvState) -> np.ndarray:
    """One-hot encoding of the agent position, length width*height."""
    vec = np.zeros(task.n_states)
    vec[task.cell_index(state.position)] = 1.0
    return vec


def serialize_task(task: GridTask) -> str:
    """Line-based layout text: W H / start / goal / traps / seed / extras.

    Traps are sorted for a canonical form; the extras line carries
    max_steps and the reward constants so round trips are lossless.
    """
    traps = " ".join(f"{x},{y}" for x, y in sorted(task.traps))
    spec = task.reward_spec
    lines = [
        f"{task.width} {task.height}",
        f"{task.start[0]} {task.start[1]}",
        f"{task.goal[0]} {task.goal[1]}",
        traps,
        str(task.seed),
        f"{task.max_steps} {spec.step_penalty!r} {spec.trap_penalty!r} "
        f"{spec.goal_reward!r} {int(spec.trap_terminates)}",
    ]
    return "\n".join(lines) + "\n"


def parse_task(text: str) -> GridTask:
    """Inverse of serialize_task. The extras line is optional (defaults apply)."""
    lines = text.splitlines()
    if len(lines) < 5:
        raise ValueError("task layout needs at least 5 lines")
    width, height = (int(v) for v in lines[0].split())
    sx, sy = (int(v) for v in lines[1].split())
    gx, gy = (int(v) for v in lines[2].split())
    traps = frozenset(
        tuple(int(v) for v in pair.split(",")) for pair in lines[3].split()
    )
    seed = int(lines[4])
    max_steps = 100
    spec = RewardSpec()
    if len(lines) > 5 and lines[5].strip():
        fields = lines[5].split()
        max_steps = int(fields[0])
        spec = RewardSpec(
            step_penalty=float(fields[1]),
            trap_penalty=float(fields[2]),
            goal_reward=float(fields[3]),
            trap_terminates=bool(int(fields[4])),
        )
    return GridTask(
        width=width,
        height=height,
        start=(sx, sy),
        goal=(gx, gy),
        traps=traps,
        max_steps=max_steps,
        reward_spec=spec,
        seed=seed,
    )


def with_reward_spec(task: GridTask, spec: RewardSpec) -> GridTask:
    return replace(task, reward_spec=spec)
