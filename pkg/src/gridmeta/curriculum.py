"""Curriculum levels and the performance-gated progression rule.

The default ladder maps level L to a (3+L)x(3+L) grid with L traps, so
level 3 is the 6x6 / 3-trap environment used by the fixed-complexity
scenario. Advancement is gated on the trailing-window mean success rate.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence


@dataclass(frozen=True)
class CurriculumLevelSpec:
    level: int
    grid_width: int
    grid_height: int
    n_traps: int

    def __post_init__(self):
        if self.level < 1:
            raise ValueError("level index starts at 1")
        if self.n_traps >= self.grid_width * self.grid_height - 1:
            raise ValueError("trap count must leave free cells")


@dataclass(frozen=True)
class GateSpec:
    """Trailing-window success gate: advance when the mean of the last
    `window` success rates reaches `success_threshold`."""

    window: int = 25
    success_threshold: float = 0.6

    def __post_init__(self):
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if not 0.0 < self.success_threshold <= 1.0:
            raise ValueError("success_threshold must be in (0, 1]")


def level_spec(level: int, max_level: int | None = None) -> CurriculumLevelSpec:
    """Default ladder: level L -> (3+L)x(3+L) grid with L traps."""
    if level < 1:
        raise ValueError(f"level must be >= 1, got {level}")
    if max_level is not None and level > max_level:
        raise ValueError(f"level {level} exceeds schedule maximum {max_level}")
    size = 3 + level
    return CurriculumLevelSpec(
        level=level, grid_width=size, grid_height=size, n_traps=level
    )


@dataclass(frozen=True)
class CurriculumSchedule:
    levels: tuple[CurriculumLevelSpec, ...]
    gate: GateSpec = field(default_factory=GateSpec)

    def __post_init__(self):
        if not self.levels:
            raise ValueError("schedule needs at least one level")
        sizes = [(s.grid_width, s.grid_height, s.n_traps) for s in self.levels]
        for prev, cur in zip(sizes, sizes[1:]):
            if cur[0] < prev[0] or cur[1] < prev[1] or cur[2] < prev[2]:
                raise ValueError("grid sizes and trap counts must be non-decreasing")

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    def spec_at(self, position: int) -> CurriculumLevelSpec:
        """Level spec at 0-based schedule position (clamped to the last level)."""
        return self.levels[min(position, len(self.levels) - 1)]


def default_schedule(
    n_levels: int = 4, window: int = 25, success_threshold: float = 0.6
) -> CurriculumSchedule:
    return CurriculumSchedule(
        levels=tuple(level_spec(l) for l in range(1, n_levels + 1)),
        gate=GateSpec(window=window, success_threshold=success_threshold),
    )


def single_level_schedule(level: int, **gate_kwargs) -> CurriculumSchedule:
    return CurriculumSchedule(levels=(level_spec(level),), gate=GateSpec(**gate_kwargs))


def should_advance(recent_success: Sequence[float], gate: GateSpec) -> bool:
    """True iff a full window of success rates exists and its mean meets
    the threshold (>= comparison)."""
    if len(recent_success) < gate.window:
        return False
    tail = recent_success[-gate.window :]
    return sum(tail) / gate.window >= gate.success_threshold
