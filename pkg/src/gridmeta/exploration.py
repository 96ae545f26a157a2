"""Count-based intrinsic motivation.

Visit counts are kept per task adaptation and never shared across tasks.
The visit is recorded before the bonus is computed, so the first visit of
a state pays eta / sqrt(1 + eps_count).
"""
from __future__ import annotations

import math


class VisitCounts:
    """Map from encoded state index to visit count; absent key reads as 0."""

    __slots__ = ("_counts",)

    def __init__(self):
        self._counts: dict[int, int] = {}

    def __getitem__(self, state_index: int) -> int:
        return self._counts.get(state_index, 0)

    def __len__(self) -> int:
        return len(self._counts)

    def total(self) -> int:
        return sum(self._counts.values())


def record_visit(counts: VisitCounts, state_index: int) -> int:
    """Increment the visit count for a state; returns the new count."""
    n = counts._counts.get(state_index, 0) + 1
    counts._counts[state_index] = n
    return n


def intrinsic_reward(n: int, eta: float, eps_count: float) -> float:
    """Novelty bonus eta / sqrt(N + eps); strictly decreasing in N."""
    if n < 0:
        raise ValueError("visit count must be >= 0")
    if eta < 0 or eps_count <= 0:
        raise ValueError("eta must be >= 0 and eps_count > 0")
    return eta / math.sqrt(n + eps_count)


def total_reward(r_ext: float, r_int: float) -> float:
    """Combined training reward: extrinsic plus intrinsic."""
    return r_ext + r_int
