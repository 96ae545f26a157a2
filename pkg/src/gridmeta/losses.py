"""Inner-loop losses over hierarchical trajectories.

Three components, all computed against a frozen target copy of the agent:

* low-level: per-option Q-learning MSE on one-step bootstrapped targets
  built from the total (extrinsic + intrinsic) reward;
* high-level: SMDP Q-learning MSE over option segments, with discounted
  in-segment returns and gamma^tau bootstrapping at the segment end;
* termination: per-option binary cross-entropy where the label asks the
  option to terminate exactly when it is no longer the greedy option
  under the target high-level values.

The bundle total is the plain sum; gradients flow to every head.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import nets
from .agent import N_ACTIONS, N_OPTIONS, AgentParams, clone_agent
from .nets import Gradients
from .rollout import Trajectory, Transition, option_segments

BCE_CLAMP = 1e-6


@dataclass(frozen=True)
class TargetParams:
    """Frozen clone of AgentParams used for bootstrapped targets."""

    agent: AgentParams


def sync_targets(params: AgentParams) -> TargetParams:
    return TargetParams(agent=clone_agent(params))


@dataclass(frozen=True)
class LossBundle:
    l_high: float
    l_low_per_option: np.ndarray  # shape (5,)
    l_beta_per_option: np.ndarray  # shape (5,)

    @property
    def total(self) -> float:
        return float(
            self.l_high + self.l_low_per_option.sum() + self.l_beta_per_option.sum()
        )


@dataclass
class AgentGradients:
    high: Gradients
    options: list[Gradients]
    termination: Gradients

    def add(self, other: "AgentGradients", factor: float = 1.0) -> None:
        self.high.add(other.high, factor)
        for mine, theirs in zip(self.options, other.options):
            mine.add(theirs, factor)
        self.termination.add(other.termination, factor)

    def scale(self, factor: float) -> None:
        self.high.scale(factor)
        for g in self.options:
            g.scale(factor)
        self.termination.scale(factor)

    def is_finite(self) -> bool:
        return (
            self.high.is_finite()
            and all(g.is_finite() for g in self.options)
            and self.termination.is_finite()
        )


def flatten_agent_gradients(grads: AgentGradients) -> np.ndarray:
    """Same packing order as agent.flatten_agent."""
    parts = [nets.flatten_gradients(grads.high)]
    parts.extend(nets.flatten_gradients(g) for g in grads.options)
    parts.append(nets.flatten_gradients(grads.termination))
    return np.concatenate(parts)


def zero_agent_gradients(params: AgentParams) -> AgentGradients:
    return AgentGradients(
        high=nets.zero_gradients(params.high),
        options=[nets.zero_gradients(o) for o in params.options],
        termination=nets.zero_gradients(params.termination),
    )


def agent_sgd_step(
    params: AgentParams, grads: AgentGradients, alpha: float
) -> AgentParams:
    """One SGD step applied to every head."""
    return AgentParams(
        high=nets.sgd_step(params.high, grads.high, alpha),
        options=[
            nets.sgd_step(o, g, alpha) for o, g in zip(params.options, grads.options)
        ],
        termination=nets.sgd_step(params.termination, grads.termination, alpha),
    )


def _one_hot_rows(indices: Sequence[int], width: int) -> np.ndarray:
    x = np.zeros((len(indices), width))
    x[np.arange(len(indices)), list(indices)] = 1.0
    return x


def low_level_target(tr: Transition, targets: TargetParams, gamma: float) -> float:
    """One-step bootstrapped target for the transition's option head."""
    width = targets.agent.input_width
    if tr.done:
        return tr.r_total
    q_next, _ = nets.forward(
        targets.agent.options[tr.option], _one_hot_rows([tr.next_state_index], width)[0]
    )
    return tr.r_total + gamma * float(np.max(q_next))


def _low_level(
    params: AgentParams,
    traj: Trajectory,
    targets: TargetParams,
    gamma: float,
    grads: AgentGradients | None,
) -> np.ndarray:
    width = params.input_width
    losses = np.zeros(N_OPTIONS)
    for omega in range(N_OPTIONS):
        trs = [t for t in traj.transitions if t.option == omega]
        if not trs:
            continue
        x = _one_hot_rows([t.state_index for t in trs], width)
        q, cache = nets.forward_batch(params.options[omega], x)
        pred = q[np.arange(len(trs)), [t.action for t in trs]]
        x_next = _one_hot_rows([t.next_state_index for t in trs], width)
        q_next, _ = nets.forward_batch(targets.agent.options[omega], x_next)
        not_done = 1.0 - np.array([float(t.done) for t in trs])
        y = np.array([t.r_total for t in trs]) + gamma * not_done * q_next.max(axis=1)
        err = pred - y
        losses[omega] = float(np.mean(err**2))
        if grads is not None:
            grad_out = np.zeros_like(q)
            grad_out[np.arange(len(trs)), [t.action for t in trs]] = (
                2.0 * err / len(trs)
            )
            grads.options[omega].add(
                nets.backward_batch(params.options[omega], cache, grad_out)
            )
    return losses


def _high_level(
    params: AgentParams,
    traj: Trajectory,
    targets: TargetParams,
    gamma: float,
    grads: AgentGradients | None,
) -> float:
    width = params.input_width
    segments = option_segments(traj)
    starts, options, ys = [], [], []
    for start, end, omega in segments:
        seg = traj.transitions[start:end]
        tau = end - start
        g_seg = sum(seg[k].r_total * gamma**k for k in range(tau))
        last = seg[-1]
        y = g_seg
        if not last.done:
            q_next, _ = nets.forward(
                targets.agent.high, _one_hot_rows([last.next_state_index], width)[0]
            )
            y += gamma**tau * float(np.max(q_next))
        starts.append(seg[0].state_index)
        options.append(omega)
        ys.append(y)
    x = _one_hot_rows(starts, width)
    q, cache = nets.forward_batch(params.high, x)
    pred = q[np.arange(len(segments)), options]
    err = pred - np.array(ys)
    loss = float(np.mean(err**2))
    if grads is not None:
        grad_out = np.zeros_like(q)
        grad_out[np.arange(len(segments)), options] = 2.0 * err / len(segments)
        grads.high.add(nets.backward_batch(params.high, cache, grad_out))
    return loss


def _termination(
    params: AgentParams,
    traj: Trajectory,
    targets: TargetParams,
    grads: AgentGradients | None,
) -> np.ndarray:
    width = params.input_width
    next_idx = [t.next_state_index for t in traj.transitions]
    x_next = _one_hot_rows(next_idx, width)
    q_high, _ = nets.forward_batch(targets.agent.high, x_next)
    greedy = q_high.max(axis=1)
    betas, cache = nets.forward_batch(params.termination, x_next)
    opts = np.array([t.option for t in traj.transitions])
    # terminate (label 1) exactly when the running option has negative
    # advantage under the target high-level values
    labels = (q_high[np.arange(len(opts)), opts] < greedy).astype(float)
    p = np.clip(betas[np.arange(len(opts)), opts], BCE_CLAMP, 1.0 - BCE_CLAMP)
    sample_loss = -(labels * np.log(p) + (1.0 - labels) * np.log(1.0 - p))
    losses = np.zeros(N_OPTIONS)
    grad_out = np.zeros_like(betas)
    for omega in range(N_OPTIONS):
        mask = opts == omega
        n = int(mask.sum())
        if n == 0:
            continue
        losses[omega] = float(sample_loss[mask].mean())
        if grads is not None:
            dp = (-labels[mask] / p[mask] + (1.0 - labels[mask]) / (1.0 - p[mask])) / n
            grad_out[mask, omega] = dp
    if grads is not None:
        grads.termination.add(nets.backward_batch(params.termination, cache, grad_out))
    return losses


def low_level_loss(
    params: AgentParams, traj: Trajectory, targets: TargetParams, gamma: float
) -> np.ndarray:
    """Per-option Q-learning MSE; zero for unused options."""
    return _low_level(params, traj, targets, gamma, None)


def high_level_loss(
    params: AgentParams, traj: Trajectory, targets: TargetParams, gamma: float
) -> float:
    """SMDP Q-learning MSE over option segments."""
    return _high_level(params, traj, targets, gamma, None)


def termination_loss(
    params: AgentParams, traj: Trajectory, targets: TargetParams
) -> np.ndarray:
    """Per-option advantage-signed BCE at the post-transition states."""
    return _termination(params, traj, targets, None)


def total_inner_loss(
    params: AgentParams,
    trajectories: Sequence[Trajectory],
    targets: TargetParams,
    gamma: float,
) -> LossBundle:
    bundle, _ = total_inner_loss_and_grads(params, trajectories, targets, gamma,
                                           with_grads=False)
    return bundle


def total_inner_loss_and_grads(
    params: AgentParams,
    trajectories: Sequence[Trajectory],
    targets: TargetParams,
    gamma: float,
    with_grads: bool = True,
) -> tuple[LossBundle, AgentGradients | None]:
    """Loss components averaged over trajectories, plus the exact gradient
    of the bundle total with respect to every head of params."""
    if not trajectories:
        raise ValueError("need at least one trajectory")
    grads = zero_agent_gradients(params) if with_grads else None
    l_high = 0.0
    l_low = np.zeros(N_OPTIONS)
    l_beta = np.zeros(N_OPTIONS)
    for traj in trajectories:
        l_low += _low_level(params, traj, targets, gamma, grads)
        l_high += _high_level(params, traj, targets, gamma, grads)
        l_beta += _termination(params, traj, targets, grads)
    n = len(trajectories)
    if grads is not None:
        grads.scale(1.0 / n)
    return LossBundle(l_high / n, l_low / n, l_beta / n), grads
