"""Shared test helpers: handcrafted policies and finite-difference oracles."""
from __future__ import annotations

import numpy as np
import pytest

from gridmeta import nets
from gridmeta.agent import (
    HIDDEN_DIMS,
    N_ACTIONS,
    N_OPTIONS,
    AgentParams,
    init_agent,
)
from gridmeta.nets import Mlp


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# verdict lines collected by the acceptance suite, echoed after the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def bias_only_mlp(n_inputs: int, outputs, hidden=HIDDEN_DIMS,
                  activation: str = "linear") -> Mlp:
    """All-zero network whose output equals the final bias (pre-activation)."""
    dims = (n_inputs, *hidden, len(outputs))
    net = Mlp(
        layer_dims=dims,
        weights=[np.zeros((dims[i + 1], dims[i])) for i in range(len(dims) - 1)],
        biases=[np.zeros(dims[i + 1]) for i in range(len(dims) - 1)],
        output_activation=activation,
    )
    net.biases[-1][:] = outputs
    return net


def constant_agent(n_inputs: int, high_bias=None, option_bias=None,
                   termination_logit: float = 0.0) -> AgentParams:
    """Agent whose heads emit state-independent values (final-bias only)."""
    hb = high_bias if high_bias is not None else np.zeros(N_OPTIONS)
    ob = option_bias if option_bias is not None else np.zeros(N_ACTIONS)
    return AgentParams(
        high=bias_only_mlp(n_inputs, hb),
        options=[bias_only_mlp(n_inputs, ob) for _ in range(N_OPTIONS)],
        termination=bias_only_mlp(
            n_inputs, np.full(N_OPTIONS, termination_logit), activation="sigmoid"
        ),
    )


def scripted_policy_agent(n_inputs: int, action_of_state,
                          termination_logit: float = -50.0) -> AgentParams:
    """Agent whose greedy behavior executes action_of_state(index) under
    option 0. Requires n_inputs <= 64.

    Layer 1 copies the one-hot input into the first n_inputs hidden units;
    layer 2 pools states by desired action; layer 3 reads the pooled
    indicator out, so Q(s, a) = 1 when a == action_of_state(s) else 0.
    """
    assert n_inputs <= 64
    dims = (n_inputs, 64, 32, N_ACTIONS)
    w1 = np.zeros((64, n_inputs))
    w1[:n_inputs, :n_inputs] = np.eye(n_inputs)
    w2 = np.zeros((32, 64))
    for s in range(n_inputs):
        w2[action_of_state(s), s] = 1.0
    w3 = np.zeros((N_ACTIONS, 32))
    w3[:, :N_ACTIONS] = np.eye(N_ACTIONS)
    option0 = Mlp(
        layer_dims=dims,
        weights=[w1, w2, w3],
        biases=[np.zeros(64), np.zeros(32), np.zeros(N_ACTIONS)],
        output_activation="linear",
    )
    base = constant_agent(n_inputs, high_bias=np.array([1.0, 0, 0, 0, 0]),
                          termination_logit=termination_logit)
    base.options[0] = option0
    return base


def forced_termination_agent(n_inputs: int, rng: np.random.Generator,
                             logit: float) -> AgentParams:
    """Randomly initialized agent with the termination head saturated to
    sigmoid(logit) for every option and state."""
    params = init_agent(n_inputs, rng)
    for w in params.termination.weights:
        w[:] = 0.0
    for b in params.termination.biases:
        b[:] = 0.0
    params.termination.biases[-1][:] = logit
    return params


def numeric_mlp_gradient(net: Mlp, x: np.ndarray, grad_out: np.ndarray,
                         h: float = 1e-5) -> np.ndarray:
    """Central finite differences of loss(theta) = forward(theta, x) . grad_out."""
    flat = nets.flatten_params(net)

    def loss_at(vec):
        out, _ = nets.forward(nets.set_flat_params(net, vec), x)
        return float(out @ grad_out)

    grad = np.zeros_like(flat)
    for i in range(flat.size):
        plus = flat.copy()
        plus[i] += h
        minus = flat.copy()
        minus[i] -= h
        grad[i] = (loss_at(plus) - loss_at(minus)) / (2 * h)
    return grad


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray,
                       floor: float = 1e-8) -> float:
    denom = np.maximum(np.abs(analytic) + np.abs(numeric), floor)
    return float(np.max(np.abs(analytic - numeric) / denom))


def assert_option_continuity(traj) -> None:
    """Option index changes only at t=0 or right after a termination flag."""
    transitions = traj.transitions
    for prev, cur in zip(transitions, transitions[1:]):
        if not prev.option_terminated:
            assert cur.option == prev.option
