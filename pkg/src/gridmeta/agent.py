"""Meta-parameters and the three policy heads.

AgentParams bundles the high-level option-value network, one action-value
network per option, and a single termination network with one sigmoid
output per option. Both policies act epsilon-greedily; greedy ties break
toward the lowest index.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import nets
from .nets import Mlp

N_OPTIONS = 5
N_ACTIONS = 4
HIDDEN_DIMS = (64, 32)


@dataclass
class AgentParams:
    high: Mlp  # state -> option values (linear)
    options: list[Mlp]  # per-option state -> action values (linear)
    termination: Mlp  # state -> per-option termination probability (sigmoid)

    def __post_init__(self):
        if len(self.options) != N_OPTIONS:
            raise ValueError(f"expected {N_OPTIONS} option heads")
        dims = {net.layer_dims for net in self.options}
        if len(dims) != 1:
            raise ValueError("option networks must share identical dims")
        widths = {self.high.layer_dims[0], self.termination.layer_dims[0],
                  self.options[0].layer_dims[0]}
        if len(widths) != 1:
            raise ValueError("all heads must accept the same input width")

    @property
    def input_width(self) -> int:
        return self.high.layer_dims[0]

    def n_params(self) -> int:
        return (
            self.high.n_params()
            + sum(o.n_params() for o in self.options)
            + self.termination.n_params()
        )


@dataclass(frozen=True)
class HyperParams:
    """Training hyperparameters; defaults follow the tuned configuration."""

    beta_meta: float = 8.24e-6
    alpha_inner: float = 0.00317
    inner_steps: int = 5
    eps_high: float = 0.1018
    eps_option: float = 0.6199
    eta: float = 0.1111
    eps_count: float = 1.0
    gamma: float = 0.99
    tasks_per_meta_batch: int = 4
    episodes_per_inner_step: int = 1

    def __post_init__(self):
        if not (0.0 <= self.eps_high <= 1.0 and 0.0 <= self.eps_option <= 1.0):
            raise ValueError("exploration probabilities must be in [0, 1]")
        if self.beta_meta <= 0 or self.alpha_inner < 0:
            raise ValueError("learning rates must be positive")
        if self.inner_steps < 1:
            raise ValueError("inner_steps must be >= 1")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must be in [0, 1)")
        if self.eta < 0 or self.eps_count <= 0:
            raise ValueError("eta must be >= 0 and eps_count > 0")
        if self.tasks_per_meta_batch < 1 or self.episodes_per_inner_step < 1:
            raise ValueError("batch counts must be >= 1")

    def greedy(self) -> "HyperParams":
        """Purely exploiting variant: no epsilon noise, no intrinsic bonus."""
        return replace(self, eps_high=0.0, eps_option=0.0, eta=0.0)


def init_agent(
    n_states: int,
    rng: np.random.Generator,
    hidden_dims=HIDDEN_DIMS,
) -> AgentParams:
    dims_h = (n_states, *hidden_dims, N_OPTIONS)
    dims_o = (n_states, *hidden_dims, N_ACTIONS)
    return AgentParams(
        high=nets.init_mlp(dims_h, "linear", rng),
        options=[nets.init_mlp(dims_o, "linear", rng) for _ in range(N_OPTIONS)],
        termination=nets.init_mlp(dims_h, "sigmoid", rng),
    )


def clone_agent(params: AgentParams) -> AgentParams:
    return AgentParams(
        high=nets.clone_mlp(params.high),
        options=[nets.clone_mlp(o) for o in params.options],
        termination=nets.clone_mlp(params.termination),
    )


def _eps_greedy(values: np.ndarray, eps: float, rng: np.random.Generator) -> int:
    if eps > 0.0 and rng.random() < eps:
        return int(rng.integers(len(values)))
    return int(np.argmax(values))  # argmax breaks ties toward the lowest index


def option_values(params: AgentParams, state_enc: np.ndarray) -> np.ndarray:
    out, _ = nets.forward(params.high, state_enc)
    return out


def action_values(params: AgentParams, option: int, state_enc: np.ndarray) -> np.ndarray:
    out, _ = nets.forward(params.options[option], state_enc)
    return out


def select_option(
    params: AgentParams, state_enc: np.ndarray, eps_high: float,
    rng: np.random.Generator,
) -> int:
    return _eps_greedy(option_values(params, state_enc), eps_high, rng)


def select_action(
    params: AgentParams, option: int, state_enc: np.ndarray, eps_option: float,
    rng: np.random.Generator,
) -> int:
    return _eps_greedy(action_values(params, option, state_enc), eps_option, rng)


def termination_prob(params: AgentParams, option: int, state_enc: np.ndarray) -> float:
    if not 0 <= option < N_OPTIONS:
        raise ValueError(f"invalid option {option}")
    out, _ = nets.forward(params.termination, state_enc)
    return float(out[option])


def sample_termination(p: float, rng: np.random.Generator) -> bool:
    if not 0.0 <= p <= 1.0:
        raise ValueError("termination probability must be in [0, 1]")
    return bool(rng.random() < p)


def flatten_agent(params: AgentParams) -> np.ndarray:
    """All parameters as one vector: high head, option heads 0..4,
    termination head."""
    parts = [nets.flatten_params(params.high)]
    parts.extend(nets.flatten_params(o) for o in params.options)
    parts.append(nets.flatten_params(params.termination))
    return np.concatenate(parts)


def set_agent_flat(params: AgentParams, flat: np.ndarray) -> AgentParams:
    """Inverse of flatten_agent (same packing order)."""
    i = 0
    n = params.high.n_params()
    high = nets.set_flat_params(params.high, flat[i : i + n])
    i += n
    options = []
    for o in params.options:
        n = o.n_params()
        options.append(nets.set_flat_params(o, flat[i : i + n]))
        i += n
    n = params.termination.n_params()
    termination = nets.set_flat_params(params.termination, flat[i : i + n])
    i += n
    if i != flat.size:
        raise ValueError("flat vector size mismatch")
    return AgentParams(high=high, options=options, termination=termination)


def save_agent(path, params: AgentParams, extra: dict | None = None) -> None:
    named = {"high": params.high, "termination": params.termination}
    for i, opt in enumerate(params.options):
        named[f"option{i}"] = opt
    nets.save_mlps(path, named, extra=extra)


def load_agent(path) -> tuple[AgentParams, dict]:
    named, extra = nets.load_mlps(path)
    params = AgentParams(
        high=named["high"],
        options=[named[f"option{i}"] for i in range(N_OPTIONS)],
        termination=named["termination"],
    )
    return params, extra
