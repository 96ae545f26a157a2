"""Minimal dense feed-forward networks with exact backpropagation.

Hidden layers use ReLU; the output head is linear or sigmoid. All math is
64-bit. Batched forward/backward variants operate on row-stacked inputs
and sum gradients over the batch, which is what the loss code needs.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

OUTPUT_ACTIVATIONS = ("linear", "sigmoid")

CHECKPOINT_VERSION = 1


@dataclass
class Mlp:
    layer_dims: tuple[int, ...]
    weights: list[np.ndarray]  # weights[i]: (layer_dims[i+1], layer_dims[i])
    biases: list[np.ndarray]
    output_activation: str = "linear"

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))


@dataclass
class Gradients:
    d_weights: list[np.ndarray]
    d_biases: list[np.ndarray]

    def scale(self, factor: float) -> None:
        for dw, db in zip(self.d_weights, self.d_biases):
            dw *= factor
            db *= factor

    def add(self, other: "Gradients", factor: float = 1.0) -> None:
        for dw, o in zip(self.d_weights, other.d_weights):
            dw += factor * o
        for db, o in zip(self.d_biases, other.d_biases):
            db += factor * o

    def max_abs(self) -> float:
        return max(
            max((float(np.max(np.abs(a))) for a in self.d_weights), default=0.0),
            max((float(np.max(np.abs(a))) for a in self.d_biases), default=0.0),
        )

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.d_weights) and all(
            np.all(np.isfinite(a)) for a in self.d_biases
        )


def zero_gradients(net: Mlp) -> Gradients:
    return Gradients(
        d_weights=[np.zeros_like(w) for w in net.weights],
        d_biases=[np.zeros_like(b) for b in net.biases],
    )


def init_mlp(
    layer_dims,
    output_activation: str = "linear",
    rng: np.random.Generator | None = None,
) -> Mlp:
    """He-initialized MLP: hidden weights ~ N(0, 2/fan_in), biases zero."""
    dims = tuple(int(d) for d in layer_dims)
    if len(dims) < 2:
        raise ValueError("layer_dims needs at least an input and an output width")
    if any(d <= 0 for d in dims):
        raise ValueError("layer widths must be positive")
    if output_activation not in OUTPUT_ACTIVATIONS:
        raise ValueError(f"unknown output activation {output_activation!r}")
    if rng is None:
        rng = np.random.default_rng()
    weights = [
        rng.normal(0.0, np.sqrt(2.0 / dims[i]), size=(dims[i + 1], dims[i]))
        for i in range(len(dims) - 1)
    ]
    biases = [np.zeros(dims[i + 1]) for i in range(len(dims) - 1)]
    return Mlp(layer_dims=dims, weights=weights, biases=biases,
               output_activation=output_activation)


def clone_mlp(net: Mlp) -> Mlp:
    return Mlp(
        layer_dims=net.layer_dims,
        weights=[w.copy() for w in net.weights],
        biases=[b.copy() for b in net.biases],
        output_activation=net.output_activation,
    )


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def forward(net: Mlp, x: np.ndarray) -> tuple[np.ndarray, list]:
    """Single-input forward pass; returns (output, cache for backward)."""
    out, cache = forward_batch(net, np.asarray(x, dtype=float)[None, :])
    return out[0], cache


def forward_batch(net: Mlp, x: np.ndarray) -> tuple[np.ndarray, list]:
    """Forward over row-stacked inputs of shape (n, layer_dims[0])."""
    a = np.asarray(x, dtype=float)
    if a.ndim != 2 or a.shape[1] != net.layer_dims[0]:
        raise ValueError(
            f"expected input of width {net.layer_dims[0]}, got shape {a.shape}"
        )
    cache = [(None, a)]  # (pre-activation, activation) per layer
    last = net.n_layers - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = a @ w.T + b
        if i < last:
            a = np.maximum(z, 0.0)
        elif net.output_activation == "sigmoid":
            a = _sigmoid(z)
        else:
            a = z
        cache.append((z, a))
    return a, cache


def backward(net: Mlp, cache: list, grad_out: np.ndarray) -> Gradients:
    return backward_batch(net, cache, np.asarray(grad_out, dtype=float)[None, :])


def backward_batch(net: Mlp, cache: list, grad_out: np.ndarray) -> Gradients:
    """Exact gradients, summed over the batch, of a scalar loss whose
    gradient w.r.t. the network output is grad_out."""
    g = np.asarray(grad_out, dtype=float)
    if len(cache) != net.n_layers + 1:
        raise ValueError("cache does not match network depth")
    z_out, a_out = cache[-1]
    if g.shape != a_out.shape:
        raise ValueError(f"grad_out shape {g.shape} != output shape {a_out.shape}")
    if net.output_activation == "sigmoid":
        delta = g * a_out * (1.0 - a_out)
    else:
        delta = g
    d_weights: list[np.ndarray] = [None] * net.n_layers  # type: ignore[list-item]
    d_biases: list[np.ndarray] = [None] * net.n_layers  # type: ignore[list-item]
    for i in range(net.n_layers - 1, -1, -1):
        a_prev = cache[i][1]
        d_weights[i] = delta.T @ a_prev
        d_biases[i] = delta.sum(axis=0)
        if i > 0:
            z_prev = cache[i][0]
            delta = (delta @ net.weights[i]) * (z_prev > 0)
    return Gradients(d_weights=d_weights, d_biases=d_biases)


def sgd_step(net: Mlp, grads: Gradients, alpha: float) -> Mlp:
    """theta' = theta - alpha * g, returned as a new network."""
    if not grads.is_finite():
        raise ValueError("non-finite gradients")
    return Mlp(
        layer_dims=net.layer_dims,
        weights=[w - alpha * g for w, g in zip(net.weights, grads.d_weights)],
        biases=[b - alpha * g for b, g in zip(net.biases, grads.d_biases)],
        output_activation=net.output_activation,
    )


@dataclass
class AdamState:
    m_weights: list[np.ndarray]
    m_biases: list[np.ndarray]
    v_weights: list[np.ndarray]
    v_biases: list[np.ndarray]
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_init(net: Mlp, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> AdamState:
    return AdamState(
        m_weights=[np.zeros_like(w) for w in net.weights],
        m_biases=[np.zeros_like(b) for b in net.biases],
        v_weights=[np.zeros_like(w) for w in net.weights],
        v_biases=[np.zeros_like(b) for b in net.biases],
        beta1=beta1,
        beta2=beta2,
        eps=eps,
    )


def adam_step(
    net: Mlp, grads: Gradients, state: AdamState, lr: float
) -> tuple[Mlp, AdamState]:
    """Standard Adam with bias correction; returns updated net and state."""
    if not grads.is_finite():
        raise ValueError("non-finite gradients")
    t = state.t + 1
    b1, b2, eps = state.beta1, state.beta2, state.eps
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    new_w, new_b = [], []
    new_mw, new_mb, new_vw, new_vb = [], [], [], []
    for w, g, m, v in zip(net.weights, grads.d_weights, state.m_weights,
                          state.v_weights):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        new_w.append(w - lr * (m / c1) / (np.sqrt(v / c2) + eps))
        new_mw.append(m)
        new_vw.append(v)
    for b, g, m, v in zip(net.biases, grads.d_biases, state.m_biases,
                          state.v_biases):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        new_b.append(b - lr * (m / c1) / (np.sqrt(v / c2) + eps))
        new_mb.append(m)
        new_vb.append(v)
    net2 = Mlp(net.layer_dims, new_w, new_b, net.output_activation)
    state2 = AdamState(new_mw, new_mb, new_vw, new_vb, t, b1, b2, eps)
    return net2, state2


def flatten_params(net: Mlp) -> np.ndarray:
    parts = []
    for w, b in zip(net.weights, net.biases):
        parts.append(w.ravel())
        parts.append(b.ravel())
    return np.concatenate(parts)


def set_flat_params(net: Mlp, flat: np.ndarray) -> Mlp:
    """Return a copy of net with parameters taken from the flat vector
    (same packing order as flatten_params)."""
    out = clone_mlp(net)
    i = 0
    for layer in range(net.n_layers):
        w = out.weights[layer]
        out.weights[layer] = flat[i : i + w.size].reshape(w.shape).copy()
        i += w.size
        b = out.biases[layer]
        out.biases[layer] = flat[i : i + b.size].copy()
        i += b.size
    if i != flat.size:
        raise ValueError("flat vector size mismatch")
    return out


def flatten_gradients(grads: Gradients) -> np.ndarray:
    parts = []
    for dw, db in zip(grads.d_weights, grads.d_biases):
        parts.append(dw.ravel())
        parts.append(db.ravel())
    return np.concatenate(parts)


def save_mlps(path, nets: dict[str, Mlp], extra: dict | None = None) -> None:
    """Checkpoint a named set of networks to one .npz file.

    Layout (version 1): for each name, arrays `<name>/w<i>` and
    `<name>/b<i>` per layer, plus `<name>/meta` holding
    [output_activation_code, n_layers]. Extra JSON-able metadata is stored
    under `__meta__`.
    """
    import json

    arrays: dict[str, np.ndarray] = {}
    manifest: dict = {"version": CHECKPOINT_VERSION, "nets": {}, "extra": extra or {}}
    for name, net in nets.items():
        manifest["nets"][name] = {
            "layer_dims": list(net.layer_dims),
            "output_activation": net.output_activation,
        }
        for i, (w, b) in enumerate(zip(net.weights, net.biases)):
            arrays[f"{name}/w{i}"] = w
            arrays[f"{name}/b{i}"] = b
    arrays["__meta__"] = np.frombuffer(
        json.dumps(manifest, sort_keys=True).encode(), dtype=np.uint8
    )
    np.savez(path, **arrays)


def load_mlps(path) -> tuple[dict[str, Mlp], dict]:
    """Inverse of save_mlps; returns (nets, extra metadata)."""
    import json

    with np.load(path) as data:
        manifest = json.loads(bytes(data["__meta__"]).decode())
        if manifest.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {manifest.get('version')}")
        nets = {}
        for name, info in manifest["nets"].items():
            dims = tuple(info["layer_dims"])
            weights = [data[f"{name}/w{i}"].copy() for i in range(len(dims) - 1)]
            biases = [data[f"{name}/b{i}"].copy() for i in range(len(dims) - 1)]
            nets[name] = Mlp(dims, weights, biases, info["output_activation"])
    return nets, manifest["extra"]
