"""Minimal dense feed-forward network: forward, reverse-mode gradients, Adam.

Supports exactly what the authenticator networks need: fully connected
layers with leaky-ReLU / tanh / sigmoid / linear activations, inverted
dropout, binary cross-entropy, and Adam with bias correction. Inputs may
be single vectors or (batch, dim) arrays.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .rng import RngStream

ACTIVATIONS = ("leaky_relu", "tanh", "sigmoid", "linear")
CHECKPOINT_FORMAT_VERSION = 1
_CLIP = 1e-7


@dataclass
class DenseLayer:
    weights: np.ndarray  # (out_dim, in_dim)
    biases: np.ndarray  # (out_dim,)
    activation: str
    alpha: float = 0.3  # leaky_relu slope; ignored by other activations

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]


@dataclass
class Mlp:
    layers: list[DenseLayer]
    dropout: dict[int, float] = field(default_factory=dict)
    version: int = 0

    def __post_init__(self):
        for i, layer in enumerate(self.layers):
            if layer.activation not in ACTIVATIONS:
                raise ValueError(f"unknown activation {layer.activation!r}")
            if i and layer.in_dim != self.layers[i - 1].out_dim:
                raise ValueError(
                    f"layer {i} expects {layer.in_dim} inputs, previous emits "
                    f"{self.layers[i - 1].out_dim}"
                )
        for idx, rate in self.dropout.items():
            if not 0 <= idx < len(self.layers):
                raise ValueError(f"dropout index {idx} out of range")
            if not 0.0 <= rate < 1.0:
                raise ValueError(f"dropout rate must be in [0, 1), got {rate}")

    def parameters(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            out += [layer.weights, layer.biases]
        return out

    def param_count(self) -> int:
        return sum(p.size for p in self.parameters())

    def copy(self) -> "Mlp":
        layers = [
            DenseLayer(l.weights.copy(), l.biases.copy(), l.activation, l.alpha)
            for l in self.layers
        ]
        return Mlp(layers, dict(self.dropout))


def dense_layer(
    in_dim: int, out_dim: int, activation: str, rng: RngStream, alpha: float = 0.3
) -> DenseLayer:
    """Glorot-uniform weights, zero biases."""
    if in_dim < 1 or out_dim < 1:
        raise ValueError(f"layer dims must be >= 1, got {in_dim}->{out_dim}")
    limit = np.sqrt(6.0 / (in_dim + out_dim))
    g = rng.generator()
    w = g.uniform(-limit, limit, size=(out_dim, in_dim))
    return DenseLayer(weights=w, biases=np.zeros(out_dim), activation=activation, alpha=alpha)


@dataclass
class Tape:
    """Activation record of one forward pass, consumed by backward."""

    net_id: int
    version: int
    single: bool
    inputs: list[np.ndarray]
    pres: list[np.ndarray]
    acts: list[np.ndarray]
    dropout_masks: dict[int, np.ndarray]


def forward(
    net: Mlp,
    x: np.ndarray,
    mode: str = "infer",
    rng: RngStream | np.random.Generator | None = None,
    masks: dict[int, np.ndarray] | None = None,
):
    """Run the network; returns (output, tape).

    In train mode, dropout masks are sampled per call with inverted 1/(1-rate)
    scaling; infer mode applies no dropout. `rng` may be a stateful Generator
    (successive calls draw fresh masks) or an RngStream. Pre-sampled `masks`
    (as recorded on a tape) may be supplied to replay an identical stochastic
    pass.
    """
    if mode not in ("train", "infer"):
        raise ValueError(f"mode must be 'train' or 'infer', got {mode!r}")
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    if single:
        x = x[np.newaxis, :]
    if x.ndim != 2 or x.shape[1] != net.layers[0].in_dim:
        raise ValueError(
            f"input has {x.shape[-1] if x.ndim else 0} features, "
            f"network expects {net.layers[0].in_dim}"
        )
    gen = None
    if mode == "train" and net.dropout and masks is None:
        if rng is None:
            raise ValueError("train-mode forward with dropout requires an rng")
        gen = rng.generator() if isinstance(rng, RngStream) else rng
    inputs, pres, acts = [], [], []
    used_masks: dict[int, np.ndarray] = {}
    for i, layer in enumerate(net.layers):
        inputs.append(x)
        pre = x @ layer.weights.T + layer.biases
        act = _activate(pre, layer)
        rate = net.dropout.get(i)
        if rate and mode == "train":
            if masks is not None:
                mask = masks[i]
            else:
                mask = (gen.random(act.shape) >= rate) / (1.0 - rate)
            act = act * mask
            used_masks[i] = mask
        pres.append(pre)
        acts.append(act)
        x = act
    tape = Tape(
        net_id=id(net), version=net.version, single=single,
        inputs=inputs, pres=pres, acts=acts, dropout_masks=used_masks,
    )
    return (x[0] if single else x), tape


def backward(net: Mlp, tape: Tape, upstream_grad: np.ndarray):
    """Exact reverse-mode gradients; returns ([(dW, db), ...], dinput).

    Reuses the dropout masks recorded on the tape, so the gradient matches
    the sampled forward pass exactly.
    """
    if tape.net_id != id(net) or tape.version != net.version:
        raise ValueError("stale tape: parameters changed since the forward pass")
    g = np.asarray(upstream_grad, dtype=float)
    if tape.single:
        g = g[np.newaxis, :]
    if g.shape != tape.acts[-1].shape:
        raise ValueError(f"upstream grad shape {g.shape} != output shape {tape.acts[-1].shape}")
    grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(net.layers)
    for i in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[i]
        if i in tape.dropout_masks:
            g = g * tape.dropout_masks[i]
        g = g * _activation_grad(tape.pres[i], tape.acts[i], layer, i in tape.dropout_masks)
        grads[i] = (g.T @ tape.inputs[i], g.sum(axis=0))
        g = g @ layer.weights
    return grads, (g[0] if tape.single else g)


def _activate(pre: np.ndarray, layer: DenseLayer) -> np.ndarray:
    if layer.activation == "leaky_relu":
        return np.where(pre > 0, pre, layer.alpha * pre)
    if layer.activation == "tanh":
        return np.tanh(pre)
    if layer.activation == "sigmoid":
        return _sigmoid(pre)
    return pre


def _sigmoid(pre: np.ndarray) -> np.ndarray:
    # overflow-free in both tails
    out = np.empty_like(pre)
    pos = pre >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-pre[pos]))
    e = np.exp(pre[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _activation_grad(pre, act, layer: DenseLayer, act_was_masked: bool) -> np.ndarray:
    if layer.activation == "leaky_relu":
        return np.where(pre > 0, 1.0, layer.alpha)
    if layer.activation == "tanh":
        t = np.tanh(pre) if act_was_masked else act
        return 1.0 - t * t
    if layer.activation == "sigmoid":
        s = _sigmoid(pre) if act_was_masked else act
        return s * (1.0 - s)
    return np.ones_like(pre)


def bce_loss(pred, target):
    """Binary cross-entropy with saturation clipping.

    Returns (mean loss, gradient of the mean w.r.t. each prediction). The
    gradient is zero where the prediction was clipped, consistent with the
    clipped loss surface.
    """
    p = np.asarray(pred, dtype=float)
    t = np.asarray(target, dtype=float)
    scalar = p.ndim == 0
    p = np.atleast_1d(p)
    t = np.broadcast_to(np.atleast_1d(t), p.shape)
    clipped = np.clip(p, _CLIP, 1.0 - _CLIP)
    loss = float(np.mean(-(t * np.log(clipped) + (1.0 - t) * np.log(1.0 - clipped))))
    grad = (clipped - t) / (clipped * (1.0 - clipped)) / p.size
    grad = np.where((p > _CLIP) & (p < 1.0 - _CLIP), grad, 0.0)
    return loss, (float(grad[0]) if scalar else grad)


@dataclass
class AdamState:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list[np.ndarray] | None = None
    v: list[np.ndarray] | None = None

    def __post_init__(self):
        if self.lr < 0:
            raise ValueError(f"lr must be >= 0, got {self.lr}")


def adam_step(state: AdamState, params: list[np.ndarray], grads: list[np.ndarray]):
    """One bias-corrected Adam update, in place; returns (params, state)."""
    if state.m is None:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params/grads/state length mismatch")
    for p, gr in zip(params, grads):
        if p.shape != np.shape(gr):
            raise ValueError(f"gradient shape {np.shape(gr)} != parameter shape {p.shape}")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    for p, gr, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * gr
        v *= b2
        v += (1.0 - b2) * np.square(gr)
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params, state


def apply_gradients(net: Mlp, state: AdamState, grads: list[tuple[np.ndarray, np.ndarray]]):
    """Adam-update every layer of `net`; invalidates outstanding tapes."""
    flat = []
    for dw, db in grads:
        flat += [dw, db]
    adam_step(state, net.parameters(), flat)
    net.version += 1


# ---------------------------------------------------------------------------
# Checkpoints

def save_checkpoint(net: Mlp, path) -> None:
    doc = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "layers": [
            {
                "in_dim": l.in_dim,
                "out_dim": l.out_dim,
                "activation": l.activation,
                "alpha": l.alpha,
                "weights": [float(v) for v in l.weights.reshape(-1)],
                "biases": [float(v) for v in l.biases],
            }
            for l in net.layers
        ],
        "dropout": {str(i): rate for i, rate in sorted(net.dropout.items())},
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True) + "\n")


def load_checkpoint(path) -> Mlp:
    doc = json.loads(Path(path).read_text())
    if doc.get("format_version") != CHECKPOINT_FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint format: {doc.get('format_version')!r}")
    layers = []
    for spec in doc["layers"]:
        w = np.array(spec["weights"], dtype=float).reshape(spec["out_dim"], spec["in_dim"])
        b = np.array(spec["biases"], dtype=float)
        layers.append(DenseLayer(w, b, spec["activation"], spec.get("alpha", 0.3)))
    dropout = {int(i): float(r) for i, r in doc.get("dropout", {}).items()}
    return Mlp(layers, dropout)
