"""Small numpy multi-layer perceptrons with exact backprop and Adam."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAX_LAYERS = 10
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class MLPSpec:
    layer_sizes: tuple
    leaky_slope: float = 0.01
    seed: int = 0

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        object.__setattr__(self, "layer_sizes", sizes)
        if len(sizes) < 2:
            raise ValueError("layer_sizes needs at least input and output sizes")
        if any(s < 1 for s in sizes):
            raise ValueError(f"layer sizes must be positive, got {sizes}")
        if len(sizes) - 1 > MAX_LAYERS:
            raise ValueError(f"at most {MAX_LAYERS} affine layers, got {len(sizes) - 1}")
        if not 0 < self.leaky_slope < 1:
            raise ValueError(f"leaky_slope must lie in (0, 1), got {self.leaky_slope}")

    @property
    def n_layers(self):
        return len(self.layer_sizes) - 1


@dataclass
class MLP:
    """Affine layers with Leaky ReLU between them; the last layer is linear.

    ``weights[l]`` has shape ``(out, in)`` and ``biases[l]`` shape ``(out,)``.
    """

    spec: MLPSpec
    weights: list
    biases: list

    @property
    def params(self) -> list:
        return [*self.weights, *self.biases]

    def copy(self) -> MLP:
        return MLP(self.spec, [w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def __call__(self, x):
        return forward(self, x)[0]


@dataclass
class Cache:
    inputs: list  # input to each affine layer
    pre: list  # pre-activations of each affine layer
    owner: int  # id of the MLP that produced the cache


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    @classmethod
    def for_model(cls, mlp: MLP, **hyper) -> AdamState:
        params = mlp.params
        return cls(**hyper, m=[np.zeros_like(p) for p in params], v=[np.zeros_like(p) for p in params])


def init_mlp(spec: MLPSpec) -> MLP:
    """Uniform fan-in initialisation ``U(-sqrt(3/fan_in), sqrt(3/fan_in))``, zero biases."""
    rng = np.random.default_rng(spec.seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(spec.layer_sizes[:-1], spec.layer_sizes[1:]):
        bound = np.sqrt(3.0 / fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MLP(spec, weights, biases)


def leaky_relu(z, slope):
    return np.where(z >= 0, z, slope * z)


def forward(mlp: MLP, batch):
    x = np.asarray(batch, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.shape[1] != mlp.spec.layer_sizes[0]:
        raise ValueError(f"input width {x.shape[1]} does not match {mlp.spec.layer_sizes[0]}")
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite network input")
    inputs, pre = [], []
    h = x
    last = len(mlp.weights) - 1
    for l, (W, b) in enumerate(zip(mlp.weights, mlp.biases)):
        inputs.append(h)
        z = h @ W.T + b
        pre.append(z)
        h = z if l == last else leaky_relu(z, mlp.spec.leaky_slope)
    return h, Cache(inputs, pre, id(mlp))


def backward(mlp: MLP, cache: Cache, grad_out):
    """Reverse pass.  Returns ``(param_grads, grad_input)``.

    ``param_grads`` is ordered like ``mlp.params`` (weights then biases).
    """
    if cache.owner != id(mlp) or len(cache.pre) != len(mlp.weights):
        raise ValueError("cache does not come from a forward pass of this network")
    g = np.asarray(grad_out, dtype=float)
    if g.ndim == 1:
        g = g[None, :]
    if g.shape != cache.pre[-1].shape:
        raise ValueError(f"output gradient shape {g.shape} != {cache.pre[-1].shape}")
    slope = mlp.spec.leaky_slope
    n = len(mlp.weights)
    dW, db = [None] * n, [None] * n
    for l in range(n - 1, -1, -1):
        if l != n - 1:
            g = g * np.where(cache.pre[l] >= 0, 1.0, slope)
        dW[l] = g.T @ cache.inputs[l]
        db[l] = g.sum(axis=0)
        g = g @ mlp.weights[l]
    return dW + db, g


def adam_step(mlp: MLP, grads, state: AdamState):
    """In-place Adam update with bias correction; returns ``(mlp, state)``."""
    params = mlp.params
    if len(grads) != len(params):
        raise ValueError("gradient list does not match parameters")
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        if not np.all(np.isfinite(g)):
            raise FloatingPointError("non-finite gradient")
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    state.step += 1
    c1 = 1.0 - state.beta1 ** state.step
    c2 = 1.0 - state.beta2 ** state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return mlp, state


# --- checkpoints ------------------------------------------------------------

def mlp_to_dict(mlp: MLP) -> dict:
    # repr() of a float round-trips exactly, so JSON numbers are bit-exact
    return {
        "format": "flowembed-mlp",
        "version": CHECKPOINT_VERSION,
        "spec": {
            "layer_sizes": list(mlp.spec.layer_sizes),
            "leaky_slope": mlp.spec.leaky_slope,
            "seed": mlp.spec.seed,
        },
        "weights": [w.tolist() for w in mlp.weights],
        "biases": [b.tolist() for b in mlp.biases],
    }


def mlp_from_dict(blob: dict) -> MLP:
    if blob.get("format") != "flowembed-mlp":
        raise ValueError("not an MLP checkpoint")
    if blob.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {blob.get('version')}")
    spec = MLPSpec(tuple(blob["spec"]["layer_sizes"]), blob["spec"]["leaky_slope"], blob["spec"]["seed"])
    weights = [np.array(w, dtype=float).reshape(o, i) for w, i, o in
               zip(blob["weights"], spec.layer_sizes[:-1], spec.layer_sizes[1:])]
    biases = [np.array(b, dtype=float).reshape(o) for b, o in zip(blob["biases"], spec.layer_sizes[1:])]
    return MLP(spec, weights, biases)


def save_mlp(mlp: MLP, path) -> None:
    Path(path).write_text(json.dumps(mlp_to_dict(mlp)), encoding="utf-8")


def load_mlp(path) -> MLP:
    return mlp_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
