"""Small feed-forward softmax classifier with exact backprop and plain SGD.

Parameters are stored per layer as a ``(fan_out, fan_in)`` weight matrix and a
bias vector. Everything here is numpy; networks are treated as immutable
values (arrays are flagged read-only after construction).
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

log = logging.getLogger(__name__)

ACTIVATIONS = ("tanh", "relu")
FORMAT_VERSION = 1
_MAGIC = b"LAPBO-PARAMS"


class TrainingDivergedError(RuntimeError):
    def __init__(self, epoch: int, loss: float):
        super().__init__(f"non-finite training loss {loss!r} at epoch {epoch}")
        self.epoch = epoch
        self.loss = loss


@dataclass(frozen=True)
class ArchSpec:
    """Layer sizes ``(d_in, hidden..., n_classes)`` and the hidden activation."""

    layer_sizes: tuple[int, ...]
    activation: str = "tanh"

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        object.__setattr__(self, "layer_sizes", sizes)
        if len(sizes) < 2:
            raise ValueError(f"need at least 2 layer sizes, got {sizes}")
        if any(s < 1 for s in sizes):
            raise ValueError(f"layer sizes must be >= 1, got {sizes}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def n_layers(self) -> int:
        return len(self.layer_sizes) - 1

    @property
    def n_inputs(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_classes(self) -> int:
        return self.layer_sizes[-1]

    def shapes(self) -> list[tuple[tuple[int, int], tuple[int]]]:
        return [((o, i), (o,)) for i, o in zip(self.layer_sizes[:-1], self.layer_sizes[1:])]

    def to_dict(self) -> dict:
        return {"layer_sizes": list(self.layer_sizes), "activation": self.activation}


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class LayerParams:
    """Per-layer arrays shaped like a network: used for weights, gradients,
    curvature diagonals and precisions alike."""

    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]

    def __post_init__(self):
        object.__setattr__(self, "weights", tuple(_frozen(w) for w in self.weights))
        object.__setattr__(self, "biases", tuple(_frozen(b) for b in self.biases))
        if len(self.weights) != len(self.biases):
            raise ValueError("weights and biases must have the same number of layers")

    def __len__(self):
        return len(self.weights)

    def layer(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        return self.weights[i], self.biases[i]

    def flat(self) -> np.ndarray:
        """Row-major concatenation ``W0, b0, W1, b1, ...``."""
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            parts.append(b.ravel())
        return np.concatenate(parts)

    def map(self, fn) -> "LayerParams":
        return LayerParams(tuple(fn(w) for w in self.weights), tuple(fn(b) for b in self.biases))

    def same_shape(self, other: "LayerParams") -> bool:
        return len(self) == len(other) and all(
            a.shape == b.shape
            for a, b in zip(self.weights + self.biases, other.weights + other.biases)
        )


# A gradient is just parameter-shaped data.
Gradient = LayerParams


def _unflatten(arch: ArchSpec, flat: np.ndarray) -> LayerParams:
    ws, bs, pos = [], [], 0
    for wshape, bshape in arch.shapes():
        nw = wshape[0] * wshape[1]
        ws.append(flat[pos:pos + nw].reshape(wshape))
        pos += nw
        bs.append(flat[pos:pos + bshape[0]])
        pos += bshape[0]
    if pos != flat.size:
        raise ValueError(f"expected {pos} parameters, got {flat.size}")
    return LayerParams(tuple(ws), tuple(bs))


@dataclass(frozen=True)
class Network:
    arch: ArchSpec
    params: LayerParams

    def __post_init__(self):
        shapes = self.arch.shapes()
        if len(self.params) != len(shapes):
            raise ValueError(f"arch has {len(shapes)} layers, params have {len(self.params)}")
        for (ws, bs), w, b in zip(shapes, self.params.weights, self.params.biases):
            if w.shape != ws or b.shape != bs:
                raise ValueError(f"layer shape mismatch: {w.shape}/{b.shape} vs {ws}/{bs}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError("network parameters must be finite")

    @property
    def weights(self):
        return self.params.weights

    @property
    def biases(self):
        return self.params.biases

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    @classmethod
    def from_flat(cls, arch: ArchSpec, flat) -> "Network":
        return cls(arch, _unflatten(arch, np.asarray(flat, dtype=np.float64)))


@dataclass(frozen=True)
class Dataset:
    inputs: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        x = _frozen(np.atleast_2d(self.inputs))
        y = np.array(self.labels, dtype=np.int64).ravel()
        y.setflags(write=False)
        if x.shape[0] != y.shape[0]:
            raise ValueError(f"{x.shape[0]} inputs but {y.shape[0]} labels")
        if x.shape[0] < 1:
            raise ValueError("dataset must contain at least one example")
        if np.any(y < 0):
            raise ValueError("labels must be non-negative class indices")
        object.__setattr__(self, "inputs", x)
        object.__setattr__(self, "labels", y)

    def __len__(self):
        return self.inputs.shape[0]


def init_network(arch: ArchSpec, seed: int) -> Network:
    """Gaussian weights with stddev ``1/sqrt(fan_in)``, zero biases."""
    rng = np.random.default_rng(seed)
    ws, bs = [], []
    for (fan_out, fan_in), _ in arch.shapes():
        ws.append(rng.standard_normal((fan_out, fan_in)) / np.sqrt(fan_in))
        bs.append(np.zeros(fan_out))
    return Network(arch, LayerParams(tuple(ws), tuple(bs)))


def _act(name, z):
    return np.tanh(z) if name == "tanh" else np.maximum(z, 0.0)


def _act_grad(name, z, h):
    return 1.0 - h * h if name == "tanh" else (z > 0).astype(np.float64)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    m = logits.max(axis=-1, keepdims=True)
    shifted = logits - m
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    p = np.exp(log_softmax(logits))
    return p / p.sum(axis=-1, keepdims=True)


def _check_inputs(net: Network, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != net.arch.n_inputs:
        raise ValueError(f"input dimension {x.shape[-1]} != network input {net.arch.n_inputs}")
    if not np.all(np.isfinite(x)):
        raise ValueError("inputs must be finite")
    return x


def _check_labels(net: Network, y: np.ndarray) -> np.ndarray:
    y = np.asarray(y, dtype=np.int64)
    if np.any(y < 0) or np.any(y >= net.arch.n_classes):
        raise ValueError(f"labels must lie in [0, {net.arch.n_classes})")
    return y


def _forward_cache(net: Network, X: np.ndarray):
    """Returns (layer inputs, pre-activations, logits) for a batch."""
    acts, pres = [X], []
    h = X
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = h @ w.T + b
        pres.append(z)
        if i < last:
            h = _act(net.arch.activation, z)
            acts.append(h)
    return acts, pres, pres[-1]


def logits_batch(net: Network, X) -> np.ndarray:
    X = _check_inputs(net, np.atleast_2d(X))
    return _forward_cache(net, X)[2]


def forward_batch(net: Network, X) -> np.ndarray:
    """Class probabilities for each row of ``X``; shape ``(N, K)``."""
    return softmax(logits_batch(net, X))


def forward(net: Network, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("forward expects a single input vector; use forward_batch for matrices")
    return forward_batch(net, x[None, :])[0]


def nll_batch(net: Network, X, y) -> np.ndarray:
    """Per-example negative log-likelihood (nats)."""
    X = _check_inputs(net, np.atleast_2d(X))
    y = _check_labels(net, y)
    lp = log_softmax(_forward_cache(net, X)[2])
    return -lp[np.arange(len(y)), y]


def _backprop(net: Network, X: np.ndarray, y: np.ndarray):
    """Per-example output deltas for every layer together with that layer's inputs.

    Returns a list of ``(delta, layer_input)`` with shapes ``(N, fan_out)`` and
    ``(N, fan_in)``; the gradient of example ``n`` for layer ``l`` is
    ``outer(delta[n], layer_input[n])`` for the weights and ``delta[n]`` for the bias.
    """
    acts, pres, logits = _forward_cache(net, X)
    delta = softmax(logits)
    delta[np.arange(len(y)), y] -= 1.0
    out = [None] * len(net.weights)
    for i in range(len(net.weights) - 1, -1, -1):
        out[i] = (delta, acts[i])
        if i > 0:
            delta = (delta @ net.weights[i]) * _act_grad(net.arch.activation, pres[i - 1], acts[i])
    return out


def grad_nll(net: Network, x, y: int) -> Gradient:
    """Exact gradient of ``-log p(y | x, W)`` for a single example."""
    x = _check_inputs(net, np.asarray(x, dtype=np.float64))
    if x.ndim != 1:
        raise ValueError("grad_nll expects a single input vector")
    y = _check_labels(net, np.array([y]))
    parts = _backprop(net, x[None, :], y)
    return Gradient(tuple(np.outer(d[0], a[0]) for d, a in parts), tuple(d[0].copy() for d, _ in parts))


def mean_grad_nll(net: Network, X, y) -> Gradient:
    """Gradient of the mean NLL over a batch."""
    X = _check_inputs(net, np.atleast_2d(X))
    y = _check_labels(net, y)
    n = X.shape[0]
    parts = _backprop(net, X, y)
    return Gradient(tuple(d.T @ a / n for d, a in parts), tuple(d.sum(axis=0) / n for d, _ in parts))


def train_sgd(
    net: Network,
    data: Dataset,
    epochs: int,
    lr: float,
    batch_size: int,
    seed: int,
    history: list | None = None,
) -> Network:
    """Mini-batch SGD on the mean NLL. Batch order is reshuffled each epoch from ``seed``.

    If ``history`` is given, the mean training NLL of each epoch (averaged over
    its mini-batches) is appended to it.
    """
    if epochs < 1:
        raise ValueError("epochs must be >= 1")
    if not lr >= 0:
        raise ValueError("lr must be non-negative")
    n = len(data)
    if not 1 <= batch_size <= n:
        raise ValueError(f"batch_size must be in [1, {n}]")
    X = _check_inputs(net, data.inputs)
    y = _check_labels(net, data.labels)

    rng = np.random.default_rng(seed)
    ws = [w.copy() for w in net.weights]
    bs = [b.copy() for b in net.biases]
    cur = net
    for epoch in range(epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            xb, yb = X[idx], y[idx]
            acts, pres, logits = _forward_cache(cur, xb)
            batch_loss = float(-log_softmax(logits)[np.arange(len(yb)), yb].mean())
            if not np.isfinite(batch_loss):
                raise TrainingDivergedError(epoch, batch_loss)
            total += batch_loss * len(idx)
            if lr == 0:
                continue
            g = mean_grad_nll(cur, xb, yb)
            for i in range(len(ws)):
                ws[i] -= lr * g.weights[i]
                bs[i] -= lr * g.biases[i]
            if not all(np.all(np.isfinite(w)) for w in ws):
                raise TrainingDivergedError(epoch, float("nan"))
            cur = Network(net.arch, LayerParams(tuple(ws), tuple(bs)))
        mean_loss = total / n
        if history is not None:
            history.append(mean_loss)
        log.debug("epoch %d mean nll %.6f", epoch, mean_loss)
    return cur


def accuracy(net: Network, data: Dataset) -> float:
    """Fraction of correctly classified examples (argmax, lowest index wins ties)."""
    return float(np.mean(np.argmax(forward_batch(net, data.inputs), axis=1) == data.labels))


# -- persistence -------------------------------------------------------------
#
# File layout: one ASCII magic line, one JSON header line, then the flattened
# parameters (W0, b0, W1, b1, ... each row-major) as little-endian float64.


def write_params(path, arch: ArchSpec, params: LayerParams, kind: str, extra: dict | None = None):
    header = {"format_version": FORMAT_VERSION, "kind": kind, "arch": arch.to_dict()}
    if extra:
        header.update(extra)
    flat = params.flat().astype("<f8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(_MAGIC + b"\n")
        f.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        f.write(flat.tobytes())


def read_params(path, kind: str) -> tuple[ArchSpec, LayerParams, dict]:
    with open(path, "rb") as f:
        magic = f.readline().rstrip(b"\n")
        if magic != _MAGIC:
            raise ValueError(f"{path}: not a parameter file")
        header = json.loads(f.readline())
        raw = f.read()
    if header.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported format_version {header.get('format_version')}")
    if header.get("kind") != kind:
        raise ValueError(f"{path}: expected a {kind} file, found {header.get('kind')}")
    arch = ArchSpec(tuple(header["arch"]["layer_sizes"]), header["arch"]["activation"])
    flat = np.frombuffer(raw, dtype="<f8").astype(np.float64)
    return arch, _unflatten(arch, flat), header


def save_network(net: Network, path) -> None:
    write_params(path, net.arch, net.params, "network")


def load_network(path) -> Network:
    arch, params, _ = read_params(path, "network")
    return Network(arch, params)


def arch_from_sizes(sizes: Sequence[int], activation: str = "tanh") -> ArchSpec:
    return ArchSpec(tuple(sizes), activation)
