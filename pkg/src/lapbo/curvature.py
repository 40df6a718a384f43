"""Diagonal empirical Fisher and the (n, tau) regularisation of it.

The regularised precision of parameter ``j`` in layer ``l`` is
``n_g * fisher_j + tau_g`` where ``g`` is the hyperparameter group that owns
layer ``l``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .nn import (
    ArchSpec,
    Dataset,
    LayerParams,
    Network,
    _backprop,
    _check_inputs,
    _check_labels,
    read_params,
    write_params,
)

LAYOUTS = ("single", "per-layer", "hidden-vs-final")


@dataclass(frozen=True)
class DiagonalCurvature:
    arch: ArchSpec
    diag: LayerParams

    def __post_init__(self):
        for a in self.diag.weights + self.diag.biases:
            if not np.all(np.isfinite(a)) or np.any(a < 0):
                raise ValueError("curvature entries must be finite and non-negative")


@dataclass(frozen=True)
class HyperGroup:
    layer_indices: frozenset
    n_value: float
    tau_value: float

    def __post_init__(self):
        object.__setattr__(self, "layer_indices", frozenset(int(i) for i in self.layer_indices))
        if not (self.n_value > 0 and np.isfinite(self.n_value)):
            raise ValueError(f"n_value must be positive and finite, got {self.n_value}")
        if not (self.tau_value > 0 and np.isfinite(self.tau_value)):
            raise ValueError(f"tau_value must be positive and finite, got {self.tau_value}")


@dataclass(frozen=True)
class PrecisionDiag:
    arch: ArchSpec
    diag: LayerParams


def diagonal_fisher(net: Network, data: Dataset, shard_size: int = 4096) -> DiagonalCurvature:
    """Mean over the dataset of squared per-example NLL gradients.

    Examples are processed in contiguous shards of ``shard_size`` in dataset
    order, so the summation order (and result) is fixed for a given dataset.
    """
    X = _check_inputs(net, data.inputs)
    y = _check_labels(net, data.labels)
    n = X.shape[0]
    sw = [np.zeros_like(w) for w in net.weights]
    sb = [np.zeros_like(b) for b in net.biases]
    for start in range(0, n, shard_size):
        parts = _backprop(net, X[start:start + shard_size], y[start:start + shard_size])
        for i, (d, a) in enumerate(parts):
            # sum_n outer(d_n, a_n)**2 == (d**2).T @ (a**2)
            sw[i] += (d * d).T @ (a * a)
            sb[i] += (d * d).sum(axis=0)
    return DiagonalCurvature(net.arch, LayerParams(tuple(w / n for w in sw), tuple(b / n for b in sb)))


def check_partition(groups: Sequence[HyperGroup], n_layers: int) -> None:
    seen: set[int] = set()
    for g in groups:
        if seen & g.layer_indices:
            raise ValueError(f"layers {sorted(seen & g.layer_indices)} belong to more than one group")
        seen |= g.layer_indices
    if seen != set(range(n_layers)):
        raise ValueError(f"groups cover layers {sorted(seen)}, need exactly 0..{n_layers - 1}")


def regularize(curv: DiagonalCurvature, groups: Sequence[HyperGroup]) -> PrecisionDiag:
    n_layers = len(curv.diag)
    check_partition(groups, n_layers)
    owner = {}
    for g in groups:
        for i in g.layer_indices:
            owner[i] = g
    ws, bs = [], []
    for i in range(n_layers):
        g = owner[i]
        w, b = curv.diag.layer(i)
        ws.append(g.n_value * w + g.tau_value)
        bs.append(g.n_value * b + g.tau_value)
    return PrecisionDiag(curv.arch, LayerParams(tuple(ws), tuple(bs)))


def layer_layout(kind: str, n_layers: int) -> list[frozenset]:
    """Which layers share one (n, tau) pair.

    ``hidden-vs-final`` puts every layer but the last into one group and the
    output layer into a second group.
    """
    if kind == "single":
        return [frozenset(range(n_layers))]
    if kind == "per-layer":
        return [frozenset([i]) for i in range(n_layers)]
    if kind == "hidden-vs-final":
        if n_layers < 2:
            raise ValueError("hidden-vs-final needs a network with at least 2 layers")
        return [frozenset(range(n_layers - 1)), frozenset([n_layers - 1])]
    raise ValueError(f"unknown group layout {kind!r}; choose from {LAYOUTS}")


def groups_from_log10(coords: Iterable[float], layout: Sequence[frozenset]) -> list[HyperGroup]:
    """Map ``(log10 n_1, log10 tau_1, log10 n_2, ...)`` onto hyperparameter groups."""
    coords = np.asarray(list(coords), dtype=np.float64)
    if coords.size != 2 * len(layout):
        raise ValueError(f"expected {2 * len(layout)} coordinates for {len(layout)} groups, got {coords.size}")
    return [
        HyperGroup(layers, float(10.0 ** coords[2 * k]), float(10.0 ** coords[2 * k + 1]))
        for k, layers in enumerate(layout)
    ]


def save_curvature(curv: DiagonalCurvature, path) -> None:
    write_params(path, curv.arch, curv.diag, "curvature")


def load_curvature(path, expected_arch: ArchSpec | None = None) -> DiagonalCurvature:
    arch, params, _ = read_params(path, "curvature")
    if expected_arch is not None and arch != expected_arch:
        raise ValueError(f"{path}: curvature built for {arch}, network is {expected_arch}")
    return DiagonalCurvature(arch, params)
