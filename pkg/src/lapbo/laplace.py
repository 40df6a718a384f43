"""Diagonal Gaussian weight posterior and Monte Carlo predictive."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .curvature import DiagonalCurvature, HyperGroup, PrecisionDiag, regularize
from .nn import LayerParams, Network, _check_inputs, forward_batch


@dataclass(frozen=True)
class LaplacePosterior:
    mean: Network
    precision: PrecisionDiag
    groups: tuple[HyperGroup, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "groups", tuple(self.groups))
        if self.precision.arch != self.mean.arch or not self.precision.diag.same_shape(self.mean.params):
            raise ValueError("precision does not match the mean network")
        for a in self.precision.diag.weights + self.precision.diag.biases:
            if not np.all(a > 0):
                raise ValueError("precision must be strictly positive")

    @property
    def stddev(self) -> LayerParams:
        return self.precision.diag.map(lambda p: 1.0 / np.sqrt(p))


@dataclass(frozen=True)
class PredictiveResult:
    probs: np.ndarray
    t_samples: int


def laplace_posterior(net: Network, curv: DiagonalCurvature, groups) -> LaplacePosterior:
    if curv.arch != net.arch:
        raise ValueError("curvature was computed for a different architecture")
    return LaplacePosterior(net, regularize(curv, groups), tuple(groups))


def _noise(post: LaplacePosterior, rng: np.random.Generator) -> LayerParams:
    """Scaled Gaussian noise ``eps / sqrt(precision)``; layers consumed in order W0, b0, W1, b1..."""
    ws, bs = [], []
    for pw, pb in zip(post.precision.diag.weights, post.precision.diag.biases):
        ws.append(rng.standard_normal(pw.shape) / np.sqrt(pw))
        bs.append(rng.standard_normal(pb.shape) / np.sqrt(pb))
    return LayerParams(tuple(ws), tuple(bs))


def _shift(post: LaplacePosterior, noise: LayerParams, sign: float) -> Network:
    m = post.mean
    return Network(m.arch, LayerParams(
        tuple(w + sign * e for w, e in zip(m.weights, noise.weights)),
        tuple(b + sign * e for b, e in zip(m.biases, noise.biases)),
    ))


def sample_weights(post: LaplacePosterior, rng: np.random.Generator) -> Network:
    """One draw ``mean + eps / sqrt(precision)`` with independent standard-normal ``eps``."""
    return _shift(post, _noise(post, rng), 1.0)


def sample_stream(seed: int, index: int) -> np.random.Generator:
    """Independent generator for MC draw ``index`` of a run seeded with ``seed``."""
    return np.random.default_rng([int(seed), int(index)])


def predict_mc(post: LaplacePosterior, inputs, t: int, seed: int,
               antithetic: bool = True) -> PredictiveResult:
    """Average softmax output over ``t`` weight draws.

    Each draw is made once and applied to every input row. With
    ``antithetic`` the draws come in mirrored pairs ``mean +/- noise`` (an odd
    ``t`` adds one unpaired draw); every draw still has the posterior as its
    marginal, but odd-order noise terms cancel within a pair.
    """
    if t < 1:
        raise ValueError("t must be >= 1")
    X = _check_inputs(post.mean, np.atleast_2d(np.asarray(inputs, dtype=np.float64)))
    acc = np.zeros((X.shape[0], post.mean.arch.n_classes))
    if antithetic:
        for k in range(t // 2):
            noise = _noise(post, sample_stream(seed, k))
            acc += forward_batch(_shift(post, noise, 1.0), X)
            acc += forward_batch(_shift(post, noise, -1.0), X)
        if t % 2:
            acc += forward_batch(sample_weights(post, sample_stream(seed, t // 2)), X)
    else:
        for i in range(t):
            acc += forward_batch(sample_weights(post, sample_stream(seed, i)), X)
    probs = acc / t
    # renormalise away the rounding of the running sum
    probs /= probs.sum(axis=1, keepdims=True)
    probs.setflags(write=False)
    return PredictiveResult(probs, t)


def predictive_entropy(probs) -> np.ndarray:
    p = np.asarray(probs)
    with np.errstate(divide="ignore", invalid="ignore"):
        return -np.where(p > 0, p * np.log(p), 0.0).sum(axis=1)
