"""Synthetic objectives for exercising the search loops."""

from __future__ import annotations

import hashlib

import numpy as np

from .metrics import ScoreReport

BRANIN_MIN = 0.397887357729738


def branin(x1, x2):
    a, b, c = 1.0, 5.1 / (4 * np.pi**2), 5.0 / np.pi
    r, s, t = 6.0, 10.0, 1.0 / (8 * np.pi)
    return a * (x2 - b * x1**2 + c * x1 - r) ** 2 + s * (1 - t) * np.cos(x1) + s


class ScalarObjective:
    """Adapts ``fn(point) -> value`` to the search objective protocol.

    The value is reported as ``ece_pct`` with ``accuracy_pct = 100`` so the
    recorded cost equals the value exactly. With ``noise > 0`` Gaussian noise
    is added, drawn from a stream keyed on ``(eval_seed, point)``.
    """

    def __init__(self, fn, noise: float = 0.0):
        self.fn = fn
        self.noise = noise

    def __call__(self, point, eval_seed: int) -> ScoreReport:
        point = np.asarray(point, dtype=np.float64)
        v = float(self.fn(point))
        if self.noise > 0:
            key = hashlib.sha256(point.tobytes()).digest()[:8]
            rng = np.random.default_rng([int(eval_seed), int.from_bytes(key, "little")])
            v += self.noise * rng.standard_normal()
        return ScoreReport(100.0, float("nan"), v, v)


def branin_on_box(bounds):
    """Branin with its domain [-5, 10] x [0, 15] stretched onto a 2-D ``bounds`` box."""
    (l1, h1), (l2, h2) = bounds

    def fn(p):
        x1 = -5.0 + 15.0 * (p[0] - l1) / (h1 - l1)
        x2 = 15.0 * (p[1] - l2) / (h2 - l2)
        return branin(x1, x2)

    return fn


def sphere(center):
    center = np.asarray(center, dtype=np.float64)
    return lambda p: float(np.sum((np.asarray(p) - center) ** 2))
