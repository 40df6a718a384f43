"""Exact GP regression with a squared-exponential kernel.

Costs are standardised before fitting. The lengthscale is picked from a small
fixed grid by log marginal likelihood; signal and noise variances are fixed
(in standardised units).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

JITTER_LADDER = (0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6)


class GPFitError(RuntimeError):
    pass


@dataclass(frozen=True)
class KernelConfig:
    lengthscales: tuple[float, ...] = (0.25, 0.5, 1.0, 2.0, 4.0)
    signal_var: float = 1.0
    noise_var: float = 0.01
    standardize: bool = True


@dataclass(frozen=True)
class GPModel:
    X: np.ndarray
    y: np.ndarray
    y_mean: float
    y_scale: float
    lengthscale: float
    signal_var: float
    noise_var: float
    jitter: float
    chol: np.ndarray  # lower factor of K + (noise + jitter) I
    alpha: np.ndarray  # (K + noise I)^-1 @ standardised y
    log_marginal_likelihood: float

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def prior_std(self) -> float:
        return float(np.sqrt(self.signal_var) * self.y_scale)

    def gram(self) -> np.ndarray:
        return se_kernel(self.X, self.X, self.lengthscale, self.signal_var)


def se_kernel(A, B, lengthscale: float, signal_var: float = 1.0) -> np.ndarray:
    A = np.atleast_2d(A)
    B = np.atleast_2d(B)
    d2 = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * A @ B.T
    np.maximum(d2, 0.0, out=d2)
    return signal_var * np.exp(-0.5 * d2 / lengthscale**2)


def _factor(K: np.ndarray, noise_var: float):
    n = K.shape[0]
    for jitter in JITTER_LADDER:
        try:
            L = np.linalg.cholesky(K + (noise_var + jitter) * np.eye(n))
        except np.linalg.LinAlgError:
            continue
        if np.all(np.isfinite(L)):
            return L, jitter
    raise GPFitError(f"Cholesky failed for a {n}x{n} Gram matrix even with jitter {JITTER_LADDER[-1]}")


def _lml(L, alpha, ys) -> float:
    n = len(ys)
    return float(-0.5 * ys @ alpha - np.log(np.diag(L)).sum() - 0.5 * n * np.log(2 * np.pi))


def gp_fit(points, costs, kernel_cfg: KernelConfig = KernelConfig()) -> GPModel:
    X = np.atleast_2d(np.asarray(points, dtype=np.float64))
    y = np.asarray(costs, dtype=np.float64).ravel()
    if X.shape[0] < 1:
        raise ValueError("need at least one observation")
    if X.shape[0] != y.shape[0]:
        raise ValueError(f"{X.shape[0]} points but {y.shape[0]} costs")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("points and costs must be finite")

    if kernel_cfg.standardize:
        mu = float(y.mean())
        sd = float(y.std())
        if not sd > 0:
            sd = 1.0
    else:
        mu, sd = 0.0, 1.0
    ys = (y - mu) / sd

    best = None
    for ell in kernel_cfg.lengthscales:
        K = se_kernel(X, X, ell, kernel_cfg.signal_var)
        L, jitter = _factor(K, kernel_cfg.noise_var)
        alpha = cho_solve((L, True), ys)
        lml = _lml(L, alpha, ys)
        # strict '>' keeps the first (shortest) lengthscale on ties
        if best is None or lml > best[0]:
            best = (lml, ell, L, jitter, alpha)
    lml, ell, L, jitter, alpha = best
    for a in (X, y, L, alpha):
        a.setflags(write=False)
    return GPModel(X, y, mu, sd, float(ell), kernel_cfg.signal_var, kernel_cfg.noise_var,
                   jitter, L, alpha, lml)


def gp_predict(model: GPModel, queries, standardized: bool = False):
    """Latent posterior mean and stddev at each row of ``queries``."""
    Q = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    Ks = se_kernel(Q, model.X, model.lengthscale, model.signal_var)
    mean = Ks @ model.alpha
    v = solve_triangular(model.chol, Ks.T, lower=True)
    var = model.signal_var - (v * v).sum(axis=0)
    std = np.sqrt(np.maximum(var, 0.0))
    if standardized:
        return mean, std
    return mean * model.y_scale + model.y_mean, std * model.y_scale


def gp_posterior(model: GPModel, query) -> tuple[float, float]:
    q = np.asarray(query, dtype=np.float64).ravel()
    if q.size != model.X.shape[1]:
        raise ValueError(f"query has {q.size} dims, model has {model.X.shape[1]}")
    m, s = gp_predict(model, q[None, :])
    return float(m[0]), float(s[0])
