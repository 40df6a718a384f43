"""GP-Hedge Bayesian optimisation and the random-search baseline.

Both searches minimise a black-box ``objective(point, eval_seed)`` that returns
something with ``accuracy_pct`` and ``ece_pct`` attributes (a ScoreReport);
the cost of a point is ``(100 - accuracy_pct) + ece_pct``.

All acquisition functions work on the GP posterior in standardised cost
units, so ``xi`` and ``kappa`` are scale free.
"""

from __future__ import annotations

import json
import logging
import math
import warnings
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.stats import norm, qmc

from .gp import GPModel, KernelConfig, gp_fit, gp_predict
from .metrics import cost_of

log = logging.getLogger(__name__)

ACQUISITIONS = ("EI", "LCB", "PI")
TRACE_FORMAT_VERSION = 1
# cost assigned to a failed evaluation when nothing has been observed yet:
# 100 % error plus 100 % ECE
MAX_COST = 200.0


# -- acquisition functions ---------------------------------------------------


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


def acq_ei(mean, std, best_cost, xi=0.01):
    """Expected improvement below ``best_cost - xi`` (larger is better)."""
    mean, std = np.asarray(mean, dtype=np.float64), np.asarray(std, dtype=np.float64)
    imp = best_cost - mean - xi
    pos = std > 0
    safe = np.where(pos, std, 1.0)
    with np.errstate(over="ignore"):
        z = imp / safe
        pdf = norm.pdf(z)
    ei = np.where(pos, imp * norm.cdf(z) + safe * pdf, np.maximum(imp, 0.0))
    return _out(np.maximum(ei, 0.0))


def acq_lcb(mean, std, kappa=2.0):
    """Lower confidence bound (smaller is better)."""
    return _out(np.asarray(mean, dtype=np.float64) - kappa * np.asarray(std, dtype=np.float64))


def acq_pi(mean, std, best_cost, xi=0.01):
    """Probability that the cost falls below ``best_cost - xi``."""
    mean, std = np.asarray(mean, dtype=np.float64), np.asarray(std, dtype=np.float64)
    imp = best_cost - mean - xi
    pos = std > 0
    with np.errstate(over="ignore"):
        z = imp / np.where(pos, std, 1.0)
    pi = np.where(pos, norm.cdf(z), (imp > 0).astype(np.float64))
    return _out(pi)


# -- Hedge portfolio ---------------------------------------------------------


@dataclass(frozen=True)
class HedgeState:
    weights: tuple[float, float, float] = (1 / 3, 1 / 3, 1 / 3)
    beta: float = 0.9

    def __post_init__(self):
        w = tuple(float(v) for v in self.weights)
        if len(w) != 3 or any(not v > 0 for v in w):
            raise ValueError(f"hedge weights must be three positive numbers, got {w}")
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError(f"beta must lie in [0, 1], got {self.beta}")
        object.__setattr__(self, "weights", w)

    @property
    def probabilities(self) -> np.ndarray:
        w = np.asarray(self.weights)
        return w / w.sum()


def hedge_update(state: HedgeState, per_acq_costs) -> HedgeState:
    """``w_i <- w_i * beta**c_i`` followed by renormalisation to sum one."""
    c = np.asarray(per_acq_costs, dtype=np.float64)
    if c.shape != (3,) or not np.all(np.isfinite(c)):
        raise ValueError("need three finite costs")
    # beta**min(c) is common to all weights and cancels in the renormalisation;
    # dropping it first keeps beta = 0 well defined (0**0 = 1)
    w = np.asarray(state.weights) * np.power(state.beta, c - c.min())
    w = w / w.sum()
    # beta = 0 can zero a weight outright; keep it representable
    w = np.maximum(w, np.finfo(np.float64).tiny)
    return HedgeState(tuple(w), state.beta)


def normalized_hedge_costs(values) -> np.ndarray:
    """Min-max scale to [0, 1]; all-equal inputs map to zeros."""
    v = np.asarray(values, dtype=np.float64)
    span = v.max() - v.min()
    if not span > 0:
        return np.zeros_like(v)
    return (v - v.min()) / span


# -- configuration and records ----------------------------------------------


def default_bounds(n_groups: int = 1) -> tuple[tuple[float, float], ...]:
    """log10 n in [0, 8] and log10 tau in [-4, 4] for every group."""
    return ((0.0, 8.0), (-4.0, 4.0)) * n_groups


@dataclass(frozen=True)
class SearchConfig:
    bounds: tuple[tuple[float, float], ...] = default_bounds(1)
    budget: int = 50
    n_init: int = 5
    candidate_count: int = 2048
    beta: float = 0.9
    kappa: float = 2.0
    xi: float = 0.01
    seed: int = 0
    # seed handed to every objective call (common random numbers); None -> seed
    eval_seed: int | None = None
    kernel: KernelConfig = field(default_factory=KernelConfig)
    # "log": the GP models log(cost - min(cost) + warp_offset) instead of the raw cost
    cost_warp: str = "none"
    warp_offset: float = 0.01

    def __post_init__(self):
        b = tuple((float(lo), float(hi)) for lo, hi in self.bounds)
        if not b or any(not hi > lo for lo, hi in b):
            raise ValueError(f"invalid bounds {b}")
        object.__setattr__(self, "bounds", b)
        if self.budget < 1 or self.n_init < 1:
            raise ValueError("budget and n_init must be >= 1")
        if self.candidate_count < 1:
            raise ValueError("candidate_count must be >= 1")
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError("beta must lie in [0, 1]")
        if self.cost_warp not in ("none", "log"):
            raise ValueError(f"unknown cost_warp {self.cost_warp!r}")
        if self.eval_seed is None:
            object.__setattr__(self, "eval_seed", int(self.seed))

    @property
    def dim(self) -> int:
        return len(self.bounds)

    @property
    def lower(self) -> np.ndarray:
        return np.array([lo for lo, _ in self.bounds])

    @property
    def upper(self) -> np.ndarray:
        return np.array([hi for _, hi in self.bounds])

    def to_dict(self) -> dict:
        d = asdict(self)
        d["bounds"] = [list(b) for b in self.bounds]
        d["kernel"]["lengthscales"] = list(self.kernel.lengthscales)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SearchConfig":
        d = dict(d)
        k = dict(d.pop("kernel", {}))
        if "lengthscales" in k:
            k["lengthscales"] = tuple(k["lengthscales"])
        d["bounds"] = tuple(tuple(b) for b in d["bounds"])
        return cls(kernel=KernelConfig(**k), **d)


@dataclass(frozen=True)
class EvaluationRecord:
    iteration: int
    point: tuple[float, ...]
    chosen_acquisition: str  # EI, LCB, PI, RANDOM or INIT
    accuracy_pct: float
    ece_pct: float
    cost: float
    eval_seed: int
    status: str = "ok"  # "failed": objective raised; cost is a penalty, metrics are nan
    hedge_probs: tuple[float, ...] | None = None

    def to_json(self) -> str:
        d = asdict(self)
        d["kind"] = "evaluation"
        d["point"] = list(self.point)
        if self.status != "ok":
            d["accuracy_pct"] = d["ece_pct"] = None
        if self.hedge_probs is not None:
            d["hedge_probs"] = list(self.hedge_probs)
        return json.dumps(d, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "EvaluationRecord":
        d = {k: v for k, v in d.items() if k != "kind"}
        for k in ("accuracy_pct", "ece_pct"):
            if d.get(k) is None:
                d[k] = math.nan
        d["point"] = tuple(d["point"])
        if d.get("hedge_probs") is not None:
            d["hedge_probs"] = tuple(d["hedge_probs"])
        return cls(**d)


Objective = Callable[[np.ndarray, int], object]


def _evaluate(objective: Objective, point, iteration, acq, cfg, records, hedge_probs=None):
    try:
        res = objective(np.array(point), cfg.eval_seed)
        acc, ece = float(res.accuracy_pct), float(res.ece_pct)
        if not (np.isfinite(acc) and np.isfinite(ece)):
            raise ValueError(f"non-finite objective value ({acc}, {ece})")
        rec = EvaluationRecord(iteration, tuple(float(v) for v in point), acq, acc, ece,
                               cost_of(acc, ece), int(cfg.eval_seed), "ok", hedge_probs)
    except Exception as exc:  # noqa: BLE001 - any objective failure is recorded, not raised
        ok = [r.cost for r in records if r.status == "ok"]
        penalty = max(ok) if ok else MAX_COST
        log.warning("objective failed at %s (%s); penalty cost %.3f", point, exc, penalty)
        rec = EvaluationRecord(iteration, tuple(float(v) for v in point), acq, math.nan, math.nan,
                               penalty, int(cfg.eval_seed), "failed", hedge_probs)
    return rec


class _Trace:
    def __init__(self, path, method, cfg, meta):
        self.f = None
        if path is not None:
            path = Path(path)
            path.parent.mkdir(parents=True, exist_ok=True)
            self.f = open(path, "w")
            header = {"format_version": TRACE_FORMAT_VERSION, "kind": "header", "method": method,
                      "config": cfg.to_dict(), "meta": meta or {}}
            self.f.write(json.dumps(header, sort_keys=True) + "\n")
            self.f.flush()

    def append(self, rec: EvaluationRecord):
        if self.f is not None:
            self.f.write(rec.to_json() + "\n")
            self.f.flush()

    def close(self):
        if self.f is not None:
            self.f.close()


def read_trace(path) -> tuple[dict, list[EvaluationRecord]]:
    """Returns ``(header, records)`` for a JSONL trace file."""
    with open(path) as f:
        lines = [ln for ln in f if ln.strip()]
    if not lines:
        raise ValueError(f"{path}: empty trace")
    header = json.loads(lines[0])
    if header.get("kind") != "header" or header.get("format_version") != TRACE_FORMAT_VERSION:
        raise ValueError(f"{path}: missing or unsupported trace header")
    return header, [EvaluationRecord.from_dict(json.loads(ln)) for ln in lines[1:]]


def best_so_far(records: Sequence[EvaluationRecord]) -> np.ndarray:
    return np.minimum.accumulate(np.array([r.cost for r in records], dtype=np.float64))


# -- search loops ------------------------------------------------------------


def _sobol(rng, d, n):
    eng = qmc.Sobol(d, scramble=True, seed=rng)
    m = int(math.log2(n)) if n > 0 else 0
    if 2**m == n:
        return eng.random_base2(m)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        return eng.random(n)


def _scale(cfg: SearchConfig, unit):
    return cfg.lower + unit * (cfg.upper - cfg.lower)


@dataclass(frozen=True)
class Proposal:
    chosen: np.ndarray
    proposals: tuple[np.ndarray, np.ndarray, np.ndarray]  # EI, LCB, PI
    chosen_index: int

    @property
    def acquisition(self) -> str:
        return ACQUISITIONS[self.chosen_index]


def propose_portfolio(model: GPModel, hedge: HedgeState, cfg: SearchConfig,
                      rng: np.random.Generator) -> Proposal:
    """Optimise EI, LCB and PI over one shared candidate set and let Hedge pick."""
    cand = _scale(cfg, _sobol(rng, cfg.dim, cfg.candidate_count))
    mean, std = gp_predict(model, cand, standardized=True)
    best = float(((model.y - model.y_mean) / model.y_scale).min())
    # argmax/argmin return the lowest index on ties
    i_ei = int(np.argmax(acq_ei(mean, std, best, cfg.xi)))
    i_lcb = int(np.argmin(acq_lcb(mean, std, cfg.kappa)))
    i_pi = int(np.argmax(acq_pi(mean, std, best, cfg.xi)))
    proposals = (cand[i_ei].copy(), cand[i_lcb].copy(), cand[i_pi].copy())
    k = int(rng.choice(3, p=hedge.probabilities))
    return Proposal(proposals[k], proposals, k)


def random_search(objective: Objective, cfg: SearchConfig, trace_path=None,
                  meta: dict | None = None) -> list[EvaluationRecord]:
    """``cfg.budget`` i.i.d. uniform points in the bounds box, in order."""
    rng = np.random.default_rng(cfg.seed)
    trace = _Trace(trace_path, "random", cfg, meta)
    records: list[EvaluationRecord] = []
    try:
        for it in range(cfg.budget):
            x = _scale(cfg, rng.random(cfg.dim))
            rec = _evaluate(objective, x, it, "RANDOM", cfg, records)
            records.append(rec)
            trace.append(rec)
    finally:
        trace.close()
    return records


def bo_search(objective: Objective, cfg: SearchConfig, trace_path=None,
              meta: dict | None = None) -> list[EvaluationRecord]:
    """Latin-hypercube initial design followed by GP-Hedge proposals."""
    if cfg.budget < cfg.n_init:
        raise ValueError("budget must be >= n_init")
    rng = np.random.default_rng(cfg.seed)
    trace = _Trace(trace_path, "bo", cfg, meta)
    records: list[EvaluationRecord] = []
    hedge = HedgeState(beta=cfg.beta)
    try:
        init = _scale(cfg, qmc.LatinHypercube(cfg.dim, seed=rng).random(cfg.n_init))
        for it, x in enumerate(init):
            rec = _evaluate(objective, x, it, "INIT", cfg, records)
            records.append(rec)
            trace.append(rec)

        model = None
        for it in range(cfg.n_init, cfg.budget):
            if model is None:
                model = _fit(records, cfg)
            probs = tuple(float(p) for p in hedge.probabilities)
            prop = propose_portfolio(model, hedge, cfg, rng)
            rec = _evaluate(objective, prop.chosen, it, prop.acquisition, cfg, records, probs)
            records.append(rec)
            trace.append(rec)
            model = _fit(records, cfg)
            m, _ = gp_predict(model, np.vstack(prop.proposals))
            hedge = hedge_update(hedge, normalized_hedge_costs(m))
    finally:
        trace.close()
    return records


def warp_costs(costs, cfg: SearchConfig) -> np.ndarray:
    y = np.asarray(costs, dtype=np.float64)
    if cfg.cost_warp == "log":
        return np.log(y - y.min() + cfg.warp_offset)
    return y


def _fit(records, cfg):
    X = np.array([r.point for r in records])
    return gp_fit(X, warp_costs([r.cost for r in records], cfg), cfg.kernel)


def with_seeds(cfg: SearchConfig, seed: int, eval_seed: int | None = None) -> SearchConfig:
    return replace(cfg, seed=int(seed), eval_seed=int(seed if eval_seed is None else eval_seed))
